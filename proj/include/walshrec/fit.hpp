#pragma once

// Weighted nonlinear least squares by Gauss-Newton with Levenberg damping.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>

namespace walshrec {

struct LmOptions {
    double relative_step_tol = 1e-9;
    int max_iterations = 100;
    double initial_damping = 1e-3;
};

template <int P>
struct LmResult {
    Eigen::Matrix<double, P, 1> params;
    Eigen::Matrix<double, P, P> covariance; // (J^T W J)^-1 at the optimum
    double chi2 = 0.0;
    int iterations = 0;
    bool converged = false;
    bool singular = false;
};

/// Minimises sum_i w_i (y_i - f(x_i; p))^2. `model(x, p)` returns the pair
/// (f, df/dp). Converges once every parameter moves by less than
/// relative_step_tol relative to its magnitude (or to its resolution,
/// 1/sqrt((J^T W J)_kk), for parameters at zero).
template <int P, class Model>
LmResult<P> fit_weighted_lm(Model&& model, std::span<const double> x, std::span<const double> y,
                            std::span<const double> w, Eigen::Matrix<double, P, 1> start,
                            const LmOptions& options = {})
{
    using Vec = Eigen::Matrix<double, P, 1>;
    using Mat = Eigen::Matrix<double, P, P>;
    if (x.size() != y.size() || x.size() != w.size())
        throw std::invalid_argument("fit inputs differ in length");

    auto normal_equations = [&](const Vec& p, Mat& jtj, Vec& jtr) {
        jtj.setZero();
        jtr.setZero();
        double chi2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const auto [f, grad] = model(x[i], p);
            const double r = y[i] - f;
            chi2 += w[i] * r * r;
            jtj.noalias() += w[i] * grad * grad.transpose();
            jtr.noalias() += w[i] * r * grad;
        }
        return chi2;
    };

    LmResult<P> result;
    result.params = start;
    Mat jtj;
    Vec jtr;
    double chi2 = normal_equations(result.params, jtj, jtr);
    double lambda = options.initial_damping;

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        result.iterations = iter + 1;
        const Vec diag = jtj.diagonal();
        if (diag.minCoeff() <= 0.0) {
            result.singular = true;
            break;
        }
        Mat damped = jtj;
        damped.diagonal() += lambda * diag;
        const Vec step = damped.ldlt().solve(jtr);
        if (!step.allFinite()) {
            result.singular = true;
            break;
        }
        const Vec trial = result.params + step;
        Mat trial_jtj;
        Vec trial_jtr;
        const double trial_chi2 = normal_equations(trial, trial_jtj, trial_jtr);

        bool small_step = true;
        for (int k = 0; k < step.size(); ++k)
            if (std::abs(step[k]) > options.relative_step_tol * std::abs(trial[k]) &&
                std::abs(step[k]) * std::sqrt(diag[k]) > options.relative_step_tol)
                small_step = false;

        if (trial_chi2 <= chi2) {
            result.params = trial;
            chi2 = trial_chi2;
            jtj = trial_jtj;
            jtr = trial_jtr;
            lambda = std::max(lambda * 0.1, 1e-12);
            if (small_step) {
                result.converged = true;
                break;
            }
        } else {
            if (small_step) {
                result.converged = true;
                break;
            }
            lambda *= 10.0;
        }
    }
    if (jtr.isZero(0.0) && !result.singular) result.converged = true;

    result.chi2 = chi2;
    Eigen::FullPivLU<Mat> lu(jtj);
    if (result.singular || !lu.isInvertible()) {
        result.singular = true;
        result.covariance.setConstant(std::numeric_limits<double>::infinity());
    } else {
        result.covariance = lu.inverse();
    }
    return result;
}

} // namespace walshrec
