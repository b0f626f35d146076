#pragma once

// Walsh coefficient estimation from measurement curves, per-sequence and
// reconstruction sensitivities, and the comparison against sequential
// (sub-interval Ramsey) acquisition.

#include "walshrec/fit.hpp"
#include "walshrec/sensor.hpp"
#include "walshrec/walsh.hpp"
#include "walshrec/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace walshrec {

inline constexpr double z95 = 1.959963984540054;

struct CoefficientEstimate {
    WalshIndex index;
    double value = 0.0; // f(m) for amplitude sweeps, b(m) in nT for phase sweeps
    double sigma = 0.0; // infinity when the fit is not identifiable
    double ci95_low = 0.0;
    double ci95_high = 0.0;
    bool flagged = false;
    std::string note;

    bool covers(double truth) const noexcept { return ci95_low <= truth && truth <= ci95_high; }
};

inline CoefficientEstimate make_estimate(WalshIndex m, double value, double sigma, bool flagged = false,
                                         std::string note = {})
{
    return {m, value, sigma, value - z95 * sigma, value + z95 * sigma, flagged, std::move(note)};
}

namespace detail {

/// 1/err^2 weights, or unit weights for a noiseless curve.
inline std::vector<double> curve_weights(const MeasurementCurve& curve, bool& noiseless)
{
    const auto n_zero = std::count(curve.std_err.begin(), curve.std_err.end(), 0.0);
    noiseless = n_zero == static_cast<std::ptrdiff_t>(curve.std_err.size());
    if (!noiseless && n_zero > 0) throw std::invalid_argument("curve mixes noiseless and noisy points");
    std::vector<double> w(curve.std_err.size(), 1.0);
    if (!noiseless)
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] = 1.0 / (curve.std_err[i] * curve.std_err[i]);
    return w;
}

inline void check_curve(const MeasurementCurve& curve, SweepKind kind)
{
    if (curve.sweep.kind != kind)
        throw std::invalid_argument(kind == SweepKind::Amplitude ? "slope fit needs an amplitude sweep"
                                                                 : "cosine fit needs a read-out phase sweep");
    if (curve.mean_signal.size() != curve.sweep.values.size() || curve.std_err.size() != curve.sweep.values.size())
        throw std::invalid_argument("measurement curve columns differ in length");
}

} // namespace detail

struct SlopeFitOptions {
    double visibility = 1.0;    // known signal visibility v_m
    double max_phase_rad = 0.5; // linear-regime window |gamma b f T|
    std::size_t min_points = 4;
};

/// f(m) from the slope at the origin of S(b) = v sin(gamma b f T). Points
/// outside the linear window are dropped, then k = gamma f T is fitted by
/// weighted least squares.
inline CoefficientEstimate fit_slope_origin(const MeasurementCurve& curve, double gamma_rad_per_s_nT,
                                            double period_us, const SlopeFitOptions& options = {})
{
    detail::check_curve(curve, SweepKind::Amplitude);
    if (curve.sweep.values.size() < options.min_points)
        throw std::invalid_argument("slope fit needs at least " + std::to_string(options.min_points) + " points");
    bool noiseless = false;
    const auto weights = detail::curve_weights(curve, noiseless);
    const double v = options.visibility;
    const double scale = gamma_rad_per_s_nT * 1e-6 * period_us;

    const auto& b = curve.sweep.values;
    const auto& y = curve.mean_signal;
    std::vector<std::size_t> selected(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) selected[i] = i;

    // Through-origin linear estimate, re-selected until the window is stable.
    double k = 0.0;
    for (int pass = 0; pass < 8; ++pass) {
        double num = 0.0, den = 0.0;
        for (auto i : selected) {
            num += weights[i] * b[i] * y[i];
            den += weights[i] * b[i] * b[i];
        }
        k = den > 0.0 ? num / (v * den) : 0.0;
        std::vector<std::size_t> next;
        for (std::size_t i = 0; i < b.size(); ++i)
            if (std::abs(k * b[i]) < options.max_phase_rad) next.push_back(i);
        if (next == selected) break;
        selected = std::move(next);
    }
    if (selected.size() < options.min_points)
        throw std::invalid_argument("only " + std::to_string(selected.size()) +
                                    " sweep points inside the linear regime; need " +
                                    std::to_string(options.min_points));

    std::vector<double> xs, ys, ws;
    for (auto i : selected) {
        xs.push_back(b[i]);
        ys.push_back(y[i]);
        ws.push_back(weights[i]);
    }
    auto model = [v](double amp, const Eigen::Matrix<double, 1, 1>& p) {
        Eigen::Matrix<double, 1, 1> grad;
        grad[0] = v * amp * std::cos(p[0] * amp);
        return std::pair{v * std::sin(p[0] * amp), grad};
    };
    const auto fit = fit_weighted_lm<1>(model, xs, ys, ws, Eigen::Matrix<double, 1, 1>(k));
    if (fit.singular)
        return make_estimate(curve.index, fit.params[0] / scale, std::numeric_limits<double>::infinity(), true,
                             "flat curve: coefficient not identifiable");
    const double sigma = noiseless ? 0.0 : std::sqrt(fit.covariance(0, 0)) / scale;
    return make_estimate(curve.index, fit.params[0] / scale, sigma, !fit.converged,
                         fit.converged ? "" : "fit did not converge");
}

struct PhaseFitOptions {
    double min_span_rad = 2.0 * std::numbers::pi / 3.0;
};

/// Absolute b(m) in nT from a read-out phase sweep 1 - 2 S(theta) =
/// a cos(phi - theta), phi = gamma b T. Valid for |phi| < pi/2; estimates
/// outside that window are flagged as wrap-ambiguous.
inline CoefficientEstimate fit_cosine_phase(const MeasurementCurve& curve, double gamma_rad_per_s_nT,
                                            double period_us, const PhaseFitOptions& options = {})
{
    detail::check_curve(curve, SweepKind::ReadoutPhase);
    const auto& theta = curve.sweep.values;
    const auto [lo, hi] = std::minmax_element(theta.begin(), theta.end());
    if (*hi - *lo < options.min_span_rad)
        throw std::invalid_argument("phase sweep span " + std::to_string(*hi - *lo) + " rad below required " +
                                    std::to_string(options.min_span_rad) + " rad");
    if (theta.size() < 3) throw std::invalid_argument("cosine fit needs at least three points");
    bool noiseless = false;
    const auto weights = detail::curve_weights(curve, noiseless);
    const double scale = gamma_rad_per_s_nT * 1e-6 * period_us;

    // y = A cos(theta) + B sin(theta) is linear; it seeds the (a, phi) fit.
    Eigen::Matrix2d ata = Eigen::Matrix2d::Zero();
    Eigen::Vector2d aty = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const Eigen::Vector2d row(std::cos(theta[i]), std::sin(theta[i]));
        ata += weights[i] * row * row.transpose();
        aty += weights[i] * curve.mean_signal[i] * row;
    }
    const Eigen::Vector2d ab = ata.ldlt().solve(aty);
    Eigen::Vector2d start(std::hypot(ab[0], ab[1]), std::atan2(ab[1], ab[0]));

    auto model = [](double th, const Eigen::Vector2d& p) {
        const double c = std::cos(p[1] - th);
        const double s = std::sin(p[1] - th);
        return std::pair{p[0] * c, Eigen::Vector2d(c, -p[0] * s)};
    };
    auto fit = fit_weighted_lm<2>(model, theta, curve.mean_signal, weights, start);
    double amplitude = fit.params[0];
    double phase = fit.params[1];
    if (amplitude < 0.0) {
        amplitude = -amplitude;
        phase += std::numbers::pi;
    }
    phase = std::remainder(phase, 2.0 * std::numbers::pi);
    if (fit.singular || !(amplitude > 0.0))
        return make_estimate(curve.index, phase / scale, std::numeric_limits<double>::infinity(), true,
                             "no fringe contrast: coefficient not identifiable");
    const double sigma = noiseless ? 0.0 : std::sqrt(fit.covariance(1, 1)) / scale;
    std::string note;
    bool flagged = !fit.converged;
    if (!fit.converged) note = "fit did not converge";
    if (std::abs(phase) >= std::numbers::pi / 2.0) {
        flagged = true;
        note = "accumulated phase outside (-pi/2, pi/2): wrap ambiguity";
    }
    return make_estimate(curve.index, phase / scale, sigma, flagged, note);
}

// ---------------------------------------------------------------------------
// Sensitivities (nT / sqrt(Hz))
// ---------------------------------------------------------------------------

struct SequenceSensitivity {
    double field_independent = 0.0;     // eta_hat_m = 1 / (v gamma C sqrt(T) sqrt(n_NV))
    std::optional<double> field_dependent; // eta_m = eta_hat_m / |f(m)|; empty when f(m) = 0
};

inline SequenceSensitivity sensitivity_sequence(const SensorModel& model, WalshIndex m, double period_us,
                                                double normalized_coefficient)
{
    model.validate();
    if (!(period_us > 0.0)) throw std::domain_error("period must be positive");
    const double t_s = period_us * 1e-6;
    const double v = visibility(model, m, period_us);
    SequenceSensitivity out;
    out.field_independent =
        1.0 / (v * model.gamma_rad_per_s_nT * model.contrast * std::sqrt(t_s) * std::sqrt(model.ensemble_size));
    if (normalized_coefficient != 0.0) out.field_dependent = out.field_independent / std::abs(normalized_coefficient);
    return out;
}

/// Minimum detectable amplitude delta_b = eta / sqrt(M T).
inline double minimum_detectable_field(double eta_nT_per_rtHz, std::uint64_t repetitions, double period_us)
{
    return eta_nT_per_rtHz / std::sqrt(static_cast<double>(repetitions) * period_us * 1e-6);
}

inline std::vector<double> sequence_visibilities(const SensorModel& model, std::size_t points, double period_us)
{
    std::vector<double> v(points);
    for (std::size_t m = 0; m < points; ++m) v[m] = visibility(model, WalshIndex(m), period_us);
    return v;
}

/// eta_N = sqrt(N sum_m v_m^-2) / (gamma C sqrt(T) sqrt(n_NV))
inline double sensitivity_reconstruction(const SensorModel& model, std::size_t points, double period_us,
                                         std::span<const double> visibilities)
{
    model.validate();
    if (points == 0 || !std::has_single_bit(points)) throw std::invalid_argument("N must be a power of two");
    if (visibilities.size() != points) throw std::invalid_argument("need one visibility per Walsh sequence");
    double sum = 0.0;
    for (double v : visibilities) {
        if (!(v > 0.0 && v <= 1.0)) throw std::domain_error("visibility outside (0, 1]");
        sum += 1.0 / (v * v);
    }
    const double t_s = period_us * 1e-6;
    return std::sqrt(static_cast<double>(points) * sum) /
           (model.gamma_rad_per_s_nT * model.contrast * std::sqrt(t_s) * std::sqrt(model.ensemble_size));
}

struct AmplitudeResolution {
    double delta_b = 0.0; // sqrt(sum sigma_m^2), also the pointwise reconstruction error
    bool flagged = false;
};

inline AmplitudeResolution amplitude_resolution(std::span<const CoefficientEstimate> estimates)
{
    if (estimates.empty()) throw std::invalid_argument("no coefficient estimates");
    AmplitudeResolution out;
    double sum = 0.0;
    for (const auto& e : estimates) {
        if (!std::isfinite(e.sigma)) out.flagged = true;
        sum += e.sigma * e.sigma;
    }
    out.delta_b = out.flagged ? std::numeric_limits<double>::infinity() : std::sqrt(sum);
    return out;
}

// ---------------------------------------------------------------------------
// Walsh vs sequential acquisition
// ---------------------------------------------------------------------------

struct ComparisonOptions {
    std::uint64_t trials = 400;
    std::uint64_t walsh_repetitions = 1'000'000; // per Walsh coefficient
    double t2_star_us = 20.0;                    // dephasing time bounding the Ramsey sub-intervals
    double min_interval_us = 0.02;               // shortest realisable sub-interval
    bool include_visibility = false;             // pure shot-noise comparison by default
    bool monte_carlo = true;
    RngKey key{};
    unsigned grid_multiplier = default_grid_multiplier;
};

struct SequentialComparison {
    std::size_t points = 0;
    double period_us = 0.0;
    double interval_us = 0.0;
    bool feasible = true;
    bool admissible = true;
    std::string reason;
    double analytic_sensitivity_ratio = 0.0; // (delta b_N)_sequential / (delta b_N)_walsh at fixed total time
    double analytic_time_ratio = 0.0;        // T_sequential / T_walsh at fixed resolution
    double walsh_eta = 0.0;                  // eta_N of the Walsh arm, nT/sqrt(Hz)
    std::optional<double> mc_sensitivity_ratio;
    std::optional<double> mc_time_ratio;
    std::optional<double> mc_walsh_resolution_nT;
    std::optional<double> mc_sequential_resolution_nT;
};

namespace detail {

struct RunningVariance {
    std::uint64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x)
    {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
};

/// Empirical sqrt(sum_j var_j) over trials of linear single-readout
/// estimates b_j = S / (v gamma tau) of the given truths.
inline double simulated_resolution(const SensorModel& model, std::span<const double> truths, double tau_us,
                                   std::span<const double> vis, std::uint64_t repetitions, std::uint64_t trials,
                                   RngKey key)
{
    const double gamma = model.gamma_rad_per_us_nT();
    std::vector<RunningVariance> stats(truths.size());
    for (std::uint64_t r = 0; r < trials; ++r) {
        for (std::size_t j = 0; j < truths.size(); ++j) {
            const double expected = vis[j] * std::sin(gamma * truths[j] * tau_us);
            const auto est = simulate_readout(model, expected, repetitions, key.child({r, j}));
            stats[j].add(est.mean / (vis[j] * gamma * tau_us));
        }
    }
    double sum = 0.0;
    for (const auto& s : stats) sum += s.variance();
    return std::sqrt(sum);
}

} // namespace detail

/// Fixed-total-time sensitivity ratio and fixed-resolution time ratio of N
/// Walsh measurements over [0, T) against N sequential Ramsey measurements
/// over sub-intervals tau = T/N (shot-noise limited). The sequential arm
/// gets N times the Walsh repetitions so both use the same total time.
template <TimeField Field>
SequentialComparison compare_sequential(std::size_t points, double period_us, const SensorModel& model,
                                        const Field& field, const ComparisonOptions& options = {})
{
    model.validate();
    if (points == 0 || !std::has_single_bit(points)) throw std::invalid_argument("N must be a power of two");
    if (!(period_us > 0.0)) throw std::domain_error("period must be positive");
    if (options.walsh_repetitions == 0) throw std::invalid_argument("repetitions must be >= 1");

    SequentialComparison out;
    out.points = points;
    out.period_us = period_us;
    out.interval_us = period_us / static_cast<double>(points);
    const auto n = static_cast<unsigned>(std::countr_zero(points));
    const double nd = static_cast<double>(points);

    std::vector<double> walsh_vis(points, 1.0);
    std::vector<double> seq_vis(points, 1.0);
    if (options.include_visibility) {
        walsh_vis = sequence_visibilities(model, points, period_us);
        const double v_ramsey = std::exp(-std::pow(out.interval_us / options.t2_star_us, model.stretch_exponent));
        std::fill(seq_vis.begin(), seq_vis.end(), v_ramsey);
    }
    out.walsh_eta = sensitivity_reconstruction(model, points, period_us, walsh_vis);

    double inv_sq = 0.0;
    for (double v : walsh_vis) inv_sq += 1.0 / (v * v);
    out.analytic_sensitivity_ratio = nd / (seq_vis[0] * std::sqrt(inv_sq));
    out.analytic_time_ratio = out.analytic_sensitivity_ratio * out.analytic_sensitivity_ratio;

    if (out.interval_us < options.min_interval_us) {
        out.feasible = false;
        out.admissible = false;
        out.reason = "sub-interval T/N = " + std::to_string(out.interval_us) +
                     " us is shorter than the minimum readout interval " + std::to_string(options.min_interval_us) +
                     " us; sequential baseline infeasible";
        return out;
    }
    if (out.interval_us > options.t2_star_us) {
        out.admissible = false;
        out.reason = "sub-interval T/N exceeds T2*; sequential baseline not dephasing-limited";
    }
    if (!options.monte_carlo) return out;

    const auto spectrum = walsh_spectrum(field, period_us, n, options.grid_multiplier);
    const auto cells = cell_averages(field, period_us, n, options.grid_multiplier);
    const std::uint64_t m_walsh = options.walsh_repetitions;
    const std::uint64_t m_seq = m_walsh * points;

    const double walsh_res = detail::simulated_resolution(model, spectrum.coeffs, period_us, walsh_vis, m_walsh,
                                                          options.trials, options.key.child({1}));
    const double seq_res = detail::simulated_resolution(model, cells, out.interval_us, seq_vis, m_seq,
                                                        options.trials, options.key.child({2}));
    out.mc_walsh_resolution_nT = walsh_res;
    out.mc_sequential_resolution_nT = seq_res;
    out.mc_sensitivity_ratio = seq_res / walsh_res;

    // Equal-resolution run: N^2 times the Walsh repetitions per sub-interval.
    const std::uint64_t m_seq_matched = m_walsh * points * points;
    const double seq_res_matched = detail::simulated_resolution(model, cells, out.interval_us, seq_vis, m_seq_matched,
                                                                options.trials, options.key.child({3}));
    const double time_seq = static_cast<double>(m_seq_matched) * period_us;
    const double time_walsh = static_cast<double>(m_walsh) * nd * period_us;
    const double r = seq_res_matched / walsh_res;
    out.mc_time_ratio = time_seq / time_walsh * r * r;
    return out;
}

} // namespace walshrec
