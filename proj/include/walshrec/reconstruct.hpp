#pragma once

// Piecewise-constant reconstruction from Walsh coefficients, reconstruction
// error, top-k compression and decoupling-subset (CPMG / PDD) analysis.

#include "walshrec/estimation.hpp"
#include "walshrec/walsh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace walshrec {

enum class SubsetKind { FullWalsh, TopK, CPMG, PDD, CPMGPlusPDD };

struct SubsetTag {
    SubsetKind kind = SubsetKind::FullWalsh;
    std::size_t k = 0; // TopK only

    friend bool operator==(const SubsetTag&, const SubsetTag&) = default;
};

inline std::string to_string(SubsetTag tag)
{
    switch (tag.kind) {
    case SubsetKind::FullWalsh: return "FullWalsh";
    case SubsetKind::TopK: return "TopK(" + std::to_string(tag.k) + ")";
    case SubsetKind::CPMG: return "CPMG";
    case SubsetKind::PDD: return "PDD";
    case SubsetKind::CPMGPlusPDD: return "CPMG+PDD";
    }
    return "unknown";
}

/// N-point piecewise-constant trace; cell j covers [jT/N, (j+1)T/N).
struct Reconstruction {
    double period_us = 0.0;
    std::vector<double> values;
    double sigma = 0.0; // pointwise uncertainty, constant over [0, T)
    bool flagged = false;
    WalshSpectrum source;
    SubsetTag subset;

    std::size_t size() const noexcept { return values.size(); }

    double operator()(double t_us) const
    {
        if (!(t_us >= 0.0 && t_us < period_us)) throw std::domain_error("time outside [0, T)");
        const auto j = static_cast<std::size_t>(t_us / period_us * static_cast<double>(values.size()));
        return values[std::min(j, values.size() - 1)];
    }

    double cell_start_us(std::size_t j) const
    {
        return period_us * static_cast<double>(j) / static_cast<double>(values.size());
    }
};

inline Reconstruction reconstruct(const WalshSpectrum& spectrum, SubsetTag tag = {})
{
    if (spectrum.coeffs.empty()) throw std::invalid_argument("empty spectrum");
    Reconstruction rec;
    rec.period_us = spectrum.period_us;
    rec.values = inverse_fwht(spectrum);
    rec.source = spectrum;
    rec.subset = tag;
    if (spectrum.has_sigmas()) {
        double sum = 0.0;
        for (std::size_t i = 0; i < spectrum.size(); ++i) {
            if (!std::isfinite(spectrum.sigmas[i])) rec.flagged = true;
            sum += spectrum.sigmas[i] * spectrum.sigmas[i];
        }
        rec.sigma = rec.flagged ? std::numeric_limits<double>::infinity() : std::sqrt(sum);
    }
    return rec;
}

/// Assembles sequency-indexed estimates into an order-N spectrum; indices
/// without an estimate are zero with zero uncertainty.
inline WalshSpectrum spectrum_from_estimates(std::span<const CoefficientEstimate> estimates, double period_us,
                                             std::size_t points)
{
    if (points == 0 || !std::has_single_bit(points)) throw std::invalid_argument("N must be a power of two");
    WalshSpectrum spectrum{period_us, Ordering::Sequency, std::vector<double>(points, 0.0),
                           std::vector<double>(points, 0.0)};
    for (const auto& e : estimates) {
        if (e.index.value() >= points)
            throw std::out_of_range("estimate index " + std::to_string(e.index.value()) + " beyond N");
        spectrum.coeffs[e.index.value()] = e.value;
        spectrum.sigmas[e.index.value()] = e.sigma;
    }
    return spectrum;
}

inline Reconstruction reconstruct(std::span<const CoefficientEstimate> estimates, double period_us,
                                  std::size_t points)
{
    if (estimates.empty()) throw std::invalid_argument("empty spectrum");
    auto rec = reconstruct(spectrum_from_estimates(estimates, period_us, points));
    rec.sigma = amplitude_resolution(estimates).delta_b;
    rec.flagged = !std::isfinite(rec.sigma);
    return rec;
}

/// e_N = sqrt((1/T) integral (b_N - b)^2 dt) by midpoint rule on
/// multiplier * N points.
template <TimeField Field>
double l2_error(const Reconstruction& rec, const Field& truth, unsigned multiplier = default_grid_multiplier)
{
    if (rec.values.empty()) throw std::invalid_argument("empty reconstruction");
    const std::size_t grid = rec.values.size() * multiplier;
    double sum = 0.0;
    for (std::size_t i = 0; i < grid; ++i) {
        const double t = rec.period_us * (static_cast<double>(i) + 0.5) / static_cast<double>(grid);
        const double d = rec.values[i / multiplier] - static_cast<double>(truth(t));
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(grid));
}

/// Largest pointwise deviation on the same grid as l2_error.
template <TimeField Field>
double max_error(const Reconstruction& rec, const Field& truth, unsigned multiplier = default_grid_multiplier)
{
    const std::size_t grid = rec.values.size() * multiplier;
    double worst = 0.0;
    for (std::size_t i = 0; i < grid; ++i) {
        const double t = rec.period_us * (static_cast<double>(i) + 0.5) / static_cast<double>(grid);
        worst = std::max(worst, std::abs(rec.values[i / multiplier] - static_cast<double>(truth(t))));
    }
    return worst;
}

/// Keeps the k largest-magnitude coefficients (ties go to the lower
/// sequency) and zeroes the rest.
inline WalshSpectrum compress_top_k(const WalshSpectrum& spectrum, std::size_t k)
{
    if (k < 1 || k > spectrum.size()) throw std::invalid_argument("k must lie in [1, N]");
    const unsigned n = spectrum.order();
    std::vector<std::size_t> idx(spectrum.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto seq = [&](std::size_t i) { return convert_index(i, spectrum.ordering, Ordering::Sequency, n); };
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const double ma = std::abs(spectrum.coeffs[a]);
        const double mb = std::abs(spectrum.coeffs[b]);
        if (ma != mb) return ma > mb;
        return seq(a) < seq(b);
    });
    WalshSpectrum out = spectrum;
    for (std::size_t r = k; r < idx.size(); ++r) {
        out.coeffs[idx[r]] = 0.0;
        if (out.has_sigmas()) out.sigmas[idx[r]] = 0.0;
    }
    return out;
}

/// Sequency indices of a subset within order n, ascending, at most `budget`
/// of them. CPMG = {2^k}, PDD = {2^k - 1}, k >= 1; FullWalsh = {0, 1, ...}.
inline std::vector<std::uint64_t> subset_members(SubsetKind kind, unsigned n, std::size_t budget)
{
    const std::uint64_t points = std::uint64_t{1} << n;
    std::vector<std::uint64_t> members;
    switch (kind) {
    case SubsetKind::FullWalsh:
        for (std::uint64_t m = 0; m < points; ++m) members.push_back(m);
        break;
    case SubsetKind::CPMG:
        for (unsigned k = 1; k < n; ++k) members.push_back(std::uint64_t{1} << k);
        break;
    case SubsetKind::PDD:
        for (unsigned k = 1; k <= n; ++k) members.push_back((std::uint64_t{1} << k) - 1);
        break;
    case SubsetKind::CPMGPlusPDD:
        for (unsigned k = 1; k <= n; ++k) {
            members.push_back((std::uint64_t{1} << k) - 1);
            if (k < n) members.push_back(std::uint64_t{1} << k);
        }
        std::sort(members.begin(), members.end());
        members.erase(std::unique(members.begin(), members.end()), members.end());
        break;
    case SubsetKind::TopK:
        throw std::invalid_argument("TopK is selected by magnitude, use compress_top_k");
    }
    if (members.size() > budget) members.resize(budget);
    return members;
}

/// Keeps only the subset's coefficients of a sequency-ordered spectrum.
inline WalshSpectrum restrict_to_subset(const WalshSpectrum& spectrum, SubsetKind kind, std::size_t budget)
{
    const auto seq = spectrum.reordered(Ordering::Sequency);
    WalshSpectrum out{seq.period_us, Ordering::Sequency, std::vector<double>(seq.size(), 0.0), {}};
    if (seq.has_sigmas()) out.sigmas.assign(seq.size(), 0.0);
    for (auto m : subset_members(kind, seq.order(), budget)) {
        out.coeffs[m] = seq.coeffs[m];
        if (seq.has_sigmas()) out.sigmas[m] = seq.sigmas[m];
    }
    return out;
}

struct SubsetReport {
    Reconstruction reconstruction;
    std::size_t budget = 0;         // requested
    std::size_t used = 0;           // members actually available within order n
    bool truncated = false;
    std::string warning;
    double error = 0.0;             // e for this subset
    double full_walsh_error = 0.0;  // e for FullWalsh with the same budget
};

/// Reconstruction of `field` from one subset's exact coefficients, compared
/// with FullWalsh reconstruction from the first `budget` sequency
/// coefficients.
template <TimeField Field>
SubsetReport subset_reconstruct(const Field& field, SubsetKind kind, std::size_t budget, unsigned n,
                                double period_us, unsigned multiplier = default_grid_multiplier)
{
    if (budget == 0) throw std::invalid_argument("budget must be positive");
    const auto spectrum = walsh_spectrum(field, period_us, n, multiplier);
    const std::size_t points = spectrum.size();

    SubsetReport report;
    report.budget = budget;
    const auto members = subset_members(kind, n, budget);
    report.used = members.size();
    if (report.used < budget) {
        report.truncated = true;
        report.warning = to_string(SubsetTag{kind}) + ": only " + std::to_string(report.used) +
                         " members within order " + std::to_string(n) + ", budget " + std::to_string(budget) +
                         " truncated";
    }
    report.reconstruction = reconstruct(restrict_to_subset(spectrum, kind, budget), SubsetTag{kind});
    report.error = l2_error(report.reconstruction, field, multiplier);

    const auto full =
        reconstruct(restrict_to_subset(spectrum, SubsetKind::FullWalsh, std::min(budget, points)), SubsetTag{});
    report.full_walsh_error = l2_error(full, field, multiplier);
    return report;
}

} // namespace walshrec
