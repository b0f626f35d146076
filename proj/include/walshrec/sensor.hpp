#pragma once

// Qubit sensor under Walsh dynamical decoupling: phase accumulation,
// decoherence-limited visibility and photon-counting readout.

#include "walshrec/rng.hpp"
#include "walshrec/walsh.hpp"
#include "walshrec/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace walshrec {

/// Scenario is physically impossible with the configured hardware.
class InfeasibleError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct SensorModel {
    double gamma_rad_per_s_nT = 2.0 * std::numbers::pi * 28.0; // NV electron spin
    double contrast = 0.8;
    double s0_counts = 0.03; // photons per readout, m_s = 0
    double s1_counts = 0.02; // photons per readout, m_s = 1
    double t2_base_us = 300.0;
    double stretch_exponent = 1.5;
    double t2_scaling_exponent = 2.0 / 3.0;
    double ensemble_size = 1.0;
    double pi_pulse_us = 0.0; // 0: instantaneous pulses

    double gamma_rad_per_us_nT() const noexcept { return gamma_rad_per_s_nT * 1e-6; }

    /// T2(m) = T2_base * max(m, 1)^s
    double t2_us(WalshIndex m) const
    {
        const double pulses = static_cast<double>(std::max<std::uint64_t>(m.value(), 1));
        return t2_base_us * std::pow(pulses, t2_scaling_exponent);
    }

    void validate() const
    {
        if (!(gamma_rad_per_s_nT > 0.0)) throw std::invalid_argument("gyromagnetic ratio must be positive");
        if (!(contrast > 0.0 && contrast <= 1.0)) throw std::invalid_argument("contrast must lie in (0, 1]");
        if (!(s1_counts >= 0.0)) throw std::invalid_argument("S1 count rate must be non-negative");
        if (!(s0_counts > s1_counts)) throw std::invalid_argument("S0 count rate must exceed S1");
        if (!(t2_base_us > 0.0)) throw std::invalid_argument("T2 must be positive");
        if (!(stretch_exponent > 0.0)) throw std::invalid_argument("stretch exponent must be positive");
        if (!(ensemble_size >= 1.0)) throw std::invalid_argument("ensemble size must be >= 1");
        if (!(pi_pulse_us >= 0.0)) throw std::invalid_argument("pi-pulse duration must be non-negative");
    }
};

/// Rejects an acquisition whose shortest sampling interval T/N is below the
/// pi-pulse duration.
inline void check_bandwidth(const SensorModel& model, double period_us, std::size_t points)
{
    const double tau = period_us / static_cast<double>(points);
    if (model.pi_pulse_us > 0.0 && tau < model.pi_pulse_us)
        throw InfeasibleError("sampling interval T/N = " + std::to_string(tau) +
                              " us is shorter than the pi-pulse duration " +
                              std::to_string(model.pi_pulse_us) + " us");
}

/// phi_m(T) = gamma T b(m)
template <TimeField Field>
double accumulated_phase(const SensorModel& model, const Field& field, WalshIndex m, double period_us,
                         std::size_t grid_points)
{
    return model.gamma_rad_per_us_nT() * period_us * walsh_coefficient(field, m, period_us, grid_points);
}

inline std::size_t default_grid(WalshIndex m, unsigned multiplier = default_grid_multiplier)
{
    return (std::size_t{1} << m.order()) * multiplier;
}

/// v_m = exp(-(T / T2(m))^p)
inline double visibility(const SensorModel& model, WalshIndex m, double period_us)
{
    if (!(period_us > 0.0)) throw std::domain_error("period must be positive");
    return std::exp(-std::pow(period_us / model.t2_us(m), model.stretch_exponent));
}

enum class ReadoutMode {
    Amplitude, // v sin(phi + theta)
    Phase,     // v cos(phi - theta), i.e. 1 - 2 S(theta)
};

inline double signal_from_phase(double visibility, double phase_rad, double theta_rad, ReadoutMode mode)
{
    return mode == ReadoutMode::Amplitude ? visibility * std::sin(phase_rad + theta_rad)
                                          : visibility * std::cos(phase_rad - theta_rad);
}

template <TimeField Field>
double signal_expectation(const SensorModel& model, const Field& field, WalshIndex m, double period_us,
                          double theta_rad, ReadoutMode mode = ReadoutMode::Amplitude,
                          std::size_t grid_points = 0)
{
    if (grid_points == 0) grid_points = default_grid(m);
    const double phase = accumulated_phase(model, field, m, period_us, grid_points);
    return signal_from_phase(visibility(model, m, period_us), phase, theta_rad, mode);
}

struct ReadoutEstimate {
    double mean = 0.0;
    double std_err = 0.0;
};

namespace detail {

/// Normalised signal and its delta-method standard error from the summed
/// photon counts of the two conjugate readouts.
inline ReadoutEstimate normalise_counts(const SensorModel& model, double counts_plus, double counts_minus,
                                        std::uint64_t repetitions)
{
    const double s0 = model.s0_counts;
    const double s1 = model.s1_counts;
    const double scale = (s0 + s1) / ((s0 - s1) * model.contrast);
    const double m = static_cast<double>(repetitions);

    auto count_variance = [&](double counts) {
        const double p = std::clamp((counts / m - s1) / (s0 - s1), 0.0, 1.0);
        return counts + m * p * (1.0 - p) * (s0 - s1) * (s0 - s1);
    };

    const double total = counts_plus + counts_minus;
    if (total <= 0.0) {
        // no photons: report the zero-signal estimate with its model variance
        const double mean_counts = m * 0.5 * (s0 + s1);
        const double var = mean_counts + m * 0.25 * (s0 - s1) * (s0 - s1);
        return {0.0, scale * std::sqrt(2.0 * var) / (2.0 * mean_counts)};
    }
    const double ratio = (counts_plus - counts_minus) / total;
    const double d_plus = 2.0 * counts_minus / (total * total);
    const double d_minus = -2.0 * counts_plus / (total * total);
    double var = d_plus * d_plus * count_variance(counts_plus) + d_minus * d_minus * count_variance(counts_minus);
    if (counts_plus == 0.0 || counts_minus == 0.0) {
        // one-sided outcome: fall back to the model variance at this point
        const double mean_counts = 0.5 * total;
        var = 2.0 * count_variance(mean_counts) / (total * total);
    }
    return {scale * ratio, scale * std::sqrt(var)};
}

inline double draw_counts(std::mt19937_64& engine, const SensorModel& model, double p_bright,
                          std::uint64_t repetitions)
{
    std::binomial_distribution<std::uint64_t> spins(repetitions, std::clamp(p_bright, 0.0, 1.0));
    const auto bright = spins(engine);
    const double rate = static_cast<double>(bright) * model.s0_counts +
                        static_cast<double>(repetitions - bright) * model.s1_counts;
    if (rate <= 0.0) return 0.0;
    std::poisson_distribution<std::int64_t> photons(rate);
    return static_cast<double>(photons(engine));
}

} // namespace detail

/// Simulates `repetitions` runs of the two conjugate readouts (final pulse
/// along +y and -y). Each readout projects the spin with the contracted
/// probability (1 +- C S)/2 and records Poisson photon counts at rate S0 or
/// S1. Returns (S_plus - S_minus)/(S_plus + S_minus) * (S0 + S1)/((S0 - S1) C),
/// which converges to `expectation` as repetitions grow.
inline ReadoutEstimate simulate_readout(const SensorModel& model, double expectation, std::uint64_t repetitions,
                                        RngKey key)
{
    if (repetitions == 0) throw std::invalid_argument("repetitions must be >= 1");
    if (!(model.s0_counts > model.s1_counts)) throw std::invalid_argument("degenerate count rates: S0 must exceed S1");
    const double s = std::clamp(expectation, -1.0, 1.0);
    auto engine = make_engine(key);
    const double plus = detail::draw_counts(engine, model, 0.5 * (1.0 + model.contrast * s), repetitions);
    const double minus = detail::draw_counts(engine, model, 0.5 * (1.0 - model.contrast * s), repetitions);
    return detail::normalise_counts(model, plus, minus, repetitions);
}

enum class SweepKind { Amplitude, ReadoutPhase };

inline std::string_view to_string(SweepKind k) noexcept
{
    return k == SweepKind::Amplitude ? "amplitude_nT" : "phase_rad";
}

struct Sweep {
    SweepKind kind = SweepKind::Amplitude;
    std::vector<double> values; // nT or rad
};

/// Symmetric amplitude sweep with `points` values in [-b_max, b_max]; an odd
/// count always contains zero.
inline Sweep amplitude_sweep(double b_max_nT, std::size_t points)
{
    if (points < 2) throw std::invalid_argument("amplitude sweep needs at least two points");
    Sweep sweep{SweepKind::Amplitude, {}};
    for (std::size_t i = 0; i < points; ++i)
        sweep.values.push_back(-b_max_nT + 2.0 * b_max_nT * static_cast<double>(i) / static_cast<double>(points - 1));
    return sweep;
}

/// `points` read-out phases evenly covering [0, 2 pi).
inline Sweep phase_sweep(std::size_t points)
{
    if (points < 3) throw std::invalid_argument("phase sweep needs at least three points");
    Sweep sweep{SweepKind::ReadoutPhase, {}};
    for (std::size_t i = 0; i < points; ++i)
        sweep.values.push_back(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(points));
    return sweep;
}

struct MeasurementCurve {
    WalshIndex index;
    double period_us = 0.0;
    Sweep sweep;
    std::vector<double> mean_signal;
    std::vector<double> std_err;
    std::optional<std::uint64_t> repetitions; // nullopt: noiseless
};

struct AcquisitionSettings {
    std::optional<std::uint64_t> repetitions; // nullopt: noiseless expectation values
    RngKey key{};
    std::size_t grid_points = 0;              // 0: default_grid(m)
};

/// Measures one Walsh coefficient over a sweep. In amplitude mode the field
/// is `amplitude * shape(t)` for each swept amplitude and the final pulse
/// reads sin(phi); in phase mode the field is fixed and the swept value is
/// the read-out phase theta. Each sweep point draws from its own stream.
template <TimeField Field>
MeasurementCurve acquire_curve(const SensorModel& model, const Field& shape, WalshIndex m, double period_us,
                               Sweep sweep, const AcquisitionSettings& settings = {})
{
    model.validate();
    if (sweep.values.empty()) throw std::invalid_argument("sweep must not be empty");
    if (settings.repetitions && *settings.repetitions == 0)
        throw std::invalid_argument("repetitions must be >= 1");
    if (sweep.kind == SweepKind::Amplitude &&
        std::find(sweep.values.begin(), sweep.values.end(), 0.0) == sweep.values.end()) {
        sweep.values.push_back(0.0);
        std::sort(sweep.values.begin(), sweep.values.end());
    }

    const std::size_t grid = settings.grid_points ? settings.grid_points : default_grid(m);
    const double unit_phase = accumulated_phase(model, shape, m, period_us, grid);
    const double v = visibility(model, m, period_us);

    MeasurementCurve curve{m, period_us, sweep, {}, {}, settings.repetitions};
    curve.mean_signal.reserve(sweep.values.size());
    curve.std_err.reserve(sweep.values.size());
    for (std::size_t i = 0; i < sweep.values.size(); ++i) {
        const double x = sweep.values[i];
        const double expected = sweep.kind == SweepKind::Amplitude
                                    ? signal_from_phase(v, x * unit_phase, 0.0, ReadoutMode::Amplitude)
                                    : signal_from_phase(v, unit_phase, x, ReadoutMode::Phase);
        if (!settings.repetitions) {
            curve.mean_signal.push_back(expected);
            curve.std_err.push_back(0.0);
            continue;
        }
        const auto r = simulate_readout(model, expected, *settings.repetitions,
                                        settings.key.child({m.value(), i}));
        curve.mean_signal.push_back(r.mean);
        curve.std_err.push_back(r.std_err);
    }
    return curve;
}

} // namespace walshrec
