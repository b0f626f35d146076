#pragma once

// Scenario files: parsing and validation, end-to-end acquisition runs,
// Walsh-vs-sequential comparisons and deterministic artifact writers.

#include "walshrec/config.hpp"
#include "walshrec/estimation.hpp"
#include "walshrec/reconstruct.hpp"
#include "walshrec/sensor.hpp"
#include "walshrec/walsh.hpp"
#include "walshrec/waveform.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace walshrec {

/// Unrecoverable numerical failure during a run (non-finite results).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Protocol { Noiseless, AmplitudeSweep, PhaseSweep };

inline std::string_view to_string(Protocol p) noexcept
{
    switch (p) {
    case Protocol::Noiseless: return "noiseless";
    case Protocol::AmplitudeSweep: return "amplitude_sweep";
    case Protocol::PhaseSweep: return "phase_sweep";
    }
    return "unknown";
}

inline constexpr unsigned max_scenario_order = 20;

struct CompareSettings {
    std::vector<std::size_t> points{4, 16, 64};
    ComparisonOptions options;
    std::size_t subset_budget = 16;
};

struct Scenario {
    std::string origin;
    double period_us = 0.0;
    unsigned order = 0;
    Protocol protocol = Protocol::Noiseless;
    std::optional<std::uint64_t> repetitions;
    std::uint64_t seed = 0;
    Ordering ordering = Ordering::Sequency;
    unsigned grid_multiplier = default_grid_multiplier;
    Waveform waveform = Sinusoid{};
    SensorModel sensor;
    std::size_t sweep_points = 0;  // 0: protocol default
    double max_phase_rad = 0.45;   // amplitude sweep reaches |gamma b T| = max_phase_rad
    CompareSettings compare;

    std::size_t points() const noexcept { return std::size_t{1} << order; }
};

namespace detail {

inline Waveform parse_waveform(const Config& cfg, const std::filesystem::path& base_dir)
{
    const auto type = cfg.require_string("waveform.type");
    if (type == "sinusoid") {
        return Sinusoid{cfg.require_double("waveform.amplitude_nT"), cfg.require_double("waveform.frequency_kHz"),
                        cfg.get_double("waveform.phase_rad", 0.0)};
    }
    if (type == "polychromatic") {
        Polychromatic p{cfg.require_double("waveform.amplitude_nT"), {}};
        const auto rel = cfg.get_doubles("waveform.relative_amplitudes");
        const auto freq = cfg.get_doubles("waveform.frequencies_kHz");
        auto phase = cfg.get_doubles("waveform.phases_rad");
        if (freq.empty()) throw cfg.error_at("waveform.frequencies_kHz", "missing required key 'waveform.frequencies_kHz'");
        if (phase.empty()) phase.assign(freq.size(), 0.0);
        if (rel.size() != freq.size() || phase.size() != freq.size())
            throw cfg.error_at("waveform.frequencies_kHz",
                               "relative_amplitudes, frequencies_kHz and phases_rad must have equal lengths");
        for (std::size_t i = 0; i < freq.size(); ++i) p.components.push_back({rel[i], freq[i], phase[i]});
        return p;
    }
    if (type == "skew_normal_field") {
        SkewNormalImpulse phi{cfg.require_double("waveform.phi_amplitude_Vpp"), cfg.require_double("waveform.location_us"),
                              cfg.require_double("waveform.scale_us"), cfg.get_double("waveform.shape", 0.0)};
        if (!(phi.scale_us > 0.0)) throw cfg.error_at("waveform.scale_us", "scale_us must be positive");
        NeuronConversion conv{cfg.get_double("waveform.conversion_uT_per_Vpp_kHz", NeuronConversion{}.c_uT_per_Vpp_kHz)};
        return radiated_field(Waveform(phi), conv);
    }
    if (type == "sampled") {
        const auto file = cfg.require_string("waveform.file");
        const auto path = std::filesystem::path(file).is_absolute() ? std::filesystem::path(file) : base_dir / file;
        try {
            return Waveform(read_trace_csv(path.string()));
        } catch (const std::exception& e) {
            throw cfg.error_at("waveform.file", e.what());
        }
    }
    throw cfg.error_at("waveform.type", "unknown waveform type '" + type +
                                            "' (expected sinusoid, polychromatic, skew_normal_field or sampled)");
}

inline SensorModel parse_sensor(const Config& cfg)
{
    SensorModel s;
    s.gamma_rad_per_s_nT = cfg.get_double("sensor.gamma_rad_per_s_per_nT", s.gamma_rad_per_s_nT);
    s.contrast = cfg.get_double("sensor.contrast", s.contrast);
    s.s0_counts = cfg.get_double("sensor.s0_counts", s.s0_counts);
    s.s1_counts = cfg.get_double("sensor.s1_counts", s.s1_counts);
    s.t2_base_us = cfg.get_double("sensor.t2_base_us", s.t2_base_us);
    s.stretch_exponent = cfg.get_double("sensor.stretch_exponent", s.stretch_exponent);
    s.t2_scaling_exponent = cfg.get_double("sensor.t2_scaling_exponent", s.t2_scaling_exponent);
    s.ensemble_size = cfg.get_double("sensor.ensemble_size", s.ensemble_size);
    s.pi_pulse_us = cfg.get_double("sensor.pi_pulse_us", s.pi_pulse_us);
    try {
        s.validate();
    } catch (const std::exception& e) {
        throw cfg.error(cfg.line_of("sensor.x"), e.what());
    }
    return s;
}

} // namespace detail

/// Builds and validates a scenario. Configuration problems raise
/// ConfigError; a physically infeasible bandwidth raises InfeasibleError.
inline Scenario parse_scenario(const Config& cfg)
{
    Scenario sc;
    sc.origin = cfg.origin();
    const auto base_dir = std::filesystem::path(cfg.origin()).parent_path();

    sc.period_us = cfg.require_double("scenario.period_us");
    if (!(sc.period_us > 0.0)) throw cfg.error_at("scenario.period_us", "period_us must be positive");

    const auto points = cfg.require_uint("scenario.points");
    if (points == 0 || !std::has_single_bit(points))
        throw cfg.error_at("scenario.points",
                           "points = " + std::to_string(points) + " is not a power of two (N must equal 2^n)");
    sc.order = static_cast<unsigned>(std::countr_zero(points));
    if (sc.order > max_scenario_order)
        throw cfg.error_at("scenario.points", "points exceeds the cap of 2^" + std::to_string(max_scenario_order));

    const auto protocol = cfg.get_string("scenario.protocol").value_or("noiseless");
    if (protocol == "noiseless")
        sc.protocol = Protocol::Noiseless;
    else if (protocol == "amplitude_sweep")
        sc.protocol = Protocol::AmplitudeSweep;
    else if (protocol == "phase_sweep")
        sc.protocol = Protocol::PhaseSweep;
    else
        throw cfg.error_at("scenario.protocol", "unknown protocol '" + protocol +
                                                    "' (expected noiseless, amplitude_sweep or phase_sweep)");

    if (sc.protocol != Protocol::Noiseless) {
        const auto m = cfg.require_uint("scenario.repetitions");
        if (m < 1) throw cfg.error_at("scenario.repetitions", "repetitions must be >= 1 for a noisy protocol");
        sc.repetitions = m;
    } else if (cfg.has("scenario.repetitions")) {
        throw cfg.error_at("scenario.repetitions", "repetitions is only meaningful for noisy protocols");
    }

    sc.seed = cfg.get_uint("scenario.seed", 0);
    if (auto o = cfg.get_string("scenario.ordering")) {
        try {
            sc.ordering = parse_ordering(*o);
        } catch (const std::exception& e) {
            throw cfg.error_at("scenario.ordering", e.what());
        }
    }
    const auto mult = cfg.get_uint("scenario.grid_multiplier", default_grid_multiplier);
    if (mult == 0 || !std::has_single_bit(mult) || mult > 4096)
        throw cfg.error_at("scenario.grid_multiplier", "grid_multiplier must be a power of two in [1, 4096]");
    sc.grid_multiplier = static_cast<unsigned>(mult);

    sc.waveform = detail::parse_waveform(cfg, base_dir);
    sc.sensor = detail::parse_sensor(cfg);

    sc.sweep_points = cfg.get_uint("sweep.points", 0);
    sc.max_phase_rad = cfg.get_double("sweep.max_phase_rad", sc.max_phase_rad);
    if (!(sc.max_phase_rad > 0.0 && sc.max_phase_rad < std::numbers::pi / 2.0))
        throw cfg.error_at("sweep.max_phase_rad", "max_phase_rad must lie in (0, pi/2)");
    if (sc.sweep_points != 0) {
        const std::size_t min = sc.protocol == Protocol::PhaseSweep ? 3 : 4;
        if (sc.sweep_points < min)
            throw cfg.error_at("sweep.points", "sweep needs at least " + std::to_string(min) + " points");
    }

    auto& cmp = sc.compare;
    if (cfg.has("compare.points")) {
        cmp.points.clear();
        for (auto p : cfg.get_uints("compare.points")) {
            if (p == 0 || !std::has_single_bit(p))
                throw cfg.error_at("compare.points", "compare point count " + std::to_string(p) +
                                                         " is not a power of two");
            cmp.points.push_back(p);
        }
    }
    cmp.options.trials = cfg.get_uint("compare.trials", cmp.options.trials);
    if (cmp.options.trials < 2) throw cfg.error_at("compare.trials", "trials must be >= 2");
    cmp.options.walsh_repetitions = cfg.get_uint("compare.walsh_repetitions", cmp.options.walsh_repetitions);
    if (cmp.options.walsh_repetitions < 1)
        throw cfg.error_at("compare.walsh_repetitions", "walsh_repetitions must be >= 1");
    cmp.options.t2_star_us = cfg.get_double("compare.t2_star_us", cmp.options.t2_star_us);
    cmp.options.min_interval_us = cfg.get_double("compare.min_interval_us", cmp.options.min_interval_us);
    cmp.options.include_visibility = cfg.get_bool("compare.include_visibility", cmp.options.include_visibility);
    cmp.options.monte_carlo = cfg.get_bool("compare.monte_carlo", cmp.options.monte_carlo);
    cmp.subset_budget = cfg.get_uint("compare.subset_budget", cmp.subset_budget);
    if (cmp.subset_budget < 1) throw cfg.error_at("compare.subset_budget", "subset_budget must be >= 1");

    cfg.check_all_used();

    try {
        check_bandwidth(sc.sensor, sc.period_us, sc.points());
    } catch (const InfeasibleError& e) {
        throw InfeasibleError(cfg.origin() + ":" + std::to_string(cfg.line_of("scenario.points")) +
                              ": bandwidth constraint T/N >= pi_pulse_us violated: " + e.what());
    }
    return sc;
}

inline Scenario load_scenario(const std::string& path) { return parse_scenario(Config::load(path)); }

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

struct ScenarioResult {
    std::vector<MeasurementCurve> curves;
    std::vector<CoefficientEstimate> estimates; // sequency order, values in nT
    WalshSpectrum spectrum;                     // requested ordering, nT
    Reconstruction reconstruction;
    WalshSpectrum exact;                        // quadrature spectrum of the injected field
    double reference_amplitude_nT = 0.0;
    double max_abs_derivative = 0.0;            // nT/us
    double bound = 0.0;
    double error = 0.0;                         // e_N against the injected field
    double truncation_error = 0.0;              // e_N of the exact partial sum
    double delta_b = 0.0;
};

/// Acquires every Walsh coefficient w_0 .. w_{N-1}, fits each curve and
/// reconstructs. Amplitude sweeps scale the normalised shape b/b_ref and
/// report b_ref * f(m); phase sweeps measure the field as configured.
inline ScenarioResult run_scenario(const Scenario& sc)
{
    ScenarioResult res;
    const std::size_t n_points = sc.points();
    const std::size_t grid = n_points * sc.grid_multiplier;
    const double gamma = sc.sensor.gamma_rad_per_s_nT;

    res.reference_amplitude_nT = reference_amplitude(sc.waveform, sc.period_us);
    const double b_ref = res.reference_amplitude_nT > 0.0 ? res.reference_amplitude_nT : 1.0;
    const auto shape = [&](double t) { return sc.waveform(t) / b_ref; };

    AcquisitionSettings settings{sc.repetitions, RngKey{sc.seed, 0}, grid};
    const double b_max = sc.max_phase_rad / (sc.sensor.gamma_rad_per_us_nT() * sc.period_us);

    for (std::size_t m = 0; m < n_points; ++m) {
        const WalshIndex idx(m);
        CoefficientEstimate est;
        if (sc.protocol == Protocol::PhaseSweep) {
            auto curve = acquire_curve(sc.sensor, sc.waveform, idx, sc.period_us,
                                       phase_sweep(sc.sweep_points ? sc.sweep_points : 12), settings);
            est = fit_cosine_phase(curve, gamma, sc.period_us);
            res.curves.push_back(std::move(curve));
        } else {
            auto curve = acquire_curve(sc.sensor, shape, idx, sc.period_us,
                                       amplitude_sweep(b_max, sc.sweep_points ? sc.sweep_points : 11), settings);
            SlopeFitOptions opts;
            opts.visibility = visibility(sc.sensor, idx, sc.period_us);
            opts.max_phase_rad = std::max(opts.max_phase_rad, 1.01 * sc.max_phase_rad);
            const auto f = fit_slope_origin(curve, gamma, sc.period_us, opts);
            est = make_estimate(idx, b_ref * f.value, b_ref * f.sigma, f.flagged, f.note);
            res.curves.push_back(std::move(curve));
        }
        if (!std::isfinite(est.value))
            throw NumericalError("non-finite estimate for Walsh coefficient " + std::to_string(m));
        res.estimates.push_back(std::move(est));
    }

    res.reconstruction = reconstruct(res.estimates, sc.period_us, n_points);
    res.spectrum = res.reconstruction.source.reordered(sc.ordering);
    res.delta_b = res.reconstruction.sigma;

    res.exact = walsh_spectrum(sc.waveform, sc.period_us, sc.order, sc.grid_multiplier);
    res.max_abs_derivative = max_abs_derivative(sc.waveform, sc.period_us, std::max<std::size_t>(4096, grid));
    res.bound = truncation_bound(res.max_abs_derivative, sc.period_us, sc.order);
    res.error = l2_error(res.reconstruction, sc.waveform, sc.grid_multiplier);
    res.truncation_error = l2_error(reconstruct(res.exact), sc.waveform, sc.grid_multiplier);
    return res;
}

struct SubsetComparisonRow {
    std::string subset;
    std::size_t budget = 0;
    std::size_t used = 0;
    double error = 0.0;
    std::string warning;
};

struct ComparisonResult {
    std::vector<SequentialComparison> sequential;
    std::vector<SubsetComparisonRow> subsets;
    bool full_walsh_best = false;
};

/// Walsh vs sequential sensitivity for each configured N, and FullWalsh vs
/// CPMG / PDD subsets at the scenario's order with the configured budget.
inline ComparisonResult run_comparison(const Scenario& sc)
{
    ComparisonResult out;
    for (std::size_t i = 0; i < sc.compare.points.size(); ++i) {
        auto opts = sc.compare.options;
        opts.key = RngKey{sc.seed, 0}.child({0xC0, i});
        opts.grid_multiplier = sc.grid_multiplier;
        out.sequential.push_back(compare_sequential(sc.compare.points[i], sc.period_us, sc.sensor, sc.waveform, opts));
    }

    const std::size_t budget = sc.compare.subset_budget;
    double full_error = 0.0;
    double best_other = std::numeric_limits<double>::infinity();
    for (auto kind : {SubsetKind::CPMG, SubsetKind::PDD, SubsetKind::CPMGPlusPDD}) {
        const auto report = subset_reconstruct(sc.waveform, kind, budget, sc.order, sc.period_us, sc.grid_multiplier);
        full_error = report.full_walsh_error;
        best_other = std::min(best_other, report.error);
        out.subsets.push_back({to_string(SubsetTag{kind}), budget, report.used, report.error, report.warning});
    }
    out.subsets.insert(out.subsets.begin(),
                       SubsetComparisonRow{"FullWalsh", budget, std::min(budget, sc.points()), full_error, ""});
    out.full_walsh_best = full_error < best_other;
    return out;
}

// ---------------------------------------------------------------------------
// Serialisation (12 significant digits, no timestamps)
// ---------------------------------------------------------------------------

using ojson = nlohmann::ordered_json;

/// Rounds to 12 significant digits; non-finite values become null.
inline ojson num(double x)
{
    if (!std::isfinite(x)) return nullptr;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return std::strtod(buf, nullptr);
}

inline std::string fmt12(double x)
{
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

inline ojson spectrum_json(const WalshSpectrum& spectrum, const std::vector<CoefficientEstimate>* estimates = nullptr)
{
    ojson j;
    j["period_us"] = num(spectrum.period_us);
    j["points"] = spectrum.size();
    j["ordering"] = std::string(to_string(spectrum.ordering));
    j["units"] = "nT";
    ojson coeffs = ojson::array();
    const unsigned n = spectrum.order();
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        ojson c;
        const auto seq = convert_index(i, spectrum.ordering, Ordering::Sequency, n);
        c["index"] = i;
        c["sequency"] = seq;
        c["value"] = num(spectrum.coeffs[i]);
        if (spectrum.has_sigmas()) c["sigma"] = num(spectrum.sigmas[i]);
        if (estimates) {
            const auto& e = (*estimates)[seq];
            c["ci95_low"] = num(e.ci95_low);
            c["ci95_high"] = num(e.ci95_high);
            c["flagged"] = e.flagged;
            if (!e.note.empty()) c["note"] = e.note;
        }
        coeffs.push_back(std::move(c));
    }
    j["coefficients"] = std::move(coeffs);
    return j;
}

/// Inverse of spectrum_json (reads index order, values and optional sigmas).
inline WalshSpectrum spectrum_from_json(const nlohmann::json& j)
{
    WalshSpectrum s;
    s.period_us = j.at("period_us").get<double>();
    s.ordering = parse_ordering(j.at("ordering").get<std::string>());
    const auto& coeffs = j.at("coefficients");
    const std::size_t size = coeffs.size();
    if (size == 0 || !std::has_single_bit(size))
        throw std::invalid_argument("spectrum length " + std::to_string(size) + " is not a power of two");
    s.coeffs.assign(size, 0.0);
    bool sigmas = true;
    std::vector<double> sig(size, 0.0);
    for (const auto& c : coeffs) {
        const auto i = c.at("index").get<std::size_t>();
        if (i >= size) throw std::out_of_range("coefficient index " + std::to_string(i) + " out of range");
        s.coeffs[i] = c.at("value").get<double>();
        if (c.contains("sigma") && c["sigma"].is_number())
            sig[i] = c["sigma"].get<double>();
        else
            sigmas = false;
    }
    if (sigmas) s.sigmas = std::move(sig);
    return s;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

inline std::string reconstruction_csv(const Reconstruction& rec)
{
    std::ostringstream out;
    out << "time_us,field_nT,sigma_nT\n";
    for (std::size_t j = 0; j < rec.size(); ++j)
        out << fmt12(rec.cell_start_us(j)) << ',' << fmt12(rec.values[j]) << ',' << fmt12(rec.sigma) << '\n';
    return out.str();
}

inline std::string curve_csv(const MeasurementCurve& curve)
{
    std::ostringstream out;
    out << to_string(curve.sweep.kind) << ",mean_signal,std_err\n";
    for (std::size_t i = 0; i < curve.sweep.values.size(); ++i)
        out << fmt12(curve.sweep.values[i]) << ',' << fmt12(curve.mean_signal[i]) << ',' << fmt12(curve.std_err[i])
            << '\n';
    return out.str();
}

inline std::string curve_file_name(std::size_t m, std::size_t points)
{
    const auto digits = std::max<std::size_t>(2, std::to_string(points - 1).size());
    std::string s = std::to_string(m);
    return "m_" + std::string(digits - std::min(digits, s.size()), '0') + s + ".csv";
}

inline ojson error_report_json(const Scenario& sc, const ScenarioResult& res)
{
    ojson j;
    j["subset"] = "FullWalsh";
    j["budget"] = sc.points();
    j["e_N"] = num(res.error);
    j["bound"] = num(res.bound);
    j["within_bound"] = res.error <= res.bound;
    j["truncation_error"] = num(res.truncation_error);
    j["delta_b"] = num(res.delta_b);
    j["within_bound_plus_3_delta_b"] = res.error <= res.bound + 3.0 * res.delta_b;
    j["max_abs_derivative_nT_per_us"] = num(res.max_abs_derivative);
    j["reference_amplitude_nT"] = num(res.reference_amplitude_nT);
    j["protocol"] = std::string(to_string(sc.protocol));
    if (sc.repetitions) j["repetitions"] = *sc.repetitions;
    j["seed"] = sc.seed;
    std::size_t flagged = 0;
    for (const auto& e : res.estimates) flagged += e.flagged ? 1 : 0;
    j["flagged_coefficients"] = flagged;
    return j;
}

inline void write_scenario_outputs(const Scenario& sc, const ScenarioResult& res, const std::filesystem::path& dir)
{
    auto spectrum = spectrum_json(res.spectrum, &res.estimates);
    spectrum["protocol"] = std::string(to_string(sc.protocol));
    spectrum["seed"] = sc.seed;
    write_text(dir / "spectrum.json", spectrum.dump(2) + "\n");
    write_text(dir / "reconstruction.csv", reconstruction_csv(res.reconstruction));
    write_text(dir / "error_report.json", error_report_json(sc, res).dump(2) + "\n");
    for (const auto& c : res.curves)
        write_text(dir / "curves" / curve_file_name(c.index.value(), sc.points()), curve_csv(c));
}

inline ojson comparison_json(const Scenario& sc, const ComparisonResult& cmp)
{
    ojson j;
    j["period_us"] = num(sc.period_us);
    j["seed"] = sc.seed;
    j["trials"] = sc.compare.options.trials;
    j["walsh_repetitions"] = sc.compare.options.walsh_repetitions;
    j["include_visibility"] = sc.compare.options.include_visibility;
    ojson seq = ojson::array();
    for (const auto& r : cmp.sequential) {
        ojson e;
        e["points"] = r.points;
        e["interval_us"] = num(r.interval_us);
        e["feasible"] = r.feasible;
        e["admissible"] = r.admissible;
        if (!r.reason.empty()) e["reason"] = r.reason;
        e["analytic_sensitivity_ratio"] = num(r.analytic_sensitivity_ratio);
        e["analytic_time_ratio"] = num(r.analytic_time_ratio);
        e["walsh_eta_nT_per_rtHz"] = num(r.walsh_eta);
        e["mc_sensitivity_ratio"] = r.mc_sensitivity_ratio ? num(*r.mc_sensitivity_ratio) : ojson(nullptr);
        e["mc_time_ratio"] = r.mc_time_ratio ? num(*r.mc_time_ratio) : ojson(nullptr);
        if (r.mc_walsh_resolution_nT) e["mc_walsh_resolution_nT"] = num(*r.mc_walsh_resolution_nT);
        if (r.mc_sequential_resolution_nT) e["mc_sequential_resolution_nT"] = num(*r.mc_sequential_resolution_nT);
        seq.push_back(std::move(e));
    }
    j["sequential"] = std::move(seq);
    ojson subsets = ojson::array();
    for (const auto& s : cmp.subsets) {
        ojson e;
        e["subset"] = s.subset;
        e["budget"] = s.budget;
        e["used"] = s.used;
        e["e_N"] = num(s.error);
        if (!s.warning.empty()) e["warning"] = s.warning;
        subsets.push_back(std::move(e));
    }
    j["subsets"] = std::move(subsets);
    j["full_walsh_best"] = cmp.full_walsh_best;
    return j;
}

} // namespace walshrec
