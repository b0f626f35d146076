// walshrec command-line front end.
//
//   walshrec simulate <config>     full acquisition, fit and reconstruction
//   walshrec compare <config>      Walsh vs sequential and subset comparison
//   walshrec transform <trace.csv> Walsh spectrum of a sampled trace
//   walshrec reconstruct <spectrum.json>
//   walshrec bound <config|trace.csv> --order n
//
// Exit codes: 0 ok, 2 configuration error, 3 infeasible scenario,
// 4 numerical failure.

#include "walshrec/walshrec.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace walshrec;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_infeasible = 3;
constexpr int exit_numerical = 4;

struct Common {
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    std::optional<unsigned> grid_multiplier;
    std::optional<std::string> ordering;
};

void apply_overrides(Scenario& sc, const Common& common)
{
    if (common.seed) sc.seed = *common.seed;
    if (common.grid_multiplier) {
        const unsigned g = *common.grid_multiplier;
        if (g == 0 || !std::has_single_bit(g)) throw ConfigError("--grid-multiplier must be a power of two");
        sc.grid_multiplier = g;
    }
    if (common.ordering) sc.ordering = parse_ordering(*common.ordering);
}

Waveform load_waveform(const std::string& path, double& period_us)
{
    if (fs::path(path).extension() == ".csv") {
        auto trace = read_trace_csv(path);
        period_us = trace.end_us();
        return Waveform(std::move(trace));
    }
    const auto sc = load_scenario(path);
    period_us = sc.period_us;
    return sc.waveform;
}

int cmd_simulate(const std::string& config, const Common& common)
{
    auto sc = load_scenario(config);
    apply_overrides(sc, common);
    const auto res = run_scenario(sc);
    write_scenario_outputs(sc, res, common.out_dir);
    std::cout << "N = " << sc.points() << "  e_N = " << fmt12(res.error) << " nT  bound = " << fmt12(res.bound)
              << " nT  delta_b = " << fmt12(res.delta_b) << " nT\n"
              << "wrote " << (fs::path(common.out_dir) / "spectrum.json").string() << ", reconstruction.csv, "
              << "error_report.json, curves/\n";
    return exit_ok;
}

int cmd_compare(const std::string& config, const Common& common)
{
    auto sc = load_scenario(config);
    apply_overrides(sc, common);
    const auto cmp = run_comparison(sc);
    write_text(fs::path(common.out_dir) / "comparison.json", comparison_json(sc, cmp).dump(2) + "\n");
    for (const auto& r : cmp.sequential) {
        std::cout << "N = " << r.points << "  analytic ratio = " << fmt12(r.analytic_sensitivity_ratio);
        if (r.mc_sensitivity_ratio) std::cout << "  Monte-Carlo ratio = " << fmt12(*r.mc_sensitivity_ratio);
        if (!r.reason.empty()) std::cout << "  (" << r.reason << ")";
        std::cout << '\n';
    }
    for (const auto& s : cmp.subsets) std::cout << s.subset << ": e = " << fmt12(s.error) << " nT\n";
    return exit_ok;
}

int cmd_transform(const std::string& file, std::optional<unsigned> order, const Common& common)
{
    const auto trace = read_trace_csv(file);
    const auto samples = trace.values.size();
    WalshSpectrum spectrum;
    const Ordering ordering = common.ordering ? parse_ordering(*common.ordering) : Ordering::Sequency;
    if (!order && std::has_single_bit(samples)) {
        spectrum = fwht(trace.values, ordering, trace.end_us());
    } else {
        if (!order) throw ConfigError(file + ": trace length " + std::to_string(samples) +
                                      " is not a power of two; pass --order");
        const unsigned mult = common.grid_multiplier.value_or(default_grid_multiplier);
        spectrum = walsh_spectrum(Waveform(trace), trace.end_us(), *order, mult, ordering);
    }
    write_text(fs::path(common.out_dir) / "spectrum.json", spectrum_json(spectrum).dump(2) + "\n");
    std::cout << "wrote " << spectrum.size() << " coefficients to "
              << (fs::path(common.out_dir) / "spectrum.json").string() << '\n';
    return exit_ok;
}

int cmd_reconstruct(const std::string& file, const Common& common)
{
    std::ifstream in(file);
    if (!in) throw ConfigError(file + ": cannot open spectrum file");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(file + ": " + e.what());
    }
    WalshSpectrum spectrum;
    try {
        spectrum = spectrum_from_json(j);
    } catch (const std::exception& e) {
        throw ConfigError(file + ": " + e.what());
    }
    const auto rec = reconstruct(spectrum);
    write_text(fs::path(common.out_dir) / "reconstruction.csv", reconstruction_csv(rec));
    std::cout << "wrote " << rec.size() << " cells to "
              << (fs::path(common.out_dir) / "reconstruction.csv").string() << '\n';
    return exit_ok;
}

int cmd_bound(const std::string& file, unsigned order)
{
    double period = 0.0;
    const auto w = load_waveform(file, period);
    const double d = max_abs_derivative(w, period, std::max<std::size_t>(4096, std::size_t{64} << order));
    ojson j;
    j["period_us"] = num(period);
    j["order"] = order;
    j["points"] = std::size_t{1} << order;
    j["max_abs_derivative_nT_per_us"] = num(d);
    j["bound_nT"] = num(truncation_bound(d, period, order));
    std::cout << j.dump(2) << '\n';
    return exit_ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Walsh reconstruction of time-varying fields measured by a qubit sensor"};
    app.require_subcommand(1);
    Common common;
    std::string input;
    std::optional<unsigned> order;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", common.seed, "override the scenario seed");
        sub->add_option("--out-dir", common.out_dir, "output directory")->capture_default_str();
        sub->add_option("--grid-multiplier", common.grid_multiplier, "quadrature sub-samples per dyadic cell");
        sub->add_option("--ordering", common.ordering, "sequency, paley or hadamard");
    };

    auto* simulate = app.add_subcommand("simulate", "config -> full acquisition and reconstruction");
    simulate->add_option("config", input, "scenario file")->required();
    add_common(simulate);

    auto* compare = app.add_subcommand("compare", "config -> sensitivity and subset comparison");
    compare->add_option("config", input, "scenario file")->required();
    add_common(compare);

    auto* transform = app.add_subcommand("transform", "trace CSV -> spectrum.json");
    transform->add_option("trace", input, "CSV with header time_us,field_nT")->required();
    transform->add_option("--order", order, "Walsh order n (N = 2^n)");
    add_common(transform);

    auto* recon = app.add_subcommand("reconstruct", "spectrum.json -> reconstruction.csv");
    recon->add_option("spectrum", input, "spectrum JSON")->required();
    add_common(recon);

    auto* bound = app.add_subcommand("bound", "waveform + n -> truncation bound");
    bound->add_option("waveform", input, "scenario file or trace CSV")->required();
    bound->add_option("--order", order, "Walsh order n (N = 2^n)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        if (order && *order > max_scenario_order)
            throw ConfigError("--order exceeds the cap of " + std::to_string(max_scenario_order));
        if (*simulate) return cmd_simulate(input, common);
        if (*compare) return cmd_compare(input, common);
        if (*transform) return cmd_transform(input, order, common);
        if (*recon) return cmd_reconstruct(input, common);
        if (*bound) return cmd_bound(input, *order);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return exit_infeasible;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return exit_numerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_numerical;
    }
    return exit_ok;
}
