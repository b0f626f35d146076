#include "walshrec/scenario.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace walshrec;

namespace {

std::string error_of(const std::string& text)
{
    try {
        parse_scenario(Config::parse_string(text, "test.cfg"));
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

const std::string base = R"([scenario]
period_us = 10
points = 16
protocol = noiseless

[waveform]
type = sinusoid
amplitude_nT = 100
frequency_kHz = 100
)";

} // namespace

TEST_CASE("config parser", "[config]")
{
    const auto cfg = Config::parse_string("# comment\n[a]\nx = 1.5 ; trailing\nlist = 1, 2,3\n\n[b]\nflag = yes\n", "c");
    CHECK(cfg.require_double("a.x") == 1.5);
    CHECK(cfg.get_doubles("a.list") == std::vector<double>{1, 2, 3});
    CHECK(cfg.get_bool("b.flag", false));
    CHECK(cfg.get_double("b.missing", 7.0) == 7.0);
    CHECK(cfg.line_of("a.x") == 3);
    CHECK(cfg.line_of("b.missing") == 6);
    CHECK(Config::parse_string("[s]\nm = 1e5\n").require_uint("s.m") == 100000);

    CHECK_THROWS_WITH(Config::parse_string("[a]\nx = 1\nx = 2\n", "f"), "f:3: duplicate key 'x' in [a]");
    CHECK_THROWS_WITH(Config::parse_string("x = 1\n", "f"), "f:1: key outside of any section");
    CHECK_THROWS_WITH(Config::parse_string("[a\n", "f"), "f:1: unterminated section header");
    CHECK_THROWS_WITH(Config::parse_string("[a]\njunk\n", "f"), "f:2: expected 'key = value'");
    CHECK_THROWS_WITH(Config::parse_string("[a]\nx = abc\n", "f").require_double("a.x"),
                      "f:2: expected a number for 'a.x', got 'abc'");
    CHECK_THROWS(Config::parse_string("[a]\nn = -3\n").require_uint("a.n"));
    CHECK_THROWS(Config::parse_string("[a]\nn = 2.5\n").require_uint("a.n"));
    CHECK_THROWS_AS(Config::load("/nonexistent.cfg"), ConfigError);
}

TEST_CASE("scenario validation", "[config]")
{
    CHECK(error_of(base).empty());
    const auto sc = parse_scenario(Config::parse_string(base, "t"));
    CHECK(sc.points() == 16);
    CHECK(sc.order == 4);
    CHECK(sc.protocol == Protocol::Noiseless);

    // missing T cites the key and the section line
    std::string no_t = base;
    no_t.erase(no_t.find("period_us = 10\n"), 15);
    CHECK(error_of(no_t) == "test.cfg:1: missing required key 'scenario.period_us'");

    // distinct messages for each invariant
    std::string bad_n = base;
    bad_n.replace(bad_n.find("points = 16"), 11, "points = 12");
    CHECK(error_of(bad_n).find("test.cfg:3: points = 12 is not a power of two") == 0);

    std::string noisy = base;
    noisy.replace(noisy.find("noiseless"), 9, "phase_sweep\nrepetitions = 0");
    CHECK(error_of(noisy).find("repetitions must be >= 1") != std::string::npos);
    std::string noisy_missing = base;
    noisy_missing.replace(noisy_missing.find("noiseless"), 9, "amplitude_sweep");
    CHECK(error_of(noisy_missing).find("missing required key 'scenario.repetitions'") != std::string::npos);

    std::string bandwidth = base + "\n[sensor]\npi_pulse_us = 1.0\n";
    CHECK_THROWS_AS(parse_scenario(Config::parse_string(bandwidth, "t")), InfeasibleError);
    try {
        parse_scenario(Config::parse_string(bandwidth, "t"));
    } catch (const InfeasibleError& e) {
        CHECK(std::string(e.what()).find("pi_pulse_us") != std::string::npos);
    }

    CHECK(error_of(base + "amplitude_uT = 3\n").find("test.cfg:10: unknown key 'waveform.amplitude_uT'") == 0);
    std::string bad_type = base;
    bad_type.replace(bad_type.find("sinusoid"), 8, "square");
    CHECK(error_of(bad_type).find("unknown waveform type 'square'") != std::string::npos);
    CHECK(error_of(base + "\n[sensor]\ncontrast = 2\n").find("contrast must lie in (0, 1]") != std::string::npos);
    CHECK(error_of(base + "\n[sweep]\nmax_phase_rad = 2\n").find("max_phase_rad") != std::string::npos);
}

TEST_CASE("bundled scenarios parse", "[config]")
{
    for (const char* name : {"fig2_sine", "fig2_cosine", "fig2_sine_noisy", "fig3_bichromatic", "fig4_neuron",
                             "compare_default"}) {
        INFO(name);
        CHECK_NOTHROW(load_scenario(std::string(WALSHREC_SCENARIOS) + "/" + name + ".cfg"));
    }
}
