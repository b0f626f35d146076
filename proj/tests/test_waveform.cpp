#include "walshrec/waveform.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sstream>

using namespace walshrec;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const Polychromatic fig3{1.0, {{0.3, 100.0, -0.0741}, {0.2, 250.0, -1.9686}}};

} // namespace

TEST_CASE("parametric waveform values", "[waveform]")
{
    const Waveform s(Sinusoid{1.0, 100.0, 0.0});
    CHECK_THAT(s(2.5), WithinAbs(1.0, 1e-15));
    CHECK_THAT(evaluate(s, 5.0), WithinAbs(0.0, 1e-14));

    const Waveform p(Polychromatic{2.0, fig3.components});
    CHECK_THAT(p(0.0), WithinAbs(2.0 * (0.3 * std::sin(-0.0741) + 0.2 * std::sin(-1.9686)), 1e-15));
    CHECK_THROWS(s(std::nan("")));
}

TEST_CASE("sampled traces", "[waveform]")
{
    const Waveform w(SampledTrace{0.0, 0.5, {1.0, 3.0, -1.0, 2.0}});
    CHECK(w(0.0) == 1.0);
    CHECK(w(0.5) == 3.0);
    CHECK(w(1.0) == -1.0);
    CHECK(w(1.5) == 2.0);
    CHECK_THAT(w(0.25), WithinAbs(2.0, 1e-15));
    CHECK(w(1.9) == 2.0); // last sample holds until the end of the trace
    CHECK_THROWS(w(2.0));
    CHECK_THROWS(w(-0.1));
    CHECK_THROWS(Waveform(SampledTrace{0.0, 1.0, {}}));
    CHECK_THROWS(Waveform(SampledTrace{0.0, 0.0, {1.0}}));
}

TEST_CASE("trace CSV reader", "[waveform]")
{
    std::istringstream ok("time_us,field_nT\n0,1\n0.5,2\n1.0,3\n");
    const auto t = read_trace_csv(ok);
    CHECK(t.values == std::vector<double>{1, 2, 3});
    CHECK(t.spacing_us == 0.5);

    auto error_of = [](const std::string& text) {
        std::istringstream in(text);
        try {
            read_trace_csv(in, "trace.csv");
        } catch (const std::invalid_argument& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(error_of("t,b\n0,1\n1,2\n").find("trace.csv:1:") == 0);
    CHECK(error_of("time_us,field_nT\n0,1\n1,x\n").find("trace.csv:3:") == 0);
    CHECK(error_of("time_us,field_nT\n0,1\n1,2\n3,2\n").find("trace.csv:4: non-uniform") == 0);
    CHECK(error_of("time_us,field_nT\n1,1\n2,2\n").find("start at t = 0") != std::string::npos);
    CHECK_THROWS(read_trace_csv("/nonexistent/trace.csv"));
}

TEST_CASE("skew-normal impulse", "[waveform]")
{
    const SkewNormalImpulse p{1.0, 5.0, 1.0, 4.0};
    CHECK(std::abs(skew_normal_phi(p, 40.0)) < 1e-100);
    CHECK(std::abs(skew_normal_phi(p, -30.0)) < 1e-100);
    // integrates to amplitude * 2 (the 2/w normalisation)
    double sum = 0.0;
    const double h = 1e-3;
    for (double t = -10.0; t < 20.0; t += h) sum += skew_normal_phi(p, t) * h;
    CHECK_THAT(sum, WithinRel(1.0, 1e-6));
    // analytic derivative against central differences
    for (double t : {3.0, 4.5, 5.0, 5.7, 7.0}) {
        const double num = (skew_normal_phi(p, t + 1e-6) - skew_normal_phi(p, t - 1e-6)) / 2e-6;
        CHECK_THAT(skew_normal_phi_derivative(p, t), WithinAbs(num, 1e-7));
    }
}

TEST_CASE("radiated field", "[waveform]")
{
    // constant potential: no field
    const Waveform flat(SampledTrace{0.0, 1.0, std::vector<double>(20, 3.0)});
    const auto b0 = radiated_field(flat);
    for (double t : {2.0, 7.3, 15.5}) CHECK(b0(t) == 0.0);

    // Gaussian potential: odd, bipolar field with a zero at the peak
    const Waveform gauss(SkewNormalImpulse{1e-5, 5.0, 1.0, 0.0});
    const NeuronConversion conv{};
    const auto b = radiated_field(gauss, conv);
    CHECK_THAT(b(5.0), WithinAbs(0.0, 1e-6));
    for (double d : {0.3, 1.0, 2.0}) CHECK_THAT(b(5.0 + d), WithinRel(-b(5.0 - d), 1e-6));
    CHECK(b(4.0) < 0.0); // rising potential, negative field
    CHECK(b(6.0) > 0.0);
    CHECK_THAT(b(4.0), WithinRel(-conv.nT_per_Vpp_per_us() * skew_normal_phi_derivative({1e-5, 5.0, 1.0, 0.0}, 4.0), 1e-6));
    CHECK_THROWS(Waveform(RadiatedField{nullptr, conv}));
}

TEST_CASE("maximum derivative", "[waveform]")
{
    const Waveform c(SampledTrace{0.0, 1.0, std::vector<double>(16, 2.0)});
    CHECK(max_abs_derivative(c, 16.0) == 0.0);

    const Waveform s(Sinusoid{1.0, 100.0, 0.0});
    CHECK_THAT(max_abs_derivative(s, 10.0), WithinRel(2.0 * std::numbers::pi * 0.1, 1e-3));

    // bichromatic: 2^20-point scan of the analytic derivative as oracle
    const Waveform p(fig3);
    const double T = 10.0;
    double oracle = 0.0;
    const std::size_t dense = 1u << 20;
    for (std::size_t i = 0; i < dense; ++i) oracle = std::max(oracle, std::abs(p.derivative(T * i / dense)));
    CHECK_THAT(max_abs_derivative(p, T), WithinRel(oracle, 5e-3));
    CHECK_THROWS(max_abs_derivative(p, T, 100));
}

TEST_CASE("combining and reference amplitude", "[waveform]")
{
    const Polychromatic a{2.0, {{1.0, 100.0, 0.0}}};
    const Polychromatic b{3.0, {{0.5, 250.0, 0.3}}};
    const Waveform sum(combine(a, b));
    for (double t : {0.0, 1.3, 7.7})
        CHECK_THAT(sum(t), WithinAbs(Waveform(a)(t) + Waveform(b)(t), 1e-14));
    CHECK(reference_amplitude(Waveform(a), 10.0) == 2.0);
    CHECK(reference_amplitude(Waveform(Sinusoid{-4.0, 1.0, 0.0}), 10.0) == 4.0);
    const Waveform tri(SampledTrace{0.0, 1.0, {0.0, -5.0, 1.0}});
    CHECK_THAT(reference_amplitude(tri, 3.0), WithinRel(5.0, 1e-2));
}
