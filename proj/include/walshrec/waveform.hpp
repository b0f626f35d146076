#pragma once

// Time-varying field models. Times are in microseconds, frequencies in kHz,
// fields in nT (the skew-normal impulse is an electric signal in Vpp and
// becomes a field through RadiatedField).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace walshrec {

/// cycles per (kHz * us)
inline constexpr double khz_us = 1e-3;

struct Sinusoid {
    double amplitude_nT = 1.0;
    double frequency_kHz = 0.0;
    double phase_rad = 0.0;
};

struct ToneComponent {
    double relative_amplitude = 1.0;
    double frequency_kHz = 0.0;
    double phase_rad = 0.0;
};

/// b * sum_i a_i sin(2 pi nu_i t + alpha_i)
struct Polychromatic {
    double amplitude_nT = 1.0;
    std::vector<ToneComponent> components;
};

/// Skew-normal impulse Phi(t) = A (2/w) phi(z) Phi_cdf(alpha z), z = (t - xi)/w.
struct SkewNormalImpulse {
    double amplitude_Vpp = 1.0;
    double location_us = 0.0;
    double scale_us = 1.0;
    double shape = 0.0;
};

/// Uniformly spaced trace on [start, start + size * spacing).
struct SampledTrace {
    double start_us = 0.0;
    double spacing_us = 1.0;
    std::vector<double> values;

    double end_us() const noexcept { return start_us + spacing_us * static_cast<double>(values.size()); }
};

/// Waveguide / neuron model b(t) = -c dPhi/dt.
struct NeuronConversion {
    double c_uT_per_Vpp_kHz = 25.4;

    /// nT per (Vpp/us): uT -> nT is 1e3 and 1/us = 1e3 kHz.
    double nT_per_Vpp_per_us() const noexcept { return c_uT_per_Vpp_kHz * 1e6; }
};

class Waveform;

struct RadiatedField {
    std::shared_ptr<const Waveform> source;
    NeuronConversion conversion;
};

namespace detail {

inline double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

} // namespace detail

inline double skew_normal_phi(const SkewNormalImpulse& p, double t_us)
{
    if (!(p.scale_us > 0.0)) throw std::domain_error("skew-normal scale must be positive");
    const double z = (t_us - p.location_us) / p.scale_us;
    return p.amplitude_Vpp * (2.0 / p.scale_us) * detail::std_normal_pdf(z) *
           detail::std_normal_cdf(p.shape * z);
}

inline double skew_normal_phi_derivative(const SkewNormalImpulse& p, double t_us)
{
    if (!(p.scale_us > 0.0)) throw std::domain_error("skew-normal scale must be positive");
    const double z = (t_us - p.location_us) / p.scale_us;
    const double pdf = detail::std_normal_pdf(z);
    const double dz = -z * pdf * detail::std_normal_cdf(p.shape * z) +
                      pdf * p.shape * detail::std_normal_pdf(p.shape * z);
    return p.amplitude_Vpp * (2.0 / (p.scale_us * p.scale_us)) * dz;
}

class Waveform {
public:
    using Model = std::variant<Sinusoid, Polychromatic, SkewNormalImpulse, SampledTrace, RadiatedField>;

    Waveform(Sinusoid s) : model_(s) {}
    Waveform(Polychromatic p) : model_(std::move(p)) {}
    Waveform(SkewNormalImpulse s) : model_(s) {}
    Waveform(SampledTrace s) : model_(validated(std::move(s))) {}
    Waveform(RadiatedField r) : model_(validated(std::move(r))) {}

    const Model& model() const noexcept { return model_; }

    double operator()(double t_us) const { return evaluate(t_us); }

    double evaluate(double t_us) const
    {
        if (!std::isfinite(t_us)) throw std::domain_error("non-finite time");
        return std::visit([t_us](const auto& m) { return eval(m, t_us); }, model_);
    }

    /// d/dt in units per microsecond. Analytic for parametric families;
    /// central differences for sampled traces (step = spacing) and for
    /// radiated fields.
    double derivative(double t_us) const
    {
        if (!std::isfinite(t_us)) throw std::domain_error("non-finite time");
        return std::visit([t_us](const auto& m) { return deriv(m, t_us); }, model_);
    }

private:
    static SampledTrace validated(SampledTrace s)
    {
        if (s.values.empty()) throw std::invalid_argument("sampled trace is empty");
        if (!(s.spacing_us > 0.0)) throw std::invalid_argument("sample spacing must be positive");
        return s;
    }

    static RadiatedField validated(RadiatedField r)
    {
        if (!r.source) throw std::invalid_argument("radiated field needs a source waveform");
        return r;
    }

    static double eval(const Sinusoid& s, double t)
    {
        return s.amplitude_nT * std::sin(2.0 * std::numbers::pi * s.frequency_kHz * khz_us * t + s.phase_rad);
    }

    static double eval(const Polychromatic& p, double t)
    {
        double sum = 0.0;
        for (const auto& c : p.components)
            sum += c.relative_amplitude *
                   std::sin(2.0 * std::numbers::pi * c.frequency_kHz * khz_us * t + c.phase_rad);
        return p.amplitude_nT * sum;
    }

    static double eval(const SkewNormalImpulse& s, double t) { return skew_normal_phi(s, t); }

    static double eval(const SampledTrace& s, double t)
    {
        if (t < s.start_us || t >= s.end_us())
            throw std::domain_error("time " + std::to_string(t) + " us outside sampled trace");
        const double x = (t - s.start_us) / s.spacing_us;
        const auto i = std::min(static_cast<std::size_t>(x), s.values.size() - 1);
        if (i + 1 >= s.values.size()) return s.values.back();
        const double frac = x - static_cast<double>(i);
        return s.values[i] + frac * (s.values[i + 1] - s.values[i]);
    }

    static double eval(const RadiatedField& r, double t)
    {
        return -r.conversion.nT_per_Vpp_per_us() * r.source->derivative(t);
    }

    static double deriv(const Sinusoid& s, double t)
    {
        const double w = 2.0 * std::numbers::pi * s.frequency_kHz * khz_us;
        return s.amplitude_nT * w * std::cos(w * t + s.phase_rad);
    }

    static double deriv(const Polychromatic& p, double t)
    {
        double sum = 0.0;
        for (const auto& c : p.components) {
            const double w = 2.0 * std::numbers::pi * c.frequency_kHz * khz_us;
            sum += c.relative_amplitude * w * std::cos(w * t + c.phase_rad);
        }
        return p.amplitude_nT * sum;
    }

    static double deriv(const SkewNormalImpulse& s, double t) { return skew_normal_phi_derivative(s, t); }

    static double deriv(const SampledTrace& s, double t)
    {
        if (t < s.start_us || t >= s.end_us())
            throw std::domain_error("time " + std::to_string(t) + " us outside sampled trace");
        if (s.values.size() < 2) return 0.0;
        const double h = s.spacing_us;
        const double lo = std::max(t - h, s.start_us);
        const double hi = std::min(t + h, s.start_us + h * static_cast<double>(s.values.size() - 1));
        if (hi <= lo) return 0.0;
        return (eval(s, hi) - eval(s, lo)) / (hi - lo);
    }

    static double deriv(const RadiatedField& r, double t)
    {
        constexpr double h = 1e-4;
        return (eval(r, t + h) - eval(r, t - h)) / (2.0 * h);
    }

    Model model_;
};

/// b(t) = -c dPhi/dt for an electric waveform Phi in Vpp; result in nT.
inline Waveform radiated_field(const Waveform& phi, NeuronConversion conversion = {})
{
    return Waveform(RadiatedField{std::make_shared<const Waveform>(phi), conversion});
}

inline double evaluate(const Waveform& w, double t_us) { return w.evaluate(t_us); }

/// Sum of two polychromatic fields as one field with unit amplitude.
inline Polychromatic combine(const Polychromatic& a, const Polychromatic& b)
{
    Polychromatic out{1.0, {}};
    for (const auto* p : {&a, &b})
        for (auto c : p->components) {
            c.relative_amplitude *= p->amplitude_nT;
            out.components.push_back(c);
        }
    return out;
}

/// Largest |db/dt| over a grid of `grid` points on [0, T) by central
/// differences (one-sided at the ends).
inline double max_abs_derivative(const Waveform& w, double period_us, std::size_t grid = 1u << 12)
{
    if (grid < 1024) throw std::invalid_argument("derivative scan needs at least 1024 points");
    if (!(period_us > 0.0)) throw std::domain_error("period must be positive");
    const double h = period_us / static_cast<double>(grid);
    std::vector<double> values(grid);
    for (std::size_t i = 0; i < grid; ++i)
        values[i] = w(h * static_cast<double>(i));
    double best = 0.0;
    for (std::size_t i = 0; i < grid; ++i) {
        double d = 0.0;
        if (i == 0)
            d = (values[1] - values[0]) / h;
        else if (i + 1 == grid)
            d = (values[i] - values[i - 1]) / h;
        else
            d = (values[i + 1] - values[i - 1]) / (2.0 * h);
        best = std::max(best, std::abs(d));
    }
    return best;
}

/// Reference amplitude used to normalise a field shape: the declared
/// amplitude for tone families, otherwise the peak |b| on a dense grid.
inline double reference_amplitude(const Waveform& w, double period_us, std::size_t grid = 1u << 12)
{
    if (const auto* s = std::get_if<Sinusoid>(&w.model())) return std::abs(s->amplitude_nT);
    if (const auto* p = std::get_if<Polychromatic>(&w.model())) return std::abs(p->amplitude_nT);
    double peak = 0.0;
    for (std::size_t i = 0; i < grid; ++i)
        peak = std::max(peak, std::abs(w(period_us * (static_cast<double>(i) + 0.5) / static_cast<double>(grid))));
    return peak;
}

/// Two-column CSV `time_us,field_nT` with a header row and uniform spacing
/// starting at t = 0.
inline SampledTrace read_trace_csv(std::istream& in, const std::string& origin = "<stream>")
{
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& what) {
        throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": " + what);
    };
    if (!std::getline(in, line)) fail("empty file");
    ++line_no;
    {
        std::string header = line;
        header.erase(std::remove_if(header.begin(), header.end(), [](unsigned char c) { return std::isspace(c); }),
                     header.end());
        if (header != "time_us,field_nT") fail("expected header 'time_us,field_nT'");
    }
    std::vector<double> times, values;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream row(line);
        std::string a, b;
        if (!std::getline(row, a, ',') || !std::getline(row, b)) fail("expected two columns");
        try {
            std::size_t used = 0;
            times.push_back(std::stod(a, &used));
            values.push_back(std::stod(b, &used));
        } catch (const std::logic_error&) {
            fail("malformed number");
        }
    }
    if (values.size() < 2) fail("need at least two samples");
    const double spacing = times[1] - times[0];
    if (!(spacing > 0.0)) fail("times must increase");
    if (std::abs(times[0]) > 1e-9 * spacing) fail("trace must start at t = 0");
    for (std::size_t i = 1; i < times.size(); ++i) {
        const double expected = times[0] + spacing * static_cast<double>(i);
        if (std::abs(times[i] - expected) > 1e-6 * spacing) {
            line_no = i + 2;
            fail("non-uniform sample spacing");
        }
    }
    return SampledTrace{0.0, spacing, std::move(values)};
}

inline SampledTrace read_trace_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    return read_trace_csv(in, path);
}

} // namespace walshrec
