#pragma once

// Walsh and Rademacher functions, ordering conversions, the fast
// Walsh-Hadamard transform and quadrature of Walsh coefficients.
//
// Conventions used throughout:
//  * time fractions s live on [0, 1); physical times t = s * T.
//  * coefficients carry the 1/T average, so coefficient 0 is the mean field
//    and the basis is orthonormal under (1/T) * integral over [0, T).
//  * Paley index bit k (k = 1 is the least significant bit) selects the
//    Rademacher factor r_k, which has 2^k - 1 sign changes on [0, 1).

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace walshrec {

enum class Ordering { Sequency, Paley, Hadamard };

inline std::string_view to_string(Ordering o) noexcept
{
    switch (o) {
    case Ordering::Sequency: return "sequency";
    case Ordering::Paley: return "paley";
    case Ordering::Hadamard: return "hadamard";
    }
    return "unknown";
}

inline Ordering parse_ordering(std::string_view name)
{
    if (name == "sequency") return Ordering::Sequency;
    if (name == "paley" || name == "dyadic") return Ordering::Paley;
    if (name == "hadamard") return Ordering::Hadamard;
    throw std::invalid_argument("unknown ordering '" + std::string(name) +
                                "' (expected sequency, paley or hadamard)");
}

/// Smallest n with m <= 2^n - 1.
constexpr unsigned order_of(std::uint64_t m) noexcept
{
    return static_cast<unsigned>(std::bit_width(m));
}

/// Sequency index of a Walsh function: number of sign changes on [0, 1),
/// equal to the number of pi-pulses in the matching control sequence.
class WalshIndex {
public:
    constexpr WalshIndex() = default;
    constexpr explicit WalshIndex(std::uint64_t m) : m_(m) {}

    constexpr std::uint64_t value() const noexcept { return m_; }
    constexpr unsigned order() const noexcept { return order_of(m_); }

    friend constexpr auto operator<=>(WalshIndex, WalshIndex) = default;

private:
    std::uint64_t m_ = 0;
};

namespace detail {

inline constexpr unsigned max_bits = 62;

inline void check_fraction(double s)
{
    if (!(s >= 0.0 && s < 1.0))
        throw std::domain_error("time fraction " + std::to_string(s) +
                                " outside [0, 1)");
}

inline void check_order(unsigned n)
{
    if (n > max_bits)
        throw std::domain_error("Walsh order " + std::to_string(n) +
                                " exceeds supported maximum " +
                                std::to_string(max_bits));
}

/// Index j of the dyadic cell [j/2^n, (j+1)/2^n) containing s.
inline std::uint64_t dyadic_cell(double s, unsigned n)
{
    auto j = static_cast<std::uint64_t>(std::floor(std::ldexp(s, static_cast<int>(n))));
    const std::uint64_t last = (std::uint64_t{1} << n) - 1;
    return std::min(j, last);
}

inline int parity_sign(std::uint64_t bits) noexcept
{
    return (std::popcount(bits) & 1) ? -1 : 1;
}

} // namespace detail

constexpr std::uint64_t gray_code(std::uint64_t m) noexcept { return m ^ (m >> 1); }

constexpr std::uint64_t inverse_gray_code(std::uint64_t g) noexcept
{
    for (unsigned shift = 1; shift < 64; shift <<= 1)
        g ^= g >> shift;
    return g;
}

/// Reverse the lowest `bits` bits of x.
constexpr std::uint64_t bit_reverse(std::uint64_t x, unsigned bits) noexcept
{
    std::uint64_t r = 0;
    for (unsigned i = 0; i < bits; ++i) {
        r = (r << 1) | (x & 1u);
        x >>= 1;
    }
    return r;
}

/// r_k(s) = r(2^(k-1) s), r = +1 on [0, 1/2) and -1 on [1/2, 1), periodic.
inline int rademacher(unsigned k, double s)
{
    if (k == 0) throw std::domain_error("Rademacher order must be >= 1");
    detail::check_order(k);
    detail::check_fraction(s);
    return (detail::dyadic_cell(s, k) & 1u) ? -1 : 1;
}

/// Paley (dyadic) ordered Walsh function: product of r_k over set bits of p.
inline int walsh_paley(std::uint64_t p, double s)
{
    detail::check_fraction(s);
    const unsigned n = order_of(p);
    detail::check_order(n);
    // Digit k of s (most significant first) is bit (n - k) of the cell index,
    // so r_k pairs with bit (k - 1) of p after reversing p over n bits.
    return detail::parity_sign(bit_reverse(p, n) & detail::dyadic_cell(s, n));
}

/// Sequency ordered Walsh function with exactly m sign changes on [0, 1).
inline int walsh_sequency(std::uint64_t m, double s)
{
    return walsh_paley(gray_code(m), s);
}

/// Row h of the order-n Walsh-Hadamard matrix read as a function on the
/// dyadic grid of 2^n cells.
inline int walsh_hadamard(std::uint64_t h, unsigned n, double s)
{
    detail::check_fraction(s);
    detail::check_order(n);
    if (order_of(h) > n)
        throw std::out_of_range("Hadamard row " + std::to_string(h) +
                                " out of range for order " + std::to_string(n));
    return detail::parity_sign(h & detail::dyadic_cell(s, n));
}

/// Walsh function of index m in the given ordering. The Hadamard ordering
/// depends on the matrix order n; Sequency and Paley ignore it beyond the
/// range check m < 2^n.
inline int walsh(WalshIndex m, Ordering ordering, double s, unsigned n)
{
    if (m.order() > n)
        throw std::out_of_range("index " + std::to_string(m.value()) +
                                " out of range for order " + std::to_string(n));
    switch (ordering) {
    case Ordering::Sequency: return walsh_sequency(m.value(), s);
    case Ordering::Paley: return walsh_paley(m.value(), s);
    case Ordering::Hadamard: return walsh_hadamard(m.value(), n, s);
    }
    throw std::invalid_argument("bad ordering");
}

inline int walsh(WalshIndex m, Ordering ordering, double s)
{
    return walsh(m, ordering, s, m.order());
}

/// Index of the same function in another ordering, for functions of order n.
inline std::uint64_t convert_index(std::uint64_t m, Ordering from, Ordering to, unsigned n)
{
    detail::check_order(n);
    if (order_of(m) > n)
        throw std::out_of_range("index " + std::to_string(m) + " out of range for order " +
                                std::to_string(n));
    std::uint64_t paley = m;
    switch (from) {
    case Ordering::Sequency: paley = gray_code(m); break;
    case Ordering::Paley: break;
    case Ordering::Hadamard: paley = bit_reverse(m, n); break;
    }
    switch (to) {
    case Ordering::Sequency: return inverse_gray_code(paley);
    case Ordering::Paley: return paley;
    case Ordering::Hadamard: return bit_reverse(paley, n);
    }
    throw std::invalid_argument("bad ordering");
}

/// pi-pulse schedule realising w_m(t/T): value +1 on [0, t_1), flipping
/// sign at each switching time.
struct DigitalFilter {
    WalshIndex index;
    double period_us = 0.0;
    std::vector<double> switching_times_us;

    int value(double t_us) const
    {
        if (!(t_us >= 0.0 && t_us < period_us))
            throw std::domain_error("filter time outside [0, T)");
        auto flips = std::upper_bound(switching_times_us.begin(), switching_times_us.end(), t_us) -
                     switching_times_us.begin();
        return (flips & 1) ? -1 : 1;
    }
};

inline DigitalFilter switching_times(WalshIndex m, double period_us)
{
    if (!(period_us > 0.0)) throw std::domain_error("period must be positive");
    const unsigned n = m.order();
    detail::check_order(n);
    if (n > 30) throw std::length_error("switching_times: order above 30 not supported");

    DigitalFilter filter{m, period_us, {}};
    filter.switching_times_us.reserve(static_cast<std::size_t>(m.value()));
    const std::uint64_t cells = std::uint64_t{1} << n;
    int previous = 1;
    for (std::uint64_t j = 1; j < cells; ++j) {
        const double s = (static_cast<double>(j) + 0.5) / static_cast<double>(cells);
        const int current = walsh_sequency(m.value(), s);
        if (current != previous)
            filter.switching_times_us.push_back(period_us * static_cast<double>(j) /
                                                static_cast<double>(cells));
        previous = current;
    }
    return filter;
}

/// Dense +-1 Walsh-Hadamard matrix, row-major.
class SignMatrix {
public:
    SignMatrix(std::size_t dim, std::vector<std::int8_t> entries)
        : dim_(dim), entries_(std::move(entries))
    {}

    std::size_t dim() const noexcept { return dim_; }
    int operator()(std::size_t row, std::size_t col) const { return entries_.at(row * dim_ + col); }
    std::span<const std::int8_t> row(std::size_t r) const
    {
        return std::span<const std::int8_t>(entries_).subspan(r * dim_, dim_);
    }

private:
    std::size_t dim_;
    std::vector<std::int8_t> entries_;
};

inline constexpr unsigned default_hadamard_cap = 14;

/// H(i, j) = prod_l (-1)^(i_l j_l) with 0-based i, j. Materialises 4^n bytes.
inline SignMatrix hadamard_matrix(unsigned n, unsigned max_order = default_hadamard_cap)
{
    if (n > max_order)
        throw std::length_error("Hadamard order " + std::to_string(n) + " above cap " +
                                std::to_string(max_order) + "; use fwht instead");
    const std::size_t dim = std::size_t{1} << n;
    std::vector<std::int8_t> entries(dim * dim);
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j)
            entries[i * dim + j] = static_cast<std::int8_t>(detail::parity_sign(i & j));
    return SignMatrix(dim, std::move(entries));
}

/// N = 2^n Walsh coefficients on [0, T) with optional standard uncertainties.
struct WalshSpectrum {
    double period_us = 1.0;
    Ordering ordering = Ordering::Sequency;
    std::vector<double> coeffs;
    std::vector<double> sigmas; // empty when unknown

    std::size_t size() const noexcept { return coeffs.size(); }
    unsigned order() const noexcept { return order_of(coeffs.size() - 1); }
    bool has_sigmas() const noexcept { return sigmas.size() == coeffs.size() && !coeffs.empty(); }

    /// Same spectrum re-indexed into another ordering.
    WalshSpectrum reordered(Ordering target) const
    {
        const unsigned n = order();
        WalshSpectrum out{period_us, target, std::vector<double>(size()), {}};
        if (has_sigmas()) out.sigmas.resize(size());
        for (std::size_t i = 0; i < size(); ++i) {
            const auto j = convert_index(i, target, ordering, n);
            out.coeffs[i] = coeffs[j];
            if (has_sigmas()) out.sigmas[i] = sigmas[j];
        }
        return out;
    }
};

namespace detail {

inline unsigned checked_log2(std::size_t size)
{
    if (size == 0 || !std::has_single_bit(size))
        throw std::invalid_argument("transform length " + std::to_string(size) +
                                    " is not a power of two");
    return static_cast<unsigned>(std::countr_zero(size));
}

/// Unnormalised in-place butterfly; output is in Hadamard (natural) order.
inline void butterfly(std::span<double> data)
{
    for (std::size_t half = 1; half < data.size(); half <<= 1) {
        for (std::size_t block = 0; block < data.size(); block += 2 * half) {
            for (std::size_t j = block; j < block + half; ++j) {
                const double a = data[j];
                const double b = data[j + half];
                data[j] = a + b;
                data[j + half] = a - b;
            }
        }
    }
}

} // namespace detail

/// Walsh coefficients of samples on the dyadic grid (sample j is the field
/// on [jT/N, (j+1)T/N)), in O(N log N).
inline WalshSpectrum fwht(std::span<const double> samples, Ordering ordering = Ordering::Sequency,
                          double period_us = 1.0)
{
    const unsigned n = detail::checked_log2(samples.size());
    std::vector<double> natural(samples.begin(), samples.end());
    detail::butterfly(natural);
    const double scale = 1.0 / static_cast<double>(natural.size());

    WalshSpectrum out{period_us, ordering, std::vector<double>(natural.size()), {}};
    for (std::size_t i = 0; i < natural.size(); ++i)
        out.coeffs[i] = natural[convert_index(i, ordering, Ordering::Hadamard, n)] * scale;
    return out;
}

/// Dyadic-grid samples of the order-N partial sum.
inline std::vector<double> inverse_fwht(const WalshSpectrum& spectrum)
{
    const unsigned n = detail::checked_log2(spectrum.size());
    std::vector<double> natural(spectrum.size());
    for (std::size_t i = 0; i < natural.size(); ++i)
        natural[convert_index(i, spectrum.ordering, Ordering::Hadamard, n)] = spectrum.coeffs[i];
    detail::butterfly(natural);
    return natural;
}

/// b_N(t) = sum_m b(m) w_m(t/T), evaluated directly.
inline double inverse_walsh(const WalshSpectrum& spectrum, double t_us)
{
    const unsigned n = detail::checked_log2(spectrum.size());
    if (!(t_us >= 0.0 && t_us < spectrum.period_us))
        throw std::domain_error("time outside [0, T)");
    const double s = t_us / spectrum.period_us;
    double sum = 0.0;
    for (std::size_t m = 0; m < spectrum.size(); ++m)
        sum += spectrum.coeffs[m] * walsh(WalshIndex(m), spectrum.ordering, s, n);
    return sum;
}

template <class F>
concept TimeField = std::regular_invocable<const F&, double> &&
                    std::convertible_to<std::invoke_result_t<const F&, double>, double>;

inline constexpr unsigned default_grid_multiplier = 64;

/// (1/T) * integral of field(t) w_m(t/T) dt by composite midpoint rule on
/// grid_points cells. The grid must be a power of two no coarser than the
/// filter's 2^n pieces so every switching time falls on a cell boundary.
template <TimeField Field>
double walsh_coefficient(const Field& field, WalshIndex m, double period_us, std::size_t grid_points)
{
    if (!(period_us > 0.0)) throw std::domain_error("period must be positive");
    const unsigned n = m.order();
    detail::check_order(n);
    if (grid_points == 0 || !std::has_single_bit(grid_points) ||
        order_of(grid_points - 1) < n)
        throw std::invalid_argument("grid of " + std::to_string(grid_points) +
                                    " points not aligned to the switchings of w_" +
                                    std::to_string(m.value()));
    const double cells = static_cast<double>(grid_points);
    double sum = 0.0;
    for (std::size_t i = 0; i < grid_points; ++i) {
        const double s = (static_cast<double>(i) + 0.5) / cells;
        sum += static_cast<double>(field(s * period_us)) * walsh_sequency(m.value(), s);
    }
    return sum / cells;
}

/// Midpoint averages of the field over the 2^n dyadic cells of [0, T),
/// each from `multiplier` sub-samples.
template <TimeField Field>
std::vector<double> cell_averages(const Field& field, double period_us, unsigned n,
                                  unsigned multiplier = default_grid_multiplier)
{
    if (!(period_us > 0.0)) throw std::domain_error("period must be positive");
    detail::check_order(n);
    if (multiplier == 0 || !std::has_single_bit(multiplier))
        throw std::invalid_argument("grid multiplier must be a power of two");
    const std::size_t cells = std::size_t{1} << n;
    const double fine = static_cast<double>(cells) * multiplier;
    std::vector<double> averages(cells, 0.0);
    for (std::size_t j = 0; j < cells; ++j) {
        double sum = 0.0;
        for (unsigned q = 0; q < multiplier; ++q) {
            const double s = (static_cast<double>(j * multiplier + q) + 0.5) / fine;
            sum += static_cast<double>(field(s * period_us));
        }
        averages[j] = sum / multiplier;
    }
    return averages;
}

/// First 2^n Walsh coefficients of a field; equal to walsh_coefficient for
/// each index on a grid of multiplier * 2^n points.
template <TimeField Field>
WalshSpectrum walsh_spectrum(const Field& field, double period_us, unsigned n,
                             unsigned multiplier = default_grid_multiplier,
                             Ordering ordering = Ordering::Sequency)
{
    const auto averages = cell_averages(field, period_us, n, multiplier);
    return fwht(averages, ordering, period_us);
}

/// Truncation bound max_s |d b(T s)/ds| / 2^(n+1) for the order-2^n partial sum.
inline double truncation_bound(double max_unit_derivative, unsigned n)
{
    if (!(max_unit_derivative >= 0.0))
        throw std::domain_error("maximum derivative must be non-negative");
    return std::ldexp(max_unit_derivative, -static_cast<int>(n) - 1);
}

/// Same bound from the physical derivative max |db/dt| (nT/us) over period T.
inline double truncation_bound(double max_time_derivative, double period_us, unsigned n)
{
    return truncation_bound(max_time_derivative * period_us, n);
}

} // namespace walshrec
