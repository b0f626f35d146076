#include "oracles.hpp"
#include "walshrec/walsh.hpp"
#include "walshrec/waveform.hpp"
#include "walshrec/reconstruct.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

using namespace walshrec;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<int> row_of(auto&& fn, unsigned n)
{
    const std::size_t cells = std::size_t{1} << n;
    std::vector<int> row(cells);
    for (std::size_t j = 0; j < cells; ++j) row[j] = fn((static_cast<double>(j) + 0.5) / static_cast<double>(cells));
    return row;
}

constexpr Ordering all_orderings[] = {Ordering::Sequency, Ordering::Paley, Ordering::Hadamard};

} // namespace

TEST_CASE("rademacher values", "[walsh]")
{
    CHECK(rademacher(1, 0.25) == 1);
    CHECK(rademacher(1, 0.75) == -1);
    CHECK(rademacher(2, 0.30) == -1);
    CHECK_THROWS(rademacher(0, 0.3));
    CHECK_THROWS(rademacher(1, 1.0));
    CHECK_THROWS(rademacher(1, -0.1));
    for (unsigned k = 1; k <= 6; ++k)
        CHECK(row_of([k](double s) { return rademacher(k, s); }, 6) == oracle::rademacher_row(k, 6));
}

TEST_CASE("walsh function values", "[walsh]")
{
    for (auto o : all_orderings) CHECK(walsh(WalshIndex(0), o, 0.9) == 1);
    CHECK(walsh(WalshIndex(1), Ordering::Sequency, 0.75) == -1);
    CHECK(walsh(WalshIndex(2), Ordering::Sequency, 0.5) == -1);
    CHECK(walsh(WalshIndex(2), Ordering::Sequency, 0.1) == 1);
    CHECK(walsh(WalshIndex(2), Ordering::Sequency, 0.8) == 1);
}

TEST_CASE("sequency functions match the sign-change oracle", "[walsh]")
{
    for (unsigned n = 0; n <= 8; ++n) {
        const auto table = oracle::sequency_table(n);
        const auto paley = oracle::paley_table(n);
        for (std::size_t m = 0; m < table.size(); ++m) {
            const auto seq = row_of([m](double s) { return walsh_sequency(m, s); }, n);
            REQUIRE(seq == table[m]);
            REQUIRE(oracle::sign_changes(seq) == m);
            REQUIRE(row_of([m](double s) { return walsh_paley(m, s); }, n) == paley[m]);
        }
    }
}

TEST_CASE("hadamard matrix", "[walsh]")
{
    CHECK(hadamard_matrix(0)(0, 0) == 1);
    const auto h1 = hadamard_matrix(1);
    CHECK(h1(0, 0) == 1);
    CHECK(h1(0, 1) == 1);
    CHECK(h1(1, 0) == 1);
    CHECK(h1(1, 1) == -1);
    CHECK(hadamard_matrix(2)(3, 3) == 1); // 1-based entry (4,4)
    for (unsigned n = 0; n <= 8; ++n) {
        const auto h = hadamard_matrix(n);
        const auto syl = oracle::sylvester(n);
        for (std::size_t i = 0; i < h.dim(); ++i) {
            for (std::size_t j = 0; j < h.dim(); ++j) REQUIRE(h(i, j) == syl[i][j]);
            REQUIRE(row_of([i, n](double s) { return walsh_hadamard(i, n, s); }, n) == syl[i]);
        }
    }
    CHECK_THROWS_AS(hadamard_matrix(default_hadamard_cap + 1), std::length_error);
}

TEST_CASE("index conversion", "[walsh]")
{
    CHECK(convert_index(0, Ordering::Sequency, Ordering::Paley, 4) == 0);
    CHECK(convert_index(3, Ordering::Sequency, Ordering::Paley, 2) == 2);
    CHECK(convert_index(2, Ordering::Sequency, Ordering::Paley, 2) == 3);
    CHECK_THROWS(convert_index(4, Ordering::Sequency, Ordering::Paley, 2));

    for (unsigned n = 0; n <= 8; ++n) {
        const std::size_t size = std::size_t{1} << n;
        for (auto from : all_orderings)
            for (auto to : all_orderings) {
                std::set<std::uint64_t> image;
                for (std::size_t m = 0; m < size; ++m) {
                    const auto k = convert_index(m, from, to, n);
                    image.insert(k);
                    // pointwise consistency: the same function on the dyadic grid
                    REQUIRE(row_of([&](double s) { return walsh(WalshIndex(m), from, s, n); }, n) ==
                            row_of([&](double s) { return walsh(WalshIndex(k), to, s, n); }, n));
                    REQUIRE(convert_index(k, to, from, n) == m);
                }
                REQUIRE(image.size() == size);
            }
    }
}

TEST_CASE("orthonormality and parity", "[walsh]")
{
    for (unsigned n = 0; n <= 6; ++n) {
        const std::size_t size = std::size_t{1} << n;
        for (auto o : all_orderings) {
            std::vector<std::vector<int>> rows;
            for (std::size_t m = 0; m < size; ++m)
                rows.push_back(row_of([&](double s) { return walsh(WalshIndex(m), o, s, n); }, n));
            for (std::size_t a = 0; a < size; ++a)
                for (std::size_t b = 0; b < size; ++b) {
                    long dot = 0;
                    for (std::size_t j = 0; j < size; ++j) dot += rows[a][j] * rows[b][j];
                    REQUIRE(dot == (a == b ? static_cast<long>(size) : 0));
                }
        }
    }
    // CPMG w_{2^k} is symmetric about 1/2, PDD w_{2^k - 1} antisymmetric
    for (unsigned n = 1; n <= 8; ++n) {
        const std::size_t cells = std::size_t{1} << n;
        for (unsigned k = 1; k <= n; ++k) {
            const auto pdd = row_of([&](double s) { return walsh_sequency((1u << k) - 1, s); }, n);
            for (std::size_t j = 0; j < cells; ++j) REQUIRE(pdd[j] == -pdd[cells - 1 - j]);
            if (k < n) {
                const auto cpmg = row_of([&](double s) { return walsh_sequency(1u << k, s); }, n);
                for (std::size_t j = 0; j < cells; ++j) REQUIRE(cpmg[j] == cpmg[cells - 1 - j]);
            }
        }
    }
}

TEST_CASE("switching times", "[walsh]")
{
    CHECK(switching_times(WalshIndex(1), 10.0).switching_times_us == std::vector<double>{5.0});
    CHECK(switching_times(WalshIndex(2), 8.0).switching_times_us == std::vector<double>{2.0, 6.0});
    CHECK(switching_times(WalshIndex(0), 10.0).switching_times_us.empty());
    for (std::uint64_t m = 0; m < 64; ++m) {
        const auto f = switching_times(WalshIndex(m), 3.0);
        REQUIRE(f.switching_times_us.size() == m);
        for (int j = 0; j < 640; ++j) {
            const double t = 3.0 * (j + 0.5) / 640.0;
            REQUIRE(f.value(t) == walsh_sequency(m, t / 3.0));
        }
    }
}

TEST_CASE("fwht examples", "[walsh]")
{
    for (auto o : all_orderings) {
        const auto s = fwht(std::vector<double>{1, 1, 1, 1}, o);
        CHECK(s.coeffs == std::vector<double>{1, 0, 0, 0});
    }
    const auto fast = fwht(std::vector<double>{1, -1, 1, -1}, Ordering::Sequency);
    CHECK(fast.coeffs == std::vector<double>{0, 0, 0, 1});
    CHECK_THROWS_AS(fwht(std::vector<double>{1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(fwht(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("fwht equals the naive transform in every ordering", "[walsh]")
{
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal;
    for (unsigned n = 1; n <= 8; ++n) {
        const auto seq = oracle::sequency_table(n);
        const auto pal = oracle::paley_table(n);
        const auto had = oracle::sylvester(n);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<double> x(std::size_t{1} << n);
            for (auto& v : x) v = normal(rng);
            const std::pair<Ordering, const oracle::Table*> cases[] = {
                {Ordering::Sequency, &seq}, {Ordering::Paley, &pal}, {Ordering::Hadamard, &had}};
            for (const auto& [o, table] : cases) {
                const auto fast = fwht(x, o);
                const auto slow = oracle::naive_transform(*table, x);
                for (std::size_t m = 0; m < x.size(); ++m) REQUIRE_THAT(fast.coeffs[m], WithinAbs(slow[m], 1e-12));
                const auto back = inverse_fwht(fast);
                for (std::size_t j = 0; j < x.size(); ++j) REQUIRE_THAT(back[j], WithinAbs(x[j], 1e-12));
                // Parseval under the mean inner product
                double e_time = 0.0, e_freq = 0.0;
                for (double v : x) e_time += v * v;
                for (double c : fast.coeffs) e_freq += c * c;
                REQUIRE_THAT(e_freq, WithinRel(e_time / static_cast<double>(x.size()), 1e-12));
            }
        }
    }
}

TEST_CASE("spectrum reordering round-trips", "[walsh]")
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> x(32);
    for (auto& v : x) v = u(rng);
    const auto s = fwht(x, Ordering::Sequency, 2.0);
    for (auto o : all_orderings) {
        const auto r = s.reordered(o);
        CHECK(r.coeffs == fwht(x, o, 2.0).coeffs);
        CHECK(r.reordered(Ordering::Sequency).coeffs == s.coeffs);
    }
}

TEST_CASE("walsh coefficients of a sine and cosine", "[walsh]")
{
    const double T = 10.0;
    const double b = 3.0;
    auto sine = [&](double t) { return b * std::sin(2.0 * std::numbers::pi * t / T); };
    auto cosine = [&](double t) { return b * std::cos(2.0 * std::numbers::pi * t / T); };
    const std::size_t grid = 1u << 14;
    CHECK_THAT(walsh_coefficient(sine, WalshIndex(1), T, grid), WithinRel(2.0 / std::numbers::pi * b, 1e-7));
    CHECK_THAT(walsh_coefficient(sine, WalshIndex(2), T, grid), WithinAbs(0.0, 1e-12));
    CHECK_THAT(walsh_coefficient(cosine, WalshIndex(2), T, grid), WithinRel(2.0 / std::numbers::pi * b, 1e-7));
    CHECK_THROWS_AS(walsh_coefficient(sine, WalshIndex(5), T, 4), std::invalid_argument);

    // quadrature oracle: a different Riemann rule on a finer grid
    for (std::uint64_t m = 0; m < 16; ++m) {
        const double fast = walsh_coefficient(sine, WalshIndex(m), T, 1u << 14);
        const double slow = oracle::riemann_mean(
            sine, [&](double t) { return static_cast<double>(walsh_sequency(m, t / T)); }, T, 1u << 18);
        REQUIRE_THAT(fast, WithinAbs(slow, 1e-4 * b));
    }
    // spectrum and per-index quadrature agree
    const auto spec = walsh_spectrum(sine, T, 4, 64);
    for (std::uint64_t m = 0; m < 16; ++m)
        REQUIRE_THAT(spec.coeffs[m], WithinAbs(walsh_coefficient(sine, WalshIndex(m), T, 16 * 64), 1e-13));
}

TEST_CASE("inverse walsh", "[walsh]")
{
    WalshSpectrum s{4.0, Ordering::Sequency, {5, 0, 0, 0}, {}};
    for (double t : {0.0, 1.0, 3.9}) CHECK(inverse_walsh(s, t) == 5.0);
    CHECK_THROWS(inverse_walsh(s, 4.0));

    // sampled w_3 is reproduced exactly
    std::vector<double> w3(8);
    for (std::size_t j = 0; j < 8; ++j) w3[j] = walsh_sequency(3, (j + 0.5) / 8.0);
    const auto spec = fwht(w3);
    for (std::size_t j = 0; j < 8; ++j) CHECK(inverse_walsh(spec, (j + 0.5) / 8.0) == w3[j]);

    // bichromatic field, N = 32: fast inverse vs direct partial sum
    Polychromatic p{1.0, {{0.3, 100.0, -0.0741}, {0.2, 250.0, -1.9686}}};
    const Waveform field(p);
    const double T = 10.0;
    const auto bs = walsh_spectrum(field, T, 5);
    const auto fast = inverse_fwht(bs);
    for (std::size_t j = 0; j < 32; ++j) {
        const double t = T * (j + 0.5) / 32.0;
        double direct = 0.0;
        for (std::size_t m = 0; m < 32; ++m) direct += bs.coeffs[m] * walsh_sequency(m, t / T);
        REQUIRE_THAT(inverse_walsh(bs, t), WithinAbs(direct, 1e-10));
        REQUIRE_THAT(fast[j], WithinAbs(direct, 1e-10));
    }
}

TEST_CASE("truncation bound", "[walsh]")
{
    CHECK(truncation_bound(0.0, 4u) == 0.0);
    CHECK_THROWS(truncation_bound(-1.0, 4u));
    const double b = 2.0, nu = 100.0, T = 1.0 / (nu * khz_us);
    const Waveform w(Sinusoid{b, nu, 0.0});
    const double d = max_abs_derivative(w, T);
    const double bound = truncation_bound(d, T, 4);
    CHECK_THAT(bound, WithinRel(2.0 * std::numbers::pi * b / 32.0, 1e-3));
    const auto rec = reconstruct(walsh_spectrum(w, T, 4));
    CHECK(l2_error(rec, w) <= bound);
}

TEST_CASE("walsh index and orderings", "[walsh]")
{
    CHECK(WalshIndex(0).order() == 0);
    CHECK(WalshIndex(1).order() == 1);
    CHECK(WalshIndex(5).order() == 3);
    CHECK(parse_ordering("paley") == Ordering::Paley);
    CHECK(parse_ordering("sequency") == Ordering::Sequency);
    CHECK_THROWS(parse_ordering("walsh"));
}
