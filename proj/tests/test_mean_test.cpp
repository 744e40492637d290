#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ulpt/errors.hpp"
#include "ulpt/mean_test.hpp"
#include "ulpt/oracles.hpp"

using namespace ulpt;

namespace {

std::vector<double> dense(std::size_t d, double norm) {
    return std::vector<double>(d, norm / std::sqrt(static_cast<double>(d)));
}

double accept_rate(std::span<const double> mu, std::int64_t n, bool multinomial, double gamma, std::size_t trials,
                   std::uint64_t seed) {
    std::size_t acc = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        Rng rng = Rng::stream(seed, StreamDomain::Trial, t);
        const auto c = simulate_rademacher_counts(mu, n, multinomial, rng);
        const auto r = multinomial ? symmetric_mean_test(c, gamma) : asymmetric_mean_test(c, gamma);
        acc += r.verdict == Decision::Accept;
    }
    return static_cast<double>(acc) / static_cast<double>(trials);
}

}  // namespace

TEST_CASE("all-ones vectors are rejected") {
    const std::size_t d = 8, n = 5;
    const std::vector<std::int8_t> v(d * n, 1);
    for (const double gamma : {0.1, 1.0, std::sqrt(8.0)}) {
        const auto r = asymmetric_mean_test(v, d, gamma);
        CHECK(r.statistic == doctest::Approx(8.0));
        CHECK(r.verdict == Decision::Reject);
    }
}

TEST_CASE("fixed-allocation tester preconditions") {
    std::vector<std::int8_t> one(4, 1);
    CHECK_THROWS_AS(asymmetric_mean_test(one, 4, 0.5), InvalidArgument);
    std::vector<std::int8_t> bad(8, 1);
    bad[3] = 0;
    CHECK_THROWS_AS(asymmetric_mean_test(bad, 4, 0.5), InvalidArgument);
    std::vector<std::int8_t> ok(8, 1);
    CHECK_THROWS_AS(asymmetric_mean_test(ok, 4, 2.5), InvalidArgument);
    CHECK_THROWS_AS(asymmetric_mean_test(ok, 4, 0.0), InvalidArgument);
    CHECK_NOTHROW(asymmetric_mean_test(ok, 4, 2.0));
}

TEST_CASE("fixed-allocation tester guarantees at C = 50") {
    const std::size_t d = 64;
    const double gamma = 0.5;
    const std::int64_t n = mean_test_sample_size(50.0, d, gamma);
    CHECK(n == 1600);
    const std::vector<double> zero(d, 0.0);
    CHECK(accept_rate(zero, n, false, gamma, 500, 1) >= 2.0 / 3.0);
    const auto far = dense(d, gamma);
    CHECK(1.0 - accept_rate(far, n, false, gamma, 500, 2) >= 2.0 / 3.0);
}

TEST_CASE("symmetric tester") {
    CoordinateCounts zero(4, 40);
    zero.observations = {10, 10, 10, 10};
    const auto r = symmetric_mean_test(zero, 0.5);
    CHECK(r.statistic == doctest::Approx(-0.4));
    CHECK(r.verdict == Decision::Accept);
    CHECK(r.threshold == doctest::Approx(0.0625));

    CoordinateCounts small(4, 4);
    small.observations = {1, 1, 1, 1};
    small.sums = {1, 1, 1, 1};
    CHECK_THROWS_AS(symmetric_mean_test(small, 0.5), InvalidArgument);

    CoordinateCounts parity(2, 8);
    parity.observations = {4, 4};
    parity.sums = {3, 0};
    CHECK_THROWS_AS(symmetric_mean_test(parity, 0.5), InvalidArgument);

    // Empty coordinates contribute nothing.
    CoordinateCounts holes(4, 40);
    holes.observations = {40, 0, 0, 0};
    holes.sums = {40, 0, 0, 0};
    const auto h = symmetric_mean_test(holes, 1.0);
    CHECK(h.statistic == doctest::Approx(16.0 - 0.4));
}

TEST_CASE("symmetric tester guarantees at the default constant") {
    const std::size_t d = 63;
    const double gamma = 0.5;
    const std::int64_t n = mean_test_sample_size(100.0, d, gamma);
    const std::vector<double> zero(d, 0.0);
    CHECK(accept_rate(zero, n, true, gamma, 300, 3) >= 2.0 / 3.0);
    const auto near = dense(d, gamma / 4);
    CHECK(accept_rate(near, n, true, gamma, 300, 4) >= 2.0 / 3.0);
    const auto far = dense(d, gamma);
    CHECK(1.0 - accept_rate(far, n, true, gamma, 300, 5) >= 2.0 / 3.0);
}

TEST_CASE("multinomial allocation") {
    Rng rng(17);
    CHECK_THROWS_AS(multinomial_allocate(0, 4, rng), InvalidArgument);
    CHECK_THROWS_AS(multinomial_allocate(3, 1, rng), InvalidArgument);
    std::size_t counts[3] = {0, 0, 0};
    const std::size_t trials = 1000000;
    for (std::size_t t = 0; t < trials; ++t) {
        const auto a = multinomial_allocate(1, 2, rng);
        REQUIRE(a[0] + a[1] == 2);
        ++counts[a[0]];
    }
    const double expect[3] = {0.25, 0.5, 0.25};
    for (int i = 0; i < 3; ++i) {
        const double p = expect[i];
        CHECK(std::fabs(static_cast<double>(counts[i]) / trials - p) <= 4 * std::sqrt(p * (1 - p) / trials));
    }
    const std::int64_t n = 7;
    const std::size_t d = 5;
    std::vector<double> sum(d, 0.0);
    const std::size_t reps = 100000;
    for (std::size_t t = 0; t < reps; ++t) {
        const auto a = multinomial_allocate(n, d, rng);
        REQUIRE(std::accumulate(a.begin(), a.end(), std::int64_t{0}) == n * static_cast<std::int64_t>(d));
        for (std::size_t j = 0; j < d; ++j) sum[j] += static_cast<double>(a[j]);
    }
    const double sd = std::sqrt(n * d * (1.0 / d) * (1.0 - 1.0 / d));
    for (std::size_t j = 0; j < d; ++j) CHECK(std::fabs(sum[j] / reps - n) <= 4 * sd / std::sqrt(double(reps)));
}

TEST_CASE("fixed-allocation moments match the closed forms") {
    for (const std::size_t d : {4u, 64u}) {
        for (const std::int64_t n : {10, 100}) {
            std::vector<double> spike(d, 0.0);
            spike[0] = 0.4;
            for (const auto& mu : {std::vector<double>(d, 0.0), spike, dense(d, 1.0)}) {
                const auto mc = monte_carlo_z_moments(mu, n, Allocation::Fixed, 20000, 31 + d + n);
                CHECK(std::fabs(mc.mean - exact_mean_Z(mu, n, Allocation::Fixed)) <= 5 * mc.mean_se);
                CHECK(mc.variance <= stated_variance_bound_Z(mu, n, Allocation::Fixed) + 5 * mc.variance_se);
            }
        }
    }
}
