#include <doctest.h>

#include <cmath>

#include "ulpt/errors.hpp"
#include "ulpt/harness.hpp"
#include "ulpt/protocols.hpp"

using namespace ulpt;

namespace {

ProtocolParams base(std::size_t k, std::size_t m, std::size_t n) {
    ProtocolParams p;
    p.k = k;
    p.m = m;
    p.n = n;
    p.delta = 0.45;
    p.seed = 99;
    return p;
}

double accept_rate(const std::string& protocol, const ProtocolParams& p, const DiscreteDistribution& d,
                   std::size_t trials, std::uint64_t seed) {
    return estimate_power(ProtocolRegistry::standard(), protocol, p, d, trials, seed).point;
}

}  // namespace

TEST_CASE("parameter validation") {
    auto p = base(6, 3, 100);
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = base(16, 0, 100);
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = base(16, 3, 100);
    p.delta = 1.5;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = base(16, 3, 100);
    CHECK_THROWS_AS(run_large_m(p, DiscreteDistribution::uniform(8)), InvalidArgument);
}

TEST_CASE("identical parameters give identical transcripts") {
    const auto pan = make_paninski_instance(16, 0.45);
    for (const Mode mode : {Mode::Asymmetric, Mode::Symmetric}) {
        auto p = base(16, 4, 600);
        p.priv = PrivacyParams::pure(1.0);
        p.mode = mode;
        CHECK(to_json(run_combined(p, pan)) == to_json(run_combined(p, pan)));
    }
    auto p = base(16, 3, 450);
    CHECK(to_json(run_public_coin(p, pan)) == to_json(run_public_coin(p, pan)));
    CHECK(to_json(run_asymmetric_hadamard(p, pan)) == to_json(run_asymmetric_hadamard(p, pan)));
    auto q = p;
    q.seed = 100;
    CHECK(to_json(run_asymmetric_hadamard(p, pan)) != to_json(run_asymmetric_hadamard(q, pan)));
}

TEST_CASE("one-bit protocols send exactly one bit per used user") {
    const auto u = DiscreteDistribution::uniform(16);
    auto p = base(16, 5, 100);
    p.priv = PrivacyParams::pure(0.7);
    const Verdict h = run_asymmetric_hadamard(p, u);
    CHECK(h.transcript.users_used == 90);
    CHECK(h.transcript.users_dropped == 10);
    CHECK(h.transcript.messages == 90);
    CHECK(h.transcript.hadamard_bits == 90);
    CHECK(h.transcript.max_bits_per_user == 1);
    CHECK(h.transcript.rr_passes_min == 1);
    CHECK(h.transcript.rr_passes_max == 1);
    CHECK(h.transcript.epsilon_per_user_max == 0.7);
    const Verdict l = run_large_m(p, u);
    CHECK(l.transcript.large_m_bits == 100);
    CHECK(l.transcript.max_bits_per_user == 1);
    const Verdict c = run_combined(p, u);
    CHECK(c.transcript.max_bits_per_user == 1);
    CHECK(c.transcript.messages == c.transcript.users_used);
    CHECK(c.transcript.large_m_bits == combined_large_m_users(p));
    CHECK(c.transcript.epsilon_uniform);
    const Verdict pc = run_public_coin(p, u);
    CHECK(pc.transcript.coin_bits == 99);
    CHECK(pc.transcript.max_bits_per_user == 1);
}

TEST_CASE("symmetric combined users send a group index and two bits at eps/2 each") {
    auto p = base(16, 4, 400);
    p.mode = Mode::Symmetric;
    p.priv = PrivacyParams::pure(1.0);
    const Verdict v = run_combined(p, make_paninski_instance(16, 0.45));
    const Transcript& t = v.transcript;
    CHECK(t.users_used == 400);
    CHECK(t.messages == 800);
    CHECK(t.hadamard_bits == 400);
    CHECK(t.large_m_bits == 400);
    CHECK(t.max_bits_per_user == 1 + 4 + 1);
    CHECK(t.max_bits_per_user <= 1 + 4 + 1);
    REQUIRE(t.epsilon_profile.size() == 2);
    CHECK(t.epsilon_profile[0] == 0.5);
    CHECK(t.epsilon_profile[1] == 0.5);
    CHECK(t.epsilon_per_user_min == 1.0);
    CHECK(t.epsilon_per_user_max == 1.0);
    CHECK(t.epsilon_uniform);
    CHECK(t.rr_passes_min == 1);
    CHECK(t.rr_passes_max == 1);
    CHECK(t.samples_per_user_used == 3);
}

TEST_CASE("insufficient users") {
    const auto u = DiscreteDistribution::uniform(16);
    CHECK_THROWS_AS(run_asymmetric_hadamard(base(16, 3, 29), u), InsufficientUsers);
    CHECK_NOTHROW(run_asymmetric_hadamard(base(16, 3, 30), u));
    auto p = base(16, 3, 8);
    CHECK_THROWS_AS(run_public_coin(p, u), InsufficientUsers);
    p.priv = PrivacyParams::pure(1.0);
    p.n = 40;
    CHECK_THROWS_AS(run_combined(p, u), InsufficientUsers);
    p.mode = Mode::Symmetric;
    p.n = 29;
    CHECK_THROWS_AS(run_combined(p, u), InsufficientUsers);
}

TEST_CASE("privacy attenuates gamma by tanh(eps/2)") {
    auto p = base(64, 5, 1000);
    const double plain = hadamard_gamma(p);
    p.priv = PrivacyParams::pure(std::log(3.0));
    CHECK(hadamard_gamma(p) == doctest::Approx(plain / 2).epsilon(1e-15));
}

TEST_CASE("asymmetric Hadamard protocol guarantees at small k") {
    auto p = base(16, 5, 0);
    const double gamma = hadamard_gamma(p);
    const auto per_group = static_cast<std::size_t>(std::ceil(50.0 * 4.0 / (gamma * gamma)));
    p.n = 15 * per_group;
    CHECK(accept_rate("asymmetric_hadamard", p, DiscreteDistribution::uniform(16), 200, 1) >= 2.0 / 3.0);
    CHECK(1.0 - accept_rate("asymmetric_hadamard", p, make_paninski_instance(16, 0.45), 200, 2) >= 2.0 / 3.0);
}

TEST_CASE("large-m protocol accepts uniform data") {
    const auto p = base(64, 401, 10);
    CHECK(accept_rate("large_m", p, DiscreteDistribution::uniform(64), 200, 3) >= 0.9);
}

TEST_CASE("repetition baseline") {
    auto p = base(16, 8, 50);
    const Verdict v = run_baseline_repetition(p, DiscreteDistribution({1.0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}));
    CHECK(v.transcript.subtests[0].statistic == doctest::Approx(15.0 / 16.0));
    CHECK_THROWS_AS(run_baseline_repetition(base(16, 17, 50), DiscreteDistribution::uniform(16)), InvalidArgument);

    // Mean of the empty-cell fraction under uniform data, across independent runs.
    const std::size_t runs = 400;
    double s = 0.0, s2 = 0.0;
    for (std::size_t r = 0; r < runs; ++r) {
        auto q = base(16, 8, 50);
        q.seed = trial_seed(5, r);
        const double z = run_baseline_repetition(q, DiscreteDistribution::uniform(16)).transcript.subtests[0].statistic;
        s += z;
        s2 += z * z;
    }
    const double mean = s / runs;
    const double se = std::sqrt((s2 / runs - mean * mean) / runs);
    CHECK(std::fabs(mean - std::pow(15.0 / 16.0, 8)) <= 5 * se);

    // m = 1 leaves a constant statistic equal to its null expectation: never a rejection.
    auto one = base(16, 1, 50);
    one.priv = PrivacyParams::pure(1.0);
    CHECK(run_baseline_repetition(one, make_paninski_instance(16, 0.45)).decision == Decision::Accept);
}

TEST_CASE("public coin: majority over batches beats a single batch") {
    auto p = base(64, 5, 0);
    p.priv = PrivacyParams::pure(1.0);
    const std::size_t n9 = sized_users("public_coin", p);
    p.n = n9;
    const auto pan = make_paninski_instance(64, 0.45);
    CHECK(accept_rate("public_coin", p, DiscreteDistribution::uniform(64), 100, 7) >= 2.0 / 3.0);
    const double reject9 = 1.0 - accept_rate("public_coin", p, pan, 100, 8);
    auto single = p;
    single.constants.public_coin_batches = 1;
    single.n = n9 / 9;
    const double reject1 = 1.0 - accept_rate("public_coin", single, pan, 100, 8);
    CHECK(reject9 >= 2.0 / 3.0);
    CHECK(reject1 < reject9);
}

TEST_CASE("required n does not grow with m") {
    ExperimentConfig c;
    c.protocol = "combined";
    c.params = base(16, 1, 0);
    c.params.priv = PrivacyParams::pure(1.0);
    c.params.delta = 0.3;
    c.alternative = InstanceSpec::paninski(0.3);
    c.trials = 300;
    c.search.n_min = 30;
    c.search.n_max = 1 << 20;
    c.search.rel_tol = 0.05;
    std::vector<std::size_t> needed;
    for (const std::size_t m : {1u, 3u, 9u, 27u}) {
        c.params.m = m;
        needed.push_back(find_min_n(c));
    }
    MESSAGE("required n over m = 1, 3, 9, 27: " << needed[0] << " " << needed[1] << " " << needed[2] << " " << needed[3]);
    for (std::size_t i = 1; i < needed.size(); ++i) {
        // One bisection step of slack for Monte Carlo noise.
        CHECK(static_cast<double>(needed[i]) <= 1.1 * static_cast<double>(needed[i - 1]));
    }
}

TEST_CASE("non-private Hadamard needs fewer users with more samples") {
    ExperimentConfig c;
    c.protocol = "asymmetric_hadamard";
    c.params = base(64, 1, 0);
    c.alternative = InstanceSpec::paninski(0.45);
    c.trials = 300;
    c.search.n_min = 63;
    const std::size_t n1 = find_min_n(c);
    c.params.m = 9;
    const std::size_t n9 = find_min_n(c);
    MESSAGE("n(m=1) = " << n1 << ", n(m=9) = " << n9);
    CHECK(n9 <= n1);
}
