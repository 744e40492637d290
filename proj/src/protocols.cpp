#include "ulpt/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>

#include "ulpt/errors.hpp"

namespace ulpt {

namespace {

bool is_power_of_two(std::size_t k) noexcept { return k >= 2 && (k & (k - 1)) == 0; }

void need_users(bool ok, const std::string& what) {
    if (!ok) {
        throw InsufficientUsers(what);
    }
}

// Per-run privacy and communication accounting over the messages of each used user.
class Accounting {
public:
    Accounting(Transcript& t, unsigned group_bits) : t_(t), group_bits_(group_bits) {}

    void user(std::initializer_list<UserMessage> messages) {
        double eps = 0.0;
        std::size_t bits = 0;
        for (const UserMessage& msg : messages) {
            eps += msg.epsilon_spent;
            bits += message_bits(msg);
            count(msg);
            if (first_) {
                t_.epsilon_profile.push_back(msg.epsilon_spent);
            }
        }
        ++t_.users_used;
        t_.max_bits_per_user = std::max(t_.max_bits_per_user, bits);
        if (first_) {
            t_.epsilon_per_user_min = eps;
            t_.epsilon_per_user_max = eps;
            first_ = false;
        } else {
            if (eps != t_.epsilon_per_user_min || eps != t_.epsilon_per_user_max) {
                t_.epsilon_uniform = false;
            }
            t_.epsilon_per_user_min = std::min(t_.epsilon_per_user_min, eps);
            t_.epsilon_per_user_max = std::max(t_.epsilon_per_user_max, eps);
        }
    }

private:
    std::size_t message_bits(const UserMessage& msg) const noexcept {
        if (msg.kind == MessageKind::NoisyStatistic) {
            return 64;
        }
        return 1 + (msg.group ? group_bits_ : 0);
    }

    void count(const UserMessage& msg) {
        ++t_.messages;
        switch (msg.kind) {
            case MessageKind::HadamardBit: ++t_.hadamard_bits; break;
            case MessageKind::LargeMBit: ++t_.large_m_bits; break;
            case MessageKind::CoinBit: ++t_.coin_bits; break;
            case MessageKind::NoisyStatistic: ++t_.noisy_statistics; break;
        }
        if (msg.kind != MessageKind::NoisyStatistic) {
            if (first_message_) {
                t_.rr_passes_min = msg.rr_passes;
                t_.rr_passes_max = msg.rr_passes;
                first_message_ = false;
            } else {
                t_.rr_passes_min = std::min<unsigned>(t_.rr_passes_min, msg.rr_passes);
                t_.rr_passes_max = std::max<unsigned>(t_.rr_passes_max, msg.rr_passes);
            }
        }
    }

    Transcript& t_;
    unsigned group_bits_;
    bool first_ = true;
    bool first_message_ = true;
};

UserMessage privatize(MessageKind kind, std::uint8_t raw, const PrivacyParams& priv, Rng& rng) {
    UserMessage msg;
    msg.kind = kind;
    if (priv.is_private()) {
        msg.bit = randomized_response(raw, priv, rng);
        msg.epsilon_spent = priv.epsilon();
        msg.rr_passes = 1;
    } else {
        msg.bit = raw;
    }
    return msg;
}

UserMessage hadamard_message(const SampleBatch& batch, const HadamardPlan& plan, std::size_t column,
                             const PrivacyParams& priv, Rng& rng) {
    return privatize(MessageKind::HadamardBit, threshold_bit(batch, plan, column), priv, rng);
}

UserMessage large_m_message(const SampleBatch& batch, const HadamardPlan& plan, double threshold,
                            const PrivacyParams& priv, Rng& rng) {
    return privatize(MessageKind::LargeMBit, large_m_flag(batch, plan, threshold), priv, rng);
}

// Server side of the large-m protocol over the collected bits.
SubtestSummary large_m_decide(std::size_t ones, std::size_t users, const PrivacyParams& priv) {
    SubtestSummary s;
    s.name = "large_m";
    s.users = users;
    s.threshold = 0.5;
    const double avg = static_cast<double>(ones) / static_cast<double>(users);
    if (!priv.is_private()) {
        s.statistic = avg;
        s.decision = 2 * ones >= users ? Decision::Reject : Decision::Accept;
    } else {
        const double e = std::exp(priv.epsilon());
        s.statistic = (avg - 1.0 / (e + 1.0)) * (e + 1.0) / (e - 1.0);
        s.decision = s.statistic >= 0.5 ? Decision::Reject : Decision::Accept;
    }
    return s;
}

// Runs users [first, first + users) through the large-m client and decides.
SubtestSummary large_m_branch(const ProtocolParams& params, const DiscreteDistribution& p, const HadamardPlan& plan,
                              std::size_t first, std::size_t users, const PrivacyParams& priv, Accounting& acct) {
    const double threshold = large_m_threshold(params, users);
    SampleBatch batch;
    std::size_t ones = 0;
    for (std::size_t i = first; i < first + users; ++i) {
        Rng rng = Rng::stream(params.seed, StreamDomain::User, i);
        batch.resample(p, params.m, rng);
        const UserMessage msg = large_m_message(batch, plan, threshold, priv, rng);
        ones += msg.bit;
        acct.user({msg});
    }
    return large_m_decide(ones, users, priv);
}

SubtestSummary mean_summary(const char* name, const MeanTestResult& r, std::size_t users) {
    return SubtestSummary{name, r.verdict, r.statistic, r.threshold, users};
}

// Hadamard branch with round-robin groups over users [first, first + N*d).
SubtestSummary hadamard_branch(const ProtocolParams& params, const DiscreteDistribution& p, const HadamardPlan& plan,
                               std::size_t first, std::size_t per_group, double gamma, Accounting& acct) {
    const std::size_t d = plan.groups();
    CoordinateCounts counts = CoordinateCounts::fixed(d, static_cast<std::int64_t>(per_group));
    SampleBatch batch;
    const std::size_t used = per_group * d;
    for (std::size_t u = 0; u < used; ++u) {
        Rng rng = Rng::stream(params.seed, StreamDomain::User, first + u);
        batch.resample(p, params.m, rng);
        batch.truncate_to_odd();
        const std::size_t g = u % d;
        const UserMessage msg = hadamard_message(batch, plan, g + 2, params.priv, rng);
        counts.add(g, msg.bit ? 1 : -1);
        acct.user({msg});
    }
    return mean_summary("hadamard_mean_test", asymmetric_mean_test(counts, gamma), used);
}

Transcript new_transcript(const char* name, const ProtocolParams& params) {
    Transcript t;
    t.protocol = name;
    t.users_total = params.n;
    t.samples_per_user_used = effective_m(params.m);
    return t;
}

Decision all_accept(const std::vector<SubtestSummary>& subtests) {
    for (const SubtestSummary& s : subtests) {
        if (s.decision == Decision::Reject) {
            return Decision::Reject;
        }
    }
    return Decision::Accept;
}

double log_term(std::size_t users, std::size_t k) {
    return std::log(20.0 * static_cast<double>(users) * static_cast<double>(k));
}

std::size_t per_group_needed(double c, std::size_t d, double gamma) {
    return static_cast<std::size_t>(mean_test_sample_size(c, d, gamma));
}

}  // namespace

const char* to_string(Mode mode) noexcept {
    return mode == Mode::Symmetric ? "symmetric" : "asymmetric";
}

void ProtocolParams::validate() const {
    if (!is_power_of_two(k)) {
        throw InvalidArgument(fmt::format("k must be a power of two >= 2, got {}", k));
    }
    if (m == 0) {
        throw InvalidArgument("m must be at least 1");
    }
    if (n == 0) {
        throw InvalidArgument("n must be at least 1");
    }
    if (!(delta > 0.0 && delta <= 1.0)) {
        throw InvalidArgument(fmt::format("delta must lie in (0, 1], got {}", delta));
    }
    const ProtocolConstants& c = constants;
    if (!(c.gamma_scale > 0.0) || !(c.combined_gamma_scale > 0.0) || !(c.t_scale > 0.0) ||
        !(c.fixed_mean_c > 0.0) || !(c.symmetric_mean_c > 0.0) || !(c.public_coin_c > 0.0) ||
        !(c.public_coin_users_c > 0.0) || c.public_coin_batches == 0 || !(c.private_largem_users_c > 0.0)) {
        throw InvalidArgument("protocol constants must be positive");
    }
}

std::size_t effective_m(std::size_t m) noexcept { return m % 2 == 0 ? m - 1 : m; }

double hadamard_gamma(const ProtocolParams& params) {
    const double m = static_cast<double>(effective_m(params.m));
    const double d = static_cast<double>(params.k - 1);
    const double g = params.constants.gamma_scale * params.priv.attenuation() * std::min(std::sqrt(m) * params.delta, 1.0);
    return std::min(g, std::sqrt(d));
}

std::size_t combined_large_m_users(const ProtocolParams& params) {
    if (!params.priv.is_private()) {
        return 1;
    }
    const double eps = params.priv.epsilon();
    return static_cast<std::size_t>(std::ceil(params.constants.private_largem_users_c / (eps * eps) - 1e-9));
}

double combined_gamma(const ProtocolParams& params) {
    const double m = static_cast<double>(effective_m(params.m));
    const double d = static_cast<double>(params.k - 1);
    double r = 0.0;
    std::size_t log_users = 0;
    if (params.mode == Mode::Asymmetric) {
        r = params.priv.attenuation();
        log_users = combined_large_m_users(params);
    } else {
        r = params.priv.split(2).attenuation();
        log_users = params.n;
    }
    const double energy = std::min(m * params.delta * params.delta / log_term(log_users, params.k), d);
    const double s = params.constants.combined_gamma_scale;
    return std::min(s * r * std::sqrt(energy), std::sqrt(d));
}

double large_m_threshold(const ProtocolParams& params, std::size_t users) {
    return params.constants.t_scale * std::sqrt(static_cast<double>(params.m) * log_term(users, params.k));
}

double public_coin_threshold(const ProtocolParams& params) {
    const double m = static_cast<double>(effective_m(params.m));
    const double k = static_cast<double>(params.k);
    return params.constants.public_coin_c * params.priv.attenuation() * std::min(std::sqrt(m) * params.delta / std::sqrt(k), 1.0);
}

Verdict run_asymmetric_hadamard(const ProtocolParams& params, const DiscreteDistribution& p) {
    params.validate();
    if (p.k() != params.k) {
        throw InvalidArgument(fmt::format("distribution has k = {}, protocol expects {}", p.k(), params.k));
    }
    const HadamardPlan plan(params.k);
    const std::size_t d = plan.groups();
    const std::size_t per_group = params.n / d;
    need_users(per_group >= 2, fmt::format("asymmetric Hadamard protocol needs at least 2 users per group, i.e. n >= {}; got n = {}", 2 * d, params.n));
    Verdict v;
    v.transcript = new_transcript("asymmetric_hadamard", params);
    Accounting acct(v.transcript, 0);
    v.transcript.subtests.push_back(hadamard_branch(params, p, plan, 0, per_group, hadamard_gamma(params), acct));
    v.transcript.users_dropped = params.n - v.transcript.users_used;
    v.decision = all_accept(v.transcript.subtests);
    return v;
}

Verdict run_large_m(const ProtocolParams& params, const DiscreteDistribution& p) {
    params.validate();
    if (p.k() != params.k) {
        throw InvalidArgument(fmt::format("distribution has k = {}, protocol expects {}", p.k(), params.k));
    }
    const HadamardPlan plan(params.k);
    Verdict v;
    v.transcript = new_transcript("large_m", params);
    v.transcript.samples_per_user_used = params.m;
    Accounting acct(v.transcript, 0);
    v.transcript.subtests.push_back(large_m_branch(params, p, plan, 0, params.n, params.priv, acct));
    v.decision = all_accept(v.transcript.subtests);
    return v;
}

Verdict run_combined(const ProtocolParams& params, const DiscreteDistribution& p) {
    params.validate();
    if (p.k() != params.k) {
        throw InvalidArgument(fmt::format("distribution has k = {}, protocol expects {}", p.k(), params.k));
    }
    const HadamardPlan plan(params.k);
    const std::size_t d = plan.groups();
    Verdict v;
    v.transcript = new_transcript("combined", params);
    Transcript& t = v.transcript;

    if (params.mode == Mode::Asymmetric) {
        const std::size_t n2 = combined_large_m_users(params);
        need_users(params.n > n2, fmt::format("combined tester needs more than {} users, got {}", n2, params.n));
        const std::size_t per_group = (params.n - n2) / d;
        need_users(per_group >= 2, fmt::format("combined tester needs n >= {} (large-m users plus 2 per group), got {}", n2 + 2 * d, params.n));
        Accounting acct(t, 0);
        t.subtests.push_back(large_m_branch(params, p, plan, 0, n2, params.priv, acct));
        t.subtests.push_back(hadamard_branch(params, p, plan, n2, per_group, combined_gamma(params), acct));
    } else {
        need_users(params.n >= 2 * d, fmt::format("symmetric combined tester needs n >= {}, got {}", 2 * d, params.n));
        const PrivacyParams half = params.priv.split(2);
        const double threshold = large_m_threshold(params, params.n);
        const double gamma = combined_gamma(params);
        Accounting acct(t, plan.log2k());
        CoordinateCounts counts(d, static_cast<std::int64_t>(params.n));
        SampleBatch batch;
        std::size_t ones = 0;
        for (std::size_t i = 0; i < params.n; ++i) {
            Rng rng = Rng::stream(params.seed, StreamDomain::User, i);
            batch.resample(p, params.m, rng);
            const UserMessage flag = large_m_message(batch, plan, threshold, half, rng);
            batch.truncate_to_odd();
            const auto g = static_cast<std::uint32_t>(rng.below(d));
            UserMessage bit = hadamard_message(batch, plan, g + 2, half, rng);
            bit.group = g + 2;
            ones += flag.bit;
            counts.add(g, bit.bit ? 1 : -1);
            acct.user({bit, flag});
        }
        t.subtests.push_back(large_m_decide(ones, params.n, half));
        t.subtests.push_back(mean_summary("symmetric_mean_test", symmetric_mean_test(counts, gamma), params.n));
    }
    t.users_dropped = params.n - t.users_used;
    v.decision = all_accept(t.subtests);
    return v;
}

Verdict run_public_coin(const ProtocolParams& params, const DiscreteDistribution& p) {
    params.validate();
    if (p.k() != params.k) {
        throw InvalidArgument(fmt::format("distribution has k = {}, protocol expects {}", p.k(), params.k));
    }
    const std::size_t batches = params.constants.public_coin_batches;
    need_users(params.n >= batches, fmt::format("public-coin tester needs at least {} users, got {}", batches, params.n));
    const std::size_t per_batch = params.n / batches;
    const double r = params.priv.attenuation();
    const double raw_threshold = public_coin_threshold(params);

    Verdict v;
    v.transcript = new_transcript("public_coin", params);
    Accounting acct(v.transcript, 0);
    SampleBatch batch;
    std::size_t rejecting = 0;
    for (std::size_t b = 0; b < batches; ++b) {
        Rng coin = Rng::stream(params.seed, StreamDomain::PublicCoin, b);
        const BalancedPartition partition = BalancedPartition::random(params.k, coin);
        std::size_t ones = 0;
        for (std::size_t u = 0; u < per_batch; ++u) {
            Rng rng = Rng::stream(params.seed, StreamDomain::User, b * per_batch + u);
            batch.resample(p, params.m, rng);
            batch.truncate_to_odd();
            const UserMessage msg = privatize(MessageKind::CoinBit, coin_threshold_bit(batch, partition), params.priv, rng);
            ones += msg.bit;
            acct.user({msg});
        }
        // Debiased coin bias estimate against c * min(sqrt(m) delta / sqrt(k), 1).
        SubtestSummary s;
        s.name = fmt::format("batch_{}", b + 1);
        s.users = per_batch;
        s.statistic = std::fabs(static_cast<double>(ones) / static_cast<double>(per_batch) - 0.5) / r;
        s.threshold = raw_threshold / r;
        s.decision = s.statistic >= s.threshold ? Decision::Reject : Decision::Accept;
        rejecting += s.decision == Decision::Reject ? 1 : 0;
        v.transcript.subtests.push_back(std::move(s));
    }
    v.transcript.users_dropped = params.n - v.transcript.users_used;
    v.decision = 2 * rejecting > batches ? Decision::Reject : Decision::Accept;
    return v;
}

Verdict run_baseline_repetition(const ProtocolParams& params, const DiscreteDistribution& p) {
    params.validate();
    if (p.k() != params.k) {
        throw InvalidArgument(fmt::format("distribution has k = {}, protocol expects {}", p.k(), params.k));
    }
    if (params.m > params.k) {
        throw InvalidArgument(fmt::format("repetition baseline needs m <= k, got m = {}, k = {}", params.m, params.k));
    }
    const double k = static_cast<double>(params.k);
    const double m = static_cast<double>(params.m);
    const double sensitivity = (m - 1.0) / k;
    const double scale = params.priv.is_private() ? sensitivity / params.priv.epsilon() : 0.0;

    Verdict v;
    v.transcript = new_transcript("baseline", params);
    v.transcript.samples_per_user_used = params.m;
    Accounting acct(v.transcript, 0);
    SampleBatch batch;
    std::vector<std::uint8_t> seen(params.k);
    long double total = 0.0L;
    for (std::size_t i = 0; i < params.n; ++i) {
        Rng rng = Rng::stream(params.seed, StreamDomain::User, i);
        batch.resample(p, params.m, rng);
        std::fill(seen.begin(), seen.end(), 0);
        std::size_t occupied = 0;
        for (const Symbol s : batch.symbols()) {
            occupied += seen[s - 1] ? 0 : 1;
            seen[s - 1] = 1;
        }
        double z = static_cast<double>(params.k - occupied) / k;
        UserMessage msg;
        msg.kind = MessageKind::NoisyStatistic;
        if (params.priv.is_private()) {
            if (scale > 0.0) {
                // Laplace by inverse CDF from u uniform on (-1/2, 1/2).
                const double u = rng.uniform01() - 0.5;
                z -= scale * std::copysign(std::log1p(-2.0 * std::fabs(u)), u);
            }
            msg.epsilon_spent = params.priv.epsilon();
        }
        msg.value = z;
        total += z;
        acct.user({msg});
    }
    const double tt = m * m * params.delta * params.delta / (4.0 * std::exp(1.0) * k * k);
    SubtestSummary s;
    s.name = "empty_cells";
    s.users = params.n;
    s.statistic = static_cast<double>(total / static_cast<long double>(params.n));
    s.threshold = std::pow(1.0 - 1.0 / k, m) + tt / 2.0;
    s.decision = s.statistic >= s.threshold ? Decision::Reject : Decision::Accept;
    v.transcript.subtests.push_back(s);
    v.decision = s.decision;
    return v;
}

std::size_t sized_users(const std::string& protocol, const ProtocolParams& params) {
    // The user count being sized is irrelevant here.
    ProtocolParams probe = params;
    probe.n = std::max<std::size_t>(probe.n, 1);
    probe.validate();
    const std::size_t d = params.k - 1;
    if (protocol == "asymmetric_hadamard") {
        return d * per_group_needed(params.constants.fixed_mean_c, d, hadamard_gamma(params));
    }
    if (protocol == "combined") {
        if (params.mode == Mode::Asymmetric) {
            return combined_large_m_users(params) +
                   d * per_group_needed(params.constants.fixed_mean_c, d, combined_gamma(params));
        }
        // gamma shrinks as n grows through the log term; iterate to the fixed point.
        ProtocolParams q = params;
        q.n = 2 * d;
        for (int it = 0; it < 200; ++it) {
            const std::size_t next = d * per_group_needed(q.constants.symmetric_mean_c, d, combined_gamma(q));
            if (next <= q.n) {
                return q.n;
            }
            q.n = next;
        }
        throw InternalError("symmetric sizing did not converge");
    }
    if (protocol == "public_coin") {
        const double thr = public_coin_threshold(params);
        const auto per_batch = static_cast<std::size_t>(std::ceil(params.constants.public_coin_users_c / (thr * thr) - 1e-9));
        return params.constants.public_coin_batches * std::max<std::size_t>(per_batch, 1);
    }
    throw InvalidArgument(fmt::format("no sizing rule for protocol '{}'", protocol));
}

std::string to_json(const Verdict& verdict) {
    const Transcript& t = verdict.transcript;
    nlohmann::ordered_json j;
    j["decision"] = to_string(verdict.decision);
    j["protocol"] = t.protocol;
    j["users_total"] = t.users_total;
    j["users_used"] = t.users_used;
    j["users_dropped"] = t.users_dropped;
    j["samples_per_user_used"] = t.samples_per_user_used;
    j["messages"] = t.messages;
    j["hadamard_bits"] = t.hadamard_bits;
    j["large_m_bits"] = t.large_m_bits;
    j["coin_bits"] = t.coin_bits;
    j["noisy_statistics"] = t.noisy_statistics;
    j["max_bits_per_user"] = t.max_bits_per_user;
    j["epsilon_per_user_min"] = t.epsilon_per_user_min;
    j["epsilon_per_user_max"] = t.epsilon_per_user_max;
    j["epsilon_uniform"] = t.epsilon_uniform;
    j["epsilon_profile"] = t.epsilon_profile;
    j["rr_passes_min"] = t.rr_passes_min;
    j["rr_passes_max"] = t.rr_passes_max;
    auto& subs = j["subtests"] = nlohmann::ordered_json::array();
    for (const SubtestSummary& s : t.subtests) {
        subs.push_back({{"name", s.name},
                        {"decision", to_string(s.decision)},
                        {"statistic", s.statistic},
                        {"threshold", s.threshold},
                        {"users", s.users}});
    }
    return j.dump();
}

}  // namespace ulpt
