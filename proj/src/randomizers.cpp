#include "ulpt/randomizers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "ulpt/errors.hpp"

namespace ulpt {

PrivacyParams PrivacyParams::pure(double epsilon) {
    if (!(epsilon > 0.0) || std::isnan(epsilon)) {
        throw InvalidArgument(fmt::format("epsilon must be positive, got {}", epsilon));
    }
    return PrivacyParams(epsilon);
}

double PrivacyParams::epsilon() const {
    if (!epsilon_) {
        throw InvalidArgument("non-private parameters carry no epsilon");
    }
    return *epsilon_;
}

double PrivacyParams::keep_probability() const {
    (void)epsilon();
    return keep_;
}

double PrivacyParams::attenuation() const noexcept {
    if (!epsilon_) {
        return 1.0;
    }
    return std::tanh(*epsilon_ / 2.0);
}

PrivacyParams PrivacyParams::split(unsigned parts) const {
    if (parts == 0) {
        throw InvalidArgument("cannot split a budget into zero parts");
    }
    if (!epsilon_) {
        return *this;
    }
    return PrivacyParams(*epsilon_ / static_cast<double>(parts));
}

const char* to_string(MessageKind kind) noexcept {
    switch (kind) {
        case MessageKind::HadamardBit: return "hadamard_bit";
        case MessageKind::LargeMBit: return "large_m_bit";
        case MessageKind::CoinBit: return "coin_bit";
        case MessageKind::NoisyStatistic: return "noisy_statistic";
    }
    return "unknown";
}

std::uint8_t threshold_bit(const SampleBatch& batch, const HadamardPlan& plan, std::size_t column) {
    const std::size_t m = batch.m();
    if (m % 2 == 0) {
        throw InvalidArgument(fmt::format("threshold_bit needs odd m, got {}", m));
    }
    if (column < 2 || column > plan.k()) {
        throw InvalidArgument(fmt::format("group column {} outside [2, {}]", column, plan.k()));
    }
    std::size_t inside = 0;
    for (const Symbol s : batch.symbols()) {
        inside += plan.contains(s, column) ? 1 : 0;
    }
    return inside >= (m + 1) / 2 ? 1 : 0;
}

std::uint8_t large_m_flag(const SampleBatch& batch, const HadamardPlan& plan, double threshold,
                          SubsetCountMethod method) {
    if (!(threshold > 0.0)) {
        throw InvalidArgument(fmt::format("large-m threshold must be positive, got {}", threshold));
    }
    const double half = static_cast<double>(batch.m()) / 2.0;
    // |V_j - m/2| never exceeds m/2.
    if (half <= threshold) {
        return 0;
    }
    std::vector<std::int64_t> counts(plan.k());
    subset_counts(plan, batch.symbols(), counts, method);
    double worst = 0.0;
    for (std::size_t j = 1; j < counts.size(); ++j) {
        worst = std::max(worst, std::abs(static_cast<double>(counts[j]) - half));
    }
    return worst > threshold ? 1 : 0;
}

std::uint8_t randomized_response(std::uint8_t bit, const PrivacyParams& priv, Rng& rng) {
    if (!priv.is_private()) {
        throw InvalidArgument("randomized_response called without a privacy budget");
    }
    const bool keep = rng.bernoulli(priv.keep_probability());
    return keep ? bit : static_cast<std::uint8_t>(1 - bit);
}

TransitionMatrix rr_transition_matrix(const PrivacyParams& priv) {
    const double keep = priv.keep_probability();
    const double flip = 1.0 / (1.0 + std::exp(priv.epsilon()));
    return {{{keep, flip}, {flip, keep}}};
}

double max_likelihood_ratio(const TransitionMatrix& q) noexcept {
    double worst = 0.0;
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 2; ++x) {
            for (int xp = 0; xp < 2; ++xp) {
                worst = std::max(worst, q[x][y] / q[xp][y]);
            }
        }
    }
    return worst;
}

BalancedPartition::BalancedPartition(std::vector<bool> first) : first_(std::move(first)) {
    const std::size_t k = first_.size();
    const auto ones = static_cast<std::size_t>(std::count(first_.begin(), first_.end(), true));
    if (k < 2 || k % 2 != 0 || ones != k / 2) {
        throw InvalidArgument(fmt::format("partition of [{}] with part sizes {} and {} is not balanced", k, ones,
                                          k - ones));
    }
}

BalancedPartition BalancedPartition::random(std::size_t k, Rng& rng) {
    if (k < 2 || k % 2 != 0) {
        throw InvalidArgument(fmt::format("balanced partition needs even k, got {}", k));
    }
    std::vector<Symbol> order(k);
    std::iota(order.begin(), order.end(), Symbol{1});
    for (std::size_t i = k - 1; i > 0; --i) {
        std::swap(order[i], order[rng.below(i + 1)]);
    }
    std::vector<bool> first(k, false);
    for (std::size_t i = 0; i < k / 2; ++i) {
        first[order[i] - 1] = true;
    }
    return BalancedPartition(std::move(first));
}

double BalancedPartition::bias(const DiscreteDistribution& p) const {
    if (p.k() != k()) {
        throw InvalidArgument("partition and distribution domains differ");
    }
    const double u = 1.0 / static_cast<double>(k());
    double diff = 0.0;
    for (std::size_t i = 0; i < k(); ++i) {
        if (first_[i]) {
            diff += p.probs()[i] - u;
        }
    }
    return diff;
}

std::uint8_t compress_bit(Symbol sample, const BalancedPartition& partition) {
    if (sample < 1 || sample > partition.k()) {
        throw InvalidArgument(fmt::format("sample {} outside [1, {}]", sample, partition.k()));
    }
    return partition.in_first(sample) ? 1 : 0;
}

std::uint8_t coin_threshold_bit(const SampleBatch& batch, const BalancedPartition& partition) {
    const std::size_t m = batch.m();
    if (m % 2 == 0) {
        throw InvalidArgument(fmt::format("coin_threshold_bit needs odd m, got {}", m));
    }
    std::size_t inside = 0;
    for (const Symbol s : batch.symbols()) {
        inside += partition.in_first(s) ? 1 : 0;
    }
    return inside >= (m + 1) / 2 ? 1 : 0;
}

double CompressionProfile::fraction_at_least(double c1) const noexcept {
    if (normalized_bias.empty()) {
        return 0.0;
    }
    const auto it = std::lower_bound(normalized_bias.begin(), normalized_bias.end(), c1);
    return static_cast<double>(normalized_bias.end() - it) / static_cast<double>(normalized_bias.size());
}

double CompressionProfile::c1_at_fraction(double fraction) const {
    if (normalized_bias.empty() || !(fraction > 0.0 && fraction <= 1.0)) {
        throw InvalidArgument("c1_at_fraction needs a non-empty profile and fraction in (0, 1]");
    }
    const auto n = normalized_bias.size();
    const auto needed = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    return normalized_bias[n - needed];
}

CompressionProfile estimate_compression_profile(const DiscreteDistribution& p, std::size_t partitions, Rng& rng) {
    const std::size_t k = p.k();
    const double delta = tv_distance(p, DiscreteDistribution::uniform(k));
    if (!(delta > 0.0)) {
        throw InvalidArgument("compression profile needs a distribution away from uniform");
    }
    const double scale = delta * std::sqrt(2.0 / static_cast<double>(k));
    CompressionProfile out;
    out.normalized_bias.reserve(partitions);
    for (std::size_t i = 0; i < partitions; ++i) {
        const auto partition = BalancedPartition::random(k, rng);
        out.normalized_bias.push_back(std::abs(partition.bias(p)) / scale);
    }
    std::sort(out.normalized_bias.begin(), out.normalized_bias.end());
    return out;
}

}  // namespace ulpt
