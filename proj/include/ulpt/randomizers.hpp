#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ulpt/dist_core.hpp"
#include "ulpt/hadamard.hpp"
#include "ulpt/rng.hpp"

namespace ulpt {

/// Privacy budget of a local randomizer: a positive epsilon, or non-private.
class PrivacyParams {
public:
    static PrivacyParams non_private() noexcept { return PrivacyParams(); }
    static PrivacyParams pure(double epsilon);

    bool is_private() const noexcept { return epsilon_.has_value(); }
    /// Throws InvalidArgument when non-private.
    double epsilon() const;

    /// e^eps / (e^eps + 1).
    double keep_probability() const;
    /// (e^eps - 1) / (e^eps + 1); 1 when non-private.
    double attenuation() const noexcept;

    /// Budget of each of `parts` equal shares (basic composition).
    PrivacyParams split(unsigned parts) const;

    friend bool operator==(const PrivacyParams&, const PrivacyParams&) = default;

private:
    PrivacyParams() = default;
    // e/(e+1) = 1/(1+e^-eps), cached because every client evaluates it.
    explicit PrivacyParams(double eps) : epsilon_(eps), keep_(1.0 / (1.0 + std::exp(-eps))) {}

    std::optional<double> epsilon_;
    double keep_ = 1.0;
};

enum class MessageKind : std::uint8_t {
    HadamardBit,     // thresholded count of one monitored subset
    LargeMBit,       // any subset deviates from m/2 by more than T
    CoinBit,         // thresholded count of one half of a public partition
    NoisyStatistic,  // Laplace-noised empty-cell fraction (repetition baseline)
};

const char* to_string(MessageKind kind) noexcept;

/// One message emitted by a client.
struct UserMessage {
    MessageKind kind{MessageKind::HadamardBit};
    std::uint8_t bit{0};
    std::optional<std::uint32_t> group;  // column index, symmetric mode only
    double value{0.0};                   // NoisyStatistic payload
    double epsilon_spent{0.0};           // privacy charged for this message
    std::uint8_t rr_passes{0};           // times the raw bit went through randomized response
};

/// 1{#samples in chi_j >= (m+1)/2}; m must be odd, 2 <= j <= k.
std::uint8_t threshold_bit(const SampleBatch& batch, const HadamardPlan& plan, std::size_t column);

/// 1{ max_{2<=j<=k} |V_j - m/2| > T }.
std::uint8_t large_m_flag(const SampleBatch& batch, const HadamardPlan& plan, double threshold,
                          SubsetCountMethod method = SubsetCountMethod::Auto);

/// Keeps `bit` with probability e^eps/(e^eps+1), flips it otherwise.
std::uint8_t randomized_response(std::uint8_t bit, const PrivacyParams& priv, Rng& rng);

/// Q(y | x) for binary randomized response, indexed [x][y].
using TransitionMatrix = std::array<std::array<double, 2>, 2>;

TransitionMatrix rr_transition_matrix(const PrivacyParams& priv);

/// max over y, x, x' of Q(y|x) / Q(y|x').
double max_likelihood_ratio(const TransitionMatrix& q) noexcept;

/// Two-part partition of [k] with both parts of size k/2.
class BalancedPartition {
public:
    /// `first[r-1]` tells whether symbol r lies in part 1.
    explicit BalancedPartition(std::vector<bool> first);

    /// Shuffles [k] and puts the first k/2 symbols in part 1.
    static BalancedPartition random(std::size_t k, Rng& rng);

    std::size_t k() const noexcept { return first_.size(); }
    bool in_first(Symbol s) const noexcept { return first_[s - 1]; }

    /// p(part 1) - 1/2.
    double bias(const DiscreteDistribution& p) const;

private:
    std::vector<bool> first_;
};

std::uint8_t compress_bit(Symbol sample, const BalancedPartition& partition);

/// 1{#samples in part 1 >= (m+1)/2}; m must be odd.
std::uint8_t coin_threshold_bit(const SampleBatch& batch, const BalancedPartition& partition);

/// Empirical distribution of |p_Pi(1) - 1/2| / (delta * sqrt(2/k)) over random
/// balanced partitions Pi, used to estimate the domain-compression constants.
struct CompressionProfile {
    std::vector<double> normalized_bias;  // sorted ascending

    /// Fraction of partitions with normalized bias >= c1 (an estimate of c2 at c1).
    double fraction_at_least(double c1) const noexcept;
    /// Largest c1 such that at least a `fraction` of partitions reach it.
    double c1_at_fraction(double fraction) const;
};

CompressionProfile estimate_compression_profile(const DiscreteDistribution& p, std::size_t partitions, Rng& rng);

}  // namespace ulpt
