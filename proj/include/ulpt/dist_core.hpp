#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ulpt/rng.hpp"

namespace ulpt {

/// Domain symbols are 1-based: a distribution over [k] has symbols 1..k.
using Symbol = std::uint32_t;

/// Probability vector over [k], validated once at construction.
///
/// Entries must be non-negative and sum to one within 1e-12; k >= 2.
/// Sampling is inverse-CDF over a precomputed cumulative array.
class DiscreteDistribution {
public:
    explicit DiscreteDistribution(std::vector<double> probs);

    static DiscreteDistribution uniform(std::size_t k);

    std::size_t k() const noexcept { return probs_.size(); }
    std::span<const double> probs() const noexcept { return probs_; }

    /// Mass of symbol `x` in 1..k.
    double mass(Symbol x) const;

    Symbol sample(Rng& rng) const noexcept;

    friend bool operator==(const DiscreteDistribution& a, const DiscreteDistribution& b) {
        return a.probs_ == b.probs_;
    }

private:
    std::vector<double> probs_;
    std::vector<double> cdf_;
    std::vector<std::uint32_t> guide_;
};

/// One user's multi-sample: m symbols in 1..k.
class SampleBatch {
public:
    SampleBatch() = default;
    SampleBatch(std::vector<Symbol> symbols, std::size_t k);

    std::size_t m() const noexcept { return symbols_.size(); }
    std::span<const Symbol> symbols() const noexcept { return symbols_; }

    /// Overwrites the batch with `m` fresh draws, reusing storage.
    void resample(const DiscreteDistribution& dist, std::size_t m, Rng& rng);

    /// Drops the last sample when m is even so the batch size is odd.
    void truncate_to_odd() noexcept;

private:
    std::vector<Symbol> symbols_;
};

SampleBatch sample_batch(const DiscreteDistribution& dist, std::size_t m, Rng& rng);

/// (1/2) * sum_x |p_x - q_x|.
double tv_distance(const DiscreteDistribution& p, const DiscreteDistribution& q);

/// Alternating perturbation of uniform: p_j = (1 + (-1)^(j+1) * 2 delta) / k, at TV distance delta.
DiscreteDistribution make_paninski_instance(std::size_t k, double delta);

/// Uniform within S and within its complement, with p(S) = |S|/k + extra.
DiscreteDistribution make_heavy_set_instance(std::size_t k, std::span<const Symbol> set, double extra);

}  // namespace ulpt
