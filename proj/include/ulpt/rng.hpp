#pragma once

#include <cstdint>
#include <limits>

namespace ulpt {

/// One step of the splitmix64 generator; advances `state`.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Derives a child seed from a parent seed and an index.
///
/// All substreams in the library are obtained from the master seed by
/// repeated application of this function, e.g. the stream of user `i` in
/// trial `t` is seeded with
/// `derive_seed(derive_seed(derive_seed(master, t), kUserStreams), i)`.
/// The mapping depends only on the integers involved, so serial and
/// parallel executions see identical randomness.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept;

/// Substream domains; keep the values stable, they are part of the seed scheme.
enum class StreamDomain : std::uint64_t {
    Trial = 1,
    User = 2,
    PublicCoin = 3,
    Server = 4,
    Instance = 5,
};

/// xoshiro256** generator. Satisfies UniformRandomBitGenerator.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) noexcept;

    /// Stream `index` of `domain` under `seed`.
    static Rng stream(std::uint64_t seed, StreamDomain domain, std::uint64_t index) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept;

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() noexcept;

    /// Uniform integer in [0, bound); bound must be positive.
    std::uint64_t below(std::uint64_t bound) noexcept;

    bool bernoulli(double p) noexcept { return uniform01() < p; }

private:
    std::uint64_t s_[4];
};

}  // namespace ulpt
