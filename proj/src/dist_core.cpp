#include "ulpt/dist_core.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "ulpt/errors.hpp"

namespace ulpt {

namespace {

constexpr double kNormalizationTolerance = 1e-12;

}  // namespace

DiscreteDistribution::DiscreteDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.size() < 2) {
        throw InvalidArgument("distribution needs k >= 2");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
        const double v = probs_[i];
        if (!std::isfinite(v) || v < 0.0) {
            throw InvalidArgument(fmt::format("probability of symbol {} is {}", i + 1, v));
        }
        total += v;
    }
    if (std::abs(total - 1.0) > kNormalizationTolerance) {
        throw InvalidArgument(fmt::format("probabilities sum to {:.17g}, expected 1", total));
    }

    cdf_.resize(probs_.size());
    double running = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
        running += probs_[i];
        cdf_[i] = running;
        if (probs_[i] > 0.0) {
            last_positive = i;
        }
    }
    // Symbols after the last positive mass must never be drawn, whatever rounding did.
    std::fill(cdf_.begin() + static_cast<std::ptrdiff_t>(last_positive), cdf_.end(), 1.0);

    // guide_[g] is the first index whose cdf lands in bucket g or later. Bucketing
    // is monotone in its argument, so it never starts past the inverse-CDF answer.
    const double buckets = static_cast<double>(cdf_.size());
    guide_.resize(cdf_.size());
    std::size_t c = 0;
    for (std::size_t g = 0; g < guide_.size(); ++g) {
        while (c + 1 < cdf_.size() && cdf_[c] * buckets < static_cast<double>(g)) {
            ++c;
        }
        guide_[g] = static_cast<std::uint32_t>(c);
    }
}

DiscreteDistribution DiscreteDistribution::uniform(std::size_t k) {
    if (k < 2) {
        throw InvalidArgument("distribution needs k >= 2");
    }
    return DiscreteDistribution(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

double DiscreteDistribution::mass(Symbol x) const {
    if (x < 1 || x > probs_.size()) {
        throw InvalidArgument(fmt::format("symbol {} outside [1, {}]", x, probs_.size()));
    }
    return probs_[x - 1];
}

Symbol DiscreteDistribution::sample(Rng& rng) const noexcept {
    // Inverse CDF: first index with cdf > u, found by a guided linear scan.
    const double u = rng.uniform01();
    const auto bucket = std::min(static_cast<std::size_t>(u * static_cast<double>(cdf_.size())), cdf_.size() - 1);
    std::size_t c = guide_[bucket];
    while (cdf_[c] <= u) {
        ++c;
    }
    return static_cast<Symbol>(c) + 1;
}

SampleBatch::SampleBatch(std::vector<Symbol> symbols, std::size_t k) : symbols_(std::move(symbols)) {
    if (symbols_.empty()) {
        throw InvalidArgument("sample batch must hold at least one sample");
    }
    for (const Symbol s : symbols_) {
        if (s < 1 || s > k) {
            throw InvalidArgument(fmt::format("sample {} outside [1, {}]", s, k));
        }
    }
}

void SampleBatch::resample(const DiscreteDistribution& dist, std::size_t m, Rng& rng) {
    symbols_.resize(m);
    for (auto& s : symbols_) {
        s = dist.sample(rng);
    }
}

void SampleBatch::truncate_to_odd() noexcept {
    if (!symbols_.empty() && symbols_.size() % 2 == 0) {
        symbols_.pop_back();
    }
}

SampleBatch sample_batch(const DiscreteDistribution& dist, std::size_t m, Rng& rng) {
    if (m == 0) {
        throw InvalidArgument("sample_batch requires m >= 1");
    }
    SampleBatch batch;
    batch.resample(dist, m, rng);
    return batch;
}

double tv_distance(const DiscreteDistribution& p, const DiscreteDistribution& q) {
    if (p.k() != q.k()) {
        throw InvalidArgument(fmt::format("tv_distance domain mismatch: {} vs {}", p.k(), q.k()));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < p.k(); ++i) {
        sum += std::abs(p.probs()[i] - q.probs()[i]);
    }
    return 0.5 * sum;
}

DiscreteDistribution make_paninski_instance(std::size_t k, double delta) {
    if (k < 2 || k % 2 != 0) {
        throw InvalidArgument(fmt::format("paninski instance needs even k >= 2, got {}", k));
    }
    if (!(delta > 0.0 && delta <= 0.5)) {
        throw InvalidArgument(fmt::format("paninski instance needs delta in (0, 1/2], got {}", delta));
    }
    const double kd = static_cast<double>(k);
    std::vector<double> probs(k);
    for (std::size_t j = 0; j < k; ++j) {
        // Symbol j+1: odd symbols get the + perturbation.
        const double sign = (j % 2 == 0) ? 1.0 : -1.0;
        probs[j] = (1.0 + sign * 2.0 * delta) / kd;
    }
    return DiscreteDistribution(std::move(probs));
}

DiscreteDistribution make_heavy_set_instance(std::size_t k, std::span<const Symbol> set, double extra) {
    if (k < 2) {
        throw InvalidArgument("heavy-set instance needs k >= 2");
    }
    std::vector<bool> in_set(k, false);
    for (const Symbol s : set) {
        if (s < 1 || s > k) {
            throw InvalidArgument(fmt::format("heavy-set symbol {} outside [1, {}]", s, k));
        }
        if (in_set[s - 1]) {
            throw InvalidArgument(fmt::format("heavy-set symbol {} listed twice", s));
        }
        in_set[s - 1] = true;
    }
    const std::size_t size = set.size();
    if (size == 0 || size == k) {
        throw InvalidArgument("heavy set must be a non-empty proper subset of [k]");
    }
    const double kd = static_cast<double>(k);
    const double base = static_cast<double>(size) / kd;
    if (!(extra > 0.0) || base + extra > 1.0 + 1e-15) {
        throw InvalidArgument(fmt::format("infeasible extra mass {} for |S|={}, k={}", extra, size, k));
    }
    const double inside = std::min(1.0, base + extra);
    const double per_in = inside / static_cast<double>(size);
    const double per_out = (1.0 - inside) / static_cast<double>(k - size);
    std::vector<double> probs(k);
    for (std::size_t j = 0; j < k; ++j) {
        probs[j] = in_set[j] ? per_in : per_out;
    }
    return DiscreteDistribution(std::move(probs));
}

}  // namespace ulpt
