#include "ulpt/hadamard.hpp"

#include <bit>
#include <cmath>

#include <fmt/format.h>

#include "ulpt/errors.hpp"

namespace ulpt {

HadamardPlan::HadamardPlan(std::size_t k) : k_(k), t_(0) {
    if (k < 2 || !std::has_single_bit(k)) {
        throw InvalidArgument(fmt::format("Hadamard plan needs k = 2^t >= 2, got {}", k));
    }
    t_ = static_cast<unsigned>(std::countr_zero(k));
}

std::vector<Symbol> HadamardPlan::members(std::size_t column) const {
    if (column < 1 || column > k_) {
        throw InvalidArgument(fmt::format("column {} outside [1, {}]", column, k_));
    }
    std::vector<Symbol> out;
    out.reserve(column == 1 ? k_ : k_ / 2);
    for (Symbol r = 1; r <= k_; ++r) {
        if (contains(r, column)) {
            out.push_back(r);
        }
    }
    return out;
}

bool chi_membership(const HadamardPlan& plan, Symbol r, std::size_t column) {
    if (r < 1 || r > plan.k() || column < 1 || column > plan.k()) {
        throw InvalidArgument(fmt::format("index ({}, {}) outside [1, {}]^2", r, column, plan.k()));
    }
    return plan.contains(r, column);
}

double GroupBiasVector::energy() const noexcept {
    double sum = 0.0;
    for (std::size_t j = 1; j < biases.size(); ++j) {
        sum += biases[j] * biases[j];
    }
    return sum;
}

GroupBiasVector group_biases(const HadamardPlan& plan, const DiscreteDistribution& p) {
    if (p.k() != plan.k()) {
        throw InvalidArgument(fmt::format("distribution over {} symbols, plan of order {}", p.k(), plan.k()));
    }
    GroupBiasVector out;
    out.biases.assign(plan.k(), 0.0);
    for (std::size_t j = 2; j <= plan.k(); ++j) {
        double mass = 0.0;
        for (Symbol r = 1; r <= plan.k(); ++r) {
            if (plan.contains(r, j)) {
                mass += p.probs()[r - 1];
            }
        }
        out.biases[j - 1] = mass - 0.5;
    }
    return out;
}

NormPreservation norm_preservation_check(const HadamardPlan& plan, const DiscreteDistribution& p) {
    if (p.k() != plan.k()) {
        throw InvalidArgument(fmt::format("distribution over {} symbols, plan of order {}", p.k(), plan.k()));
    }
    const std::size_t k = plan.k();
    const double kd = static_cast<double>(k);
    const double u = 1.0 / kd;

    NormPreservation out{0.0, 0.0, 0.0, 0.0};
    for (std::size_t j = 1; j <= k; ++j) {
        // Accumulate p(chi_j) - U(chi_j) directly as a sum of (p_r - 1/k) to avoid cancellation.
        double diff = 0.0;
        for (Symbol r = 1; r <= k; ++r) {
            if (plan.contains(r, j)) {
                diff += p.probs()[r - 1] - u;
            }
        }
        out.lhs += diff * diff;
        if (j >= 2) {
            out.bias_energy += diff * diff;
        }
    }
    double l2 = 0.0;
    for (const double v : p.probs()) {
        l2 += (v - u) * (v - u);
    }
    out.rhs = kd / 4.0 * l2;
    const double tv = tv_distance(p, DiscreteDistribution::uniform(k));
    out.tv_squared = tv * tv;
    return out;
}

void walsh_hadamard_transform(std::span<std::int64_t> values) noexcept {
    const std::size_t n = values.size();
    for (std::size_t h = 1; h < n; h <<= 1) {
        for (std::size_t i = 0; i < n; i += h << 1) {
            for (std::size_t j = i; j < i + h; ++j) {
                const std::int64_t a = values[j];
                const std::int64_t b = values[j + h];
                values[j] = a + b;
                values[j + h] = a - b;
            }
        }
    }
}

void subset_counts(const HadamardPlan& plan, std::span<const Symbol> samples, std::span<std::int64_t> out,
                   SubsetCountMethod method) {
    const std::size_t k = plan.k();
    if (out.size() != k) {
        throw InvalidArgument(fmt::format("subset_counts output has {} slots, need {}", out.size(), k));
    }
    const std::size_t m = samples.size();
    if (method == SubsetCountMethod::Auto) {
        method = (m <= plan.log2k() + 1) ? SubsetCountMethod::PerSample : SubsetCountMethod::Transform;
    }

    if (method == SubsetCountMethod::PerSample) {
        for (std::size_t j = 0; j < k; ++j) {
            std::int64_t count = 0;
            for (const Symbol s : samples) {
                count += plan.contains(s, j + 1) ? 1 : 0;
            }
            out[j] = count;
        }
        return;
    }

    for (auto& v : out) {
        v = 0;
    }
    for (const Symbol s : samples) {
        ++out[s - 1];
    }
    // (H h)_j = #in chi_j - #outside chi_j = 2 V_j - m.
    walsh_hadamard_transform(out);
    const auto md = static_cast<std::int64_t>(m);
    for (auto& v : out) {
        v = (v + md) / 2;
    }
}

std::vector<std::int64_t> subset_counts(const HadamardPlan& plan, const SampleBatch& batch,
                                        SubsetCountMethod method) {
    std::vector<std::int64_t> out(plan.k());
    subset_counts(plan, batch.symbols(), out, method);
    return out;
}

}  // namespace ulpt
