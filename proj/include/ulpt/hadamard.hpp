#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ulpt/dist_core.hpp"

namespace ulpt {

/// Implicit Sylvester Hadamard matrix of order k = 2^t.
///
/// Entry H(r, j) for 1-based row r and column j is +1 iff
/// popcount((r-1) & (j-1)) is even. Column j defines the monitored subset
/// chi_j = { r : H(r, j) = +1 }; column 1 is the all-ones column and is
/// never used as a protocol group. Nothing of size k*k is materialized.
class HadamardPlan {
public:
    explicit HadamardPlan(std::size_t k);

    std::size_t k() const noexcept { return k_; }
    unsigned log2k() const noexcept { return t_; }

    /// Number of protocol groups (columns 2..k).
    std::size_t groups() const noexcept { return k_ - 1; }

    bool contains(Symbol r, std::size_t column) const noexcept {
        return (__builtin_popcountll(static_cast<std::uint64_t>(r - 1) & (column - 1)) & 1U) == 0;
    }

    std::vector<Symbol> members(std::size_t column) const;

private:
    std::size_t k_;
    unsigned t_;
};

/// Checked membership test r in chi_j.
bool chi_membership(const HadamardPlan& plan, Symbol r, std::size_t column);

/// delta_j = p(chi_j) - 1/2 for j >= 2; entry for column 1 is stored as 0.
struct GroupBiasVector {
    std::vector<double> biases;  // index j-1

    double operator[](std::size_t column) const { return biases.at(column - 1); }
    /// sum_{j>=2} delta_j^2
    double energy() const noexcept;
};

GroupBiasVector group_biases(const HadamardPlan& plan, const DiscreteDistribution& p);

struct NormPreservation {
    double lhs;          // sum_{j=1}^{k} (p(chi_j) - U(chi_j))^2
    double rhs;          // (k/4) * ||p - U||_2^2
    double bias_energy;  // sum_{j>=2} delta_j^2
    double tv_squared;   // tv(p, U)^2
};

/// Evaluates both sides of the Hadamard norm identity by direct enumeration.
NormPreservation norm_preservation_check(const HadamardPlan& plan, const DiscreteDistribution& p);

/// In-place unnormalized Walsh-Hadamard transform in Sylvester order.
/// After the call, out[j-1] = sum_r H(r, j) * in[r-1].
void walsh_hadamard_transform(std::span<std::int64_t> values) noexcept;

enum class SubsetCountMethod { Auto, PerSample, Transform };

/// V_j = number of samples of `batch` in chi_j, for every column j (index j-1).
///
/// PerSample does m*k parity tests; Transform histograms the batch and runs
/// one Walsh-Hadamard transform (k log k). Auto picks the cheaper one.
void subset_counts(const HadamardPlan& plan, std::span<const Symbol> samples, std::span<std::int64_t> out,
                   SubsetCountMethod method = SubsetCountMethod::Auto);

std::vector<std::int64_t> subset_counts(const HadamardPlan& plan, const SampleBatch& batch,
                                        SubsetCountMethod method = SubsetCountMethod::Auto);

}  // namespace ulpt
