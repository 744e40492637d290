#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "ulpt/dist_core.hpp"
#include "ulpt/rng.hpp"

namespace ulpt {

/// P[Bin(m, 1/2 + alpha) >= (m+1)/2] - 1/2 for odd m, by exact pmf summation in log space.
/// Symmetric in construction, so alpha = 0 gives exactly 0.
double exact_threshold_bias(std::size_t m, double alpha);

/// Bias left after binary randomized response: tanh(eps/2) * beta.
double exact_rr_bias(double beta, double epsilon);

enum class Allocation { Fixed, Multinomial };

const char* to_string(Allocation a) noexcept;

/// Closed-form E[Z] as stated for the two testers:
/// Fixed gives ((n-1)/n) ||mu||^2, Multinomial gives ((n-1)/(2n) + sigma^2/(2n^2)) ||mu||^2
/// with sigma^2 = n (1 - 1/d).
double exact_mean_Z(std::span<const double> mu, std::int64_t n, Allocation allocation);

/// Closed-form variance bounds as stated:
/// Fixed: 2d/n^2 + 4(n-1)||mu||^2/n^2. Multinomial: d/n^2 + 2||mu||^4/n + 2||mu||^2/n.
double stated_variance_bound_Z(std::span<const double> mu, std::int64_t n, Allocation allocation);

struct ZMoments {
    double mean;
    double variance;
};

/// Exact mean and variance of Z = ||Xbar||^2 - d/n with Xbar_j = s_j / n, from
/// factorial moments of the allocation. Multinomial draws (n_1..n_d) ~ Mult(nd, 1/d).
ZMoments exact_z_moments(std::span<const double> mu, std::int64_t n, Allocation allocation);

struct MonteCarloMoments {
    double mean;
    double variance;
    double mean_se;      // standard error of the mean
    double variance_se;  // standard error of the sample variance (from the fourth central moment)
    std::size_t trials;
};

/// Simulates Z for the given allocation `trials` times using substreams of `seed`.
MonteCarloMoments monte_carlo_z_moments(std::span<const double> mu, std::int64_t n, Allocation allocation,
                                        std::size_t trials, std::uint64_t seed, unsigned threads = 1);

/// Row-stochastic k x 2^b matrix: row x is the message distribution of a client holding symbol x.
class StochasticMatrix {
public:
    StochasticMatrix(std::size_t rows, unsigned bits, std::vector<double> entries);
    /// Rows drawn uniformly from the simplex.
    static StochasticMatrix random(std::size_t rows, unsigned bits, Rng& rng);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    unsigned bits() const noexcept { return bits_; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return entries_[r * cols_ + c]; }

    /// W^T q, the message distribution induced by q.
    std::vector<double> push_forward(std::span<const double> q) const;

private:
    std::size_t rows_;
    std::size_t cols_;
    unsigned bits_;
    std::vector<double> entries_;
};

struct WitnessReport {
    DiscreteDistribution p;
    double tv;        // tv(p, U)
    double residual;  // max |W^T p - W^T U|
};

/// A distribution at TV distance exactly 1/k from uniform that W cannot tell apart from it.
/// Requires 2^b < k. Throws InternalError when the verification residual exceeds 1e-10.
WitnessReport lower_bound_witness(const StochasticMatrix& w);

struct SweepPoint {
    std::size_t m;
    double alpha;
    double beta;
    double ratio;  // beta / min(sqrt(m) alpha, 1)
};

struct SweepReport {
    std::vector<SweepPoint> points;
    SweepPoint worst;
    bool zero_bias_exact;  // beta(m, 0) == 0 for every m on the grid
};

/// The default grids: odd m in 1..201 and alpha = i/100 for i = 1..50.
std::vector<std::size_t> default_sweep_m_grid();
std::vector<double> default_sweep_alpha_grid();

SweepReport lemma_constant_sweep(std::span<const std::size_t> m_grid, std::span<const double> alpha_grid);

/// CSV with header m,alpha,beta,ratio.
void write_sweep_csv(const SweepReport& report, std::ostream& out);

}  // namespace ulpt
