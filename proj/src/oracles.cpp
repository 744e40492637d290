#include "ulpt/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include <fmt/format.h>

#include "ulpt/errors.hpp"
#include "ulpt/mean_test.hpp"
#include "ulpt/parallel.hpp"

namespace ulpt {

namespace {

// Neumaier compensated sum.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x) noexcept {
        const double t = sum + x;
        if (std::fabs(sum) >= std::fabs(x)) {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    double value() const noexcept { return sum + carry; }
};

double squared_norm(std::span<const double> mu) {
    double s = 0.0;
    for (const double v : mu) {
        s += v * v;
    }
    return s;
}

void check_moment_args(std::span<const double> mu, std::int64_t n) {
    if (n < 2) {
        throw InvalidArgument(fmt::format("moment oracle needs n >= 2, got {}", n));
    }
    if (mu.size() < 2) {
        throw InvalidArgument("moment oracle needs d >= 2");
    }
    for (const double v : mu) {
        if (!(std::fabs(v) <= 1.0)) {
            throw InvalidArgument(fmt::format("mean coordinate {} outside [-1, 1]", v));
        }
    }
}

// a-th falling factorial of x.
long double falling(long double x, int a) {
    long double out = 1.0L;
    for (int i = 0; i < a; ++i) {
        out *= (x - i);
    }
    return out;
}

}  // namespace

double exact_threshold_bias(std::size_t m, double alpha) {
    if (m == 0 || m % 2 == 0) {
        throw InvalidArgument(fmt::format("threshold bias needs odd m, got {}", m));
    }
    if (!(std::fabs(alpha) <= 0.5)) {
        throw InvalidArgument(fmt::format("alpha must lie in [-1/2, 1/2], got {}", alpha));
    }
    const double q = 0.5 + alpha;
    if (q >= 1.0) {
        return 0.5;
    }
    if (q <= 0.0) {
        return -0.5;
    }
    const double log_q = std::log(q);
    const double log_r = std::log1p(-q);
    const double md = static_cast<double>(m);
    const double lf_m = std::lgamma(md + 1.0);
    // Both halves use the same operand order for x and m-x, so at q = 1/2 the
    // two sums agree term by term and their difference is exactly zero.
    auto log_pmf = [&](std::size_t x) {
        const std::size_t lo = std::min(x, m - x);
        const std::size_t hi = m - lo;
        const double lchoose = lf_m - (std::lgamma(static_cast<double>(lo) + 1.0) +
                                       std::lgamma(static_cast<double>(hi) + 1.0));
        return lchoose + (static_cast<double>(x) * log_q + static_cast<double>(m - x) * log_r);
    };
    const std::size_t ell = (m + 1) / 2;
    CompensatedSum upper;
    CompensatedSum lower;
    for (std::size_t i = 0; i < ell; ++i) {
        upper.add(std::exp(log_pmf(ell + i)));
        lower.add(std::exp(log_pmf(ell - 1 - i)));
    }
    // Away from zero, read the bias off the light tail so it stays monotone
    // once the heavy tail rounds to 1.
    double beta = (upper.value() - lower.value()) / 2.0;
    if (alpha > 0.0) {
        beta = 0.5 - lower.value();
    } else if (alpha < 0.0) {
        beta = upper.value() - 0.5;
    }
    return std::clamp(beta, -0.5, 0.5);
}

double exact_rr_bias(double beta, double epsilon) {
    if (!(std::fabs(beta) <= 0.5)) {
        throw InvalidArgument(fmt::format("bias must lie in [-1/2, 1/2], got {}", beta));
    }
    if (!(epsilon > 0.0)) {
        throw InvalidArgument(fmt::format("epsilon must be positive, got {}", epsilon));
    }
    return std::tanh(epsilon / 2.0) * beta;
}

const char* to_string(Allocation a) noexcept {
    return a == Allocation::Fixed ? "fixed" : "multinomial";
}

double exact_mean_Z(std::span<const double> mu, std::int64_t n, Allocation allocation) {
    check_moment_args(mu, n);
    const double nn = static_cast<double>(n);
    const double norm2 = squared_norm(mu);
    if (allocation == Allocation::Fixed) {
        return (nn - 1.0) / nn * norm2;
    }
    const double sigma2 = nn * (1.0 - 1.0 / static_cast<double>(mu.size()));
    return ((nn - 1.0) / (2.0 * nn) + sigma2 / (2.0 * nn * nn)) * norm2;
}

double stated_variance_bound_Z(std::span<const double> mu, std::int64_t n, Allocation allocation) {
    check_moment_args(mu, n);
    const double nn = static_cast<double>(n);
    const double dd = static_cast<double>(mu.size());
    const double norm2 = squared_norm(mu);
    if (allocation == Allocation::Fixed) {
        return 2.0 * dd / (nn * nn) + 4.0 * (nn - 1.0) / (nn * nn) * norm2;
    }
    return dd / (nn * nn) + 2.0 * norm2 * norm2 / nn + 2.0 * norm2 / nn;
}

ZMoments exact_z_moments(std::span<const double> mu, std::int64_t n, Allocation allocation) {
    check_moment_args(mu, n);
    const std::size_t d = mu.size();
    const long double nn = static_cast<long double>(n);
    // E[s^2 | c] = c + c^(2) mu^2
    // E[s^4 | c] = c + 3c^(2) + (4c^(2) + 6c^(3)) mu^2 + c^(4) mu^4
    long double m2 = 0.0L;
    long double m4 = 0.0L;
    for (const double v : mu) {
        const long double v2 = static_cast<long double>(v) * v;
        m2 += v2;
        m4 += v2 * v2;
    }
    long double es = 0.0L;
    long double var_s = 0.0L;
    if (allocation == Allocation::Fixed) {
        const long double f1 = nn;
        const long double f2 = falling(nn, 2);
        const long double f3 = falling(nn, 3);
        const long double f4 = falling(nn, 4);
        for (const double v : mu) {
            const long double v2 = static_cast<long double>(v) * v;
            const long double a = f1 + f2 * v2;
            const long double b = f1 + 3 * f2 + (4 * f2 + 6 * f3) * v2 + f4 * v2 * v2;
            es += a;
            var_s += b - a * a;
        }
    } else {
        // (n_1..n_d) ~ Mult(N, 1/d): E[c_j^(a) c_l^(b)] = N^(a+b) / d^(a+b) for j != l,
        // E[c_j^(a)] = N^(a) / d^a.
        const long double total = nn * static_cast<long double>(d);
        const long double p = 1.0L / static_cast<long double>(d);
        long double f[5];
        for (int a = 0; a <= 4; ++a) {
            f[a] = falling(total, a) * std::pow(p, static_cast<long double>(a));
        }
        const long double dd = static_cast<long double>(d);
        es = dd * f[1] + f[2] * m2;
        const long double diag = dd * (f[1] + 3 * f[2]) + (4 * f[2] + 6 * f[3]) * m2 + f[4] * m4;
        const long double cross = dd * (dd - 1) * f[2] + 2 * (dd - 1) * m2 * f[3] + (m2 * m2 - m4) * f[4];
        var_s = diag + cross - es * es;
    }
    ZMoments out{};
    out.mean = static_cast<double>(es / (nn * nn) - static_cast<long double>(d) / nn);
    out.variance = static_cast<double>(var_s / (nn * nn * nn * nn));
    return out;
}

MonteCarloMoments monte_carlo_z_moments(std::span<const double> mu, std::int64_t n, Allocation allocation,
                                        std::size_t trials, std::uint64_t seed, unsigned threads) {
    check_moment_args(mu, n);
    if (trials < 2) {
        throw InvalidArgument("Monte Carlo moments need at least 2 trials");
    }
    const double nn = static_cast<double>(n);
    const double dd = static_cast<double>(mu.size());
    std::vector<double> z(trials);
    parallel_for(trials, threads, [&](std::size_t t) {
        Rng rng = Rng::stream(seed, StreamDomain::Trial, t);
        const CoordinateCounts counts =
            simulate_rademacher_counts(mu, n, allocation == Allocation::Multinomial, rng);
        std::int64_t energy = 0;
        for (const std::int64_t s : counts.sums) {
            energy += s * s;
        }
        z[t] = static_cast<double>(energy) / (nn * nn) - dd / nn;
    });
    // Serial reduction in trial order keeps the result independent of the worker count.
    const double tn = static_cast<double>(trials);
    long double sum = 0.0L;
    for (const double v : z) {
        sum += v;
    }
    const long double mean = sum / tn;
    long double c2 = 0.0L;
    long double c4 = 0.0L;
    for (const double v : z) {
        const long double e = v - mean;
        c2 += e * e;
        c4 += e * e * e * e;
    }
    MonteCarloMoments out{};
    out.trials = trials;
    out.mean = static_cast<double>(mean);
    out.variance = static_cast<double>(c2 / (tn - 1.0));
    out.mean_se = std::sqrt(out.variance / tn);
    const double central4 = static_cast<double>(c4 / tn);
    const double var_pop = static_cast<double>(c2 / tn);
    out.variance_se = std::sqrt(std::max(0.0, central4 - var_pop * var_pop) / tn);
    return out;
}

StochasticMatrix::StochasticMatrix(std::size_t rows, unsigned bits, std::vector<double> entries)
    : rows_(rows), cols_(std::size_t{1} << bits), bits_(bits), entries_(std::move(entries)) {
    if (rows == 0 || bits == 0 || bits >= 63) {
        throw InvalidArgument(fmt::format("stochastic matrix needs rows >= 1 and 1 <= b < 63, got {}, {}", rows, bits));
    }
    if (entries_.size() != rows_ * cols_) {
        throw InvalidArgument(fmt::format("stochastic matrix expects {} entries, got {}", rows_ * cols_, entries_.size()));
    }
    for (std::size_t r = 0; r < rows_; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols_; ++c) {
            const double v = entries_[r * cols_ + c];
            if (!(v >= 0.0) || !std::isfinite(v)) {
                throw InvalidArgument(fmt::format("entry ({}, {}) = {} is not a probability", r, c, v));
            }
            s += v;
        }
        if (std::fabs(s - 1.0) > 1e-12) {
            throw InvalidArgument(fmt::format("row {} sums to {}", r, s));
        }
    }
}

StochasticMatrix StochasticMatrix::random(std::size_t rows, unsigned bits, Rng& rng) {
    const std::size_t cols = std::size_t{1} << bits;
    std::vector<double> entries(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            // Exponential spacings give a uniform point on the simplex.
            const double e = -std::log1p(-rng.uniform01());
            entries[r * cols + c] = e;
            s += e;
        }
        for (std::size_t c = 0; c < cols; ++c) {
            entries[r * cols + c] /= s;
        }
    }
    return StochasticMatrix(rows, bits, std::move(entries));
}

std::vector<double> StochasticMatrix::push_forward(std::span<const double> q) const {
    if (q.size() != rows_) {
        throw InvalidArgument(fmt::format("push_forward expects {} masses, got {}", rows_, q.size()));
    }
    std::vector<double> out(cols_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
            out[c] += entries_[r * cols_ + c] * q[r];
        }
    }
    return out;
}

WitnessReport lower_bound_witness(const StochasticMatrix& w) {
    const std::size_t k = w.rows();
    const std::size_t rows = w.cols();  // equations: one per message
    if (rows >= k) {
        throw InvalidArgument(fmt::format("witness needs 2^b < k, got 2^b = {} and k = {}", rows, k));
    }
    // Reduced row echelon form of W^T (rows x k) with partial pivoting.
    std::vector<double> a(rows * k);
    for (std::size_t c = 0; c < rows; ++c) {
        for (std::size_t x = 0; x < k; ++x) {
            a[c * k + x] = w(x, c);
        }
    }
    std::vector<std::size_t> pivot_col;
    std::vector<bool> is_pivot(k, false);
    std::size_t r = 0;
    for (std::size_t col = 0; col < k && r < rows; ++col) {
        std::size_t best = r;
        for (std::size_t i = r + 1; i < rows; ++i) {
            if (std::fabs(a[i * k + col]) > std::fabs(a[best * k + col])) {
                best = i;
            }
        }
        if (std::fabs(a[best * k + col]) < 1e-13) {
            continue;
        }
        if (best != r) {
            for (std::size_t x = 0; x < k; ++x) {
                std::swap(a[r * k + x], a[best * k + x]);
            }
        }
        const double piv = a[r * k + col];
        for (std::size_t x = 0; x < k; ++x) {
            a[r * k + x] /= piv;
        }
        for (std::size_t i = 0; i < rows; ++i) {
            if (i == r) {
                continue;
            }
            const double f = a[i * k + col];
            if (f != 0.0) {
                for (std::size_t x = 0; x < k; ++x) {
                    a[i * k + x] -= f * a[r * k + x];
                }
            }
        }
        pivot_col.push_back(col);
        is_pivot[col] = true;
        ++r;
    }
    // First free column gives a kernel vector: e_free = 1, e_pivot = -a[row, free].
    std::size_t free_col = k;
    for (std::size_t x = 0; x < k; ++x) {
        if (!is_pivot[x]) {
            free_col = x;
            break;
        }
    }
    if (free_col == k) {
        throw InternalError("elimination found no free column");
    }
    std::vector<double> e(k, 0.0);
    e[free_col] = 1.0;
    for (std::size_t i = 0; i < pivot_col.size(); ++i) {
        e[pivot_col[i]] = -a[i * k + free_col];
    }
    // Row-stochasticity forces sum(e) = 0; enforce it exactly by scaling the
    // positive and negative parts to l1 mass 1/k each.
    double pos = 0.0;
    double neg = 0.0;
    for (const double v : e) {
        (v > 0.0 ? pos : neg) += std::fabs(v);
    }
    if (!(pos > 0.0) || !(neg > 0.0)) {
        throw InternalError("kernel vector is not balanced; W is numerically rank-deficient");
    }
    const double kd = static_cast<double>(k);
    std::vector<double> probs(k);
    for (std::size_t x = 0; x < k; ++x) {
        const double scaled = e[x] > 0.0 ? e[x] / (pos * kd) : e[x] / (neg * kd);
        probs[x] = std::max(0.0, 1.0 / kd + scaled);
    }
    // Renormalize away rounding so the distribution constructor accepts it.
    const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    for (double& v : probs) {
        v /= total;
    }
    DiscreteDistribution p(std::move(probs));
    const DiscreteDistribution u = DiscreteDistribution::uniform(k);
    const std::vector<double> wp = w.push_forward(p.probs());
    const std::vector<double> wu = w.push_forward(u.probs());
    double residual = 0.0;
    for (std::size_t c = 0; c < rows; ++c) {
        residual = std::max(residual, std::fabs(wp[c] - wu[c]));
    }
    const double tv = tv_distance(p, u);
    if (residual > 1e-10 || std::fabs(tv - 1.0 / kd) > 1e-10) {
        throw InternalError(fmt::format("witness verification failed: residual {:.3e}, tv {:.17g}", residual, tv));
    }
    return WitnessReport{std::move(p), tv, residual};
}

std::vector<std::size_t> default_sweep_m_grid() {
    std::vector<std::size_t> out;
    for (std::size_t m = 1; m <= 201; m += 2) {
        out.push_back(m);
    }
    return out;
}

std::vector<double> default_sweep_alpha_grid() {
    std::vector<double> out;
    for (int i = 1; i <= 50; ++i) {
        out.push_back(i / 100.0);
    }
    return out;
}

SweepReport lemma_constant_sweep(std::span<const std::size_t> m_grid, std::span<const double> alpha_grid) {
    if (m_grid.empty() || alpha_grid.empty()) {
        throw InvalidArgument("sweep grids must be non-empty");
    }
    SweepReport report{};
    report.zero_bias_exact = true;
    report.worst.ratio = std::numeric_limits<double>::infinity();
    for (const std::size_t m : m_grid) {
        if (exact_threshold_bias(m, 0.0) != 0.0) {
            report.zero_bias_exact = false;
        }
        for (const double alpha : alpha_grid) {
            if (!(alpha > 0.0)) {
                throw InvalidArgument(fmt::format("sweep alpha must be positive, got {}", alpha));
            }
            const double beta = exact_threshold_bias(m, alpha);
            const double scale = std::min(std::sqrt(static_cast<double>(m)) * alpha, 1.0);
            const SweepPoint point{m, alpha, beta, beta / scale};
            report.points.push_back(point);
            if (point.ratio < report.worst.ratio) {
                report.worst = point;
            }
        }
    }
    return report;
}

void write_sweep_csv(const SweepReport& report, std::ostream& out) {
    out << "m,alpha,beta,ratio\n";
    for (const SweepPoint& p : report.points) {
        out << fmt::format("{},{:.2f},{:.17g},{:.17g}\n", p.m, p.alpha, p.beta, p.ratio);
    }
}

}  // namespace ulpt
