#include "ulpt/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <tuple>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "ulpt/errors.hpp"
#include "ulpt/hadamard.hpp"
#include "ulpt/mean_test.hpp"
#include "ulpt/oracles.hpp"
#include "ulpt/parallel.hpp"

namespace ulpt {

namespace {

constexpr double kZ95 = 1.959963984540054;

DiscreteDistribution random_distribution(std::size_t k, Rng& rng) {
    std::vector<double> w(k);
    double s = 0.0;
    for (double& v : w) {
        v = -std::log1p(-rng.uniform01());
        s += v;
    }
    for (double& v : w) {
        v /= s;
    }
    // Division leaves the sum within a few ulps of 1, well inside the constructor's tolerance.
    return DiscreteDistribution(std::move(w));
}

SearchStep evaluate_n(const ExperimentConfig& config, std::size_t n, unsigned threads,
                      const ProtocolRegistry& registry) {
    SearchStep step;
    step.n = n;
    ProtocolParams params = config.params;
    params.n = n;
    const DiscreteDistribution null = DiscreteDistribution::uniform(params.k);
    const DiscreteDistribution alt = config.alternative.build(params.k);
    try {
        step.null_accept = estimate_power(registry, config.protocol, params, null, config.trials,
                                          derive_seed(config.params.seed, 0), threads);
        step.alt_reject = estimate_power(registry, config.protocol, params, alt, config.trials,
                                         derive_seed(config.params.seed, 1), threads)
                              .rejects();
    } catch (const InsufficientUsers&) {
        step.insufficient = true;
        return step;
    }
    const double type1 = 1.0 - step.null_accept.point;
    const double type2 = 1.0 - step.alt_reject.point;
    step.passed = type1 <= config.target_error + step.null_accept.half_width() &&
                  type2 <= config.target_error + step.alt_reject.half_width();
    return step;
}

void add_check(VerificationReport& r, std::string name, bool ok, std::string detail) {
    r.checks.push_back(VerificationCheck{std::move(name), ok, std::move(detail)});
}

struct MomentPoint {
    std::size_t d;
    std::int64_t n;
    std::string label;
    std::vector<double> mu;
};

}  // namespace



std::pair<double, double> wilson_interval(std::size_t successes, std::size_t trials) {
    if (trials == 0 || successes > trials) {
        throw InvalidArgument(fmt::format("Wilson interval needs 0 <= successes <= trials, trials > 0; got {}/{}", successes, trials));
    }
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = kZ95 * kZ95;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = kZ95 * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    double lo = std::max(0.0, centre - half);
    double hi = std::min(1.0, centre + half);
    // The closed form is exact at the endpoints; pin them against rounding.
    if (successes == 0) {
        lo = 0.0;
    }
    if (successes == trials) {
        hi = 1.0;
    }
    return {lo, hi};
}

PowerEstimate PowerEstimate::from_counts(std::size_t accepts, std::size_t trials) {
    PowerEstimate e;
    e.accepts = accepts;
    e.trials = trials;
    e.point = static_cast<double>(accepts) / static_cast<double>(trials);
    std::tie(e.low, e.high) = wilson_interval(accepts, trials);
    return e;
}

PowerEstimate PowerEstimate::rejects() const { return from_counts(trials - accepts, trials); }

ProtocolRegistry ProtocolRegistry::standard() {
    ProtocolRegistry r;
    r.add("asymmetric_hadamard", run_asymmetric_hadamard);
    r.add("large_m", run_large_m);
    r.add("combined", run_combined);
    r.add("public_coin", run_public_coin);
    r.add("baseline", run_baseline_repetition);
    return r;
}

void ProtocolRegistry::add(std::string name, ProtocolFn fn) { fns_[std::move(name)] = std::move(fn); }

const ProtocolFn& ProtocolRegistry::get(const std::string& name) const {
    const auto it = fns_.find(name);
    if (it == fns_.end()) {
        std::string known;
        for (const auto& [k, v] : fns_) {
            known += (known.empty() ? "" : ", ") + k;
        }
        throw ConfigError(fmt::format("unknown protocol '{}' (known: {})", name, known));
    }
    return it->second;
}

std::vector<std::string> ProtocolRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : fns_) {
        out.push_back(k);
    }
    return out;
}

std::uint64_t trial_seed(std::uint64_t master, std::size_t t) noexcept {
    return derive_seed(derive_seed(master, static_cast<std::uint64_t>(StreamDomain::Trial)), t);
}

PowerEstimate estimate_power(const ProtocolRegistry& registry, const std::string& protocol,
                             const ProtocolParams& params, const DiscreteDistribution& p, std::size_t trials,
                             std::uint64_t master_seed, unsigned threads) {
    if (trials == 0) {
        throw InvalidArgument("estimate_power needs at least one trial");
    }
    const ProtocolFn& fn = registry.get(protocol);
    std::vector<std::uint8_t> accepted(trials, 0);
    parallel_for(trials, threads, [&](std::size_t t) {
        ProtocolParams q = params;
        q.seed = trial_seed(master_seed, t);
        accepted[t] = fn(q, p).decision == Decision::Accept ? 1 : 0;
    });
    std::size_t accepts = 0;
    for (const std::uint8_t a : accepted) {
        accepts += a;
    }
    return PowerEstimate::from_counts(accepts, trials);
}

PowerEstimate estimate_power(const ExperimentConfig& config, unsigned threads, const ProtocolRegistry& registry) {
    const DiscreteDistribution p = config.instance.build(config.params.k);
    return estimate_power(registry, config.protocol, config.params, p, config.trials, config.params.seed, threads);
}

SearchResult search_min_n(const ExperimentConfig& config, unsigned threads, const ProtocolRegistry& registry) {
    (void)registry.get(config.protocol);
    SearchResult result;
    const SearchRange& range = config.search;
    std::size_t lo = 0;  // largest failing n seen (0: none)
    std::size_t hi = 0;  // smallest passing n seen
    std::size_t n = range.n_min;
    while (true) {
        result.trace.push_back(evaluate_n(config, n, threads, registry));
        if (result.trace.back().passed) {
            hi = n;
            break;
        }
        lo = n;
        if (n >= range.n_max) {
            return result;
        }
        n = (n > range.n_max / 2) ? range.n_max : 2 * n;
    }
    while (lo != 0 && hi - lo > std::max<double>(1.0, range.rel_tol * static_cast<double>(hi))) {
        const std::size_t mid = lo + (hi - lo) / 2;
        result.trace.push_back(evaluate_n(config, mid, threads, registry));
        if (result.trace.back().passed) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    result.n = hi;
    return result;
}

std::string format_trace(const std::vector<SearchStep>& trace) {
    std::string out;
    for (const SearchStep& s : trace) {
        if (s.insufficient) {
            out += fmt::format("n={} insufficient users\n", s.n);
        } else {
            out += fmt::format("n={} null_accept={:.4f} alt_reject={:.4f} {}\n", s.n, s.null_accept.point,
                               s.alt_reject.point, s.passed ? "pass" : "fail");
        }
    }
    return out;
}

std::size_t find_min_n(const ExperimentConfig& config, unsigned threads, const ProtocolRegistry& registry) {
    SearchResult r = search_min_n(config, threads, registry);
    if (!r.n) {
        throw NotFound(fmt::format("no n in [{}, {}] meets target error {}", config.search.n_min,
                                   config.search.n_max, config.target_error),
                       format_trace(r.trace));
    }
    return *r.n;
}

std::vector<ScalingRow> run_scaling(const ExperimentConfig& config, unsigned threads, const ProtocolRegistry& registry) {
    std::vector<ScalingRow> rows;
    for (const std::string& protocol : config.grid.protocols) {
        for (const std::size_t m : config.grid.m) {
            ExperimentConfig c = config;
            c.protocol = protocol;
            c.params.m = m;
            ScalingRow row;
            row.protocol = protocol;
            row.k = c.params.k;
            row.m = m;
            row.eps = format_epsilon(c.params.priv);
            row.delta = c.params.delta;
            row.seed = c.params.seed;
            const SearchResult r = search_min_n(c, threads, registry);
            if (r.n) {
                row.n_required = r.n;
                for (const SearchStep& s : r.trace) {
                    if (s.n == *r.n && s.passed) {
                        const PowerEstimate& weak =
                            s.null_accept.point <= s.alt_reject.point ? s.null_accept : s.alt_reject;
                        row.ci_low = weak.low;
                        row.ci_high = weak.high;
                    }
                }
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

void write_scaling_csv(const std::vector<ScalingRow>& rows, std::ostream& out) {
    out << "protocol,k,m,eps,delta,n_required,ci_low,ci_high,seed\n";
    for (const ScalingRow& r : rows) {
        if (r.n_required) {
            out << fmt::format("{},{},{},{},{},{},{:.6f},{:.6f},{}\n", r.protocol, r.k, r.m, r.eps, r.delta,
                               *r.n_required, r.ci_low, r.ci_high, r.seed);
        } else {
            out << fmt::format("{},{},{},{},{},NA,NA,NA,{}\n", r.protocol, r.k, r.m, r.eps, r.delta, r.seed);
        }
    }
}

void emit_scaling_csv(const ExperimentConfig& config, const std::string& path, unsigned threads,
                      const ProtocolRegistry& registry) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path));
    }
    write_scaling_csv(run_scaling(config, threads, registry), out);
    out.flush();
    if (!out) {
        throw IoError(fmt::format("error writing '{}'", path));
    }
}

bool VerificationReport::all_passed() const noexcept {
    return std::all_of(checks.begin(), checks.end(), [](const VerificationCheck& c) { return c.passed; });
}

namespace {
std::vector<MomentPoint> moment_grid() {
    std::vector<MomentPoint> grid;
    for (const std::size_t d : {4u, 64u}) {
        for (const std::int64_t n : {10, 100}) {
            grid.push_back({d, n, "mu=0", std::vector<double>(d, 0.0)});
            std::vector<double> spike(d, 0.0);
            spike[0] = 0.4;
            grid.push_back({d, n, "mu=0.4e1", spike});
            grid.push_back({d, n, "dense|mu|^2=1", std::vector<double>(d, 1.0 / std::sqrt(static_cast<double>(d)))});
        }
    }
    return grid;
}

}  // namespace

VerificationReport run_verification_suite(const VerificationOptions& opt) {
    VerificationReport report;

    {
        const auto ms = default_sweep_m_grid();
        const auto as = default_sweep_alpha_grid();
        const SweepReport s = lemma_constant_sweep(ms, as);
        add_check(report, "threshold-bias sweep", s.zero_bias_exact && s.worst.ratio >= 0.01,
                  fmt::format("{} points, min ratio {:.6f} at m={}, alpha={:.2f}; beta(m,0)==0 for all m: {}",
                              s.points.size(), s.worst.ratio, s.worst.m, s.worst.alpha, s.zero_bias_exact ? "yes" : "no"));
    }

    {
        Rng rng = Rng::stream(opt.seed, StreamDomain::Instance, 1);
        double worst_gap = 0.0;
        bool energy_ok = true;
        std::size_t count = 0;
        for (std::size_t k = 2; k <= 256; k *= 2) {
            const HadamardPlan plan(k);
            for (int i = 0; i < 100; ++i) {
                const NormPreservation np = norm_preservation_check(plan, random_distribution(k, rng));
                worst_gap = std::max(worst_gap, std::fabs(np.lhs - np.rhs));
                energy_ok = energy_ok && np.bias_energy >= np.tv_squared - 1e-12;
                ++count;
            }
        }
        add_check(report, "hadamard norm identity", worst_gap <= 1e-12 && energy_ok,
                  fmt::format("{} distributions, max |lhs-rhs| {:.3e}, bias energy >= tv^2: {}", count, worst_gap,
                              energy_ok ? "yes" : "no"));
    }

    {
        const auto grid = moment_grid();
        bool a1 = true, a2 = true, a3 = true, a4 = true;
        std::size_t idx = 0;
        for (const MomentPoint& pt : grid) {
            for (const Allocation alloc : {Allocation::Fixed, Allocation::Multinomial}) {
                const MonteCarloMoments mc = monte_carlo_z_moments(
                    pt.mu, pt.n, alloc, opt.moment_trials, derive_seed(opt.seed, 100 + idx++), opt.threads);
                const ZMoments exact = exact_z_moments(pt.mu, pt.n, alloc);
                const double stated_mean = exact_mean_Z(pt.mu, pt.n, alloc);
                const double stated_var = stated_variance_bound_Z(pt.mu, pt.n, alloc);
                if (alloc == Allocation::Fixed) {
                    a1 = a1 && std::fabs(mc.mean - stated_mean) <= 5.0 * mc.mean_se;
                    a2 = a2 && mc.variance <= stated_var + 5.0 * mc.variance_se;
                } else {
                    a3 = a3 && std::fabs(mc.mean - exact.mean) <= 5.0 * mc.mean_se;
                    a4 = a4 && std::fabs(mc.variance - exact.variance) <= 5.0 * mc.variance_se;
                    report.notes.push_back(fmt::format(
                        "multinomial d={} n={} {}: MC mean {:.6f} (se {:.2e}), exact {:.6f}, stated form {:.6f}; "
                        "MC var {:.6e}, exact {:.6e}, stated bound {:.6e}",
                        pt.d, pt.n, pt.label, mc.mean, mc.mean_se, exact.mean, stated_mean, mc.variance,
                        exact.variance, stated_var));
                }
            }
        }
        const std::string trials = fmt::format("{} points x {} trials", grid.size(), opt.moment_trials);
        add_check(report, "fixed allocation mean", a1, trials + ", |MC - ((n-1)/n)|mu|^2| <= 5 SE");
        add_check(report, "fixed allocation variance bound", a2, trials + ", MC var <= 2d/n^2 + 4(n-1)|mu|^2/n^2 + 5 SE");
        add_check(report, "multinomial allocation mean", a3, trials + ", |MC - exact factorial-moment mean| <= 5 SE");
        add_check(report, "multinomial allocation variance", a4, trials + ", |MC - exact factorial-moment variance| <= 5 SE");
    }

    {
        bool ok = true;
        std::string detail;
        for (const double eps : {0.1, std::log(3.0), 2.0}) {
            const double ratio = max_likelihood_ratio(rr_transition_matrix(PrivacyParams::pure(eps)));
            const double target = std::exp(eps);
            const bool hit = std::fabs(ratio - target) <= 4.0 * std::numeric_limits<double>::epsilon() * target;
            ok = ok && hit;
            detail += fmt::format("{}eps={:.6f}: ratio {:.17g} vs e^eps {:.17g}", detail.empty() ? "" : "; ", eps, ratio, target);
        }
        add_check(report, "randomized response privacy", ok, detail);
    }

    {
        bool ok = true;
        double worst_residual = 0.0;
        double worst_tv_gap = 0.0;
        std::size_t idx = 0;
        for (const auto& [k, b] : {std::pair<std::size_t, unsigned>{8, 2}, {16, 3}, {64, 5}}) {
            for (int i = 0; i < 100; ++i) {
                Rng rng = Rng::stream(opt.seed, StreamDomain::Instance, 1000 + idx++);
                try {
                    const WitnessReport w = lower_bound_witness(StochasticMatrix::random(k, b, rng));
                    worst_residual = std::max(worst_residual, w.residual);
                    worst_tv_gap = std::max(worst_tv_gap, std::fabs(w.tv - 1.0 / static_cast<double>(k)));
                } catch (const InternalError&) {
                    ok = false;
                }
            }
        }
        ok = ok && worst_residual <= 1e-10 && worst_tv_gap <= 1e-12;
        add_check(report, "lower-bound witness", ok,
                  fmt::format("300 random W, max residual {:.3e}, max |tv - 1/k| {:.3e}", worst_residual, worst_tv_gap));
    }

    {
        ProtocolParams params;
        params.k = 64;
        params.m = 401;
        params.n = 10;
        params.constants = opt.constants;
        const double extra = 3.0 * std::sqrt(std::log(20.0 * 10 * 64) / 401.0);
        params.delta = std::min(1.0, extra);
        const ProtocolRegistry reg = ProtocolRegistry::standard();
        const PowerEstimate null = estimate_power(reg, "large_m", params, DiscreteDistribution::uniform(64),
                                                  opt.power_trials, derive_seed(opt.seed, 7), opt.threads);
        const PowerEstimate alt = estimate_power(reg, "large_m", params, InstanceSpec::heavy_column(2, extra).build(64),
                                                 opt.power_trials, derive_seed(opt.seed, 8), opt.threads)
                                      .rejects();
        add_check(report, "large-m accept power", null.point >= 0.9 - null.half_width(),
                  fmt::format("uniform, k=64 m=401 n=10 T-scale={}: accept {:.4f} [{:.4f}, {:.4f}]", params.constants.t_scale,
                              null.point, null.low, null.high));
        add_check(report, "large-m reject power", alt.point >= 0.9 - alt.half_width(),
                  fmt::format("heavy chi_2 extra={:.4f}, T-scale={}: reject {:.4f} [{:.4f}, {:.4f}]", extra,
                              params.constants.t_scale, alt.point, alt.low, alt.high));
    }
    return report;
}

void write_report(const VerificationReport& report, std::ostream& out) {
    for (const VerificationCheck& c : report.checks) {
        out << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    }
    for (const std::string& n : report.notes) {
        out << "note " << n << '\n';
    }
    const auto passed = std::count_if(report.checks.begin(), report.checks.end(), [](const auto& c) { return c.passed; });
    out << fmt::format("{}/{} checks passed\n", passed, report.checks.size());
}

CalibrationResult calibrate_symmetric_mean_c(double lo, double hi, double tol, std::size_t trials,
                                             std::uint64_t seed, unsigned threads) {
    if (!(lo > 0.0 && hi > lo && tol > 0.0) || trials == 0) {
        throw InvalidArgument("calibration needs 0 < lo < hi, tol > 0 and trials > 0");
    }
    CalibrationResult result;
    auto meets = [&](double c) {
        bool ok = true;
        std::size_t idx = 0;
        for (const std::size_t d : {15u, 63u}) {
            for (const double gamma : {0.5, 1.0}) {
                const std::int64_t n = mean_test_sample_size(c, d, gamma);
                const std::vector<double> zero(d, 0.0);
                const std::vector<double> far(d, gamma / std::sqrt(static_cast<double>(d)));
                std::vector<std::uint8_t> acc0(trials), rej1(trials);
                const std::uint64_t s = derive_seed(seed, idx++);
                parallel_for(trials, threads, [&](std::size_t t) {
                    Rng r0 = Rng::stream(s, StreamDomain::Trial, 2 * t);
                    Rng r1 = Rng::stream(s, StreamDomain::Trial, 2 * t + 1);
                    acc0[t] = symmetric_mean_test(simulate_rademacher_counts(zero, n, true, r0), gamma).verdict == Decision::Accept;
                    rej1[t] = symmetric_mean_test(simulate_rademacher_counts(far, n, true, r1), gamma).verdict == Decision::Reject;
                });
                const double a = static_cast<double>(std::count(acc0.begin(), acc0.end(), 1)) / static_cast<double>(trials);
                const double b = static_cast<double>(std::count(rej1.begin(), rej1.end(), 1)) / static_cast<double>(trials);
                result.trace.push_back(fmt::format("C={:.4f} d={} gamma={} n={}: accept(mu=0) {:.4f}, reject(|mu|=gamma) {:.4f}",
                                                   c, d, gamma, n, a, b));
                ok = ok && a >= 2.0 / 3.0 && b >= 2.0 / 3.0;
            }
        }
        return ok;
    };
    if (!meets(hi)) {
        throw NotFound(fmt::format("C = {} does not meet the guarantees on the reference grid", hi),
                       fmt::format("{}", fmt::join(result.trace, "\n")));
    }
    while (hi - lo > tol) {
        const double mid = (lo + hi) / 2.0;
        (meets(mid) ? hi : lo) = mid;
    }
    result.constant = hi;
    return result;
}

}  // namespace ulpt
