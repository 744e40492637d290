// Acceptance runner: `acceptance --criterion N` prints one line per sub-check
// and a final PASS/FAIL line for the criterion. Exit status 0 iff it passed.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <fmt/ranges.h>

#include "ulpt/config.hpp"
#include "ulpt/errors.hpp"
#include "ulpt/hadamard.hpp"
#include "ulpt/harness.hpp"
#include "ulpt/oracles.hpp"
#include "ulpt/protocols.hpp"
#include "ulpt/randomizers.hpp"

using namespace ulpt;

namespace {

constexpr std::uint64_t kSeed = 20240601;
constexpr std::size_t kPowerTrials = 300;

class Report {
public:
    void check(bool ok, const std::string& what) {
        fmt::print("  [{}] {}\n", ok ? " ok " : "FAIL", what);
        all_ &= ok;
    }
    void note(const std::string& what) { fmt::print("  [note] {}\n", what); }
    bool passed() const { return all_; }

private:
    bool all_ = true;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::int64_t ulp_distance(double a, double b) {
    const auto ia = std::bit_cast<std::int64_t>(a);
    const auto ib = std::bit_cast<std::int64_t>(b);
    return ia > ib ? ia - ib : ib - ia;
}

DiscreteDistribution random_distribution(std::size_t k, Rng& rng) {
    std::vector<double> w(k);
    double total = 0.0;
    for (double& x : w) {
        x = -std::log(1.0 - rng.uniform01());
        total += x;
    }
    for (double& x : w) x /= total;
    return DiscreteDistribution(std::move(w));
}

// 1: threshold-bit bias constant over the full grid.
bool criterion_sweep(Report& r) {
    const auto t0 = Clock::now();
    const auto ms = default_sweep_m_grid();
    const auto alphas = default_sweep_alpha_grid();
    const SweepReport s = lemma_constant_sweep(ms, alphas);
    const double elapsed = seconds_since(t0);
    r.check(s.points.size() == 101 * 50, fmt::format("{} grid points (odd m <= 201, 50 alphas)", s.points.size()));
    r.check(s.worst.ratio >= 0.01, fmt::format("min beta / min(sqrt(m) alpha, 1) = {:.6f} at m={}, alpha={:.2f} (need >= 0.01)",
                                               s.worst.ratio, s.worst.m, s.worst.alpha));
    r.check(s.zero_bias_exact, "beta(m, 0) == 0 exactly for every m on the grid");
    r.check(elapsed < 10.0, fmt::format("runtime {:.3f} s (limit 10 s)", elapsed));
    return r.passed();
}

// 2: Hadamard norm identity and bias energy bound.
bool criterion_norm_identity(Report& r) {
    const auto t0 = Clock::now();
    double worst = 0.0;
    double worst_gap = 0.0;
    std::size_t count = 0;
    bool energy_ok = true;
    for (std::size_t k = 2; k <= 256; k *= 2) {
        const HadamardPlan plan(k);
        Rng rng = Rng::stream(kSeed, StreamDomain::Instance, k);
        for (int i = 0; i < 100; ++i) {
            const auto p = random_distribution(k, rng);
            const NormPreservation np = norm_preservation_check(plan, p);
            worst = std::max(worst, std::fabs(np.lhs - np.rhs));
            worst_gap = std::min(worst_gap, np.bias_energy - np.tv_squared);
            // Equality holds at k = 2, so allow rounding at the identity's tolerance.
            energy_ok &= np.bias_energy >= np.tv_squared - 1e-12;
            ++count;
        }
    }
    const double elapsed = seconds_since(t0);
    r.check(worst <= 1e-12, fmt::format("{} distributions, k = 2..256: max |lhs - rhs| = {:.3e} (limit 1e-12)", count, worst));
    r.check(energy_ok, fmt::format("sum_j>=2 delta_j^2 >= tv^2 - 1e-12 everywhere (smallest margin {:.3e})", worst_gap));
    r.check(elapsed < 30.0, fmt::format("runtime {:.3f} s (limit 30 s)", elapsed));
    return r.passed();
}

// 3: moments of Z against the closed forms.
bool criterion_moments(Report& r) {
    const auto t0 = Clock::now();
    constexpr std::size_t trials = 100000;
    struct Point {
        std::size_t d;
        std::int64_t n;
        std::string label;
        std::vector<double> mu;
    };
    std::vector<Point> grid;
    for (const std::size_t d : {4u, 64u}) {
        for (const std::int64_t n : {10, 100}) {
            std::vector<double> zero(d, 0.0);
            std::vector<double> spike(d, 0.0);
            spike[0] = 0.4;
            std::vector<double> dense(d, 1.0 / std::sqrt(static_cast<double>(d)));
            grid.push_back({d, n, "mu=0", zero});
            grid.push_back({d, n, "mu=0.4e1", spike});
            grid.push_back({d, n, "dense |mu|^2=1", dense});
        }
    }
    {
        const std::vector<double> mu{std::sqrt(0.5), std::sqrt(0.5)};
        const double stated = exact_mean_Z(mu, 4, Allocation::Multinomial);
        r.check(std::fabs(stated - 0.4375) <= 1e-15,
                fmt::format("stated multinomial mean at (n=4, d=2, |mu|^2=1) = {:.17g} (expected 0.4375)", stated));
        grid.push_back({2, 4, "|mu|^2=1", mu});
    }
    std::uint64_t stream = 0;
    for (const Allocation a : {Allocation::Fixed, Allocation::Multinomial}) {
        std::size_t mean_ok = 0, var_ok = 0;
        for (const Point& pt : grid) {
            const auto mc = monte_carlo_z_moments(pt.mu, pt.n, a, trials, derive_seed(kSeed, ++stream));
            const double mean = exact_mean_Z(pt.mu, pt.n, a);
            const double bound = stated_variance_bound_Z(pt.mu, pt.n, a);
            const ZMoments exact = exact_z_moments(pt.mu, pt.n, a);
            const bool m_ok = std::fabs(mc.mean - mean) <= 5.0 * mc.mean_se;
            const bool v_ok = mc.variance <= bound + 5.0 * mc.variance_se;
            mean_ok += m_ok;
            var_ok += v_ok;
            const std::string where = fmt::format("{} d={} n={} {}", to_string(a), pt.d, pt.n, pt.label);
            if (!m_ok) {
                r.note(fmt::format("{}: MC mean {:.6f} (se {:.2e}) vs stated {:.6f}, exact {:.6f}", where, mc.mean,
                                   mc.mean_se, mean, exact.mean));
            }
            if (!v_ok) {
                r.note(fmt::format("{}: MC var {:.6e} (se {:.2e}) vs stated bound {:.6e}, exact {:.6e}", where,
                                   mc.variance, mc.variance_se, bound, exact.variance));
            }
        }
        r.check(mean_ok == grid.size(), fmt::format("{} mean: {}/{} points within 5 SE of the stated form", to_string(a),
                                                    mean_ok, grid.size()));
        r.check(var_ok == grid.size(), fmt::format("{} variance: {}/{} points at or below the stated bound + 5 SE",
                                                   to_string(a), var_ok, grid.size()));
    }
    const double elapsed = seconds_since(t0);
    r.check(elapsed < 300.0, fmt::format("runtime {:.1f} s (limit 300 s)", elapsed));
    return r.passed();
}

// 4: randomized response privacy and symmetric-mode budget.
bool criterion_privacy(Report& r) {
    for (const double eps : {0.1, std::log(3.0), 2.0}) {
        const auto q = rr_transition_matrix(PrivacyParams::pure(eps));
        const double ratio = max_likelihood_ratio(q);
        const auto ulps = ulp_distance(ratio, std::exp(eps));
        r.check(ulps <= 4, fmt::format("eps={:.6f}: max likelihood ratio {:.17g}, e^eps {:.17g} ({} ulp)", eps, ratio,
                                       std::exp(eps), ulps));
    }
    ProtocolParams p;
    p.k = 16;
    p.m = 5;
    p.n = 3000;
    p.priv = PrivacyParams::pure(1.0);
    p.delta = 0.45;
    p.mode = Mode::Symmetric;
    p.seed = kSeed;
    const Transcript t = run_combined(p, make_paninski_instance(16, 0.45)).transcript;
    const bool halves = t.epsilon_profile.size() == 2 && t.epsilon_profile[0] == 0.5 && t.epsilon_profile[1] == 0.5;
    r.check(halves, fmt::format("per-user charges {} (expected 0.5 + 0.5)", fmt::join(t.epsilon_profile, " + ")));
    r.check(t.epsilon_uniform && t.epsilon_per_user_min == 1.0 && t.epsilon_per_user_max == 1.0,
            fmt::format("every user charged {} .. {} total", t.epsilon_per_user_min, t.epsilon_per_user_max));
    r.check(t.rr_passes_min == 1 && t.rr_passes_max == 1, "each raw bit passes through RR exactly once");
    r.check(t.max_bits_per_user == 1 + 4 + 1, fmt::format("{} bits per user (group index 4 + two bits)", t.max_bits_per_user));
    return r.passed();
}

// Wilson lower bound of the correct-decision rate must reach 2/3.
void guarantee(Report& r, const std::string& label, const std::string& protocol, const ProtocolParams& p,
               const DiscreteDistribution& dist, bool expect_accept, std::uint64_t seed) {
    const auto t0 = Clock::now();
    const auto reg = ProtocolRegistry::standard();
    PowerEstimate e = estimate_power(reg, protocol, p, dist, kPowerTrials, seed);
    if (!expect_accept) e = e.rejects();
    r.check(e.low >= 2.0 / 3.0, fmt::format("{}: {} rate {:.4f}, 95% CI [{:.4f}, {:.4f}] over {} trials ({:.1f} s)", label,
                                            expect_accept ? "accept" : "reject", e.point, e.low, e.high, e.trials,
                                            seconds_since(t0)));
}

bool criterion_guarantees(Report& r) {
    const auto t0 = Clock::now();
    constexpr std::size_t k = 64;
    const auto uniform = DiscreteDistribution::uniform(k);
    const auto paninski = make_paninski_instance(k, 0.45);
    const HadamardPlan plan(k);
    const auto chi2 = plan.members(2);

    ProtocolParams base;
    base.k = k;
    base.delta = 0.45;
    base.seed = kSeed;

    {
        ProtocolParams p = base;
        p.m = 5;
        const double gamma = hadamard_gamma(p);
        const auto per_group = static_cast<std::size_t>(std::ceil(50.0 * std::sqrt(static_cast<double>(k)) / (gamma * gamma)));
        p.n = (k - 1) * per_group;
        r.note(fmt::format("asymmetric Hadamard: gamma {:.4f}, N = 50 sqrt(k)/gamma^2 = {}, n = {}", gamma, per_group, p.n));
        guarantee(r, "asymmetric Hadamard, uniform", "asymmetric_hadamard", p, uniform, true, 1);
        guarantee(r, "asymmetric Hadamard, Paninski", "asymmetric_hadamard", p, paninski, false, 2);
    }
    for (const bool priv : {false, true}) {
        ProtocolParams p = base;
        p.m = 401;
        p.n = priv ? 30 : 10;
        if (priv) p.priv = PrivacyParams::pure(1.0);
        const double nn = static_cast<double>(p.n);
        const double extra = 3.0 * std::sqrt(std::log(20.0 * nn * k) / 401.0);
        const auto heavy = make_heavy_set_instance(k, chi2, extra);
        const std::string tag = fmt::format("large-m n={} eps={}", p.n, format_epsilon(p.priv));
        r.note(fmt::format("{}: heavy chi_2 bias {:.4f}, T = {:.3f}", tag, extra, large_m_threshold(p, p.n)));
        guarantee(r, tag + ", uniform", "large_m", p, uniform, true, 3);
        guarantee(r, tag + ", heavy set", "large_m", p, heavy, false, 4);
    }
    for (const Mode mode : {Mode::Asymmetric, Mode::Symmetric}) {
        ProtocolParams p = base;
        p.m = 5;
        p.priv = PrivacyParams::pure(1.0);
        p.mode = mode;
        p.n = sized_users("combined", p);
        const std::string tag = fmt::format("combined {} eps=1 n={}", to_string(mode), p.n);
        r.note(fmt::format("{}: gamma {:.4f}", tag, combined_gamma(p)));
        guarantee(r, tag + ", uniform", "combined", p, uniform, true, 5);
        guarantee(r, tag + ", Paninski", "combined", p, paninski, false, 6);
        if (mode == Mode::Asymmetric) {
            guarantee(r, tag + ", heavy set", "combined", p, make_heavy_set_instance(k, chi2, 0.45), false, 7);
        }
    }
    {
        ProtocolParams p = base;
        p.m = 5;
        p.priv = PrivacyParams::pure(1.0);
        p.n = sized_users("public_coin", p);
        const std::string tag = fmt::format("public coin eps=1 n={}", p.n);
        guarantee(r, tag + ", uniform", "public_coin", p, uniform, true, 8);
        guarantee(r, tag + ", Paninski", "public_coin", p, paninski, false, 9);
    }
    const double elapsed = seconds_since(t0);
    r.check(elapsed < 1200.0, fmt::format("runtime {:.1f} s (limit 1200 s)", elapsed));
    return r.passed();
}

ExperimentConfig scaling_config(const std::string& protocol, std::size_t m) {
    ExperimentConfig c;
    c.protocol = protocol;
    c.params.k = 64;
    c.params.m = m;
    c.params.delta = 0.45;
    c.params.priv = PrivacyParams::pure(1.0);
    c.params.seed = kSeed;
    c.instance = InstanceSpec::uniform();
    c.alternative = InstanceSpec::paninski(0.45);
    c.trials = kPowerTrials;
    return c;
}

std::size_t combined_required(Report& r, std::size_t m) {
    const auto t0 = Clock::now();
    const std::size_t n = find_min_n(scaling_config("combined", m));
    r.note(fmt::format("combined asymmetric, m={}: n_required = {} ({:.1f} s)", m, n, seconds_since(t0)));
    return n;
}

// 6: required n shrinks roughly linearly in m.
bool criterion_scaling(Report& r) {
    const auto t0 = Clock::now();
    const std::size_t n1 = combined_required(r, 1);
    const std::size_t n9 = combined_required(r, 9);
    const double ratio = static_cast<double>(n1) / static_cast<double>(n9);
    r.check(ratio >= 4.5 && ratio <= 18.0, fmt::format("n(m=1)/n(m=9) = {}/{} = {:.3f} (need [4.5, 18])", n1, n9, ratio));
    const double elapsed = seconds_since(t0);
    r.check(elapsed < 1800.0, fmt::format("runtime {:.1f} s (limit 1800 s)", elapsed));
    return r.passed();
}

// 7: lower-bound witnesses.
bool criterion_witness(Report& r) {
    for (const auto& [k, b] : std::vector<std::pair<std::size_t, unsigned>>{{8, 2}, {16, 3}, {64, 5}}) {
        double residual = 0.0, tv_err = 0.0;
        std::size_t built = 0;
        for (std::size_t i = 0; i < 100; ++i) {
            Rng rng = Rng::stream(derive_seed(kSeed, k), StreamDomain::Instance, i);
            try {
                const WitnessReport w = lower_bound_witness(StochasticMatrix::random(k, b, rng));
                residual = std::max(residual, w.residual);
                tv_err = std::max(tv_err, std::fabs(w.tv - 1.0 / static_cast<double>(k)));
                ++built;
            } catch (const InternalError& e) {
                r.note(fmt::format("k={} b={} W #{}: {}", k, b, i, e.what()));
            }
        }
        r.check(built == 100 && residual <= 1e-10 && tv_err <= 1e-12,
                fmt::format("k={} b={}: {}/100 witnesses, max |W^T p - W^T U| = {:.3e}, max |tv - 1/k| = {:.3e}", k, b,
                            built, residual, tv_err));
    }
    return r.passed();
}

// 8: the repetition baseline needs more users than the combined tester.
bool criterion_baseline(Report& r) {
    for (const std::size_t m : {1u, 9u}) {
        const std::size_t combined = combined_required(r, m);
        ExperimentConfig c = scaling_config("baseline", m);
        c.search.n_max = combined;
        const auto t0 = Clock::now();
        const SearchResult res = search_min_n(c);
        if (res.n) {
            r.check(*res.n > combined, fmt::format("m={}: baseline n_required = {} vs combined {}", m, *res.n, combined));
        } else {
            const SearchStep& last = res.trace.back();
            r.check(true, fmt::format("m={}: baseline fails at every n <= {} (at n={}: null accept {:.3f}, alt reject {:.3f}; "
                                      "{:.1f} s)",
                                      m, combined, last.n, last.null_accept.point, last.alt_reject.point,
                                      seconds_since(t0)));
        }
    }
    return r.passed();
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_cli(const std::string& args) {
    const int rc = std::system((std::string(ULPT_CLI_PATH) + " " + args).c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// 9: byte-identical output across thread counts.
bool criterion_determinism(Report& r) {
    const auto dir = std::filesystem::temp_directory_path() / fmt::format("ulpt-acceptance-{}", ::getpid());
    std::filesystem::create_directories(dir);
    const auto cfg = dir / "scaling.json";
    std::ofstream(cfg) << R"({"protocol": "combined", "k": 16, "delta": 0.45, "epsilon": 1.0, "seed": 11,
  "trials": 60, "alternative": {"type": "paninski", "delta": 0.45},
  "search": {"n_min": 16, "n_max": 65536, "rel_tol": 0.1},
  "grid": {"m": [1, 3, 9], "protocols": ["combined", "baseline"]}})";
    for (const auto& [name, args] : std::vector<std::pair<std::string, std::string>>{
             {"verify", "verify --moment-trials 20000 --trials 100"},
             {"scaling", "scaling --config " + cfg.string()}}) {
        std::string outputs[2];
        int codes[2];
        const unsigned threads[2] = {1, 3};
        for (int i = 0; i < 2; ++i) {
            const auto out = dir / fmt::format("{}-{}.txt", name, threads[i]);
            codes[i] = run_cli(fmt::format("--seed 7 --threads {} --out {} {}", threads[i], out.string(), args));
            outputs[i] = slurp(out);
        }
        r.check(codes[0] == 0 && codes[1] == 0 && !outputs[0].empty() && outputs[0] == outputs[1],
                fmt::format("{}: exit codes {}/{}, {} vs {} bytes, {}", name, codes[0], codes[1], outputs[0].size(),
                            outputs[1].size(), outputs[0] == outputs[1] ? "identical" : "DIFFERENT"));
    }
    std::filesystem::remove_all(dir);
    return r.passed();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app("acceptance criteria");
    int criterion = 0;
    app.add_option("--criterion", criterion, "criterion number 1..9")->required()->check(CLI::Range(1, 9));
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<bool(Report&)>>> table{
        {"threshold bias lower bound sweep", criterion_sweep},
        {"Hadamard norm identity", criterion_norm_identity},
        {"tester statistic moments", criterion_moments},
        {"randomized response privacy", criterion_privacy},
        {"protocol guarantees at desk scale", criterion_guarantees},
        {"required n scales with m", criterion_scaling},
        {"lower-bound witness", criterion_witness},
        {"repetition baseline is weaker", criterion_baseline},
        {"thread-count determinism", criterion_determinism},
    };
    const auto& [name, fn] = table[criterion - 1];
    Report report;
    bool ok = false;
    try {
        ok = fn(report);
    } catch (const std::exception& e) {
        fmt::print("  [FAIL] unexpected exception: {}\n", e.what());
    }
    fmt::print("{} criterion {}: {}\n", ok ? "PASS" : "FAIL", criterion, name);
    return ok ? 0 : 1;
}
