#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ulpt/config.hpp"
#include "ulpt/protocols.hpp"

namespace ulpt {

/// 95% Wilson score interval for `successes` out of `trials`.
std::pair<double, double> wilson_interval(std::size_t successes, std::size_t trials);

struct PowerEstimate {
    std::size_t accepts = 0;
    std::size_t trials = 0;
    double point = 0.0;  // accept frequency
    double low = 0.0;
    double high = 0.0;

    static PowerEstimate from_counts(std::size_t accepts, std::size_t trials);
    PowerEstimate rejects() const;  // the same runs seen as reject frequency
    double half_width() const noexcept { return (high - low) / 2.0; }
};

using ProtocolFn = std::function<Verdict(const ProtocolParams&, const DiscreteDistribution&)>;

/// Name to protocol mapping used by configs and the CLI.
class ProtocolRegistry {
public:
    /// asymmetric_hadamard, large_m, combined, public_coin, baseline.
    static ProtocolRegistry standard();

    void add(std::string name, ProtocolFn fn);
    /// Throws ConfigError for unknown names.
    const ProtocolFn& get(const std::string& name) const;
    bool contains(const std::string& name) const { return fns_.count(name) != 0; }
    std::vector<std::string> names() const;

private:
    std::map<std::string, ProtocolFn> fns_;
};

/// Seed of trial `t` under `master`; trials never share randomness.
std::uint64_t trial_seed(std::uint64_t master, std::size_t t) noexcept;

/// Runs `trials` seeded runs of `protocol` on `p` and counts accepts.
/// The per-trial seed is trial_seed(master, t), so the result is independent of `threads`.
PowerEstimate estimate_power(const ProtocolRegistry& registry, const std::string& protocol,
                             const ProtocolParams& params, const DiscreteDistribution& p, std::size_t trials,
                             std::uint64_t master_seed, unsigned threads = 1);

/// Power of config.protocol on config.instance with config.params.seed as master seed.
PowerEstimate estimate_power(const ExperimentConfig& config, unsigned threads = 1,
                             const ProtocolRegistry& registry = ProtocolRegistry::standard());

struct SearchStep {
    std::size_t n = 0;
    PowerEstimate null_accept;   // on the uniform distribution
    PowerEstimate alt_reject;    // on the alternative
    bool insufficient = false;   // protocol refused this n
    bool passed = false;
};

struct SearchResult {
    std::optional<std::size_t> n;  // empty when the range was exhausted
    std::vector<SearchStep> trace;
};

/// Doubling from n_min, then bisection, for the smallest n at which both the
/// type-I error (reject on uniform) and the type-II error (accept on the
/// alternative) are at most target_error plus the Wilson half-width.
/// Bisection stops once hi - lo <= max(1, rel_tol * hi).
SearchResult search_min_n(const ExperimentConfig& config, unsigned threads = 1,
                          const ProtocolRegistry& registry = ProtocolRegistry::standard());

/// As search_min_n, but throws NotFound (carrying the scan trace) when the range is exhausted.
std::size_t find_min_n(const ExperimentConfig& config, unsigned threads = 1,
                       const ProtocolRegistry& registry = ProtocolRegistry::standard());

std::string format_trace(const std::vector<SearchStep>& trace);

struct ScalingRow {
    std::string protocol;
    std::size_t k = 0;
    std::size_t m = 0;
    std::string eps;
    double delta = 0.0;
    std::optional<std::size_t> n_required;
    double ci_low = 0.0;   // Wilson interval of the weaker side's success rate at n_required
    double ci_high = 0.0;
    std::uint64_t seed = 0;
};

/// One row per (protocol, m) of config.grid, in grid order.
std::vector<ScalingRow> run_scaling(const ExperimentConfig& config, unsigned threads = 1,
                                    const ProtocolRegistry& registry = ProtocolRegistry::standard());

void write_scaling_csv(const std::vector<ScalingRow>& rows, std::ostream& out);

/// Runs the grid and writes the CSV to `path`; IoError when it cannot be written.
void emit_scaling_csv(const ExperimentConfig& config, const std::string& path, unsigned threads = 1,
                      const ProtocolRegistry& registry = ProtocolRegistry::standard());

struct VerificationOptions {
    std::uint64_t seed = 1;
    std::size_t moment_trials = 100000;
    std::size_t power_trials = 300;
    ProtocolConstants constants{};
    unsigned threads = 1;
};

struct VerificationCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct VerificationReport {
    std::vector<VerificationCheck> checks;
    std::vector<std::string> notes;  // informational lines, not pass/fail
    bool all_passed() const noexcept;
};

/// Oracle identities, moment checks, privacy matrix, witness and large-m power checks.
VerificationReport run_verification_suite(const VerificationOptions& options);

void write_report(const VerificationReport& report, std::ostream& out);

struct CalibrationResult {
    double constant = 0.0;
    std::vector<std::string> trace;
};

/// Smallest symmetric mean-test constant C on [lo, hi] (to within `tol`) for which, on the
/// reference grid d in {15, 63}, gamma in {0.5, 1}, the multinomial tester with
/// n = ceil(C sqrt(d) / gamma^2) accepts mu = 0 and rejects a dense ||mu|| = gamma
/// each in at least 2/3 of `trials` runs.
CalibrationResult calibrate_symmetric_mean_c(double lo, double hi, double tol, std::size_t trials,
                                             std::uint64_t seed, unsigned threads = 1);

}  // namespace ulpt
