#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ulpt/dist_core.hpp"
#include "ulpt/hadamard.hpp"
#include "ulpt/mean_test.hpp"
#include "ulpt/randomizers.hpp"

namespace ulpt {

enum class Mode { Symmetric, Asymmetric };

const char* to_string(Mode mode) noexcept;

/// Constants left open by the rates. Defaults are the checked-in calibration
/// (config/calibrated_constants.json); every field can be overridden per experiment.
struct ProtocolConstants {
    double gamma_scale = 1.0;            // standalone Hadamard protocol
    double combined_gamma_scale = 2.0;   // Hadamard branch of the combined tester
    double t_scale = 0.5;                // large-m deviation threshold
    double fixed_mean_c = 50.0;          // fixed-allocation mean tester
    double symmetric_mean_c = 100.0;     // multinomial mean tester
    double public_coin_c = 0.2;          // public-coin bias threshold
    double public_coin_users_c = 1.0;    // users per batch = c0 / threshold^2
    unsigned public_coin_batches = 9;    // R
    double private_largem_users_c = 30.0;  // n2 = ceil(c / eps^2)

    friend bool operator==(const ProtocolConstants&, const ProtocolConstants&) = default;
};

struct ProtocolParams {
    std::size_t k = 2;
    std::size_t m = 1;
    std::size_t n = 1;
    PrivacyParams priv = PrivacyParams::non_private();
    double delta = 0.5;
    Mode mode = Mode::Asymmetric;
    std::uint64_t seed = 0;
    ProtocolConstants constants{};

    /// Throws InvalidArgument on k not a power of two, n or m zero, delta outside (0, 1].
    void validate() const;
};

/// Outcome of one sub-test run by the server.
struct SubtestSummary {
    std::string name;
    Decision decision = Decision::Accept;
    double statistic = 0.0;
    double threshold = 0.0;
    std::size_t users = 0;
};

struct Transcript {
    std::string protocol;
    std::size_t users_total = 0;
    std::size_t users_used = 0;
    std::size_t users_dropped = 0;
    std::size_t samples_per_user_used = 0;  // m, or m-1 when m is even
    std::size_t messages = 0;
    std::size_t hadamard_bits = 0;
    std::size_t large_m_bits = 0;
    std::size_t coin_bits = 0;
    std::size_t noisy_statistics = 0;
    std::size_t max_bits_per_user = 0;
    double epsilon_per_user_min = 0.0;
    double epsilon_per_user_max = 0.0;
    bool epsilon_uniform = true;         // every used user charged the same total
    std::vector<double> epsilon_profile;  // charges of the first used user, in emission order
    unsigned rr_passes_min = 0;          // per raw data-dependent bit
    unsigned rr_passes_max = 0;
    std::vector<SubtestSummary> subtests;
};

struct Verdict {
    Decision decision = Decision::Accept;
    Transcript transcript;
};

/// Compact JSON rendering of a verdict (stable key order).
std::string to_json(const Verdict& verdict);

/// Round-robin Hadamard groups with the fixed-allocation mean tester.
Verdict run_asymmetric_hadamard(const ProtocolParams& params, const DiscreteDistribution& p);

/// Every user flags a large deviation of any monitored subset; majority (or debiased) vote.
Verdict run_large_m(const ProtocolParams& params, const DiscreteDistribution& p);

/// Large-m and Hadamard branches together; accepts iff both accept. Honors params.mode.
Verdict run_combined(const ProtocolParams& params, const DiscreteDistribution& p);

/// R batches, each testing one shared random balanced partition for bias; majority over batches.
Verdict run_public_coin(const ProtocolParams& params, const DiscreteDistribution& p);

/// Laplace-noised empty-cell fraction per user, thresholded mean at the server.
Verdict run_baseline_repetition(const ProtocolParams& params, const DiscreteDistribution& p);

// Quantities the server derives from the parameters, exposed for sizing and tests.

/// m, or m-1 when m is even.
std::size_t effective_m(std::size_t m) noexcept;

/// gamma of the standalone Hadamard protocol.
double hadamard_gamma(const ProtocolParams& params);

/// Users of the combined asymmetric tester assigned to the large-m branch.
std::size_t combined_large_m_users(const ProtocolParams& params);

/// gamma of the combined tester's Hadamard branch.
double combined_gamma(const ProtocolParams& params);

/// T for a large-m run over `users` users.
double large_m_threshold(const ProtocolParams& params, std::size_t users);

/// Raw (undebiased) two-sided threshold of the public-coin batch test.
double public_coin_threshold(const ProtocolParams& params);

/// Smallest n for which the named protocol's own sizing rule is met with the
/// calibrated constants ("asymmetric_hadamard", "combined", "public_coin").
std::size_t sized_users(const std::string& protocol, const ProtocolParams& params);

}  // namespace ulpt
