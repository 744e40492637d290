#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ulpt/dist_core.hpp"
#include "ulpt/protocols.hpp"

namespace ulpt {

/// Named input distribution, resolved against a domain size.
struct InstanceSpec {
    enum class Kind { Uniform, Paninski, HeavySet, Explicit };
    Kind kind = Kind::Uniform;
    double delta = 0.0;              // Paninski
    std::vector<Symbol> set;         // HeavySet; empty with `column` set means chi_column
    std::optional<std::size_t> column;
    double extra = 0.0;              // HeavySet
    std::vector<double> probs;       // Explicit

    static InstanceSpec uniform() { return {}; }
    static InstanceSpec paninski(double delta);
    static InstanceSpec heavy_column(std::size_t column, double extra);

    DiscreteDistribution build(std::size_t k) const;
    bool is_uniform() const noexcept { return kind == Kind::Uniform; }
    std::string describe() const;
};

struct SearchRange {
    std::size_t n_min = 1;
    std::size_t n_max = 1u << 24;
    double rel_tol = 0.05;
};

struct ScalingGrid {
    std::vector<std::size_t> m;
    std::vector<std::string> protocols;
};

struct ExperimentConfig {
    std::string protocol = "combined";
    ProtocolParams params;
    InstanceSpec instance;     // evaluated by `power`
    InstanceSpec alternative;  // far-side input for `find-n` and `scaling`
    std::size_t trials = 300;
    double target_error = 1.0 / 3.0;
    std::string output;
    SearchRange search;
    ScalingGrid grid;
};

/// Compiled-in defaults; kept equal to config/calibrated_constants.json by a test.
ProtocolConstants default_constants();

/// Applies the keys of a `constants` object; unknown keys are a ConfigError.
void apply_constants(const nlohmann::json& j, ProtocolConstants& constants);
nlohmann::json constants_to_json(const ProtocolConstants& constants);

/// Reads a constants file (a JSON object of constant names to values).
ProtocolConstants load_constants_file(const std::string& path);

InstanceSpec parse_instance(const nlohmann::json& j);

/// Parses one experiment. Missing fields take defaults; malformed ones throw ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// Text form of epsilon used in outputs: "inf" when non-private.
std::string format_epsilon(const PrivacyParams& priv);

}  // namespace ulpt
