#include "ulpt/config.hpp"

#include <fstream>

#include <fmt/format.h>

#include "ulpt/errors.hpp"
#include "ulpt/hadamard.hpp"

namespace ulpt {

namespace {

using nlohmann::json;

template <class T>
T get_field(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("field '{}': {}", key, e.what()));
    }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : known) {
            ok = ok || item.key() == k;
        }
        if (!ok) {
            throw ConfigError(fmt::format("unknown key '{}' in {}", item.key(), where));
        }
    }
}

PrivacyParams parse_epsilon(const json& j) {
    if (!j.contains("epsilon") || j.at("epsilon").is_null()) {
        return PrivacyParams::non_private();
    }
    const json& e = j.at("epsilon");
    if (e.is_string()) {
        const auto s = e.get<std::string>();
        if (s == "inf" || s == "none" || s == "non-private") {
            return PrivacyParams::non_private();
        }
        throw ConfigError(fmt::format("epsilon must be a positive number or \"inf\", got \"{}\"", s));
    }
    if (!e.is_number()) {
        throw ConfigError("epsilon must be a positive number or \"inf\"");
    }
    try {
        return PrivacyParams::pure(e.get<double>());
    } catch (const InvalidArgument& err) {
        throw ConfigError(err.what());
    }
}

}  // namespace

InstanceSpec InstanceSpec::paninski(double delta) {
    InstanceSpec s;
    s.kind = Kind::Paninski;
    s.delta = delta;
    return s;
}

InstanceSpec InstanceSpec::heavy_column(std::size_t column, double extra) {
    InstanceSpec s;
    s.kind = Kind::HeavySet;
    s.column = column;
    s.extra = extra;
    return s;
}

DiscreteDistribution InstanceSpec::build(std::size_t k) const {
    switch (kind) {
        case Kind::Uniform: return DiscreteDistribution::uniform(k);
        case Kind::Paninski: return make_paninski_instance(k, delta);
        case Kind::HeavySet: {
            if (column) {
                const HadamardPlan plan(k);
                if (*column < 2 || *column > k) {
                    throw InvalidArgument(fmt::format("heavy-set column must lie in 2..{}, got {}", k, *column));
                }
                const std::vector<Symbol> members = plan.members(*column);
                return make_heavy_set_instance(k, members, extra);
            }
            return make_heavy_set_instance(k, set, extra);
        }
        case Kind::Explicit: {
            if (probs.size() != k) {
                throw InvalidArgument(fmt::format("explicit distribution has {} entries, expected k = {}", probs.size(), k));
            }
            return DiscreteDistribution(probs);
        }
    }
    throw InternalError("unhandled instance kind");
}

std::string InstanceSpec::describe() const {
    switch (kind) {
        case Kind::Uniform: return "uniform";
        case Kind::Paninski: return fmt::format("paninski(delta={})", delta);
        case Kind::HeavySet:
            return column ? fmt::format("heavy_set(chi_{}, extra={})", *column, extra)
                          : fmt::format("heavy_set(|S|={}, extra={})", set.size(), extra);
        case Kind::Explicit: return fmt::format("explicit(k={})", probs.size());
    }
    return "?";
}

ProtocolConstants default_constants() { return ProtocolConstants{}; }

void apply_constants(const json& j, ProtocolConstants& c) {
    if (!j.is_object()) {
        throw ConfigError("constants must be a JSON object");
    }
    reject_unknown(j,
                   {"gamma_scale", "combined_gamma_scale", "t_scale", "fixed_mean_c", "symmetric_mean_c",
                    "public_coin_c", "public_coin_users_c", "public_coin_batches", "private_largem_users_c"},
                   "constants");
    c.gamma_scale = get_field(j, "gamma_scale", c.gamma_scale);
    c.combined_gamma_scale = get_field(j, "combined_gamma_scale", c.combined_gamma_scale);
    c.t_scale = get_field(j, "t_scale", c.t_scale);
    c.fixed_mean_c = get_field(j, "fixed_mean_c", c.fixed_mean_c);
    c.symmetric_mean_c = get_field(j, "symmetric_mean_c", c.symmetric_mean_c);
    c.public_coin_c = get_field(j, "public_coin_c", c.public_coin_c);
    c.public_coin_users_c = get_field(j, "public_coin_users_c", c.public_coin_users_c);
    c.public_coin_batches = get_field(j, "public_coin_batches", c.public_coin_batches);
    c.private_largem_users_c = get_field(j, "private_largem_users_c", c.private_largem_users_c);
}

json constants_to_json(const ProtocolConstants& c) {
    nlohmann::ordered_json j;
    j["gamma_scale"] = c.gamma_scale;
    j["combined_gamma_scale"] = c.combined_gamma_scale;
    j["t_scale"] = c.t_scale;
    j["fixed_mean_c"] = c.fixed_mean_c;
    j["symmetric_mean_c"] = c.symmetric_mean_c;
    j["public_coin_c"] = c.public_coin_c;
    j["public_coin_users_c"] = c.public_coin_users_c;
    j["public_coin_batches"] = c.public_coin_batches;
    j["private_largem_users_c"] = c.private_largem_users_c;
    return json(j);
}

ProtocolConstants load_constants_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(fmt::format("cannot open constants file '{}'", path));
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("constants file '{}': {}", path, e.what()));
    }
    ProtocolConstants c = default_constants();
    apply_constants(j, c);
    return c;
}

InstanceSpec parse_instance(const json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() == "uniform") {
            return InstanceSpec::uniform();
        }
        throw ConfigError(fmt::format("unknown instance '{}'", j.get<std::string>()));
    }
    if (j.is_array()) {
        InstanceSpec s;
        s.kind = InstanceSpec::Kind::Explicit;
        s.probs = j.get<std::vector<double>>();
        return s;
    }
    if (!j.is_object()) {
        throw ConfigError("instance must be a string, an array of probabilities or an object");
    }
    const auto type = get_field<std::string>(j, "type", "");
    InstanceSpec s;
    if (type == "uniform") {
        reject_unknown(j, {"type"}, "instance");
    } else if (type == "paninski") {
        reject_unknown(j, {"type", "delta"}, "instance");
        s.kind = InstanceSpec::Kind::Paninski;
        s.delta = get_field(j, "delta", 0.0);
    } else if (type == "heavy_set") {
        reject_unknown(j, {"type", "set", "column", "extra"}, "instance");
        s.kind = InstanceSpec::Kind::HeavySet;
        s.extra = get_field(j, "extra", 0.0);
        if (j.contains("column")) {
            s.column = get_field<std::size_t>(j, "column", 2);
        } else {
            s.set = get_field<std::vector<Symbol>>(j, "set", {});
        }
    } else if (type == "explicit") {
        reject_unknown(j, {"type", "probs"}, "instance");
        s.kind = InstanceSpec::Kind::Explicit;
        s.probs = get_field<std::vector<double>>(j, "probs", {});
    } else {
        throw ConfigError(fmt::format("unknown instance type '{}'", type));
    }
    return s;
}

ExperimentConfig parse_config(const json& j) {
    if (!j.is_object()) {
        throw ConfigError("experiment config must be a JSON object");
    }
    reject_unknown(j,
                   {"protocol", "k", "m", "n", "epsilon", "delta", "mode", "seed", "constants", "instance",
                    "alternative", "trials", "target_error", "output", "search", "grid"},
                   "experiment");
    ExperimentConfig c;
    c.protocol = get_field<std::string>(j, "protocol", c.protocol);
    ProtocolParams& p = c.params;
    p.k = get_field<std::size_t>(j, "k", 64);
    p.m = get_field<std::size_t>(j, "m", 1);
    p.n = get_field<std::size_t>(j, "n", 1000);
    p.priv = parse_epsilon(j);
    p.delta = get_field(j, "delta", 0.45);
    const auto mode = get_field<std::string>(j, "mode", "asymmetric");
    if (mode == "asymmetric") {
        p.mode = Mode::Asymmetric;
    } else if (mode == "symmetric") {
        p.mode = Mode::Symmetric;
    } else {
        throw ConfigError(fmt::format("mode must be \"symmetric\" or \"asymmetric\", got \"{}\"", mode));
    }
    p.seed = get_field<std::uint64_t>(j, "seed", 1);
    p.constants = default_constants();
    if (j.contains("constants")) {
        apply_constants(j.at("constants"), p.constants);
    }
    c.instance = j.contains("instance") ? parse_instance(j.at("instance")) : InstanceSpec::uniform();
    c.alternative = j.contains("alternative") ? parse_instance(j.at("alternative")) : InstanceSpec::paninski(p.delta);
    c.trials = get_field<std::size_t>(j, "trials", c.trials);
    c.target_error = get_field(j, "target_error", c.target_error);
    c.output = get_field<std::string>(j, "output", "");
    if (j.contains("search")) {
        const json& s = j.at("search");
        reject_unknown(s, {"n_min", "n_max", "rel_tol"}, "search");
        c.search.n_min = get_field<std::size_t>(s, "n_min", c.search.n_min);
        c.search.n_max = get_field<std::size_t>(s, "n_max", c.search.n_max);
        c.search.rel_tol = get_field(s, "rel_tol", c.search.rel_tol);
    }
    if (j.contains("grid")) {
        const json& g = j.at("grid");
        reject_unknown(g, {"m", "protocols"}, "grid");
        c.grid.m = get_field<std::vector<std::size_t>>(g, "m", {});
        c.grid.protocols = get_field<std::vector<std::string>>(g, "protocols", {c.protocol});
    }
    if (c.trials < 1) {
        throw ConfigError("trials must be at least 1");
    }
    if (!(c.target_error > 0.0 && c.target_error < 0.5)) {
        throw ConfigError(fmt::format("target_error must lie in (0, 1/2), got {}", c.target_error));
    }
    if (c.search.n_min < 1 || c.search.n_max < c.search.n_min || !(c.search.rel_tol >= 0.0)) {
        throw ConfigError("search range needs 1 <= n_min <= n_max and rel_tol >= 0");
    }
    try {
        p.validate();
        (void)c.instance.build(p.k);
        (void)c.alternative.build(p.k);
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot open config '{}'", path));
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("config '{}': {}", path, e.what()));
    }
    return parse_config(j);
}

std::string format_epsilon(const PrivacyParams& priv) {
    return priv.is_private() ? fmt::format("{}", priv.epsilon()) : "inf";
}

}  // namespace ulpt
