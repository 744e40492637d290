#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "ulpt/config.hpp"
#include "ulpt/errors.hpp"
#include "ulpt/harness.hpp"
#include "ulpt/oracles.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kConfig = 2;

struct Globals {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trials;
    std::string out;
    unsigned threads = 1;
    std::string config;
    std::string constants;
};

ulpt::ExperimentConfig load(const Globals& g) {
    if (g.config.empty()) {
        throw ulpt::ConfigError("this subcommand needs --config");
    }
    ulpt::ExperimentConfig c = ulpt::load_config(g.config);
    if (g.seed) {
        c.params.seed = *g.seed;
    }
    if (g.trials) {
        c.trials = *g.trials;
    }
    return c;
}

// Writes `text` to --out (or the config's output) or stdout.
void emit(const Globals& g, const std::string& fallback_path, const std::string& text) {
    const std::string& path = g.out.empty() ? fallback_path : g.out;
    if (path.empty() || path == "-") {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw ulpt::IoError(fmt::format("cannot write '{}'", path));
    }
    f << text;
    if (!f.flush()) {
        throw ulpt::IoError(fmt::format("error writing '{}'", path));
    }
}

std::string power_json(const ulpt::ExperimentConfig& c, const ulpt::PowerEstimate& e) {
    nlohmann::ordered_json j;
    j["protocol"] = c.protocol;
    j["instance"] = c.instance.describe();
    j["k"] = c.params.k;
    j["m"] = c.params.m;
    j["n"] = c.params.n;
    j["eps"] = ulpt::format_epsilon(c.params.priv);
    j["mode"] = ulpt::to_string(c.params.mode);
    j["seed"] = c.params.seed;
    j["trials"] = e.trials;
    j["accepts"] = e.accepts;
    j["accept_rate"] = e.point;
    j["ci_low"] = e.low;
    j["ci_high"] = e.high;
    return j.dump(2) + "\n";
}

int cmd_verify(const Globals& g, std::size_t moment_trials, std::optional<double> t_scale) {
    ulpt::VerificationOptions opt;
    opt.seed = g.seed.value_or(1);
    opt.moment_trials = moment_trials;
    opt.power_trials = g.trials.value_or(300);
    opt.threads = g.threads;
    opt.constants = g.constants.empty() ? ulpt::default_constants() : ulpt::load_constants_file(g.constants);
    if (t_scale) {
        opt.constants.t_scale = *t_scale;
    }
    const ulpt::VerificationReport report = ulpt::run_verification_suite(opt);
    std::ostringstream os;
    ulpt::write_report(report, os);
    emit(g, "", os.str());
    return report.all_passed() ? kOk : kFailed;
}

int cmd_power(const Globals& g) {
    const ulpt::ExperimentConfig c = load(g);
    const ulpt::PowerEstimate e = ulpt::estimate_power(c, g.threads);
    emit(g, c.output, power_json(c, e));
    return kOk;
}

int cmd_find_n(const Globals& g) {
    const ulpt::ExperimentConfig c = load(g);
    const ulpt::SearchResult r = ulpt::search_min_n(c, g.threads);
    std::string text = ulpt::format_trace(r.trace);
    if (!r.n) {
        std::cerr << text << fmt::format("not found: no n in [{}, {}] meets target error {}\n", c.search.n_min,
                                         c.search.n_max, c.target_error);
        return kFailed;
    }
    text += fmt::format("n_required={}\n", *r.n);
    emit(g, c.output, text);
    return kOk;
}

int cmd_scaling(const Globals& g) {
    ulpt::ExperimentConfig c = load(g);
    if (c.grid.protocols.empty()) {
        c.grid.protocols = {c.protocol};
    }
    std::ostringstream os;
    ulpt::write_scaling_csv(ulpt::run_scaling(c, g.threads), os);
    emit(g, c.output, os.str());
    return kOk;
}

int cmd_lower_bound(const Globals& g, std::size_t k, unsigned bits) {
    ulpt::Rng rng = ulpt::Rng::stream(g.seed.value_or(1), ulpt::StreamDomain::Instance, 0);
    const ulpt::StochasticMatrix w = ulpt::StochasticMatrix::random(k, bits, rng);
    const ulpt::WitnessReport r = ulpt::lower_bound_witness(w);
    nlohmann::ordered_json j;
    j["k"] = k;
    j["bits"] = bits;
    j["tv_to_uniform"] = r.tv;
    j["max_message_gap"] = r.residual;
    j["p"] = std::vector<double>(r.p.probs().begin(), r.p.probs().end());
    emit(g, "", j.dump(2) + "\n");
    return kOk;
}

int cmd_baseline(const Globals& g) {
    ulpt::ExperimentConfig c = load(g);
    std::vector<std::size_t> ms = c.grid.m.empty() ? std::vector<std::size_t>{c.params.m} : c.grid.m;
    std::string text = "m,combined_n,baseline_n,baseline_exceeds\n";
    bool all = true;
    for (const std::size_t m : ms) {
        ulpt::ExperimentConfig comb = c;
        comb.protocol = "combined";
        comb.params.m = m;
        const ulpt::SearchResult rc = ulpt::search_min_n(comb, g.threads);
        if (!rc.n) {
            text += fmt::format("{},NA,NA,NA\n", m);
            all = false;
            continue;
        }
        ulpt::ExperimentConfig base = comb;
        base.protocol = "baseline";
        base.search.n_max = std::max(base.search.n_min, *rc.n);
        const ulpt::SearchResult rb = ulpt::search_min_n(base, g.threads);
        const bool exceeds = !rb.n || *rb.n > *rc.n;
        all = all && exceeds;
        text += fmt::format("{},{},{},{}\n", m, *rc.n, rb.n ? fmt::format("{}", *rb.n) : fmt::format(">{}", *rc.n),
                            exceeds ? "yes" : "no");
    }
    emit(g, c.output, text);
    return all ? kOk : kFailed;
}

int cmd_calibrate(const Globals& g, double lo, double hi, double tol) {
    const ulpt::CalibrationResult r =
        ulpt::calibrate_symmetric_mean_c(lo, hi, tol, g.trials.value_or(300), g.seed.value_or(1), g.threads);
    std::string text;
    for (const std::string& line : r.trace) {
        text += line + "\n";
    }
    text += fmt::format("symmetric_mean_c={:.4f}\n", r.constant);
    emit(g, "", text);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uniformity testing under user-level local differential privacy"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "master seed");
    app.add_option("--trials", g.trials, "Monte Carlo trials per estimate");
    app.add_option("--out", g.out, "output file (default: stdout)");
    app.add_option("--threads", g.threads, "worker threads, 0 for all cores")->capture_default_str();

    auto* verify = app.add_subcommand("verify", "run the oracle and moment verification suite");
    std::size_t moment_trials = 100000;
    std::optional<double> t_scale;
    verify->add_option("--moment-trials", moment_trials, "trials per moment check")->capture_default_str();
    verify->add_option("--t-scale", t_scale, "override the large-m threshold constant");
    verify->add_option("--constants", g.constants, "constants file");

    auto* power = app.add_subcommand("power", "estimate the accept rate of one configuration");
    auto* find_n = app.add_subcommand("find-n", "search for the smallest sufficient number of users");
    auto* scaling = app.add_subcommand("scaling", "required n over a grid of m, as CSV");
    auto* baseline = app.add_subcommand("baseline", "compare the repetition baseline with the combined tester");
    for (auto* sub : {power, find_n, scaling, baseline}) {
        sub->add_option("--config", g.config, "experiment JSON")->required();
    }

    auto* lower = app.add_subcommand("lower-bound-demo", "build an indistinguishable far distribution for a random W");
    std::size_t k = 8;
    unsigned bits = 2;
    lower->add_option("--k", k, "domain size")->capture_default_str();
    lower->add_option("--bits", bits, "message bits b, 2^b < k")->capture_default_str();

    auto* calibrate = app.add_subcommand("calibrate", "bisect the symmetric mean-test constant");
    double lo = 1.0;
    double hi = 100.0;
    double tol = 0.5;
    calibrate->add_option("--lo", lo)->capture_default_str();
    calibrate->add_option("--hi", hi)->capture_default_str();
    calibrate->add_option("--tol", tol)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*verify) return cmd_verify(g, moment_trials, t_scale);
        if (*power) return cmd_power(g);
        if (*find_n) return cmd_find_n(g);
        if (*scaling) return cmd_scaling(g);
        if (*baseline) return cmd_baseline(g);
        if (*lower) return cmd_lower_bound(g, k, bits);
        if (*calibrate) return cmd_calibrate(g, lo, hi, tol);
    } catch (const ulpt::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const ulpt::InvalidArgument& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return kConfig;
    } catch (const ulpt::IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kConfig;
    } catch (const ulpt::NotFound& e) {
        std::cerr << e.trace() << "not found: " << e.what() << '\n';
        return kFailed;
    } catch (const ulpt::InsufficientUsers& e) {
        std::cerr << "insufficient users: " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailed;
    }
    return kOk;
}
