#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "chaos2/chaos.hpp"
#include "chaos2/degeneracy.hpp"
#include "chaos2/error.hpp"
#include "chaos2/io.hpp"
#include "chaos2/limits.hpp"
#include "chaos2/parallel.hpp"
#include "chaos2/polyrel.hpp"
#include "chaos2/witness_family.hpp"

namespace chaos2::cli {

inline constexpr const char* kToolVersion = "chaos2 0.1.0";

enum ExitCode : int { kAffirmative = 0, kNegative = 1, kFailure = 2 };

struct ExperimentConfig {
    std::string command;
    std::vector<std::string> inputs;
    std::optional<std::uint64_t> seed;
    Json params = Json::object();
    std::string output;  // empty: stdout
};

struct CommandSpec {
    int inputs = 0;  // required input files
    bool randomized = false;
    Json defaults = Json::object();
};

/// Parameter schema per command; every key a command accepts appears here
/// with its default, and the effective values are echoed in the output meta.
[[nodiscard]] inline const std::map<std::string, CommandSpec>& commands() {
    static const std::map<std::string, CommandSpec> table{
        {"canon", {1, false, Json::object()}},
        {"sample", {1, true, Json{{"samples", 1000}}}},
        {"cov", {1, false, Json::object()}},
        {"degeneracy", {1, true, Json{{"trials", 1000}, {"tol", 1e-10}, {"delta", 0.01}, {"extract", true}}}},
        {"witness", {1, true, Json{{"budget", 64}, {"max_iterations", 500}, {"validation_samples", 1000}}}},
        {"polyrel",
         {1, true,
          Json{{"degree", -1}, {"samples", 500}, {"holdout_tolerance", 1e-6}, {"null_ratio", 1e-9}, {"all_relations", false}}}},
        {"family", {0, true, Json{{"k", 3}, {"trials", 1000}}}},
        {"limits-classify", {1, true, Json{{"samples", 2000}, {"correlation", nullptr}}}},
        {"limits-report", {1, true, Json{{"samples", 100000}, {"n_grid", nullptr}, {"coupled", true}, {"correlation", nullptr}}}},
        {"clt", {1, true, Json{{"samples", 100000}, {"n", nullptr}}}},
    };
    return table;
}

[[nodiscard]] inline ExperimentConfig config_from_json(const Json& j) {
    if (!j.is_object()) throw Error(ErrorKind::ConfigParse, "config must be a JSON object");
    static const std::set<std::string> keys{"command", "inputs", "seed", "params", "output"};
    for (const auto& [key, _] : j.items())
        if (!keys.count(key)) throw Error(ErrorKind::ConfigParse, "unknown config key '" + key + "'");
    ExperimentConfig c;
    try {
        if (!j.contains("command")) throw Error(ErrorKind::ConfigParse, "config needs \"command\"");
        c.command = j.at("command").get<std::string>();
        if (j.contains("inputs")) {
            if (j.at("inputs").is_string()) c.inputs = {j.at("inputs").get<std::string>()};
            else c.inputs = j.at("inputs").get<std::vector<std::string>>();
        }
        if (j.contains("seed") && !j.at("seed").is_null()) {
            if (!j.at("seed").is_number_integer()) throw Error(ErrorKind::ConfigParse, "\"seed\" must be an integer");
            c.seed = j.at("seed").is_number_unsigned() ? j.at("seed").get<std::uint64_t>()
                                                       : static_cast<std::uint64_t>(j.at("seed").get<std::int64_t>());
        }
        if (j.contains("params")) {
            if (!j.at("params").is_object()) throw Error(ErrorKind::ConfigParse, "\"params\" must be an object");
            c.params = j.at("params");
        }
        if (j.contains("output")) c.output = j.at("output").get<std::string>();
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::ConfigParse, std::string("config: ") + e.what());
    }
    return c;
}

[[nodiscard]] inline Json config_to_json(const ExperimentConfig& c) {
    Json j{{"command", c.command}, {"inputs", c.inputs}};
    j["seed"] = c.seed ? Json(*c.seed) : Json();
    j["params"] = c.params;
    j["output"] = c.output;
    return j;
}

namespace detail {

struct Context {
    const ExperimentConfig& config;
    Json params;  // defaults overlaid with the config's values
    std::uint64_t seed = 0;
    std::ostream& out;

    template <class T>
    T get(const std::string& key) const {
        try {
            return params.at(key).get<T>();
        } catch (const Json::exception&) {
            throw Error(ErrorKind::ConfigParse, "parameter '" + key + "' has the wrong type");
        }
    }

    [[nodiscard]] bool has(const std::string& key) const { return !params.at(key).is_null(); }

    [[nodiscard]] const std::string& input(std::size_t i = 0) const { return config.inputs.at(i); }

    [[nodiscard]] Json meta() const {
        Json m{{"tool", kToolVersion}, {"command", config.command}, {"inputs", config.inputs}};
        m["seed"] = config.seed ? Json(*config.seed) : Json();
        m["params"] = params;
        m["threads"] = thread_count();
        return m;
    }

    void emit(const std::string& text) const {
        if (config.output.empty()) out << text;
        else write_text_atomic(config.output, text);
    }

    void emit_json(Json body) const {
        body["meta"] = meta();
        emit(body.dump(2) + "\n");
    }

    // Companion JSON for commands whose main output is CSV.
    void emit_sidecar(Json body) const {
        if (config.output.empty()) return;
        body["meta"] = meta();
        write_text_atomic(config.output + ".json", body.dump(2) + "\n");
    }
};

inline long long positive(const Context& c, const std::string& key) {
    const auto v = c.get<long long>(key);
    if (v < 1) throw Error(ErrorKind::ConfigParse, "parameter '" + key + "' must be positive");
    return v;
}

inline Json spectrum_json(const ChaosElement& f) {
    Json pairs = Json::array();
    for (const auto& p : f.spectrum()) pairs.push_back(Json{{"lambda", p.value}, {"vector", vec_to_json(p.vector)}});
    return pairs;
}

inline int cmd_canon(const Context& c) {
    const auto v = read_vector(c.input());
    Json elems = Json::array();
    for (const auto& f : v.elements())
        elems.push_back(Json{{"dim", f.dim()},
                             {"trace", f.trace()},
                             {"variance", f.variance()},
                             {"fourth_cumulant", f.fourth_cumulant()},
                             {"spectrum", spectrum_json(f)}});
    c.emit_json(Json{{"k", v.size()}, {"dim", v.dim()}, {"elements", elems}});
    return kAffirmative;
}

inline int cmd_sample(const Context& c) {
    const auto v = read_vector(c.input());
    const auto batch = sample(v, c.seed, positive(c, "samples"));
    c.emit(batch_to_csv(batch));
    c.emit_sidecar(Json{{"k", batch.k}, {"count", batch.count}, {"sampler", kChaosSamplerId}});
    return kAffirmative;
}

inline int cmd_cov(const Context& c) {
    const auto v = read_vector(c.input());
    c.emit_json(Json{{"k", v.size()}, {"covariance", matrix_to_json(covariance(v))}});
    return kAffirmative;
}

inline int cmd_degeneracy(const Context& c) {
    const auto v = read_vector(c.input());
    const auto family = OperatorFamily::from_vector(v);
    AeOptions opts;
    opts.trials = positive(c, "trials");
    opts.tolerance = c.get<double>("tol");
    opts.delta = c.get<double>("delta");
    const auto verdict = ae_dependent(family, c.seed, opts);
    Json body{{"verdict", to_string(verdict.verdict)},
              {"dependent_fraction", verdict.dependent_fraction},
              {"trials", verdict.trials},
              {"tolerance", verdict.tolerance}};
    if (verdict.verdict == Dependence::DependentAE && family.size() >= 2 && c.get<bool>("extract")) {
        try {
            const auto ex = extract_combination(family, derive_seed(c.seed, 7));
            body["extraction"] = Json{{"c", vec_to_json(ex.c)},
                                      {"D", matrix_to_json(ex.D)},
                                      {"rank_D", ex.rank_D},
                                      {"sigma_ratio", ex.sigma_ratio},
                                      {"attempts", ex.attempts}};
        } catch (const Error& e) {
            body["extraction"] = Json{{"error", std::string(kind_name(e.kind()))}, {"message", e.what()}};
        }
    }
    c.emit_json(body);
    return verdict.verdict == Dependence::DependentAE ? kAffirmative : kNegative;
}

inline int cmd_witness(const Context& c) {
    const auto v = read_vector(c.input());
    WitnessOptions opts;
    opts.budget = static_cast<int>(positive(c, "budget"));
    opts.max_iterations = static_cast<int>(positive(c, "max_iterations"));
    opts.validation_samples = static_cast<int>(positive(c, "validation_samples"));
    try {
        const auto w = diagonal_witness(v, c.seed, opts);
        Json dirs = Json::array();
        for (const auto& d : w.directions) dirs.push_back(vec_to_json(d));
        c.emit_json(Json{{"found", true},
                         {"a", vec_to_json(w.a)},
                         {"b", vec_to_json(w.b)},
                         {"directions", dirs},
                         {"sigma_ratio", w.sigma_ratio},
                         {"identity_residual", w.identity_residual},
                         {"restarts_used", w.restarts_used}});
        return kAffirmative;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::NoWitnessFound) throw;
        c.emit_json(Json{{"found", false}, {"message", e.what()}});
        return kNegative;
    }
}

inline int cmd_polyrel(const Context& c) {
    const auto v = read_vector(c.input());
    RelationOptions opts;
    opts.max_degree = c.get<int>("degree");
    opts.n_samples = positive(c, "samples");
    opts.holdout_tolerance = c.get<double>("holdout_tolerance");
    opts.null_ratio = c.get<double>("null_ratio");
    opts.all_relations = c.get<bool>("all_relations");
    const auto rep = find_relation(v, c.seed, opts);
    c.emit_json(report_to_json(rep));
    return rep.found ? kAffirmative : kNegative;
}

inline int cmd_family(const Context& c) {
    const int k = c.get<int>("k");
    const auto fam = build_family(k);
    const bool ok = verify_identity(fam);
    const auto trials = static_cast<int>(positive(c, "trials"));
    const int min_rank = min_rank_search(fam, trials, c.seed);
    Json body = family_to_json(fam);
    body["verify_identity"] = ok;
    body["min_rank"] = min_rank;
    body["trials"] = trials;
    c.emit_json(body);
    return ok && min_rank == k - 1 ? kAffirmative : kNegative;
}

inline TriangularArray load_array(const Context& c) {
    auto arr = TriangularArray::from_json(read_json(c.input()));
    if (c.params.contains("correlation") && c.has("correlation"))
        arr.set_correlation(TriangularArray::parse_correlation(c.get<std::string>("correlation")));
    return arr.normalize();
}

inline int cmd_limits_classify(const Context& c) {
    const auto arr = load_array(c);
    const auto est = estimate_limits(arr);
    const long long budget = c.get<long long>("samples");
    const auto law = classify(arr, arr.k() > 1 ? budget : 0, c.seed);
    const auto cuts = compute_cuts(arr, est.mu, arr.checkpoints());
    Json comps = Json::array();
    for (int i = 0; i < arr.k(); ++i) {
        const auto si = static_cast<std::size_t>(i);
        const auto lb = lindeberg_check(arr, i);
        const auto& cc = cuts.components[si];
        Json cut_rows = Json::array();
        for (std::size_t t = 0; t < cc.n.size(); ++t) cut_rows.push_back(Json{{"n", cc.n[t]}, {"D", cc.D[t]}, {"C", cc.C[t]}});
        comps.push_back(Json{{"drift", est.drift[si]},
                             {"drift_warning", static_cast<bool>(est.drift_warning[si])},
                             {"lindeberg", to_string(lb.verdict)},
                             {"sup", lb.sup},
                             {"B", cc.B},
                             {"cuts", cut_rows}});
    }
    Json body = law_to_json(law);
    body["k"] = arr.k();
    body["horizon"] = arr.horizon();
    body["checkpoints"] = arr.checkpoints();
    body["correlation"] = to_string(arr.correlation());
    body["components"] = comps;
    body["note"] = "tail bounds are checked at the listed checkpoints up to the horizon only";
    c.emit_json(body);
    return kAffirmative;
}

inline int cmd_limits_report(const Context& c) {
    const auto arr = load_array(c);
    std::vector<long long> grid = c.has("n_grid") ? c.get<std::vector<long long>>("n_grid") : arr.checkpoints();
    ConvergenceOptions opts;
    opts.coupled = c.get<bool>("coupled");
    const auto rep = convergence_report(arr, grid, positive(c, "samples"), c.seed, opts);
    std::ostringstream csv;
    csv << "n,distance\n";
    for (const auto& r : rep.rows) csv << r.n << ',' << format_double(r.distance) << '\n';
    Json rows = Json::array();
    for (const auto& r : rep.rows) rows.push_back(Json{{"n", r.n}, {"distance", r.distance}});
    const bool close = rep.rows.back().distance <= 2 * rep.threshold;
    Json body{{"law", law_to_json(rep.law)},
              {"rows", rows},
              {"same_law_threshold", rep.threshold},
              {"within_twice_threshold", close},
              {"coupled", rep.coupled},
              {"metric", arr.k() == 1 ? "ks" : "energy"}};
    if (c.config.output.empty()) {
        body["meta"] = c.meta();
        c.out << body.dump(2) << "\n";
    } else {
        c.emit(csv.str());
        c.emit_sidecar(body);
    }
    return close ? kAffirmative : kNegative;
}

inline constexpr double kCltKsBound = 0.02;

inline int cmd_clt(const Context& c) {
    const auto arr = load_array(c);
    const long long n = c.has("n") ? c.get<long long>("n") : arr.horizon();
    if (!arr.has_slice(n)) throw Error(ErrorKind::PreconditionViolated, "n=" + std::to_string(n) + " is outside the array");
    const long long samples = positive(c, "samples");
    const boost::math::normal_distribution<> nd;
    Json comps = Json::array();
    bool gaussian = true;
    for (int i = 0; i < arr.k(); ++i) {
        const auto lb = lindeberg_check(arr, i);
        const Slice s = arr.slice(i, n);
        const auto draws = sample_slice(s, samples, derive_seed(c.seed, static_cast<std::uint64_t>(i)));
        const double ks = ks_statistic(draws, [&](double x) { return boost::math::cdf(nd, x); });
        const double k4 = fourth_cumulant(s.coeff);
        gaussian = gaussian && lb.verdict == LindebergVerdict::GaussianLimit && ks < kCltKsBound;
        comps.push_back(Json{{"lindeberg", to_string(lb.verdict)},
                             {"sup", lb.sup},
                             {"checkpoints", lb.n},
                             {"ks_to_normal", ks},
                             {"fourth_cumulant", k4}});
    }
    c.emit_json(Json{{"n", n}, {"samples", samples}, {"ks_bound", kCltKsBound}, {"components", comps}});
    return gaussian ? kAffirmative : kNegative;
}

}  // namespace detail

[[nodiscard]] inline Json error_json(ErrorKind kind, const std::string& message) {
    return Json{{"error", std::string(kind_name(kind))}, {"message", message}};
}

/// Executes one command. Errors go to `err` as a JSON object and exit 2.
[[nodiscard]] inline int run(const ExperimentConfig& config, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    try {
        const auto& table = commands();
        const auto it = table.find(config.command);
        if (it == table.end()) throw Error(ErrorKind::ConfigParse, "unknown command '" + config.command + "'");
        const CommandSpec& entry = it->second;
        if (static_cast<int>(config.inputs.size()) != entry.inputs)
            throw Error(ErrorKind::ConfigParse, config.command + " takes " + std::to_string(entry.inputs) + " input file(s), got " +
                                                    std::to_string(config.inputs.size()));
        if (entry.randomized && !config.seed)
            throw Error(ErrorKind::ConfigParse, config.command + " is randomized and needs an explicit seed");
        if (!config.params.is_object()) throw Error(ErrorKind::ConfigParse, "params must be an object");
        Json params = entry.defaults;
        for (const auto& [key, value] : config.params.items()) {
            if (!entry.defaults.contains(key))
                throw Error(ErrorKind::ConfigParse, "command " + config.command + " has no parameter '" + key + "'");
            params[key] = value;
        }
        for (const auto& path : config.inputs)
            if (!std::filesystem::exists(path)) throw Error(ErrorKind::InputParse, "input file " + path + " does not exist");
        const detail::Context ctx{config, params, config.seed.value_or(0), out};
        try {
            if (config.command == "canon") return detail::cmd_canon(ctx);
            if (config.command == "sample") return detail::cmd_sample(ctx);
            if (config.command == "cov") return detail::cmd_cov(ctx);
            if (config.command == "degeneracy") return detail::cmd_degeneracy(ctx);
            if (config.command == "witness") return detail::cmd_witness(ctx);
            if (config.command == "polyrel") return detail::cmd_polyrel(ctx);
            if (config.command == "family") return detail::cmd_family(ctx);
            if (config.command == "limits-classify") return detail::cmd_limits_classify(ctx);
            if (config.command == "limits-report") return detail::cmd_limits_report(ctx);
            return detail::cmd_clt(ctx);
        } catch (const Json::exception& e) {
            throw Error(ErrorKind::InputParse, e.what());
        }
    } catch (const Error& e) {
        err << error_json(e.kind(), e.what()).dump() << "\n";
    } catch (const std::exception& e) {
        err << error_json(ErrorKind::Internal, e.what()).dump() << "\n";
    }
    return kFailure;
}

}  // namespace chaos2::cli
