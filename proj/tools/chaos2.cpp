#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "chaos2/cli.hpp"

using chaos2::Json;
using chaos2::cli::ExperimentConfig;

namespace {

struct Flags {
    std::string input, out, correlation, n_grid, config_path;
    std::optional<std::uint64_t> seed;
    std::optional<long long> samples, trials, budget, max_iterations, n, k;
    std::optional<int> degree;
    std::optional<double> tol, delta;
    bool no_extract = false, all_relations = false, uncoupled = false;
};

std::vector<long long> parse_grid(const std::string& text) {
    std::vector<long long> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = text.find(',', pos);
        const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            std::size_t used = 0;
            out.push_back(std::stoll(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw chaos2::Error(chaos2::ErrorKind::ConfigParse, "--n-grid expects comma-separated integers, got '" + text + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Second Wiener chaos toolkit: canonical forms, sampling, degeneracy, relations and limit laws."};
    app.require_subcommand(0, 1);
    Flags f;
    app.add_option("--config", f.config_path, "JSON experiment config {command, inputs, seed, params, output}");

    auto common = [&](CLI::App* sub, bool input, bool seeded) {
        if (input) sub->add_option("input", f.input, "input JSON file")->required();
        if (seeded) sub->add_option("--seed", f.seed, "64-bit seed (required)");
        sub->add_option("--out", f.out, "output path (default stdout)");
        return sub;
    };

    common(app.add_subcommand("canon", "spectra, traces and cumulants of a chaos vector"), true, false);
    auto* sample = common(app.add_subcommand("sample", "draw a CSV batch of a chaos vector"), true, true);
    sample->add_option("--samples", f.samples, "number of draws");
    common(app.add_subcommand("cov", "exact covariance matrix"), true, false);
    auto* deg = common(app.add_subcommand("degeneracy", "almost-everywhere dependence of the gradients"), true, true);
    deg->add_option("--trials", f.trials, "random points");
    deg->add_option("--tol", f.tol, "pointwise rank tolerance");
    deg->add_option("--delta", f.delta, "zero-one law margin");
    deg->add_flag("--no-extract", f.no_extract, "skip the degenerate-combination extraction");
    auto* wit = common(app.add_subcommand("witness", "search a rank k-1 combination and its diagonal witness"), true, true);
    wit->add_option("--budget", f.budget, "random restarts");
    wit->add_option("--max-iterations", f.max_iterations, "iterations per restart");
    auto* poly = common(app.add_subcommand("polyrel", "search a polynomial relation"), true, true);
    poly->add_option("--degree", f.degree, "largest degree searched");
    poly->add_option("--samples", f.samples, "training sample size");
    poly->add_flag("--all-relations", f.all_relations, "report every validated relation at the found degree");
    auto* fam = common(app.add_subcommand("family", "build and check the antisymmetric family for k"), false, true);
    fam->add_option("--k", f.k, "number of components");
    fam->add_option("--trials", f.trials, "random rational combinations");
    auto* cls = common(app.add_subcommand("limits-classify", "limit law of a triangular array"), true, true);
    cls->add_option("--samples", f.samples, "Monte Carlo budget for the Gaussian covariance");
    cls->add_option("--correlation", f.correlation, "independent | shared");
    auto* rep = common(app.add_subcommand("limits-report", "distance to the classified limit along n"), true, true);
    rep->add_option("--samples", f.samples, "draws per n");
    rep->add_option("--n-grid", f.n_grid, "comma-separated n values");
    rep->add_flag("--uncoupled", f.uncoupled, "independent draws for F_n and the limit");
    rep->add_option("--correlation", f.correlation, "independent | shared");
    auto* clt = common(app.add_subcommand("clt", "Lindeberg check and KS distance to N(0,1)"), true, true);
    clt->add_option("--samples", f.samples, "draws");
    clt->add_option("--n", f.n, "row of the array (default horizon)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << chaos2::cli::error_json(chaos2::ErrorKind::ConfigParse, e.what()).dump() << "\n";
        return chaos2::cli::kFailure;
    }

    ExperimentConfig config;
    try {
        const auto subs = app.get_subcommands();
        if (!f.config_path.empty()) {
            if (!subs.empty())
                throw chaos2::Error(chaos2::ErrorKind::ConfigParse, "--config cannot be combined with a subcommand");
            config = chaos2::cli::config_from_json(chaos2::read_json(f.config_path));
        } else {
            if (subs.empty()) throw chaos2::Error(chaos2::ErrorKind::ConfigParse, "no command given; see --help");
            config.command = subs.front()->get_name();
            if (!f.input.empty()) config.inputs = {f.input};
            config.seed = f.seed;
            config.output = f.out;
            Json& p = config.params;
            if (f.samples) p["samples"] = *f.samples;
            if (f.trials) p["trials"] = *f.trials;
            if (f.budget) p["budget"] = *f.budget;
            if (f.max_iterations) p["max_iterations"] = *f.max_iterations;
            if (f.n) p["n"] = *f.n;
            if (f.k) p["k"] = *f.k;
            if (f.degree) p["degree"] = *f.degree;
            if (f.tol) p["tol"] = *f.tol;
            if (f.delta) p["delta"] = *f.delta;
            if (f.no_extract) p["extract"] = false;
            if (f.all_relations) p["all_relations"] = true;
            if (f.uncoupled) p["coupled"] = false;
            if (!f.correlation.empty()) p["correlation"] = f.correlation;
            if (!f.n_grid.empty()) p["n_grid"] = parse_grid(f.n_grid);
        }
    } catch (const chaos2::Error& e) {
        std::cerr << chaos2::cli::error_json(e.kind(), e.what()).dump() << "\n";
        return chaos2::cli::kFailure;
    }
    return chaos2::cli::run(config);
}
