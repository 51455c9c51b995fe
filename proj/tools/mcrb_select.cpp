// mcrb-select: run model-selection experiments and the analytic self-test.
//
//   mcrb-select <experiment> --config FILE [--seed N] [--trials K] [--workers W] [--out DIR] [--degrees]
//   mcrb-select selftest
//   mcrb-select plotdata FILE.csv
//   mcrb-select defaults <experiment>
//
// Exit codes: 0 success, 1 runtime error, 2 config error, 3 too many failed trials.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "mcrb/csv.hpp"
#include "mcrb/error.hpp"
#include "mcrb/experiments.hpp"
#include "mcrb/selftest.hpp"

namespace {

using mcrb::exp::ExperimentKind;

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitThreshold = 3;

struct RunArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::optional<std::string> out;
    bool degrees = false;
};

std::filesystem::path resolve_output(const RunArgs& args, const mcrb::exp::ExperimentConfig& cfg) {
    if (args.out) {
        return *args.out;
    }
    if (const char* env = std::getenv("MCRB_SELECT_OUT"); env != nullptr && *env != '\0') {
        return env;
    }
    if (cfg.output_dir) {
        return *cfg.output_dir;
    }
    return "out";
}

void print_summary(const mcrb::exp::ExperimentSummary& sum, bool degrees) {
    const double scale = degrees ? 180.0 / std::numbers::pi : 1.0;
    const bool doa = sum.kind != ExperimentKind::SpectrumRmse;
    for (const auto& p : sum.rmse) {
        std::printf("sweep %-8g", p.sweep_value);
        for (const auto& c : p.criteria) {
            const double v = doa ? c.rmse * scale : c.rmse;
            std::printf("  %s=%.4g (m~%.2f)", c.criterion.c_str(), v, c.mean_selected_m);
        }
        std::printf("  failed=%d\n", p.failures);
    }
    if (doa && !sum.rmse.empty()) {
        std::printf("DOA RMSE shown in %s; CSV values are radians\n", degrees ? "degrees" : "radians");
    }
    for (const auto& b : sum.bounds) {
        std::printf("sweep %-8g m=%-3d mean_bound=%.6g std=%.3g\n", b.sweep_value, b.m, b.mean_bound, b.std_bound);
    }
    for (const auto& f : sum.files) {
        std::printf("wrote %s\n", f.string().c_str());
    }
}

int run(ExperimentKind kind, const RunArgs& args) {
    nlohmann::json doc;
    {
        std::ifstream is(args.config);
        if (!is) {
            throw mcrb::ConfigError("cannot open config " + args.config);
        }
        try {
            doc = nlohmann::json::parse(is);
        } catch (const nlohmann::json::exception& e) {
            throw mcrb::ConfigError(std::string("config: ") + e.what());
        }
    }
    if (!doc.is_object()) {
        throw mcrb::ConfigError("config: top level must be an object");
    }
    if (doc.contains("experiment") && doc["experiment"] != mcrb::exp::to_string(kind)) {
        throw mcrb::ConfigError("config is for '" + doc["experiment"].dump() + "', not " + mcrb::exp::to_string(kind));
    }
    doc["experiment"] = mcrb::exp::to_string(kind);
    if (args.seed) {
        doc["master_seed"] = *args.seed;
    }
    if (args.trials) {
        doc["trials"] = *args.trials;
    }
    const mcrb::exp::ExperimentConfig cfg = mcrb::exp::parse_config(doc);

    mcrb::exp::RunOptions opt;
    opt.workers = args.workers;
    opt.output_dir = resolve_output(args, cfg);
    opt.log = &std::cerr;
    mcrb::exp::ExperimentSummary sum = mcrb::exp::run_experiment(cfg, opt);
    sum.files.push_back(mcrb::csv::emit_plotdata(sum.files.front()));
    print_summary(sum, args.degrees);
    return 0;
}

int selftest() {
    int failed = 0;
    for (const auto& c : mcrb::run_selftest()) {
        std::printf("[%s] %s: %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
        failed += c.passed ? 0 : 1;
    }
    return failed == 0 ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Model selection by the misspecified Cramer-Rao bound"};
    app.require_subcommand(1);

    RunArgs args;
    std::vector<std::pair<ExperimentKind, CLI::App*>> experiments;
    for (auto kind : {ExperimentKind::DoaBound, ExperimentKind::DoaRmseSnr, ExperimentKind::DoaRmseT,
                      ExperimentKind::SpectrumBound, ExperimentKind::SpectrumRmse}) {
        CLI::App* sub = app.add_subcommand(mcrb::exp::to_string(kind), "run the " + mcrb::exp::to_string(kind) +
                                                                            " experiment");
        sub->add_option("--config", args.config, "JSON config file")->required();
        sub->add_option("--seed", args.seed, "master seed (overrides config)");
        sub->add_option("--trials", args.trials, "trials per sweep point (overrides config)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--workers", args.workers, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", args.out, "output directory");
        sub->add_flag("--degrees", args.degrees, "print DOA errors in degrees");
        experiments.emplace_back(kind, sub);
    }
    CLI::App* self = app.add_subcommand("selftest", "run the analytic-identity suite");
    std::string csv_path;
    CLI::App* plot = app.add_subcommand("plotdata", "reshape an experiment CSV into plot data");
    plot->add_option("csv", csv_path, "experiment CSV")->required();
    std::string defaults_for;
    CLI::App* defaults = app.add_subcommand("defaults", "print the desk-scale config of an experiment");
    defaults->add_option("experiment", defaults_for)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (self->parsed()) {
            return selftest();
        }
        if (plot->parsed()) {
            std::printf("wrote %s\n", mcrb::csv::emit_plotdata(csv_path).string().c_str());
            return 0;
        }
        if (defaults->parsed()) {
            std::printf("%s\n", mcrb::exp::default_config(mcrb::exp::parse_kind(defaults_for)).dump(2).c_str());
            return 0;
        }
        for (const auto& [kind, sub] : experiments) {
            if (sub->parsed()) {
                return run(kind, args);
            }
        }
    } catch (const mcrb::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const mcrb::FailureThresholdExceeded& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitThreshold;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitRuntime;
}
