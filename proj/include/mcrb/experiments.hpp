#pragma once

// Monte Carlo harness for the DOA and AR-spectrum experiment families.
// Every trial draws from its own RNG stream derived from
// (master_seed, sweep_index, trial_index), so results do not depend on the
// worker count or scheduling order.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcrb/ar.hpp"

namespace mcrb::exp {

enum class ExperimentKind { DoaBound, DoaRmseSnr, DoaRmseT, SpectrumBound, SpectrumRmse, Selftest };

std::string to_string(ExperimentKind k);
/// Throws ConfigError for an unknown name.
ExperimentKind parse_kind(const std::string& name);

struct DoaSettings {
    int n_sensors = 11;
    double psi_true_deg = 0.0;
    int n_target = 10;
    int n_training = 12;
    double snr_db = 30.0;
    double inr_db = 45.0;  // in SNR sweeps INR - SNR is held fixed
    std::vector<double> clutter_dirs_deg{-46, -43, -40, 40, 43, 46};
    double noise_power = 1.0;
};

struct SpectrumSettings {
    ar::ArmaModel model;
    std::vector<int> orders;
    int n_freq = 1000;
    int t_large = 100000;        // series length for the pseudo-true average
    int pseudo_true_runs = 200;  // number of Yule-Walker fits averaged
    ar::ScoreMode score_mode = ar::ScoreMode::PerSample;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Selftest;
    int trials = 1;
    std::uint64_t master_seed = 0;
    std::optional<std::filesystem::path> output_dir;
    std::vector<double> sweep;
    DoaSettings doa;
    SpectrumSettings spectrum;
    nlohmann::json source;  // echoed into the run manifest

    /// Throws ConfigError.
    void validate() const;
};

/// Parses and validates a config document. Throws ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunOptions {
    int workers = 1;
    std::filesystem::path output_dir = "out";
    std::ostream* log = nullptr;  // per-trial failure messages
};

struct CriterionStats {
    std::string criterion;  // mcrb, aic, aicc, mdl or bound_min
    double rmse = 0.0;
    double rmse_se = 0.0;   // delta-method standard error
    double mean_selected_m = 0.0;
    int trials_ok = 0;
};

struct RmsePoint {
    double sweep_value = 0.0;
    std::vector<CriterionStats> criteria;
    std::vector<double> mean_bound;  // per candidate, trial mean
    int failures = 0;

    const CriterionStats& get(const std::string& name) const;
};

struct BoundRow {
    double sweep_value = 0.0;
    int m = 0;
    double mean_bound = 0.0;
    double std_bound = 0.0;
    double bias_sq = 0.0;    // spectrum only
    double cov_trace = 0.0;  // spectrum only
    int trials_ok = 0;
};

struct ExperimentSummary {
    ExperimentKind kind = ExperimentKind::Selftest;
    std::vector<RmsePoint> rmse;
    std::vector<BoundRow> bounds;
    std::vector<std::filesystem::path> files;
    int trials_total = 0;
    int failures = 0;
    bool threshold_breached = false;
};

/// Runs the configured experiment and writes its CSV files plus a manifest
/// into options.output_dir. Throws FailureThresholdExceeded after writing
/// when more than 1% of the trials at any sweep point failed.
ExperimentSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& options);

/// Aggregation of squared errors, exposed for order-independence checks.
struct ErrorStats {
    double rmse = 0.0;
    double rmse_se = 0.0;
};
ErrorStats summarize_squared_errors(const std::vector<double>& sq_errors);

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

/// Ready-made configs at desk scale, matching the published settings.
nlohmann::json default_config(ExperimentKind kind);

}  // namespace mcrb::exp
