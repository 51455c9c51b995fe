#include "mcrb/experiments.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <thread>

#include "mcrb/csv.hpp"
#include "mcrb/doa.hpp"
#include "mcrb/error.hpp"
#include "mcrb/rng.hpp"

namespace mcrb::exp {

namespace {

using nlohmann::json;

constexpr double kFailureFraction = 0.01;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const std::vector<std::string> kCriteria{"mcrb", "aic", "aicc", "mdl"};

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

template <typename T>
T field(const json& obj, const char* key) {
    if (!obj.contains(key)) {
        throw ConfigError(std::string("config: missing field '") + key + "'");
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
    }
}

const json& section(const json& doc, const char* key) {
    if (!doc.contains(key) || !doc.at(key).is_object()) {
        throw ConfigError(std::string("config: missing object '") + key + "'");
    }
    return doc.at(key);
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

DoaSettings parse_doa(const json& j) {
    DoaSettings d;
    d.n_sensors = field<int>(j, "n_sensors");
    d.psi_true_deg = field<double>(j, "psi_true_deg");
    d.n_target = field<int>(j, "n_target");
    d.n_training = field<int>(j, "n_training");
    d.snr_db = field<double>(j, "snr_db");
    d.inr_db = field<double>(j, "inr_db");
    d.clutter_dirs_deg = field<std::vector<double>>(j, "clutter_dirs_deg");
    d.noise_power = field<double>(j, "noise_power");
    return d;
}

SpectrumSettings parse_spectrum(const json& j) {
    SpectrumSettings s;
    s.model.ar = to_vector(field<std::vector<double>>(j, "ar"));
    s.model.ma = to_vector(field<std::vector<double>>(j, "ma"));
    s.model.innov_var = field<double>(j, "innov_var");
    const auto law = field<std::string>(j, "innovation");
    if (law == "gaussian") {
        s.model.innov_law = ar::InnovationLaw::Gaussian;
    } else if (law == "laplacian") {
        s.model.innov_law = ar::InnovationLaw::Laplacian;
    } else {
        throw ConfigError("config: innovation must be 'gaussian' or 'laplacian'");
    }
    s.orders = field<std::vector<int>>(j, "orders");
    s.n_freq = field<int>(j, "n_freq");
    s.t_large = field<int>(j, "t_large");
    s.pseudo_true_runs = field<int>(j, "pseudo_true_runs");
    const auto mode = field<std::string>(j, "score_mode");
    if (mode == "per-sample") {
        s.score_mode = ar::ScoreMode::PerSample;
    } else if (mode == "literal") {
        s.score_mode = ar::ScoreMode::LiteralPaper;
    } else {
        throw ConfigError("config: score_mode must be 'per-sample' or 'literal'");
    }
    return s;
}

bool is_doa(ExperimentKind k) {
    return k == ExperimentKind::DoaBound || k == ExperimentKind::DoaRmseSnr || k == ExperimentKind::DoaRmseT;
}

bool is_spectrum(ExperimentKind k) {
    return k == ExperimentKind::SpectrumBound || k == ExperimentKind::SpectrumRmse;
}

bool sweeps_sample_count(ExperimentKind k) {
    return k == ExperimentKind::DoaRmseT || is_spectrum(k);
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return v.empty() ? kNaN : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) {
        return 0.0;
    }
    const double mu = mean_of(v);
    double s = 0.0;
    for (double x : v) {
        s += (x - mu) * (x - mu);
    }
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

struct Failure {
    int sweep_index;
    int trial;
    std::string what;
};

// Outcome of one RMSE trial: squared error and chosen order per criterion,
// plus the per-candidate bound.
struct RmseTrial {
    bool ok = false;
    std::string what;
    std::array<double, 4> sq_err{};
    std::array<int, 4> selected{};
    std::vector<double> bound;
};

struct BoundTrial {
    bool ok = false;
    std::string what;
    std::vector<double> bound;
};

doa::DoaScenario make_scenario(const DoaSettings& d, double snr_db, double inr_db, int n_training) {
    doa::DoaScenario scn;
    scn.geometry = doa::UlaGeometry(d.n_sensors);
    scn.psi_true = deg2rad(d.psi_true_deg);
    scn.signals = doa::design_signals(d.n_target, snr_db, d.noise_power);
    for (double c : d.clutter_dirs_deg) {
        scn.clutter_dirs.push_back(deg2rad(c));
    }
    scn.clutter_power = doa::db_to_linear(inr_db) * d.noise_power;
    scn.noise_power = d.noise_power;
    scn.n_training = n_training;
    scn.validate();
    return scn;
}

doa::DoaScenario scenario_at(const ExperimentConfig& cfg, double sweep_value) {
    const DoaSettings& d = cfg.doa;
    if (cfg.kind == ExperimentKind::DoaRmseT) {
        return make_scenario(d, d.snr_db, d.inr_db, static_cast<int>(sweep_value));
    }
    return make_scenario(d, sweep_value, sweep_value + (d.inr_db - d.snr_db), d.n_training);
}

std::vector<double> doa_bounds(const doa::DoaScenario& scn, const doa::CandidateCovariances& cands,
                               const Eigen::MatrixXcd& r_true) {
    const double energy = scn.signals.squaredNorm();
    std::vector<double> b(cands.inverses.size(), kNaN);
    for (std::size_t m = 0; m < b.size(); ++m) {
        if (cands.inverses[m]) {
            b[m] = doa::mcrb_doa_unscaled(scn.psi_true, *cands.inverses[m], r_true, scn.geometry) / (2.0 * energy);
        }
    }
    return b;
}

RmseTrial doa_rmse_trial(const doa::DoaScenario& scn, const Eigen::MatrixXcd& r_true, Rng& rng) {
    RmseTrial t;
    const Eigen::MatrixXcd x_train = doa::simulate_training(scn, rng);
    const Eigen::MatrixXcd x_target = doa::simulate_target(scn, rng);
    const doa::CandidateCovariances cands = doa::candidate_covariances(x_train);
    const doa::DoaCriterionResult res = doa::doa_criterion(cands, x_target);
    const doa::WaxScores wax = doa::wax_criteria(res.eigvals, scn.n_training);

    const int aicc = wax.aicc_choice < 0 ? 0 : wax.aicc_choice;
    const std::array<int, 4> choice{res.selection.selected, wax.aic_choice, aicc, wax.mdl_choice};
    for (std::size_t c = 0; c < choice.size(); ++c) {
        const double psi = res.psi_hat.at(static_cast<std::size_t>(choice[c]));
        if (!std::isfinite(psi)) {
            throw AllCandidatesFailed(kCriteria[c] + " chose a candidate with singular covariance");
        }
        t.sq_err[c] = (psi - scn.psi_true) * (psi - scn.psi_true);
        t.selected[c] = choice[c];
    }
    t.bound = doa_bounds(scn, cands, r_true);
    t.ok = true;
    return t;
}

struct SpectrumContext {
    ar::SpectrumGrid grid;
    Eigen::VectorXd phi_true;
};

RmseTrial spectrum_rmse_trial(const SpectrumSettings& s, const SpectrumContext& ctx, int n, Rng& rng) {
    RmseTrial t;
    const Eigen::VectorXd x = ar::simulate_arma(s.model, n, rng);
    const ar::SpectrumCriterionResult res = ar::spectrum_criterion(x, s.orders, ctx.grid, s.score_mode);
    const double w = static_cast<double>(ctx.grid.size());

    auto fit_of = [&](int order) -> const ar::ArFit& {
        const auto it = std::find(res.orders.begin(), res.orders.end(), order);
        return res.fits[static_cast<std::size_t>(it - res.orders.begin())];
    };
    const ar::ArFit& top = fit_of(*std::max_element(res.orders.begin(), res.orders.end()));
    const double r0 = ar::sample_autocov(x, 0)(0);
    const ar::BaselineScores base = ar::ar_baseline_criteria(r0, top.partials, n, res.orders);
    if (base.aicc_choice < 0) {
        throw AllCandidatesFailed("AICc has no valid candidate");
    }

    const std::array<int, 4> choice{res.selection.selected, base.aic_choice, base.aicc_choice, base.mdl_choice};
    for (std::size_t c = 0; c < choice.size(); ++c) {
        const Eigen::VectorXd phi =
            c == 0 ? res.selected_spectrum : ar::log_spectrum_ar(fit_of(choice[c]), ctx.grid);
        t.sq_err[c] = (phi - ctx.phi_true).squaredNorm() / w;
        t.selected[c] = choice[c];
    }
    t.ok = true;
    return t;
}

template <typename Trial, typename Fn>
std::vector<Trial> run_trials(const ExperimentConfig& cfg, const RunOptions& opt, int sweep_index, Fn&& body) {
    std::vector<Trial> out(static_cast<std::size_t>(cfg.trials));
    parallel_for(cfg.trials, opt.workers, [&](int i) {
        Rng rng = derive_trial_rng(cfg.master_seed, static_cast<std::uint64_t>(sweep_index),
                                   static_cast<std::uint64_t>(i));
        Trial& slot = out[static_cast<std::size_t>(i)];
        try {
            slot = body(rng);
        } catch (const std::exception& e) {
            slot = Trial{};
            slot.what = e.what();
        }
    });
    return out;
}

template <typename Trial>
int record_failures(const std::vector<Trial>& trials, int sweep_index, std::vector<Failure>& failures) {
    int n = 0;
    for (std::size_t i = 0; i < trials.size(); ++i) {
        if (!trials[i].ok) {
            failures.push_back({sweep_index, static_cast<int>(i), trials[i].what});
            ++n;
        }
    }
    return n;
}

// Per-candidate trial means over successful trials with a finite value.
std::vector<double> candidate_means(const std::vector<std::vector<double>>& bounds, std::size_t n_cand) {
    std::vector<double> out(n_cand, kNaN);
    for (std::size_t m = 0; m < n_cand; ++m) {
        std::vector<double> vals;
        for (const auto& b : bounds) {
            if (std::isfinite(b[m])) {
                vals.push_back(b[m]);
            }
        }
        out[m] = mean_of(vals);
    }
    return out;
}

// Bounds come from the trials themselves unless a population bound per
// candidate is supplied.
RmsePoint summarize_rmse(double sweep_value, const std::vector<RmseTrial>& trials, const std::vector<int>& labels,
                         const std::vector<double>* population_bound = nullptr) {
    RmsePoint p;
    p.sweep_value = sweep_value;
    std::vector<std::vector<double>> bounds;
    for (std::size_t c = 0; c < kCriteria.size(); ++c) {
        std::vector<double> sq;
        double sel = 0.0;
        for (const auto& t : trials) {
            if (t.ok) {
                sq.push_back(t.sq_err[c]);
                sel += labels[static_cast<std::size_t>(t.selected[c])];
            }
        }
        const ErrorStats es = summarize_squared_errors(sq);
        CriterionStats cs;
        cs.criterion = kCriteria[c];
        cs.rmse = es.rmse;
        cs.rmse_se = es.rmse_se;
        cs.trials_ok = static_cast<int>(sq.size());
        cs.mean_selected_m = sq.empty() ? kNaN : sel / static_cast<double>(sq.size());
        p.criteria.push_back(cs);
    }
    for (const auto& t : trials) {
        if (t.ok) {
            bounds.push_back(t.bound);
        } else {
            ++p.failures;
        }
    }
    p.mean_bound = population_bound ? *population_bound : candidate_means(bounds, labels.size());
    CriterionStats bmin;
    bmin.criterion = "bound_min";
    bmin.trials_ok = static_cast<int>(bounds.size());
    double best = std::numeric_limits<double>::infinity();
    bmin.rmse = kNaN;
    bmin.mean_selected_m = kNaN;
    for (std::size_t m = 0; m < labels.size(); ++m) {
        if (std::isfinite(p.mean_bound[m]) && p.mean_bound[m] < best) {
            best = p.mean_bound[m];
            bmin.rmse = std::sqrt(best);
            bmin.mean_selected_m = labels[m];
        }
    }
    p.criteria.push_back(bmin);
    return p;
}

std::vector<int> doa_labels(int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        v[static_cast<std::size_t>(i)] = i;
    }
    return v;
}

// Candidate index inside the position-based label vector.
std::vector<int> spectrum_labels(const SpectrumSettings& s) { return s.orders; }

void remap_selected_to_positions(RmseTrial& t, const std::vector<int>& labels) {
    for (int& sel : t.selected) {
        const auto it = std::find(labels.begin(), labels.end(), sel);
        sel = static_cast<int>(it - labels.begin());
    }
}

SpectrumContext spectrum_context(const SpectrumSettings& s) {
    ar::SpectrumGrid grid = ar::SpectrumGrid::uniform(s.n_freq);
    Eigen::VectorXd phi = ar::log_spectrum_arma(s.model, grid);
    return {std::move(grid), std::move(phi)};
}

void write_manifest(const std::filesystem::path& path, const ExperimentConfig& cfg, const ExperimentSummary& sum,
                    const std::vector<Failure>& failures) {
    json m;
    m["experiment"] = to_string(cfg.kind);
    m["master_seed"] = cfg.master_seed;
    m["trials"] = cfg.trials;
    m["sweep"] = cfg.sweep;
    m["config"] = cfg.source;
    json files = json::array();
    for (const auto& f : sum.files) {
        files.push_back(f.filename().string());
    }
    m["outputs"] = files;
    m["trials_total"] = sum.trials_total;
    m["failures_total"] = sum.failures;
    json fl = json::array();
    for (const auto& f : failures) {
        fl.push_back({{"sweep_index", f.sweep_index}, {"trial", f.trial}, {"error", f.what}});
    }
    m["failures"] = fl;
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw Error("cannot write " + path.string());
    }
    os << m.dump(2) << '\n';
}

void log_failures(const RunOptions& opt, const std::vector<Failure>& failures) {
    if (opt.log == nullptr) {
        return;
    }
    for (const auto& f : failures) {
        *opt.log << "trial failed (sweep " << f.sweep_index << ", trial " << f.trial << "): " << f.what << '\n';
    }
}

csv::Table rmse_table(const ExperimentConfig& cfg, const std::vector<RmsePoint>& points) {
    csv::Table t;
    const bool spectrum = cfg.kind == ExperimentKind::SpectrumRmse;
    if (spectrum) {
        t.header = {"T", "criterion", "rmse_log_spectrum", "mean_selected_m", "trials_ok"};
    } else {
        t.header = {"sweep_var", "sweep_value", "criterion", "rmse_rad", "mean_selected_m", "trials_ok"};
    }
    const std::string sweep_var = cfg.kind == ExperimentKind::DoaRmseT ? "T" : "snr_db";
    for (const auto& p : points) {
        for (const auto& c : p.criteria) {
            std::vector<std::string> row;
            if (!spectrum) {
                row.push_back(sweep_var);
            }
            row.push_back(csv::format_double(p.sweep_value));
            row.push_back(c.criterion);
            row.push_back(csv::format_double(c.rmse));
            row.push_back(csv::format_double(c.mean_selected_m));
            row.push_back(std::to_string(c.trials_ok));
            t.rows.push_back(std::move(row));
        }
    }
    return t;
}

csv::Table bound_table(const std::vector<BoundRow>& rows) {
    csv::Table t;
    t.header = {"sweep_value", "m", "mean_bound", "std_bound"};
    for (const auto& r : rows) {
        t.rows.push_back({csv::format_double(r.sweep_value), std::to_string(r.m), csv::format_double(r.mean_bound),
                          csv::format_double(r.std_bound)});
    }
    return t;
}

void check_threshold(const ExperimentConfig& cfg, const std::vector<int>& failures_per_point, ExperimentSummary& sum) {
    for (int f : failures_per_point) {
        sum.failures += f;
        if (f > kFailureFraction * cfg.trials) {
            sum.threshold_breached = true;
        }
    }
}

void run_doa_bound(const ExperimentConfig& cfg, const RunOptions& opt, ExperimentSummary& sum,
                   std::vector<Failure>& failures, std::vector<int>& per_point) {
    for (std::size_t si = 0; si < cfg.sweep.size(); ++si) {
        const doa::DoaScenario scn = scenario_at(cfg, cfg.sweep[si]);
        const Eigen::MatrixXcd r_true = scn.population_covariance().value();
        const auto idx = static_cast<int>(si);
        auto trials = run_trials<BoundTrial>(cfg, opt, idx, [&](Rng& rng) {
            BoundTrial t;
            const Eigen::MatrixXcd x_train = doa::simulate_training(scn, rng);
            t.bound = doa_bounds(scn, doa::candidate_covariances(x_train), r_true);
            t.ok = true;
            return t;
        });
        per_point.push_back(record_failures(trials, idx, failures));
        for (int m = 0; m < cfg.doa.n_sensors; ++m) {
            std::vector<double> vals;
            for (const auto& t : trials) {
                if (t.ok && std::isfinite(t.bound[static_cast<std::size_t>(m)])) {
                    vals.push_back(t.bound[static_cast<std::size_t>(m)]);
                }
            }
            BoundRow r;
            r.sweep_value = cfg.sweep[si];
            r.m = m;
            r.mean_bound = mean_of(vals);
            r.std_bound = sample_std(vals);
            r.cov_trace = r.mean_bound;
            r.trials_ok = static_cast<int>(vals.size());
            sum.bounds.push_back(r);
        }
    }
}

// Empirical-expectation bound of every candidate at the sweep's T, drawn from
// an auxiliary stream so it does not reuse the trial data.
std::vector<double> population_bounds(const ExperimentConfig& cfg, const std::vector<ar::PseudoTrue>& pts,
                                      const ar::SpectrumGrid& grid, int sweep_index, int workers) {
    const SpectrumSettings& s = cfg.spectrum;
    const int n = static_cast<int>(cfg.sweep[static_cast<std::size_t>(sweep_index)]);
    std::vector<double> out(pts.size(), kNaN);
    parallel_for(static_cast<int>(pts.size()), workers, [&](int oi) {
        const auto i = static_cast<std::size_t>(oi);
        if (n < 3 * pts[i].theta0.order + 1) {
            return;
        }
        Rng rng = derive_aux_rng(cfg.master_seed, 2, static_cast<std::uint64_t>(sweep_index));
        try {
            out[i] = ar::spectrum_bound(s.model, pts[i], grid, n, cfg.trials, rng, s.score_mode).total;
        } catch (const Error&) {
            // left as NaN: the candidate has no bound at this T
        }
    });
    return out;
}

void run_rmse(const ExperimentConfig& cfg, const RunOptions& opt, ExperimentSummary& sum,
              std::vector<Failure>& failures, std::vector<int>& per_point) {
    const bool spectrum = cfg.kind == ExperimentKind::SpectrumRmse;
    const std::vector<int> labels = spectrum ? spectrum_labels(cfg.spectrum) : doa_labels(cfg.doa.n_sensors);
    std::optional<SpectrumContext> ctx;
    std::vector<ar::PseudoTrue> pts;
    if (spectrum) {
        const SpectrumSettings& s = cfg.spectrum;
        ctx = spectrum_context(s);
        Rng aux = derive_aux_rng(cfg.master_seed, 1, 0);
        pts = ar::pseudo_true_all(s.model, s.orders, s.t_large, s.pseudo_true_runs, aux, ctx->grid);
    }
    for (std::size_t si = 0; si < cfg.sweep.size(); ++si) {
        const auto idx = static_cast<int>(si);
        std::vector<RmseTrial> trials;
        if (spectrum) {
            const int n = static_cast<int>(cfg.sweep[si]);
            trials = run_trials<RmseTrial>(cfg, opt, idx, [&](Rng& rng) {
                RmseTrial t = spectrum_rmse_trial(cfg.spectrum, *ctx, n, rng);
                remap_selected_to_positions(t, labels);
                return t;
            });
            const std::vector<double> bound = population_bounds(cfg, pts, ctx->grid, idx, opt.workers);
            per_point.push_back(record_failures(trials, idx, failures));
            sum.rmse.push_back(summarize_rmse(cfg.sweep[si], trials, labels, &bound));
            continue;
        } else {
            const doa::DoaScenario scn = scenario_at(cfg, cfg.sweep[si]);
            const Eigen::MatrixXcd r_true = scn.population_covariance().value();
            trials = run_trials<RmseTrial>(cfg, opt, idx, [&](Rng& rng) { return doa_rmse_trial(scn, r_true, rng); });
        }
        per_point.push_back(record_failures(trials, idx, failures));
        sum.rmse.push_back(summarize_rmse(cfg.sweep[si], trials, labels));
    }
}

void run_spectrum_bound(const ExperimentConfig& cfg, const RunOptions& opt, ExperimentSummary& sum,
                        std::vector<Failure>& failures, std::vector<int>& per_point) {
    const SpectrumSettings& s = cfg.spectrum;
    const SpectrumContext ctx = spectrum_context(s);
    Rng aux = derive_aux_rng(cfg.master_seed, 1, 0);
    const std::vector<ar::PseudoTrue> pts =
        ar::pseudo_true_all(s.model, s.orders, s.t_large, s.pseudo_true_runs, aux, ctx.grid);

    const std::size_t n_orders = s.orders.size();
    const std::size_t n_tasks = cfg.sweep.size() * n_orders;
    std::vector<std::optional<ar::SpectrumBound>> results(n_tasks);
    std::vector<std::string> errors(n_tasks);
    parallel_for(static_cast<int>(n_tasks), opt.workers, [&](int task) {
        const auto ti = static_cast<std::size_t>(task);
        const std::size_t si = ti / n_orders;
        const std::size_t oi = ti % n_orders;
        // Every order sees the same K series at a given T.
        Rng rng = derive_trial_rng(cfg.master_seed, si, 0);
        try {
            results[ti] = ar::spectrum_bound(s.model, pts[oi], ctx.grid, static_cast<int>(cfg.sweep[si]), cfg.trials,
                                             rng, s.score_mode);
        } catch (const std::exception& e) {
            errors[ti] = e.what();
        }
    });

    csv::Table terms;
    terms.header = {"sweep_value", "m", "bias_sq", "cov_trace", "total", "whittle_crb"};
    for (std::size_t si = 0; si < cfg.sweep.size(); ++si) {
        int failed = 0;
        const double whittle = ar::whittle_crb(s.model.p(), s.model.q(), cfg.sweep[si]);
        for (std::size_t oi = 0; oi < n_orders; ++oi) {
            const std::size_t ti = si * n_orders + oi;
            BoundRow r;
            r.sweep_value = cfg.sweep[si];
            r.m = s.orders[oi];
            if (results[ti]) {
                const ar::SpectrumBound& b = *results[ti];
                r.mean_bound = b.total;
                r.std_bound = sample_std(b.per_trial_total);
                r.bias_sq = b.bias_sq;
                r.cov_trace = b.cov_trace;
                r.trials_ok = cfg.trials;
            } else {
                r.mean_bound = r.std_bound = r.bias_sq = r.cov_trace = kNaN;
                failures.push_back({static_cast<int>(si), static_cast<int>(oi), errors[ti]});
                failed = cfg.trials;
            }
            terms.rows.push_back({csv::format_double(r.sweep_value), std::to_string(r.m),
                                  csv::format_double(r.bias_sq), csv::format_double(r.cov_trace),
                                  csv::format_double(r.mean_bound), csv::format_double(whittle)});
            sum.bounds.push_back(r);
        }
        per_point.push_back(failed);
    }
    const auto path = opt.output_dir / (to_string(cfg.kind) + "_terms.csv");
    csv::write(path, terms);
    sum.files.push_back(path);
}

}  // namespace

std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::DoaBound: return "doa-bound";
        case ExperimentKind::DoaRmseSnr: return "doa-rmse-snr";
        case ExperimentKind::DoaRmseT: return "doa-rmse-T";
        case ExperimentKind::SpectrumBound: return "spectrum-bound";
        case ExperimentKind::SpectrumRmse: return "spectrum-rmse";
        case ExperimentKind::Selftest: return "selftest";
    }
    return "unknown";
}

ExperimentKind parse_kind(const std::string& name) {
    for (auto k : {ExperimentKind::DoaBound, ExperimentKind::DoaRmseSnr, ExperimentKind::DoaRmseT,
                   ExperimentKind::SpectrumBound, ExperimentKind::SpectrumRmse, ExperimentKind::Selftest}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw ConfigError("unknown experiment '" + name + "'");
}

const CriterionStats& RmsePoint::get(const std::string& name) const {
    for (const auto& c : criteria) {
        if (c.criterion == name) {
            return c;
        }
    }
    throw InvalidArgument("no criterion named " + name);
}

void ExperimentConfig::validate() const {
    if (kind == ExperimentKind::Selftest) {
        return;
    }
    if (trials < 1) {
        throw ConfigError("config: trials must be >= 1");
    }
    if (sweep.empty()) {
        throw ConfigError("config: sweep must be nonempty");
    }
    for (double v : sweep) {
        if (!std::isfinite(v)) {
            throw ConfigError("config: sweep values must be finite");
        }
        if (sweeps_sample_count(kind) && (v < 1.0 || v != std::floor(v))) {
            throw ConfigError("config: sample-count sweep values must be positive integers");
        }
    }
    try {
        if (is_doa(kind)) {
            if (doa.n_training < 1 || doa.clutter_dirs_deg.size() >= static_cast<std::size_t>(doa.n_sensors)) {
                throw ConfigError("config: need n_training >= 1 and fewer clutter directions than sensors");
            }
            scenario_at(*this, sweep.front());
        }
        if (is_spectrum(kind)) {
            spectrum.model.validate();
            if (spectrum.orders.empty()) {
                throw ConfigError("config: orders must be nonempty");
            }
            for (int m : spectrum.orders) {
                if (m < 1) {
                    throw ConfigError("config: orders must be positive");
                }
            }
            if (std::adjacent_find(spectrum.orders.begin(), spectrum.orders.end(), std::greater_equal<>()) !=
                spectrum.orders.end()) {
                throw ConfigError("config: orders must be strictly increasing");
            }
            if (spectrum.n_freq < 1 || spectrum.pseudo_true_runs < 1) {
                throw ConfigError("config: n_freq and pseudo_true_runs must be positive");
            }
            const int top = spectrum.orders.back();
            if (spectrum.t_large < 3 * top + 1) {
                throw ConfigError("config: t_large must be at least 3 * max order + 1");
            }
            const int need = kind == ExperimentKind::SpectrumBound ? top : spectrum.orders.front();
            for (double v : sweep) {
                if (v < 3 * need + 1) {
                    throw ConfigError("config: sweep T too small for the candidate orders");
                }
            }
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

ExperimentConfig parse_config(const json& doc) {
    if (!doc.is_object()) {
        throw ConfigError("config: top level must be an object");
    }
    ExperimentConfig cfg;
    cfg.source = doc;
    cfg.kind = parse_kind(field<std::string>(doc, "experiment"));
    if (doc.contains("output_dir")) {
        cfg.output_dir = field<std::string>(doc, "output_dir");
    }
    if (cfg.kind == ExperimentKind::Selftest) {
        return cfg;
    }
    cfg.trials = field<int>(doc, "trials");
    if (!doc.contains("master_seed") || !doc.at("master_seed").is_number_integer() ||
        (!doc.at("master_seed").is_number_unsigned() && doc.at("master_seed").get<std::int64_t>() < 0)) {
        throw ConfigError("config: master_seed must be a non-negative integer");
    }
    cfg.master_seed = doc.at("master_seed").get<std::uint64_t>();
    cfg.sweep = field<std::vector<double>>(doc, "sweep");
    if (is_doa(cfg.kind)) {
        cfg.doa = parse_doa(section(doc, "doa"));
    } else {
        cfg.spectrum = parse_spectrum(section(doc, "spectrum"));
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot open config " + path.string());
    }
    json doc;
    try {
        doc = json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return parse_config(doc);
}

ErrorStats summarize_squared_errors(const std::vector<double>& sq_errors) {
    ErrorStats out;
    if (sq_errors.empty()) {
        out.rmse = out.rmse_se = kNaN;
        return out;
    }
    // Sorting first makes the sum independent of trial order.
    std::vector<double> v = sq_errors;
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    const double mse = mean_of(v);
    out.rmse = std::sqrt(mse);
    const double sd = sample_std(v);
    out.rmse_se = out.rmse > 0.0 ? sd / std::sqrt(n) / (2.0 * out.rmse) : 0.0;
    return out;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    const int k = std::clamp(workers, 1, std::max(1, n));
    if (k == 1) {
        for (int i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex mu;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(k));
    for (int w = 0; w < k; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!first_error) {
                        first_error = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

ExperimentSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& opt) {
    cfg.validate();
    if (cfg.kind == ExperimentKind::Selftest) {
        throw ConfigError("selftest is run through run_selftest");
    }
    ExperimentSummary sum;
    sum.kind = cfg.kind;
    sum.trials_total = cfg.trials * static_cast<int>(cfg.sweep.size());
    std::filesystem::create_directories(opt.output_dir);

    std::vector<Failure> failures;
    std::vector<int> per_point;
    const auto main_csv = opt.output_dir / (to_string(cfg.kind) + ".csv");
    switch (cfg.kind) {
        case ExperimentKind::DoaBound:
            run_doa_bound(cfg, opt, sum, failures, per_point);
            csv::write(main_csv, bound_table(sum.bounds));
            break;
        case ExperimentKind::SpectrumBound:
            run_spectrum_bound(cfg, opt, sum, failures, per_point);
            csv::write(main_csv, bound_table(sum.bounds));
            break;
        default:
            run_rmse(cfg, opt, sum, failures, per_point);
            csv::write(main_csv, rmse_table(cfg, sum.rmse));
            break;
    }
    sum.files.insert(sum.files.begin(), main_csv);
    check_threshold(cfg, per_point, sum);
    const auto manifest = opt.output_dir / (to_string(cfg.kind) + "_manifest.json");
    sum.files.push_back(manifest);
    write_manifest(manifest, cfg, sum, failures);
    log_failures(opt, failures);
    if (sum.threshold_breached) {
        throw FailureThresholdExceeded("more than 1% of trials failed at a sweep point; see " + manifest.string());
    }
    return sum;
}

json default_config(ExperimentKind kind) {
    json doa = {{"n_sensors", 11},     {"psi_true_deg", 0.0},  {"n_target", 10},
                {"n_training", 12},    {"snr_db", 30.0},       {"inr_db", 45.0},
                {"clutter_dirs_deg", {-46.0, -43.0, -40.0, 40.0, 43.0, 46.0}},
                {"noise_power", 1.0}};
    json spectrum = {{"ar", json::array()},
                     {"ma", std::vector<double>(6, 1.0 / 6.0)},
                     {"innov_var", 1.0},
                     {"innovation", "laplacian"},
                     {"orders", {5, 10, 20, 40, 80}},
                     {"n_freq", 1000},
                     {"t_large", 100000},
                     {"pseudo_true_runs", 200},
                     {"score_mode", "per-sample"}};
    json cfg = {{"experiment", to_string(kind)}, {"master_seed", std::uint64_t{20240517}}};
    switch (kind) {
        case ExperimentKind::DoaBound:
            cfg["trials"] = 500;
            cfg["sweep"] = {30.0};
            cfg["doa"] = doa;
            break;
        case ExperimentKind::DoaRmseSnr: {
            std::vector<double> snr;
            for (int s = 0; s <= 30; s += 2) {
                snr.push_back(s);
            }
            cfg["trials"] = 500;
            cfg["sweep"] = snr;
            cfg["doa"] = doa;
            break;
        }
        case ExperimentKind::DoaRmseT:
            doa["snr_db"] = 15.0;
            doa["inr_db"] = 30.0;
            cfg["trials"] = 500;
            cfg["sweep"] = {12, 16, 24, 36, 48, 72, 96};
            cfg["doa"] = doa;
            break;
        case ExperimentKind::SpectrumBound:
            cfg["trials"] = 200;
            cfg["sweep"] = {500, 2000, 8000, 32000};
            cfg["spectrum"] = spectrum;
            break;
        case ExperimentKind::SpectrumRmse: {
            std::vector<int> orders;
            for (int m = 5; m <= 80; m += 5) {
                orders.push_back(m);
            }
            spectrum["orders"] = orders;
            cfg["trials"] = 200;
            cfg["sweep"] = {500, 2000, 8000};
            cfg["spectrum"] = spectrum;
            break;
        }
        case ExperimentKind::Selftest:
            break;
    }
    return cfg;
}

}  // namespace mcrb::exp
