// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <thread>

#include "mcrb/ar.hpp"
#include "mcrb/error.hpp"
#include "mcrb/experiments.hpp"
#include "mcrb/selftest.hpp"

using namespace mcrb;
using namespace mcrb::exp;

namespace {

struct Outcome {
    bool passed = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            passed = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

RunOptions options(const std::string& name) {
    RunOptions opt;
    opt.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    opt.output_dir = std::filesystem::temp_directory_path() / "mcrb-acceptance" / name;
    return opt;
}

ExperimentSummary run_default(ExperimentKind kind) {
    const ExperimentConfig cfg = parse_config(default_config(kind));
    return run_experiment(cfg, options(to_string(kind)));
}

double min_finite(const std::vector<double>& v) {
    double best = std::numeric_limits<double>::infinity();
    for (double x : v) {
        if (std::isfinite(x)) {
            best = std::min(best, x);
        }
    }
    return best;
}

void analytic_identities(Outcome& o) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<SelftestCheck> checks = run_selftest();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    int ok = 0;
    for (const auto& c : checks) {
        o.require(c.passed, c.name + " (" + c.detail + ")");
        ok += c.passed ? 1 : 0;
    }
    o.require(secs < 60.0, "runtime under one minute");
    o.detail << ok << "/" << checks.size() << " identities hold, " << secs << " s";
}

void doa_bound_shape(Outcome& o) {
    const ExperimentSummary s = run_default(ExperimentKind::DoaBound);
    std::vector<double> b;
    for (const BoundRow& r : s.bounds) {
        b.push_back(r.mean_bound);
    }
    const auto argmin = static_cast<int>(std::min_element(b.begin(), b.end()) - b.begin());
    o.require(argmin == 6, "argmin at m = 6");
    o.require(b[0] > 5.0 * b[6], "B(0) > 5 B(6)");
    o.detail << "argmin m = " << argmin << ", B(0)/B(6) = " << b[0] / b[6];
}

// First sweep value at which the RMSE falls below twice the root of the
// smallest trial-mean bound; +inf when it never does.
double threshold_snr(const std::vector<RmsePoint>& pts, const std::string& crit) {
    for (const RmsePoint& p : pts) {
        if (p.get(crit).rmse < 2.0 * std::sqrt(min_finite(p.mean_bound))) {
            return p.sweep_value;
        }
    }
    return std::numeric_limits<double>::infinity();
}

void doa_rmse_snr(Outcome& o) {
    const ExperimentSummary s = run_default(ExperimentKind::DoaRmseSnr);
    int worse = 0;
    int below_bound = 0;
    for (const RmsePoint& p : s.rmse) {
        const CriterionStats& m = p.get("mcrb");
        for (const char* base : {"aic", "aicc", "mdl"}) {
            const CriterionStats& b = p.get(base);
            const double se = std::hypot(m.rmse_se, b.rmse_se);
            if (m.rmse > b.rmse + se) {
                ++worse;
                o.detail << "mcrb>" << base << "@" << p.sweep_value << "dB ";
            }
        }
        const double root_bound = std::sqrt(min_finite(p.mean_bound));
        for (const char* c : {"mcrb", "aic", "aicc", "mdl"}) {
            below_bound += p.get(c).rmse < root_bound ? 1 : 0;
        }
    }
    const double th_mcrb = threshold_snr(s.rmse, "mcrb");
    double th_base = std::numeric_limits<double>::infinity();
    for (const char* base : {"aic", "aicc", "mdl"}) {
        th_base = std::min(th_base, threshold_snr(s.rmse, base));
    }
    o.require(worse == 0, "MCRB RMSE <= every baseline within 1 SE at every SNR");
    o.require(th_mcrb + 2.0 <= th_base, "MCRB threshold SNR at least 2 dB below the best baseline");
    o.require(below_bound == 0, "every RMSE >= root of the minimal mean bound");
    o.detail << "threshold SNR mcrb = " << th_mcrb << " dB, best baseline = " << th_base
             << " dB, points beaten beyond 1 SE = " << worse << ", RMSEs under the bound = " << below_bound;
}

void spectrum_bound_shape(Outcome& o) {
    const ExperimentSummary s = run_default(ExperimentKind::SpectrumBound);
    const ExperimentConfig cfg = parse_config(default_config(ExperimentKind::SpectrumBound));
    const std::size_t n_orders = cfg.spectrum.orders.size();
    double lo_ratio = std::numeric_limits<double>::infinity();
    double hi_ratio = 0.0;
    for (std::size_t si = 0; si < cfg.sweep.size(); ++si) {
        const double whittle = ar::whittle_crb(cfg.spectrum.model.p(), cfg.spectrum.model.q(), cfg.sweep[si]);
        for (std::size_t oi = 0; oi < n_orders; ++oi) {
            const BoundRow& r = s.bounds[si * n_orders + oi];
            o.require(r.mean_bound > whittle, "bound above Whittle at T=" + std::to_string(int(cfg.sweep[si])) +
                                                  " m=" + std::to_string(r.m));
            if (oi > 0) {
                const BoundRow& prev = s.bounds[si * n_orders + oi - 1];
                o.require(r.bias_sq < prev.bias_sq, "bias decreasing at m=" + std::to_string(r.m));
                o.require(r.cov_trace > prev.cov_trace,
                          "covariance increasing at T=" + std::to_string(int(cfg.sweep[si])) +
                              " m=" + std::to_string(r.m));
            }
            if (si > 0) {
                const BoundRow& prev_t = s.bounds[(si - 1) * n_orders + oi];
                const double ratio = prev_t.cov_trace / r.cov_trace * 4.0 * cfg.sweep[si - 1] / cfg.sweep[si];
                lo_ratio = std::min(lo_ratio, ratio);
                hi_ratio = std::max(hi_ratio, ratio);
                o.require(ratio >= 3.0 && ratio <= 5.0, "1/T scaling at m=" + std::to_string(r.m));
            }
        }
    }
    o.detail << "covariance ratio per 4x T in [" << lo_ratio << ", " << hi_ratio << "]";
}

void spectrum_rmse(Outcome& o) {
    const ExperimentSummary s = run_default(ExperimentKind::SpectrumRmse);
    for (const RmsePoint& p : s.rmse) {
        const CriterionStats& m = p.get("mcrb");
        const CriterionStats& d = p.get("mdl");
        o.require(m.rmse <= d.rmse + std::hypot(m.rmse_se, d.rmse_se),
                  "MCRB <= MDL within 1 SE at T=" + std::to_string(int(p.sweep_value)));
        o.detail << "T=" << p.sweep_value << " mcrb " << m.rmse << " mdl " << d.rmse << "; ";
    }
    const RmsePoint& last = s.rmse.back();
    const double bound = last.get("bound_min").rmse;
    o.require(last.get("mcrb").rmse <= 1.5 * bound, "MCRB RMSE within 1.5x of the root minimal bound at largest T");
    o.detail << "root minimal bound at largest T " << bound;
}

void well_specified(Outcome& o) {
    ar::ArmaModel model;
    model.ar = Eigen::Vector2d(-0.75, 0.5);
    const int t = 100000;
    Rng rng = derive_aux_rng(20240517, 99, 0);
    const Eigen::VectorXd x = ar::simulate_arma(model, t, rng);
    const ar::ArFit fit = ar::yule_walker(ar::sample_autocov(x, 2), 2);
    const Eigen::MatrixXd c = ar::sample_mcrb(fit, x);

    const Eigen::VectorXd r = ar::ar_autocov(model.ar, 1.0, 1);
    Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(3, 3);
    inv(0, 0) = 2.0;
    Eigen::Matrix2d gamma;
    gamma << r(0), r(1), r(1), r(0);
    inv.bottomRightCorner(2, 2) = gamma.inverse();
    inv /= t;
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            if (inv(i, j) != 0.0) {
                worst = std::max(worst, std::abs(c(i, j) - inv(i, j)) / std::abs(inv(i, j)));
            }
        }
    }
    o.require(worst <= 0.2, "sandwich within 20% of inverse Fisher over T");

    const SandwichPair pair = ar::sample_sandwich_pair(ar::ArPoint::from(fit), x, ar::ScoreMode::PerSample);
    const Eigen::VectorXd d = pair.b().diagonal().cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd a_n = d.asDiagonal() * pair.a() * d.asDiagonal();
    const Eigen::MatrixXd b_n = d.asDiagonal() * pair.b() * d.asDiagonal();
    const double ime = (a_n + b_n).norm() / b_n.norm();
    o.require(ime <= 0.1, "A = -B within 10%");
    o.detail << "max entrywise deviation " << worst << ", information-matrix gap " << ime;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
        {"1 analytic identities", analytic_identities},
        {"2 DOA bound minimum at the clutter rank", doa_bound_shape},
        {"3 DOA RMSE versus SNR", doa_rmse_snr},
        {"4 spectrum bound terms", spectrum_bound_shape},
        {"5 spectrum RMSE versus T", spectrum_rmse},
        {"6 well-specified AR(2) sandwich", well_specified},
    };
    int failed = 0;
    for (const auto& [name, body] : criteria) {
        Outcome o;
        const auto start = std::chrono::steady_clock::now();
        try {
            body(o);
        } catch (const std::exception& e) {
            o.passed = false;
            o.detail << "threw: " << e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] criterion %s: %s (%.0f s)\n", o.passed ? "PASS" : "FAIL", name.c_str(),
                    o.detail.str().c_str(), secs);
        std::fflush(stdout);
        failed += o.passed ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
