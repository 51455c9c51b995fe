#pragma once

// AR(m) spectral estimation of ARMA data: simulation, Yule-Walker fitting,
// the approximate Gaussian AR likelihood with analytic derivatives, sample
// MCRB, log-spectrum maps and the order-selection criteria built on them.
//
// Parameter vectors follow the ordering [sigma^2, a_m, ..., a_1]; the AR
// coefficients are stored reversed ("coeffs_rev") so that the quadratic form
// uses [a_m, ..., a_1, 1].

#include <vector>

#include <Eigen/Dense>

#include "mcrb/core.hpp"
#include "mcrb/rng.hpp"

namespace mcrb::ar {

enum class InnovationLaw { Gaussian, Laplacian };

/// x_t = -sum_k a_k x_{t-k} + sum_k b_k u_{t-k}.
struct ArmaModel {
    Eigen::VectorXd ar;           // a_1..a_p
    Eigen::VectorXd ma{Eigen::VectorXd::Ones(1)};  // b_0..b_q
    double innov_var = 1.0;
    InnovationLaw innov_law = InnovationLaw::Gaussian;

    int p() const { return static_cast<int>(ar.size()); }
    int q() const { return static_cast<int>(ma.size()) - 1; }

    /// Throws UnstableModel when an AR root lies outside radius 0.999 and
    /// InvalidArgument for a non-positive variance or empty MA part.
    void validate() const;
};

struct ArFit {
    int order = 0;
    double innov_var = 0.0;
    Eigen::VectorXd coeffs_rev;  // [a_m, ..., a_1]
    Eigen::VectorXd partials;    // K_1..K_m

    /// a_1..a_m in natural lag order.
    Eigen::VectorXd coeffs() const { return coeffs_rev.reverse(); }
    /// Parameter vector [sigma^2, a_m, ..., a_1].
    Eigen::VectorXd theta() const;
};

/// Evaluation point of the likelihood, same ordering as ArFit.
struct ArPoint {
    double innov_var = 1.0;
    Eigen::VectorXd coeffs_rev;

    static ArPoint from(const ArFit& fit) { return {fit.innov_var, fit.coeffs_rev}; }
    int order() const { return static_cast<int>(coeffs_rev.size()); }
};

/// Frequencies at which log spectra are evaluated.
class SpectrumGrid {
public:
    /// Throws InvalidArgument unless strictly increasing, nonempty, in [0, pi).
    explicit SpectrumGrid(Eigen::VectorXd omegas);
    /// W equally spaced points pi*l/W, l = 0..W-1.
    static SpectrumGrid uniform(int w);

    const Eigen::VectorXd& omegas() const noexcept { return omegas_; }
    Eigen::Index size() const noexcept { return omegas_.size(); }

private:
    Eigen::VectorXd omegas_;
};

/// Measurement matrices of the exact AR likelihood.
struct EdgeMatrices {
    Eigen::MatrixXd x;    // (T+m) x (m+1), column j holds the series delayed by j
    Eigen::MatrixXd x1;   // m x (m+1), first m rows of x
    Eigen::MatrixXd x2;   // m x (m+1), trailing-edge counterpart
    Eigen::MatrixXd xt;   // first m columns of x
    Eigen::MatrixXd xt1;  // leading m x m block of x1
    Eigen::MatrixXd xt2;  // leading m x m block of x2
};

struct LevinsonResult {
    Eigen::VectorXd partials;               // K_1..K_m
    std::vector<Eigen::VectorXd> coeffs;    // coeffs[n] = a_1..a_n of the order-n predictor
    Eigen::VectorXd variances;              // prediction variance for orders 0..m
};

struct Gradient {
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
};

enum class ScoreMode {
    PerSample,     // sum over t of conditional-density score outer products
    LiteralPaper,  // outer product of the full-data score
};

Eigen::VectorXd simulate_arma(const ArmaModel& model, int n_samples, Rng& rng);

/// Biased autocovariances r_0..r_maxlag (division by T).
Eigen::VectorXd sample_autocov(const Eigen::VectorXd& x, int maxlag);

LevinsonResult levinson_durbin(const Eigen::VectorXd& r, int m);

ArFit yule_walker(const Eigen::VectorXd& r, int m);
/// Fits of every order 0..m from one Levinson-Durbin pass.
std::vector<ArFit> yule_walker_all(const Eigen::VectorXd& r, int m);

/// Reflection coefficients of a prediction polynomial by step-down
/// recursion. Throws DegenerateStep if any |K| >= 1.
Eigen::VectorXd reflection_from_coeffs(const Eigen::VectorXd& coeffs);

/// Exact autocovariances r_0..r_maxlag of a stable AR process with
/// coefficients a_1..a_m (natural order) and innovation variance sigma^2.
Eigen::VectorXd ar_autocov(const Eigen::VectorXd& coeffs, double innov_var, int maxlag);

/// Needs T >= m+1; the likelihood itself requires T >= 3m+1.
EdgeMatrices build_edge_matrices(const Eigen::VectorXd& x, int m);

/// T R_{m+1} - X1^T X1 - X2^T X2 computed without forming X.
Eigen::MatrixXd likelihood_quadratic(const Eigen::VectorXd& x, int m);

/// The approximate log-likelihood and its derivatives for fixed data and
/// order. Precomputes the (m+1) x (m+1) quadratic-form matrix once.
class ApproxLikelihood {
public:
    ApproxLikelihood(const Eigen::VectorXd& x, int m);

    int order() const noexcept { return m_; }
    int samples() const noexcept { return t_; }
    const Eigen::MatrixXd& quadratic() const noexcept { return q_; }

    double value(const ArPoint& point) const;
    Gradient score_and_hessian(const ArPoint& point) const;
    /// Closed-form maximizer: the coefficients solve the quadratic's normal
    /// equations and sigma^2 is the residual quadratic form over T.
    ArPoint maximizer() const;

private:
    void check(const ArPoint& point) const;
    int m_;
    int t_;
    Eigen::MatrixXd q_;
};

double loglik_approx(const ArPoint& point, const Eigen::VectorXd& x);
Gradient score_and_hessian(const ArPoint& point, const Eigen::VectorXd& x);

/// Per-sample conditional-density scores, one row per t = m..T-1.
Eigen::MatrixXd per_sample_scores(const ArPoint& point, const Eigen::VectorXd& x);

/// The (A-hat, B-hat) pair at `point`.
SandwichPair sample_sandwich_pair(const ArPoint& point, const Eigen::VectorXd& x, ScoreMode mode);

/// A^-1 B A^-1 from sample_sandwich_pair.
Eigen::MatrixXd sample_mcrb(const ArFit& fit, const Eigen::VectorXd& x, ScoreMode mode = ScoreMode::PerSample);

/// |polynomial|^2 on the grid is floored at this value.
inline constexpr double kSpectrumFloor = 1e-30;

struct LogSpectrum {
    Eigen::VectorXd values;
    std::vector<Eigen::Index> clamped;  // grid indices where the floor engaged
};

LogSpectrum log_spectrum_ar_checked(const ArFit& fit, const SpectrumGrid& grid);
Eigen::VectorXd log_spectrum_ar(const ArFit& fit, const SpectrumGrid& grid);
Eigen::VectorXd log_spectrum_arma(const ArmaModel& model, const SpectrumGrid& grid);

/// W x (m+1) derivative of the AR log spectrum w.r.t. [sigma^2, a_m..a_1].
Eigen::MatrixXd spectrum_jacobian(const ArFit& fit, const SpectrumGrid& grid);

struct PseudoTrue {
    ArFit theta0;
    Eigen::VectorXd phi0;
};

/// Average of K Yule-Walker fits on independent length-T_large series.
PseudoTrue pseudo_true(const ArmaModel& model, int m, int t_large, int k, Rng& rng, const SpectrumGrid& grid);
/// Same for several orders, sharing one Levinson-Durbin pass per series.
std::vector<PseudoTrue> pseudo_true_all(const ArmaModel& model, const std::vector<int>& orders, int t_large, int k,
                                        Rng& rng, const SpectrumGrid& grid);

struct SpectrumBound {
    double bias_sq = 0.0;    // ||phi - phi0||^2 / W
    double cov_trace = 0.0;  // tr(J MCRB J^T) / W
    double total = 0.0;
    std::vector<double> per_trial_total;  // bias + per-realization covariance contribution
};

/// Population bound at sample size T with a precomputed pseudo-true point.
/// A and B are empirical expectations over K simulated series.
SpectrumBound spectrum_bound(const ArmaModel& model, const PseudoTrue& pt, const SpectrumGrid& grid, int t,
                             int k, Rng& rng, ScoreMode mode = ScoreMode::PerSample);
/// Same, computing the pseudo-true point first from K series of length t_large.
SpectrumBound spectrum_bound(const ArmaModel& model, int m, const SpectrumGrid& grid, int t, int k, Rng& rng,
                             int t_large = 100000);

struct SpectrumCriterionResult {
    SelectionResult selection;
    std::vector<ArFit> fits;              // parallel to candidate orders
    std::vector<int> orders;              // candidates that survived
    std::vector<int> dropped;             // orders violating T >= 3m+1 or failing to fit
    Eigen::VectorXd reference_spectrum;   // highest-order log spectrum
    Eigen::VectorXd selected_spectrum;
};

SpectrumCriterionResult spectrum_criterion(const Eigen::VectorXd& x, const std::vector<int>& orders,
                                           const SpectrumGrid& grid, ScoreMode mode = ScoreMode::PerSample);

struct BaselineScores {
    std::vector<int> orders;
    std::vector<double> aic, mdl, aicc;
    std::vector<bool> aicc_valid;
    int aic_choice = 0, mdl_choice = 0, aicc_choice = 0;  // selected orders
};

/// AIC / MDL / AICc in reflection-coefficient form.
BaselineScores ar_baseline_criteria(double r0, const Eigen::VectorXd& partials, int t, const std::vector<int>& orders);

/// Whittle bound on the mean log-spectrum variance, 2(p+q+1)/T.
double whittle_crb(int p, int q, double t);

}  // namespace mcrb::ar
