#pragma once

// Direction-of-arrival estimation with a clutter covariance learned from
// target-free training snapshots. Candidate model m keeps the m largest
// eigenvalues of the sample covariance and replaces the rest by their mean.

#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mcrb/core.hpp"
#include "mcrb/rng.hpp"

namespace mcrb::doa {

using cdouble = std::complex<double>;

/// Uniform linear array with half-wavelength spacing.
class UlaGeometry {
public:
    explicit UlaGeometry(int n_sensors);
    int n_sensors() const noexcept { return n_; }

private:
    int n_;
};

/// Complex Hermitian matrix. Construction symmetrizes (M + M^H) / 2.
class HermitianMatrix {
public:
    HermitianMatrix() = default;
    explicit HermitianMatrix(const Eigen::MatrixXcd& m);

    const Eigen::MatrixXcd& value() const noexcept { return m_; }
    Eigen::Index size() const noexcept { return m_.rows(); }
    double trace() const { return m_.trace().real(); }

private:
    Eigen::MatrixXcd m_;
};

struct DoaScenario {
    UlaGeometry geometry{11};
    double psi_true = 0.0;             // radians
    Eigen::VectorXcd signals;          // s_d, length D, must sum to zero
    std::vector<double> clutter_dirs;  // radians
    double clutter_power = 0.0;        // per interference, linear
    double noise_power = 1.0;          // linear
    int n_training = 1;

    int n_target() const { return static_cast<int>(signals.size()); }

    /// Throws InvalidArgument when any invariant fails.
    void validate() const;

    /// sigma_c^2 sum_p a(psi_p) a(psi_p)^H + sigma^2 I.
    HermitianMatrix population_covariance() const;
};

/// Candidate covariance of order m with tail-eigenvalue averaging.
struct TruncatedCovariance {
    Eigen::MatrixXcd eigvecs;   // columns ordered by descending eigenvalue
    Eigen::VectorXd eigvals;    // descending, clipped at zero
    int order = 0;
    double tail_var = 0.0;      // mean of the N - m smallest eigenvalues
    HermitianMatrix matrix;

    /// Inverse from the eigen representation. Throws SingularMatrix if the
    /// retained spectrum has condition number above 1e12.
    Eigen::MatrixXcd inverse() const;
};

/// Search range and resolution of the ML DOA estimator.
struct GridSpec {
    double lo = -1.0471975511965976;    // -pi/3
    double hi = 1.0471975511965976;     // +pi/3
    double step = 0.2 * 3.14159265358979323846 / 180.0;
    double tolerance = 1e-6;

    std::vector<double> points() const;
};

Eigen::VectorXcd steering(double psi, const UlaGeometry& geom);
Eigen::VectorXcd steering_derivative(double psi, const UlaGeometry& geom);

/// N x T training snapshots: clutter plus white noise.
Eigen::MatrixXcd simulate_training(const DoaScenario& scn, Rng& rng);
/// N x D target snapshots: a(psi_d) s_j plus clutter plus white noise.
Eigen::MatrixXcd simulate_target(const DoaScenario& scn, Rng& rng);

/// (1/T) sum_t x_t x_t^H.
HermitianMatrix sample_covariance(const Eigen::MatrixXcd& x);

/// Throws InvalidArgument for m outside [0, N-1] and EigenFailure when the
/// eigen-decomposition does not converge.
TruncatedCovariance truncate_covariance(const HermitianMatrix& r, int m);

/// ||X^H R^-1 a(psi)||^2 / (a^H R^-1 a).
double ml_objective(const Eigen::MatrixXcd& x_target, const Eigen::MatrixXcd& r_inv, double psi,
                    const UlaGeometry& geom);

/// Grid scan of the ML objective followed by golden-section refinement
/// inside the bracketing cells.
double ml_doa(const Eigen::MatrixXcd& x_target, const TruncatedCovariance& rm, const GridSpec& search);
double ml_doa(const Eigen::MatrixXcd& x_target, const Eigen::MatrixXcd& r_inv, const GridSpec& search);

/// Closed-form bound on the DOA variance:
///   [adot^H Rm^-1 R Rm^-1 adot] / (2 ||s||^2 [adot^H Rm^-1 adot]^2).
/// This is the (1,1) entry of the full 3x3 sandwich below when sum(s) = 0.
double mcrb_doa(double psi, const HermitianMatrix& r_model, const HermitianMatrix& r_true,
                double signal_energy, const UlaGeometry& geom);

/// Model-dependent factor of mcrb_doa, i.e. without 1 / (2 ||s||^2).
double mcrb_doa_unscaled(double psi, const Eigen::MatrixXcd& r_model_inv, const Eigen::MatrixXcd& r_true,
                         const UlaGeometry& geom);

struct DoaFullBound {
    SandwichPair pair;
    Eigen::MatrixXd mcrb;  // 3x3, parameters (psi, Re s, Im s)
};

/// Full 3x3 A/B matrices over (psi, Re s, Im s) and their sandwich.
DoaFullBound mcrb_doa_full(double psi, const Eigen::VectorXcd& signals, const HermitianMatrix& r_model,
                           const HermitianMatrix& r_true, const UlaGeometry& geom);

struct DoaCriterionResult {
    SelectionResult selection;
    std::vector<double> psi_hat;   // per m; NaN where the candidate was dropped
    Eigen::VectorXd eigvals;       // of the (possibly loaded) sample covariance
    bool loaded = false;           // diagonal loading engaged
    double estimate() const { return psi_hat.at(static_cast<std::size_t>(selection.selected)); }
};

struct DoaCriterionOptions {
    GridSpec search;
    bool diagonal_loading = true;
    double loading_factor = 1e-9;
};

/// Sample covariance (diagonally loaded when T < N or ill-conditioned) and
/// the inverse of every candidate covariance; empty where it is singular.
struct CandidateCovariances {
    HermitianMatrix r_hat;
    Eigen::VectorXd eigvals;  // descending
    bool loaded = false;
    std::vector<std::optional<Eigen::MatrixXcd>> inverses;  // indexed by m
};

CandidateCovariances candidate_covariances(const Eigen::MatrixXcd& x_train, const DoaCriterionOptions& options = {});

/// MCRB criterion over m = 0..N-1 with the full-order sample covariance in
/// place of the true one. Candidates whose covariance is singular are
/// dropped; AllCandidatesFailed if none survive.
DoaCriterionResult doa_criterion(const Eigen::MatrixXcd& x_train, const Eigen::MatrixXcd& x_target,
                                 const DoaCriterionOptions& options = {});
DoaCriterionResult doa_criterion(const CandidateCovariances& cands, const Eigen::MatrixXcd& x_target,
                                 const DoaCriterionOptions& options = {});

struct WaxScores {
    std::vector<double> mdl, aic, aicc;   // indexed by m = 0..N-1
    std::vector<bool> aicc_valid;
    std::vector<double> log_likelihood;   // L^(m) with the constant set to 0
    int mdl_choice = 0, aic_choice = 0, aicc_choice = 0;
};

/// Wax-Kailath MDL / AIC / AICc from descending sample eigenvalues.
WaxScores wax_criteria(const Eigen::VectorXd& eigvals, int n_snapshots);

/// Constant-modulus, alternating-phase signal with sum zero and
/// |s|^2 = SNR * sigma^2. Throws OddTargetCount for odd D.
Eigen::VectorXcd design_signals(int n_target, double snr_db, double noise_power);

double db_to_linear(double db);

}  // namespace mcrb::doa
