#pragma once

// Model-agnostic pieces of MCRB-based model selection: the sandwich bound
// A^-1 B A^-1, the mapped covariance trace used by function-of-parameter
// bounds, and the argmin selector over candidate scores.

#include <vector>

#include <Eigen/Dense>

namespace mcrb {

/// Condition-number gate for inverting A.
inline constexpr double kMaxConditionNumber = 1e12;
/// Relative tolerance for symmetry / PSD checks and negative-trace clamping.
inline constexpr double kSymmetryTolerance = 1e-9;

/// The (A, B) pair of an MCRB: A is the expected Hessian of the assumed
/// log-likelihood, B the expected outer product of its score.
class SandwichPair {
public:
    /// Validates shape, symmetry of both matrices and positive
    /// semidefiniteness of B. Throws DimensionMismatch or InvalidArgument.
    SandwichPair(Eigen::MatrixXd a, Eigen::MatrixXd b);

    const Eigen::MatrixXd& a() const noexcept { return a_; }
    const Eigen::MatrixXd& b() const noexcept { return b_; }
    Eigen::Index dim() const noexcept { return a_.rows(); }

private:
    Eigen::MatrixXd a_;
    Eigen::MatrixXd b_;
};

/// A^-1 B A^-1, symmetrized. Throws SingularMatrix when cond(A) > 1e12.
Eigen::MatrixXd sandwich_mcrb(const SandwichPair& pair);

/// Inverse of a symmetric matrix behind the same condition-number gate.
Eigen::MatrixXd checked_symmetric_inverse(const Eigen::MatrixXd& a);

/// tr(J M J^T). Values in [-1e-9 ||M||, 0) are clamped to zero.
double mapped_cov_trace(const Eigen::MatrixXd& jacobian, const Eigen::MatrixXd& mcrb);

struct CriterionScore {
    int model_index = 0;
    double bias_sq = 0.0;
    double cov_trace = 0.0;
    double total = 0.0;

    /// Builds a score with total = bias_sq + cov_trace.
    static CriterionScore make(int model_index, double bias_sq, double cov_trace);
};

struct SelectionResult {
    int selected = 0;
    std::vector<CriterionScore> scores;

    const CriterionScore& selected_score() const;
};

/// Argmin of total; exact ties go to the smallest model_index.
/// Throws EmptyCandidateSet or NonFiniteScore.
SelectionResult select_model(std::vector<CriterionScore> scores);

}  // namespace mcrb
