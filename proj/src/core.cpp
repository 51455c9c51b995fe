#include "mcrb/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mcrb/error.hpp"

namespace mcrb {

namespace {

bool is_symmetric(const Eigen::MatrixXd& m) {
    const double scale = std::max(m.norm(), 1e-300);
    return (m - m.transpose()).norm() <= kSymmetryTolerance * scale;
}

}  // namespace

SandwichPair::SandwichPair(Eigen::MatrixXd a, Eigen::MatrixXd b) : a_(std::move(a)), b_(std::move(b)) {
    if (a_.rows() != a_.cols() || b_.rows() != b_.cols() || a_.rows() != b_.rows()) {
        throw DimensionMismatch("SandwichPair: A and B must be square and of equal size");
    }
    if (a_.rows() == 0) {
        throw DimensionMismatch("SandwichPair: empty matrices");
    }
    if (!is_symmetric(a_)) {
        throw InvalidArgument("SandwichPair: A is not symmetric");
    }
    if (!is_symmetric(b_)) {
        throw InvalidArgument("SandwichPair: B is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b_, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) {
        throw EigenFailure("SandwichPair: eigen-decomposition of B failed");
    }
    if (eig.eigenvalues().minCoeff() < -kSymmetryTolerance * b_.norm()) {
        throw InvalidArgument("SandwichPair: B is not positive semidefinite");
    }
}

Eigen::MatrixXd checked_symmetric_inverse(const Eigen::MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    if (eig.info() != Eigen::Success) {
        throw EigenFailure("eigen-decomposition failed");
    }
    const Eigen::VectorXd& lambda = eig.eigenvalues();
    const double largest = lambda.cwiseAbs().maxCoeff();
    const double smallest = lambda.cwiseAbs().minCoeff();
    if (!(smallest > 0.0) || largest / smallest > kMaxConditionNumber) {
        std::ostringstream os;
        os << "matrix is singular or ill-conditioned (|lambda| range " << smallest << " .. " << largest << ")";
        throw SingularMatrix(os.str());
    }
    const Eigen::MatrixXd& v = eig.eigenvectors();
    return v * lambda.cwiseInverse().asDiagonal() * v.transpose();
}

Eigen::MatrixXd sandwich_mcrb(const SandwichPair& pair) {
    const Eigen::MatrixXd a_inv = checked_symmetric_inverse(pair.a());
    const Eigen::MatrixXd m = a_inv * pair.b() * a_inv;
    return 0.5 * (m + m.transpose());
}

double mapped_cov_trace(const Eigen::MatrixXd& jacobian, const Eigen::MatrixXd& mcrb) {
    if (mcrb.rows() != mcrb.cols() || jacobian.cols() != mcrb.rows()) {
        throw DimensionMismatch("mapped_cov_trace: J is W x k and M must be k x k");
    }
    // tr(J M J^T) = sum_ij (J M)_ij J_ij
    const double trace = ((jacobian * mcrb).array() * jacobian.array()).sum();
    if (trace < 0.0) {
        if (trace >= -kSymmetryTolerance * mcrb.norm() * std::max(1.0, jacobian.squaredNorm())) {
            return 0.0;
        }
    }
    return trace;
}

CriterionScore CriterionScore::make(int model_index, double bias_sq, double cov_trace) {
    return CriterionScore{model_index, bias_sq, cov_trace, bias_sq + cov_trace};
}

const CriterionScore& SelectionResult::selected_score() const {
    const auto it = std::find_if(scores.begin(), scores.end(),
                                 [this](const CriterionScore& s) { return s.model_index == selected; });
    if (it == scores.end()) {
        throw EmptyCandidateSet("selected model missing from score list");
    }
    return *it;
}

SelectionResult select_model(std::vector<CriterionScore> scores) {
    if (scores.empty()) {
        throw EmptyCandidateSet("select_model: no candidates");
    }
    for (const auto& s : scores) {
        if (!std::isfinite(s.total)) {
            std::ostringstream os;
            os << "select_model: non-finite score for model " << s.model_index;
            throw NonFiniteScore(s.model_index, os.str());
        }
    }
    const CriterionScore* best = &scores.front();
    for (const auto& s : scores) {
        if (s.total < best->total || (s.total == best->total && s.model_index < best->model_index)) {
            best = &s;
        }
    }
    SelectionResult result;
    result.selected = best->model_index;
    result.scores = std::move(scores);
    return result;
}

}  // namespace mcrb
