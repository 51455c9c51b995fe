#include "mcrb/doa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "mcrb/error.hpp"

namespace mcrb::doa {

namespace {

constexpr double kPi = std::numbers::pi;

// Eigen-decomposition sorted by descending eigenvalue, negatives clipped.
struct SortedEigen {
    Eigen::MatrixXcd vectors;
    Eigen::VectorXd values;
};

SortedEigen sorted_eigen(const HermitianMatrix& r) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(r.value());
    if (eig.info() != Eigen::Success) {
        throw EigenFailure("truncate_covariance: eigen-decomposition did not converge");
    }
    const Eigen::Index n = r.size();
    SortedEigen out;
    out.vectors.resize(n, n);
    out.values.resize(n);
    // Eigen returns ascending order.
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values(i) = std::max(eig.eigenvalues()(n - 1 - i), 0.0);
        out.vectors.col(i) = eig.eigenvectors().col(n - 1 - i);
    }
    return out;
}

TruncatedCovariance truncate_from_eigen(const SortedEigen& e, int m) {
    const auto n = static_cast<int>(e.values.size());
    TruncatedCovariance t;
    t.eigvecs = e.vectors;
    t.eigvals = e.values;
    t.order = m;
    t.tail_var = e.values.tail(n - m).mean();
    Eigen::VectorXd kept = e.values;
    kept.tail(n - m).setConstant(t.tail_var);
    t.matrix = HermitianMatrix(e.vectors * kept.cast<cdouble>().asDiagonal() * e.vectors.adjoint());
    return t;
}

Eigen::MatrixXcd steering_matrix(const std::vector<double>& psis, const UlaGeometry& geom) {
    Eigen::MatrixXcd s(geom.n_sensors(), static_cast<Eigen::Index>(psis.size()));
    for (std::size_t k = 0; k < psis.size(); ++k) {
        s.col(static_cast<Eigen::Index>(k)) = steering(psis[k], geom);
    }
    return s;
}

Eigen::MatrixXcd checked_hermitian_inverse(const HermitianMatrix& r) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(r.value());
    if (eig.info() != Eigen::Success) {
        throw EigenFailure("eigen-decomposition did not converge");
    }
    const Eigen::VectorXd& lambda = eig.eigenvalues();
    const double largest = lambda.cwiseAbs().maxCoeff();
    const double smallest = lambda.cwiseAbs().minCoeff();
    if (!(smallest > 0.0) || largest / smallest > kMaxConditionNumber) {
        throw SingularMatrix("covariance is singular or ill-conditioned");
    }
    const Eigen::MatrixXcd& v = eig.eigenvectors();
    return v * lambda.cwiseInverse().cast<cdouble>().asDiagonal() * v.adjoint();
}

double quad(const Eigen::VectorXcd& u, const Eigen::MatrixXcd& m, const Eigen::VectorXcd& v) {
    return (u.adjoint() * m * v)(0, 0).real();
}

cdouble cquad(const Eigen::VectorXcd& u, const Eigen::MatrixXcd& m, const Eigen::VectorXcd& v) {
    return (u.adjoint() * m * v)(0, 0);
}

void add_complex_gaussian(Eigen::MatrixXcd& out, double variance, Rng& rng) {
    const double scale = std::sqrt(variance / 2.0);
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            const double re = standard_normal(rng);
            const double im = standard_normal(rng);
            out(i, j) += scale * cdouble(re, im);
        }
    }
}

// Clutter plus noise for `cols` snapshots, clutter drawn first per snapshot.
Eigen::MatrixXcd disturbance(const DoaScenario& scn, Eigen::Index cols, Rng& rng) {
    const int n = scn.geometry.n_sensors();
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n, cols);
    if (!scn.clutter_dirs.empty() && scn.clutter_power > 0.0) {
        const Eigen::MatrixXcd a = steering_matrix(scn.clutter_dirs, scn.geometry);
        Eigen::MatrixXcd gamma = Eigen::MatrixXcd::Zero(a.cols(), cols);
        add_complex_gaussian(gamma, scn.clutter_power, rng);
        out += a * gamma;
    }
    add_complex_gaussian(out, scn.noise_power, rng);
    return out;
}

}  // namespace

UlaGeometry::UlaGeometry(int n_sensors) : n_(n_sensors) {
    if (n_sensors < 2) {
        throw InvalidArgument("UlaGeometry: at least two sensors required");
    }
}

HermitianMatrix::HermitianMatrix(const Eigen::MatrixXcd& m) {
    if (m.rows() != m.cols()) {
        throw DimensionMismatch("HermitianMatrix: matrix must be square");
    }
    m_ = 0.5 * (m + m.adjoint());
}

void DoaScenario::validate() const {
    if (signals.size() < 1) {
        throw InvalidArgument("DoaScenario: need at least one target snapshot");
    }
    if (n_training < 1) {
        throw InvalidArgument("DoaScenario: need at least one training snapshot");
    }
    if (!(noise_power > 0.0) || clutter_power < 0.0 || (!clutter_dirs.empty() && !(clutter_power > 0.0))) {
        throw InvalidArgument("DoaScenario: powers must be positive");
    }
    auto in_range = [](double psi) { return std::isfinite(psi) && std::abs(psi) < kPi / 2.0; };
    if (!in_range(psi_true) || !std::all_of(clutter_dirs.begin(), clutter_dirs.end(), in_range)) {
        throw InvalidArgument("DoaScenario: directions must satisfy |psi| < pi/2");
    }
    if (std::abs(signals.sum()) > 1e-12 * std::max(signals.norm(), 1e-300)) {
        throw InvalidArgument("DoaScenario: target signals must sum to zero");
    }
}

HermitianMatrix DoaScenario::population_covariance() const {
    const int n = geometry.n_sensors();
    Eigen::MatrixXcd r = noise_power * Eigen::MatrixXcd::Identity(n, n);
    for (double psi : clutter_dirs) {
        const Eigen::VectorXcd a = steering(psi, geometry);
        r += clutter_power * a * a.adjoint();
    }
    return HermitianMatrix(r);
}

Eigen::MatrixXcd TruncatedCovariance::inverse() const {
    const auto n = static_cast<int>(eigvals.size());
    Eigen::VectorXd kept = eigvals;
    kept.tail(n - order).setConstant(tail_var);
    const double largest = kept.maxCoeff();
    const double smallest = kept.minCoeff();
    if (!(smallest > 0.0) || largest / smallest > kMaxConditionNumber) {
        std::ostringstream os;
        os << "truncated covariance of order " << order << " is singular";
        throw SingularMatrix(os.str());
    }
    return eigvecs * kept.cwiseInverse().cast<cdouble>().asDiagonal() * eigvecs.adjoint();
}

std::vector<double> GridSpec::points() const {
    if (!(step > 0.0) || !(hi > lo)) {
        throw InvalidArgument("GridSpec: need hi > lo and step > 0");
    }
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> pts(count);
    for (std::size_t k = 0; k < count; ++k) {
        pts[k] = lo + static_cast<double>(k) * step;
    }
    return pts;
}

Eigen::VectorXcd steering(double psi, const UlaGeometry& geom) {
    const int n = geom.n_sensors();
    const double centre = (n - 1) / 2.0;
    const double norm = 1.0 / std::sqrt(static_cast<double>(n));
    const double s = std::sin(psi);
    Eigen::VectorXcd a(n);
    for (int i = 0; i < n; ++i) {
        a(i) = norm * std::polar(1.0, kPi * (i - centre) * s);
    }
    return a;
}

Eigen::VectorXcd steering_derivative(double psi, const UlaGeometry& geom) {
    const int n = geom.n_sensors();
    const double centre = (n - 1) / 2.0;
    const double c = std::cos(psi);
    Eigen::VectorXcd a = steering(psi, geom);
    for (int i = 0; i < n; ++i) {
        a(i) *= cdouble(0.0, kPi * (i - centre) * c);
    }
    return a;
}

Eigen::MatrixXcd simulate_training(const DoaScenario& scn, Rng& rng) {
    return disturbance(scn, scn.n_training, rng);
}

Eigen::MatrixXcd simulate_target(const DoaScenario& scn, Rng& rng) {
    Eigen::MatrixXcd x = disturbance(scn, scn.n_target(), rng);
    x += steering(scn.psi_true, scn.geometry) * scn.signals.transpose();
    return x;
}

HermitianMatrix sample_covariance(const Eigen::MatrixXcd& x) {
    if (x.cols() < 1) {
        throw InvalidArgument("sample_covariance: need at least one snapshot");
    }
    return HermitianMatrix(x * x.adjoint() / static_cast<double>(x.cols()));
}

TruncatedCovariance truncate_covariance(const HermitianMatrix& r, int m) {
    if (m < 0 || m >= r.size()) {
        throw InvalidArgument("truncate_covariance: order must lie in [0, N-1]");
    }
    return truncate_from_eigen(sorted_eigen(r), m);
}

double ml_objective(const Eigen::MatrixXcd& x_target, const Eigen::MatrixXcd& r_inv, double psi,
                    const UlaGeometry& geom) {
    const Eigen::VectorXcd a = steering(psi, geom);
    const Eigen::VectorXcd w = r_inv * a;
    return (x_target.adjoint() * w).squaredNorm() / a.dot(w).real();
}

double ml_doa(const Eigen::MatrixXcd& x_target, const TruncatedCovariance& rm, const GridSpec& search) {
    return ml_doa(x_target, rm.inverse(), search);
}

double ml_doa(const Eigen::MatrixXcd& x_target, const Eigen::MatrixXcd& r_inv, const GridSpec& search) {
    const UlaGeometry geom(static_cast<int>(r_inv.rows()));
    if (x_target.rows() != r_inv.rows()) {
        throw DimensionMismatch("ml_doa: data and covariance sizes differ");
    }
    const std::vector<double> grid = search.points();
    const Eigen::MatrixXcd a = steering_matrix(grid, geom);
    const Eigen::MatrixXcd w = r_inv * a;
    const Eigen::VectorXd num = (x_target.adjoint() * w).colwise().squaredNorm();
    const Eigen::VectorXd den = (a.conjugate().cwiseProduct(w)).colwise().sum().real();
    Eigen::Index best = 0;
    (num.array() / den.array()).maxCoeff(&best);

    const auto k = static_cast<std::size_t>(best);
    double lo = grid[k > 0 ? k - 1 : 0];
    double hi = grid[std::min(k + 1, grid.size() - 1)];
    auto f = [&](double psi) { return ml_objective(x_target, r_inv, psi, geom); };

    // Golden-section maximization on [lo, hi].
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - inv_phi * (hi - lo);
    double d = lo + inv_phi * (hi - lo);
    double fc = f(c);
    double fd = f(d);
    while (hi - lo > search.tolerance) {
        if (fc > fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    const double refined = 0.5 * (lo + hi);
    // Keep the grid point if refinement landed on a lower value (flat or
    // boundary peaks).
    return f(refined) >= f(grid[k]) ? refined : grid[k];
}

double mcrb_doa_unscaled(double psi, const Eigen::MatrixXcd& r_model_inv, const Eigen::MatrixXcd& r_true,
                         const UlaGeometry& geom) {
    const Eigen::VectorXcd adot = steering_derivative(psi, geom);
    const Eigen::VectorXcd w = r_model_inv * adot;
    const double num = (w.adjoint() * r_true * w)(0, 0).real();
    const double den = adot.dot(w).real();
    return num / (den * den);
}

double mcrb_doa(double psi, const HermitianMatrix& r_model, const HermitianMatrix& r_true,
                double signal_energy, const UlaGeometry& geom) {
    if (!(signal_energy > 0.0)) {
        throw InvalidArgument("mcrb_doa: signal energy must be positive");
    }
    checked_hermitian_inverse(r_true);
    const Eigen::MatrixXcd r_inv = checked_hermitian_inverse(r_model);
    return mcrb_doa_unscaled(psi, r_inv, r_true.value(), geom) / (2.0 * signal_energy);
}

DoaFullBound mcrb_doa_full(double psi, const Eigen::VectorXcd& signals, const HermitianMatrix& r_model,
                           const HermitianMatrix& r_true, const UlaGeometry& geom) {
    const auto d = static_cast<double>(signals.size());
    if (signals.size() < 1) {
        throw InvalidArgument("mcrb_doa_full: need at least one target snapshot");
    }
    const double energy = signals.squaredNorm();
    if (!(energy > 0.0)) {
        throw InvalidArgument("mcrb_doa_full: signal energy must be positive");
    }
    checked_hermitian_inverse(r_true);
    const Eigen::MatrixXcd r_inv = checked_hermitian_inverse(r_model);
    const Eigen::MatrixXcd sandwiched = r_inv * r_true.value() * r_inv;
    const Eigen::VectorXcd a = steering(psi, geom);
    const Eigen::VectorXcd adot = steering_derivative(psi, geom);
    const cdouble mean_conj = std::conj(signals.mean());

    const double a_j = quad(adot, sandwiched, adot) * energy / d;
    const double c_j = quad(a, sandwiched, a);
    const cdouble d_j = cquad(adot, sandwiched, a) * mean_conj;
    const double b_j = quad(adot, r_inv, adot) * energy / d;
    const cdouble e_j = cquad(adot, r_inv, a) * mean_conj;
    const double f_j = quad(a, r_inv, a);

    Eigen::Matrix3d b;
    b << a_j, d_j.real(), -d_j.imag(),
         d_j.real(), c_j, 0.0,
         -d_j.imag(), 0.0, c_j;
    Eigen::Matrix3d am;
    am << b_j, e_j.real(), -e_j.imag(),
          e_j.real(), f_j, 0.0,
          -e_j.imag(), 0.0, f_j;
    SandwichPair pair(-2.0 * d * am, 2.0 * d * b);
    Eigen::MatrixXd bound = sandwich_mcrb(pair);
    return DoaFullBound{std::move(pair), std::move(bound)};
}

CandidateCovariances candidate_covariances(const Eigen::MatrixXcd& x_train, const DoaCriterionOptions& options) {
    const auto n = static_cast<int>(x_train.rows());
    CandidateCovariances out;
    out.r_hat = sample_covariance(x_train);
    SortedEigen eig = sorted_eigen(out.r_hat);

    const double smallest = eig.values.minCoeff();
    const bool ill = !(smallest > 0.0) || eig.values.maxCoeff() / smallest > kMaxConditionNumber;
    if (options.diagonal_loading && (x_train.cols() < n || ill)) {
        const double load = options.loading_factor * out.r_hat.trace() / n;
        out.r_hat = HermitianMatrix(out.r_hat.value() + load * Eigen::MatrixXcd::Identity(n, n));
        eig.values.array() += load;
        out.loaded = true;
    }
    out.eigvals = eig.values;
    out.inverses.resize(static_cast<std::size_t>(n));
    for (int m = 0; m < n; ++m) {
        try {
            out.inverses[static_cast<std::size_t>(m)] = truncate_from_eigen(eig, m).inverse();
        } catch (const SingularMatrix&) {
            // candidate dropped
        }
    }
    return out;
}

DoaCriterionResult doa_criterion(const Eigen::MatrixXcd& x_train, const Eigen::MatrixXcd& x_target,
                                 const DoaCriterionOptions& options) {
    if (x_target.rows() != x_train.rows()) {
        throw DimensionMismatch("doa_criterion: training and target arrays differ in size");
    }
    return doa_criterion(candidate_covariances(x_train, options), x_target, options);
}

DoaCriterionResult doa_criterion(const CandidateCovariances& cands, const Eigen::MatrixXcd& x_target,
                                 const DoaCriterionOptions& options) {
    const auto n = static_cast<int>(cands.r_hat.size());
    if (x_target.rows() != n) {
        throw DimensionMismatch("doa_criterion: training and target arrays differ in size");
    }
    DoaCriterionResult result;
    result.eigvals = cands.eigvals;
    result.loaded = cands.loaded;
    result.psi_hat.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());

    const UlaGeometry geom(n);
    std::vector<CriterionScore> scores;
    for (int m = 0; m < n; ++m) {
        const auto& r_inv = cands.inverses[static_cast<std::size_t>(m)];
        if (!r_inv) {
            continue;
        }
        const double psi = ml_doa(x_target, *r_inv, options.search);
        const double cov = mcrb_doa_unscaled(psi, *r_inv, cands.r_hat.value(), geom);
        if (!std::isfinite(cov)) {
            continue;
        }
        result.psi_hat[static_cast<std::size_t>(m)] = psi;
        scores.push_back(CriterionScore::make(m, 0.0, std::max(cov, 0.0)));
    }
    if (scores.empty()) {
        throw AllCandidatesFailed("doa_criterion: every candidate covariance is singular");
    }
    result.selection = select_model(std::move(scores));
    return result;
}

WaxScores wax_criteria(const Eigen::VectorXd& eigvals, int n_snapshots) {
    const auto n = static_cast<int>(eigvals.size());
    if (n < 1) {
        throw InvalidArgument("wax_criteria: no eigenvalues");
    }
    if (!(eigvals.minCoeff() > 0.0)) {
        throw NonPositiveEigenvalue("wax_criteria: eigenvalues must be positive");
    }
    const double t = n_snapshots;
    WaxScores w;
    w.mdl.resize(n);
    w.aic.resize(n);
    w.aicc.resize(n);
    w.aicc_valid.resize(n);
    w.log_likelihood.resize(n);
    for (int m = 0; m < n; ++m) {
        const Eigen::VectorXd tail = eigvals.tail(n - m);
        const double sigma2 = tail.mean();
        const double loglik = t * (tail.array() / sigma2).log().sum();
        const double params = static_cast<double>(m) * (2.0 * n - m) + 1.0;
        w.log_likelihood[m] = loglik;
        w.mdl[m] = -2.0 * loglik + params * std::log(t);
        w.aic[m] = -2.0 * loglik + 2.0 * params;
        const double denom = t - 1.0 - params;
        w.aicc_valid[m] = denom > 0.0;
        w.aicc[m] = w.aicc_valid[m] ? -2.0 * loglik + 2.0 * t * params / denom
                                    : std::numeric_limits<double>::infinity();
    }
    auto argmin = [n](const std::vector<double>& v, const std::vector<bool>* valid) {
        int best = -1;
        for (int m = 0; m < n; ++m) {
            if (valid && !(*valid)[m]) {
                continue;
            }
            if (best < 0 || v[m] < v[best]) {
                best = m;
            }
        }
        return best;
    };
    w.mdl_choice = argmin(w.mdl, nullptr);
    w.aic_choice = argmin(w.aic, nullptr);
    w.aicc_choice = argmin(w.aicc, &w.aicc_valid);
    return w;
}

Eigen::VectorXcd design_signals(int n_target, double snr_db, double noise_power) {
    if (n_target < 2 || n_target % 2 != 0) {
        throw OddTargetCount("design_signals: D must be a positive even number");
    }
    const double amplitude = std::sqrt(db_to_linear(snr_db) * noise_power);
    Eigen::VectorXcd s(n_target);
    for (int j = 0; j < n_target; ++j) {
        s(j) = (j % 2 == 0) ? amplitude : -amplitude;
    }
    return s;
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace mcrb::doa
