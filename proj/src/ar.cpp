#include "mcrb/ar.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "mcrb/error.hpp"

namespace mcrb::ar {

namespace {

using cdouble = std::complex<double>;

constexpr double kStabilityRadius = 0.999;

// 1 + sum_k a_k e^{-j w k} at every grid frequency, a in natural order.
Eigen::VectorXcd ar_polynomial(const Eigen::VectorXd& coeffs, const Eigen::VectorXd& omegas) {
    Eigen::VectorXcd out(omegas.size());
    for (Eigen::Index l = 0; l < omegas.size(); ++l) {
        const cdouble step = std::polar(1.0, -omegas(l));
        cdouble z = 1.0;
        cdouble acc = 1.0;
        for (Eigen::Index k = 0; k < coeffs.size(); ++k) {
            z *= step;
            acc += coeffs(k) * z;
        }
        out(l) = acc;
    }
    return out;
}

Eigen::VectorXcd ma_polynomial(const Eigen::VectorXd& b, const Eigen::VectorXd& omegas) {
    Eigen::VectorXcd out(omegas.size());
    for (Eigen::Index l = 0; l < omegas.size(); ++l) {
        const cdouble step = std::polar(1.0, -omegas(l));
        cdouble z = 1.0;
        cdouble acc = 0.0;
        for (Eigen::Index k = 0; k < b.size(); ++k) {
            acc += b(k) * z;
            z *= step;
        }
        out(l) = acc;
    }
    return out;
}

double innovation(const ArmaModel& model, Rng& rng) {
    const double sigma = std::sqrt(model.innov_var);
    if (model.innov_law == InnovationLaw::Gaussian) {
        return sigma * standard_normal(rng);
    }
    // Laplace with scale sigma / sqrt(2) has variance sigma^2.
    const double u = uniform_open(rng) - 0.5;
    const double scale = sigma / std::sqrt(2.0);
    return -scale * std::copysign(1.0, u) * std::log(1.0 - 2.0 * std::abs(u));
}

// Trailing-edge block: row c is [x_{T-1-c}, ..., x_{T-1}, 0, ..., 0].
Eigen::MatrixXd trailing_edge(const Eigen::VectorXd& x, int m) {
    const auto t = static_cast<int>(x.size());
    Eigen::MatrixXd x2 = Eigen::MatrixXd::Zero(m, m + 1);
    for (int c = 0; c < m; ++c) {
        for (int r = 0; r <= c; ++r) {
            x2(c, r) = x(t - 1 - c + r);
        }
    }
    return x2;
}

Eigen::MatrixXd leading_edge(const Eigen::VectorXd& x, int m) {
    Eigen::MatrixXd x1 = Eigen::MatrixXd::Zero(m, m + 1);
    for (int c = 0; c < m; ++c) {
        for (int r = 0; r <= c; ++r) {
            x1(c, r) = x(c - r);
        }
    }
    return x1;
}

Eigen::MatrixXd toeplitz(const Eigen::VectorXd& r) {
    const Eigen::Index n = r.size();
    Eigen::MatrixXd out(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            out(i, j) = r(std::abs(i - j));
        }
    }
    return out;
}

void require_samples(Eigen::Index t, int m) {
    if (m < 0) {
        throw InvalidArgument("AR order must be non-negative");
    }
    if (t < 3 * m + 1) {
        std::ostringstream os;
        os << "need T >= 3m+1 samples (T=" << t << ", m=" << m << ")";
        throw TooFewSamples(os.str());
    }
}

}  // namespace

void ArmaModel::validate() const {
    if (!(innov_var > 0.0)) {
        throw InvalidArgument("ArmaModel: innovation variance must be positive");
    }
    if (ma.size() < 1) {
        throw InvalidArgument("ArmaModel: MA part needs at least b_0");
    }
    const int order = p();
    if (order == 0) {
        return;
    }
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(order, order);
    companion.row(0) = -ar.transpose();
    for (int i = 1; i < order; ++i) {
        companion(i, i - 1) = 1.0;
    }
    Eigen::EigenSolver<Eigen::MatrixXd> eig(companion, false);
    if (eig.info() != Eigen::Success) {
        throw EigenFailure("ArmaModel: root computation failed");
    }
    if (eig.eigenvalues().cwiseAbs().maxCoeff() >= kStabilityRadius) {
        throw UnstableModel("ArmaModel: AR polynomial has a root outside radius 0.999");
    }
}

Eigen::VectorXd ArFit::theta() const {
    Eigen::VectorXd out(order + 1);
    out(0) = innov_var;
    out.tail(order) = coeffs_rev;
    return out;
}

SpectrumGrid::SpectrumGrid(Eigen::VectorXd omegas) : omegas_(std::move(omegas)) {
    if (omegas_.size() < 1) {
        throw InvalidArgument("SpectrumGrid: empty grid");
    }
    for (Eigen::Index l = 0; l < omegas_.size(); ++l) {
        if (!(omegas_(l) >= 0.0 && omegas_(l) < std::numbers::pi)) {
            throw InvalidArgument("SpectrumGrid: frequencies must lie in [0, pi)");
        }
        if (l > 0 && !(omegas_(l) > omegas_(l - 1))) {
            throw InvalidArgument("SpectrumGrid: frequencies must be strictly increasing");
        }
    }
}

SpectrumGrid SpectrumGrid::uniform(int w) {
    if (w < 1) {
        throw InvalidArgument("SpectrumGrid: W must be positive");
    }
    Eigen::VectorXd omegas(w);
    for (int l = 0; l < w; ++l) {
        omegas(l) = std::numbers::pi * l / w;
    }
    return SpectrumGrid(std::move(omegas));
}

Eigen::VectorXd simulate_arma(const ArmaModel& model, int n_samples, Rng& rng) {
    model.validate();
    if (n_samples < 1) {
        throw InvalidArgument("simulate_arma: need at least one sample");
    }
    const int p = model.p();
    const int q = model.q();
    const int burn = p > 0 ? std::max(500, 50 * p) : 0;
    const int total = burn + n_samples;

    std::vector<double> u(static_cast<std::size_t>(total + q));
    for (double& v : u) {
        v = innovation(model, rng);
    }
    std::vector<double> x(static_cast<std::size_t>(total), 0.0);
    for (int n = 0; n < total; ++n) {
        double acc = 0.0;
        for (int k = 0; k <= q; ++k) {
            acc += model.ma(k) * u[static_cast<std::size_t>(n + q - k)];
        }
        for (int k = 1; k <= p && k <= n; ++k) {
            acc -= model.ar(k - 1) * x[static_cast<std::size_t>(n - k)];
        }
        x[static_cast<std::size_t>(n)] = acc;
    }
    return Eigen::Map<const Eigen::VectorXd>(x.data() + burn, n_samples);
}

Eigen::VectorXd sample_autocov(const Eigen::VectorXd& x, int maxlag) {
    const Eigen::Index t = x.size();
    if (maxlag < 0 || maxlag >= t) {
        throw LagTooLarge("sample_autocov: maxlag must be below the sample count");
    }
    Eigen::VectorXd r(maxlag + 1);
    for (int k = 0; k <= maxlag; ++k) {
        r(k) = x.tail(t - k).dot(x.head(t - k)) / static_cast<double>(t);
    }
    return r;
}

LevinsonResult levinson_durbin(const Eigen::VectorXd& r, int m) {
    if (m < 0 || r.size() <= m) {
        throw InvalidArgument("levinson_durbin: need autocovariances r_0..r_m");
    }
    if (!(r(0) > 0.0)) {
        throw NonPositiveR0("levinson_durbin: r_0 must be positive");
    }
    LevinsonResult out;
    out.partials.resize(m);
    out.variances.resize(m + 1);
    out.coeffs.reserve(static_cast<std::size_t>(m + 1));
    out.coeffs.emplace_back();
    out.variances(0) = r(0);

    Eigen::VectorXd a;
    double err = r(0);
    for (int n = 1; n <= m; ++n) {
        double acc = r(n);
        for (int k = 1; k < n; ++k) {
            acc += a(k - 1) * r(n - k);
        }
        const double refl = acc / err;
        if (!(std::abs(refl) < 1.0)) {
            std::ostringstream os;
            os << "levinson_durbin: |K_" << n << "| = " << std::abs(refl) << " >= 1";
            throw DegenerateStep(os.str());
        }
        Eigen::VectorXd next(n);
        for (int k = 1; k < n; ++k) {
            next(k - 1) = a(k - 1) - refl * a(n - k - 1);
        }
        next(n - 1) = -refl;
        a = std::move(next);
        err *= 1.0 - refl * refl;
        out.partials(n - 1) = refl;
        out.variances(n) = err;
        out.coeffs.push_back(a);
    }
    return out;
}

std::vector<ArFit> yule_walker_all(const Eigen::VectorXd& r, int m) {
    LevinsonResult lev;
    try {
        lev = levinson_durbin(r, m);
    } catch (const DegenerateStep& e) {
        throw SingularToeplitz(e.what());
    } catch (const NonPositiveR0& e) {
        throw SingularToeplitz(e.what());
    }
    std::vector<ArFit> fits;
    fits.reserve(static_cast<std::size_t>(m + 1));
    for (int n = 0; n <= m; ++n) {
        ArFit fit;
        fit.order = n;
        const Eigen::VectorXd& a = lev.coeffs[static_cast<std::size_t>(n)];
        fit.coeffs_rev = a.reverse();
        fit.partials = lev.partials.head(n);
        fit.innov_var = r(0) + (n > 0 ? r.segment(1, n).dot(a) : 0.0);
        if (!(fit.innov_var > 0.0)) {
            throw SingularToeplitz("yule_walker: non-positive prediction variance");
        }
        fits.push_back(std::move(fit));
    }
    return fits;
}

ArFit yule_walker(const Eigen::VectorXd& r, int m) {
    return std::move(yule_walker_all(r, m).back());
}

Eigen::VectorXd reflection_from_coeffs(const Eigen::VectorXd& coeffs) {
    const auto m = static_cast<int>(coeffs.size());
    Eigen::VectorXd partials(m);
    Eigen::VectorXd a = coeffs;
    for (int n = m; n >= 1; --n) {
        const double refl = -a(n - 1);
        if (!(std::abs(refl) < 1.0)) {
            throw DegenerateStep("reflection_from_coeffs: polynomial is not minimum phase");
        }
        partials(n - 1) = refl;
        Eigen::VectorXd prev(n - 1);
        const double denom = 1.0 - refl * refl;
        for (int k = 1; k < n; ++k) {
            prev(k - 1) = (a(k - 1) + refl * a(n - k - 1)) / denom;
        }
        a = std::move(prev);
    }
    return partials;
}

Eigen::VectorXd ar_autocov(const Eigen::VectorXd& coeffs, double innov_var, int maxlag) {
    if (!(innov_var > 0.0) || maxlag < 0) {
        throw InvalidArgument("ar_autocov: need sigma^2 > 0 and maxlag >= 0");
    }
    const auto m = static_cast<int>(coeffs.size());
    // Step down to every lower-order predictor, then run Levinson backwards.
    std::vector<Eigen::VectorXd> lower(static_cast<std::size_t>(m + 1));
    lower[static_cast<std::size_t>(m)] = coeffs;
    const Eigen::VectorXd partials = reflection_from_coeffs(coeffs);
    for (int n = m; n >= 1; --n) {
        const Eigen::VectorXd& a = lower[static_cast<std::size_t>(n)];
        const double k = partials(n - 1);
        Eigen::VectorXd prev(n - 1);
        for (int j = 1; j < n; ++j) {
            prev(j - 1) = (a(j - 1) + k * a(n - j - 1)) / (1.0 - k * k);
        }
        lower[static_cast<std::size_t>(n - 1)] = prev;
    }
    double prod = 1.0;
    for (int n = 0; n < m; ++n) {
        prod *= 1.0 - partials(n) * partials(n);
    }
    Eigen::VectorXd r(std::max(maxlag, m) + 1);
    r(0) = innov_var / prod;
    double err = r(0);
    for (int n = 1; n <= m; ++n) {
        const Eigen::VectorXd& a = lower[static_cast<std::size_t>(n - 1)];
        double acc = partials(n - 1) * err;
        for (int k = 1; k < n; ++k) {
            acc -= a(k - 1) * r(n - k);
        }
        r(n) = acc;
        err *= 1.0 - partials(n - 1) * partials(n - 1);
    }
    for (int n = m + 1; n < r.size(); ++n) {
        double acc = 0.0;
        for (int k = 1; k <= m; ++k) {
            acc -= coeffs(k - 1) * r(n - k);
        }
        r(n) = acc;
    }
    return r.head(maxlag + 1);
}

EdgeMatrices build_edge_matrices(const Eigen::VectorXd& x, int m) {
    if (m < 0 || x.size() < m + 1) {
        throw TooFewSamples("build_edge_matrices: need T >= m+1 samples");
    }
    const auto t = static_cast<int>(x.size());
    EdgeMatrices e;
    e.x = Eigen::MatrixXd::Zero(t + m, m + 1);
    for (int j = 0; j <= m; ++j) {
        e.x.block(j, j, t, 1) = x;
    }
    e.x1 = leading_edge(x, m);
    e.x2 = trailing_edge(x, m);
    e.xt = e.x.leftCols(m);
    e.xt1 = e.x1.leftCols(m);
    e.xt2 = e.x2.leftCols(m);
    return e;
}

Eigen::MatrixXd likelihood_quadratic(const Eigen::VectorXd& x, int m) {
    require_samples(x.size(), m);
    const Eigen::MatrixXd x1 = leading_edge(x, m);
    const Eigen::MatrixXd x2 = trailing_edge(x, m);
    const Eigen::VectorXd r = sample_autocov(x, m);
    Eigen::MatrixXd q = static_cast<double>(x.size()) * toeplitz(r);
    q.noalias() -= x1.transpose() * x1;
    q.noalias() -= x2.transpose() * x2;
    return q;
}

ApproxLikelihood::ApproxLikelihood(const Eigen::VectorXd& x, int m)
    : m_(m), t_(static_cast<int>(x.size())), q_(likelihood_quadratic(x, m)) {}

void ApproxLikelihood::check(const ArPoint& point) const {
    if (!(point.innov_var > 0.0)) {
        throw NonPositiveVariance("likelihood: sigma^2 must be positive");
    }
    if (point.order() != m_) {
        throw DimensionMismatch("likelihood: coefficient count differs from model order");
    }
}

namespace {

Eigen::VectorXd extended(const ArPoint& point) {
    Eigen::VectorXd v(point.order() + 1);
    v.head(point.order()) = point.coeffs_rev;
    v(point.order()) = 1.0;
    return v;
}

}  // namespace

double ApproxLikelihood::value(const ArPoint& point) const {
    check(point);
    const Eigen::VectorXd v = extended(point);
    const double s2 = point.innov_var;
    return -0.5 * t_ * std::log(2.0 * std::numbers::pi * s2) - v.dot(q_ * v) / (2.0 * s2);
}

Gradient ApproxLikelihood::score_and_hessian(const ArPoint& point) const {
    check(point);
    const Eigen::VectorXd v = extended(point);
    const Eigen::VectorXd qv = q_ * v;
    const double form = v.dot(qv);
    const double s2 = point.innov_var;
    const double s4 = s2 * s2;

    Gradient g;
    g.gradient.resize(m_ + 1);
    g.gradient(0) = -0.5 * t_ / s2 + form / (2.0 * s4);
    g.gradient.tail(m_) = -qv.head(m_) / s2;

    g.hessian.resize(m_ + 1, m_ + 1);
    g.hessian(0, 0) = 0.5 * t_ / s4 - form / (s4 * s2);
    g.hessian.block(1, 0, m_, 1) = qv.head(m_) / s4;
    g.hessian.block(0, 1, 1, m_) = qv.head(m_).transpose() / s4;
    g.hessian.bottomRightCorner(m_, m_) = -q_.topLeftCorner(m_, m_) / s2;
    return g;
}

ArPoint ApproxLikelihood::maximizer() const {
    ArPoint p;
    p.coeffs_rev = Eigen::VectorXd::Zero(m_);
    if (m_ > 0) {
        p.coeffs_rev = -q_.topLeftCorner(m_, m_).ldlt().solve(q_.col(m_).head(m_));
    }
    const Eigen::VectorXd v = extended(p);
    p.innov_var = v.dot(q_ * v) / t_;
    return p;
}

double loglik_approx(const ArPoint& point, const Eigen::VectorXd& x) {
    return ApproxLikelihood(x, point.order()).value(point);
}

Gradient score_and_hessian(const ArPoint& point, const Eigen::VectorXd& x) {
    return ApproxLikelihood(x, point.order()).score_and_hessian(point);
}

Eigen::MatrixXd per_sample_scores(const ArPoint& point, const Eigen::VectorXd& x) {
    const int m = point.order();
    const auto t = static_cast<int>(x.size());
    if (!(point.innov_var > 0.0)) {
        throw NonPositiveVariance("per_sample_scores: sigma^2 must be positive");
    }
    require_samples(t, m);
    const double s2 = point.innov_var;
    Eigen::MatrixXd g(t - m, m + 1);
    for (int i = m; i < t; ++i) {
        // coeffs_rev(j) multiplies lag m - j
        double e = x(i);
        for (int j = 0; j < m; ++j) {
            e += point.coeffs_rev(j) * x(i - (m - j));
        }
        const auto row = i - m;
        g(row, 0) = (e * e / s2 - 1.0) / (2.0 * s2);
        for (int j = 0; j < m; ++j) {
            g(row, j + 1) = -e * x(i - (m - j)) / s2;
        }
    }
    return g;
}

namespace {

Eigen::MatrixXd score_outer(const ApproxLikelihood& lik, const Gradient& g, const ArPoint& point,
                            const Eigen::VectorXd& x, ScoreMode mode) {
    const int k = lik.order() + 1;
    if (mode == ScoreMode::LiteralPaper) {
        return g.gradient * g.gradient.transpose();
    }
    const Eigen::MatrixXd scores = per_sample_scores(point, x);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(k, k);
    b.selfadjointView<Eigen::Lower>().rankUpdate(scores.transpose());
    return b.selfadjointView<Eigen::Lower>();
}

}  // namespace

SandwichPair sample_sandwich_pair(const ArPoint& point, const Eigen::VectorXd& x, ScoreMode mode) {
    const ApproxLikelihood lik(x, point.order());
    const Gradient g = lik.score_and_hessian(point);
    return SandwichPair(g.hessian, score_outer(lik, g, point, x, mode));
}

Eigen::MatrixXd sample_mcrb(const ArFit& fit, const Eigen::VectorXd& x, ScoreMode mode) {
    return sandwich_mcrb(sample_sandwich_pair(ArPoint::from(fit), x, mode));
}

LogSpectrum log_spectrum_ar_checked(const ArFit& fit, const SpectrumGrid& grid) {
    if (!(fit.innov_var > 0.0)) {
        throw NonPositiveVariance("log_spectrum_ar: sigma^2 must be positive");
    }
    const Eigen::VectorXcd a = ar_polynomial(fit.coeffs(), grid.omegas());
    LogSpectrum out;
    out.values.resize(grid.size());
    const double log_s2 = std::log(fit.innov_var);
    for (Eigen::Index l = 0; l < grid.size(); ++l) {
        double mag2 = std::norm(a(l));
        if (mag2 < kSpectrumFloor) {
            mag2 = kSpectrumFloor;
            out.clamped.push_back(l);
        }
        out.values(l) = log_s2 - std::log(mag2);
    }
    return out;
}

Eigen::VectorXd log_spectrum_ar(const ArFit& fit, const SpectrumGrid& grid) {
    return log_spectrum_ar_checked(fit, grid).values;
}

Eigen::VectorXd log_spectrum_arma(const ArmaModel& model, const SpectrumGrid& grid) {
    const Eigen::VectorXcd a = ar_polynomial(model.ar, grid.omegas());
    const Eigen::VectorXcd b = ma_polynomial(model.ma, grid.omegas());
    Eigen::VectorXd out(grid.size());
    for (Eigen::Index l = 0; l < grid.size(); ++l) {
        const double num = std::max(std::norm(b(l)), kSpectrumFloor);
        const double den = std::max(std::norm(a(l)), kSpectrumFloor);
        out(l) = std::log(model.innov_var) + std::log(num) - std::log(den);
    }
    return out;
}

Eigen::MatrixXd spectrum_jacobian(const ArFit& fit, const SpectrumGrid& grid) {
    const int m = fit.order;
    const Eigen::VectorXd& w = grid.omegas();
    const Eigen::VectorXcd a = ar_polynomial(fit.coeffs(), w);
    Eigen::MatrixXd j(grid.size(), m + 1);
    j.col(0).setConstant(1.0 / fit.innov_var);
    for (Eigen::Index l = 0; l < grid.size(); ++l) {
        const cdouble inv_a = std::conj(a(l)) / std::max(std::norm(a(l)), kSpectrumFloor);
        for (int c = 1; c <= m; ++c) {
            const int lag = m + 1 - c;
            j(l, c) = -2.0 * (std::polar(1.0, -w(l) * lag) * inv_a).real();
        }
    }
    return j;
}

std::vector<PseudoTrue> pseudo_true_all(const ArmaModel& model, const std::vector<int>& orders, int t_large,
                                           int k, Rng& rng, const SpectrumGrid& grid) {
    if (orders.empty() || k < 1) {
        throw InvalidArgument("pseudo_true: need orders and K >= 1");
    }
    const int top = *std::max_element(orders.begin(), orders.end());
    require_samples(t_large, top);
    std::vector<Eigen::VectorXd> sum_coeffs(orders.size());
    std::vector<double> sum_var(orders.size(), 0.0);
    for (std::size_t i = 0; i < orders.size(); ++i) {
        sum_coeffs[i] = Eigen::VectorXd::Zero(orders[i]);
    }
    for (int run = 0; run < k; ++run) {
        const Eigen::VectorXd x = simulate_arma(model, t_large, rng);
        const std::vector<ArFit> fits = yule_walker_all(sample_autocov(x, top), top);
        for (std::size_t i = 0; i < orders.size(); ++i) {
            const ArFit& f = fits[static_cast<std::size_t>(orders[i])];
            sum_coeffs[i] += f.coeffs_rev;
            sum_var[i] += f.innov_var;
        }
    }
    std::vector<PseudoTrue> out;
    out.reserve(orders.size());
    for (std::size_t i = 0; i < orders.size(); ++i) {
        PseudoTrue pt;
        pt.theta0.order = orders[i];
        pt.theta0.innov_var = sum_var[i] / k;
        pt.theta0.coeffs_rev = sum_coeffs[i] / k;
        pt.theta0.partials = reflection_from_coeffs(pt.theta0.coeffs());
        pt.phi0 = log_spectrum_ar(pt.theta0, grid);
        out.push_back(std::move(pt));
    }
    return out;
}

PseudoTrue pseudo_true(const ArmaModel& model, int m, int t_large, int k, Rng& rng, const SpectrumGrid& grid) {
    return std::move(pseudo_true_all(model, {m}, t_large, k, rng, grid).front());
}

SpectrumBound spectrum_bound(const ArmaModel& model, const PseudoTrue& pt, const SpectrumGrid& grid, int t, int k,
                             Rng& rng, ScoreMode mode) {
    const int m = pt.theta0.order;
    require_samples(t, m);
    if (k < 1) {
        throw InvalidArgument("spectrum_bound: K must be positive");
    }
    const double w = static_cast<double>(grid.size());
    const Eigen::VectorXd phi = log_spectrum_arma(model, grid);

    SpectrumBound out;
    out.bias_sq = (phi - pt.phi0).squaredNorm() / w;

    const ArPoint point = ArPoint::from(pt.theta0);
    const int dim = m + 1;
    Eigen::MatrixXd a_sum = Eigen::MatrixXd::Zero(dim, dim);
    std::vector<Eigen::MatrixXd> b_runs;
    b_runs.reserve(static_cast<std::size_t>(k));
    for (int run = 0; run < k; ++run) {
        const Eigen::VectorXd x = simulate_arma(model, t, rng);
        const ApproxLikelihood lik(x, m);
        const Gradient g = lik.score_and_hessian(point);
        a_sum += g.hessian;
        b_runs.push_back(score_outer(lik, g, point, x, mode));
    }
    const Eigen::MatrixXd a_mean = a_sum / k;
    Eigen::MatrixXd b_mean = Eigen::MatrixXd::Zero(dim, dim);
    for (const auto& b : b_runs) {
        b_mean += b;
    }
    b_mean /= k;

    const Eigen::MatrixXd jac = spectrum_jacobian(pt.theta0, grid);
    const Eigen::MatrixXd mcrb = sandwich_mcrb(SandwichPair(a_mean, b_mean));
    out.cov_trace = mapped_cov_trace(jac, mcrb) / w;
    out.total = out.bias_sq + out.cov_trace;

    // Per-realization contributions share A; their mean is cov_trace.
    const Eigen::MatrixXd g = jac * checked_symmetric_inverse(a_mean);
    out.per_trial_total.reserve(b_runs.size());
    for (const auto& b : b_runs) {
        out.per_trial_total.push_back(out.bias_sq + ((g * b).array() * g.array()).sum() / w);
    }
    return out;
}

SpectrumBound spectrum_bound(const ArmaModel& model, int m, const SpectrumGrid& grid, int t, int k, Rng& rng,
                             int t_large) {
    const PseudoTrue pt = pseudo_true(model, m, t_large, k, rng, grid);
    return spectrum_bound(model, pt, grid, t, k, rng);
}

SpectrumCriterionResult spectrum_criterion(const Eigen::VectorXd& x, const std::vector<int>& orders,
                                           const SpectrumGrid& grid, ScoreMode mode) {
    if (orders.empty()) {
        throw EmptyCandidateSet("spectrum_criterion: no candidate orders");
    }
    const auto t = static_cast<int>(x.size());
    SpectrumCriterionResult out;
    std::vector<int> usable;
    for (int m : orders) {
        if (m >= 0 && t >= 3 * m + 1) {
            usable.push_back(m);
        } else {
            out.dropped.push_back(m);
        }
    }
    if (usable.empty()) {
        throw AllCandidatesFailed("spectrum_criterion: no order satisfies T >= 3m+1");
    }
    std::sort(usable.begin(), usable.end());
    const int top = usable.back();
    const std::vector<ArFit> all = yule_walker_all(sample_autocov(x, top), top);
    const double w = static_cast<double>(grid.size());
    out.reference_spectrum = log_spectrum_ar(all[static_cast<std::size_t>(top)], grid);

    std::vector<CriterionScore> scores;
    for (int m : usable) {
        const ArFit& fit = all[static_cast<std::size_t>(m)];
        try {
            const Eigen::VectorXd phi = log_spectrum_ar(fit, grid);
            const double bias = m == top ? 0.0 : (out.reference_spectrum - phi).squaredNorm() / w;
            const Eigen::MatrixXd c = sample_mcrb(fit, x, mode);
            const double cov = mapped_cov_trace(spectrum_jacobian(fit, grid), c) / w;
            if (!std::isfinite(cov) || !std::isfinite(bias)) {
                out.dropped.push_back(m);
                continue;
            }
            scores.push_back(CriterionScore::make(m, bias, cov));
            out.orders.push_back(m);
            out.fits.push_back(fit);
        } catch (const Error&) {
            out.dropped.push_back(m);
        }
    }
    if (scores.empty()) {
        throw AllCandidatesFailed("spectrum_criterion: every candidate failed");
    }
    out.selection = select_model(std::move(scores));
    out.selected_spectrum = log_spectrum_ar(all[static_cast<std::size_t>(out.selection.selected)], grid);
    return out;
}

BaselineScores ar_baseline_criteria(double r0, const Eigen::VectorXd& partials, int t, const std::vector<int>& orders) {
    if (orders.empty()) {
        throw EmptyCandidateSet("ar_baseline_criteria: no candidate orders");
    }
    if (!(r0 > 0.0)) {
        throw NonPositiveR0("ar_baseline_criteria: r_0 must be positive");
    }
    BaselineScores out;
    out.orders = orders;
    const double tt = t;
    for (int m : orders) {
        if (m < 0 || m > partials.size()) {
            throw InvalidArgument("ar_baseline_criteria: order exceeds available partial correlations");
        }
        double fit = std::log(r0);
        for (int n = 0; n < m; ++n) {
            const double k = partials(n);
            if (!(std::abs(k) < 1.0)) {
                throw DegeneratePartial("ar_baseline_criteria: |K_n| >= 1");
            }
            fit += std::log(1.0 - k * k);
        }
        const double goodness = tt * fit;
        const double params = m + 1.0;
        out.aic.push_back(goodness + 2.0 * params);
        out.mdl.push_back(goodness + params * std::log(tt));
        const bool valid = tt > params;
        out.aicc_valid.push_back(valid);
        out.aicc.push_back(valid ? goodness + 2.0 * (tt + 1.0) * params / (tt - params)
                                 : std::numeric_limits<double>::infinity());
    }
    auto argmin = [&](const std::vector<double>& v, bool check_valid) {
        int best = -1;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (check_valid && !out.aicc_valid[i]) {
                continue;
            }
            if (best < 0 || v[i] < v[static_cast<std::size_t>(best)] ||
                (v[i] == v[static_cast<std::size_t>(best)] && orders[i] < orders[static_cast<std::size_t>(best)])) {
                best = static_cast<int>(i);
            }
        }
        return best < 0 ? -1 : orders[static_cast<std::size_t>(best)];
    };
    out.aic_choice = argmin(out.aic, false);
    out.mdl_choice = argmin(out.mdl, false);
    out.aicc_choice = argmin(out.aicc, true);
    return out;
}

double whittle_crb(int p, int q, double t) {
    if (!(t > 0.0)) {
        throw InvalidArgument("whittle_crb: T must be positive");
    }
    return 2.0 * (p + q + 1) / t;
}

}  // namespace mcrb::ar
