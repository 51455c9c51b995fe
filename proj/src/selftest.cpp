#include "mcrb/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "mcrb/ar.hpp"
#include "mcrb/core.hpp"
#include "mcrb/doa.hpp"
#include "mcrb/error.hpp"
#include "mcrb/rng.hpp"

namespace mcrb {

namespace {

std::string fmt(const char* label, double v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s = %.3e", label, v);
    return buf;
}

SelftestCheck check(std::string name, double err, double tol, const char* label) {
    SelftestCheck c;
    c.name = std::move(name);
    c.passed = std::isfinite(err) && err <= tol;
    c.detail = fmt(label, err) + (c.passed ? " <= " : " > ") + fmt("tol", tol).substr(6);
    return c;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Clutter scenario with a deliberately underfitted model covariance.
struct DoaFixture {
    doa::UlaGeometry geom{11};
    doa::HermitianMatrix r_true;
    doa::HermitianMatrix r_model;
    Eigen::VectorXcd signals;
    double psi = 0.05;

    DoaFixture() {
        doa::DoaScenario scn;
        scn.geometry = geom;
        scn.psi_true = psi;
        scn.signals = doa::design_signals(10, 10.0, 1.0);
        scn.clutter_dirs = {-0.8, -0.75, 0.7, 0.8};
        scn.clutter_power = 1000.0;
        scn.noise_power = 1.0;
        scn.n_training = 30;
        r_true = scn.population_covariance();
        Rng rng = derive_aux_rng(7, 0, 0);
        const doa::HermitianMatrix r_hat = doa::sample_covariance(doa::simulate_training(scn, rng));
        r_model = doa::truncate_covariance(r_hat, 2).matrix;
        signals = scn.signals;
    }
};

SelftestCheck matched_sandwich() {
    Rng rng = derive_aux_rng(7, 1, 0);
    Eigen::MatrixXd g(5, 5);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        g.data()[i] = standard_normal(rng);
    }
    const Eigen::MatrixXd fisher = g * g.transpose() + 5.0 * Eigen::MatrixXd::Identity(5, 5);
    const Eigen::MatrixXd bound = sandwich_mcrb(SandwichPair(-fisher, fisher));
    const double err = (bound - fisher.inverse()).norm() / fisher.inverse().norm();
    return check("matched model: sandwich equals inverse Fisher", err, 1e-10, "rel err");
}

SelftestCheck matched_doa(const DoaFixture& f) {
    const double energy = f.signals.squaredNorm();
    const double bound = doa::mcrb_doa(f.psi, f.r_true, f.r_true, energy, f.geom);
    const Eigen::VectorXcd adot = doa::steering_derivative(f.psi, f.geom);
    const double fisher = adot.dot(f.r_true.value().ldlt().solve(adot)).real();
    return check("matched model: DOA bound equals 1/(2|s|^2 adot^H R^-1 adot)", rel(bound, 1.0 / (2 * energy * fisher)),
                 1e-10, "rel err");
}

SelftestCheck doa_scale(const DoaFixture& f) {
    const double energy = f.signals.squaredNorm();
    const double base = doa::mcrb_doa(f.psi, f.r_model, f.r_true, energy, f.geom);
    const doa::HermitianMatrix scaled(3.7 * f.r_model.value());
    return check("DOA bound invariant to scaling the model covariance",
                 rel(doa::mcrb_doa(f.psi, scaled, f.r_true, energy, f.geom), base), 1e-10, "rel err");
}

SelftestCheck doa_full(const DoaFixture& f) {
    const double closed = doa::mcrb_doa(f.psi, f.r_model, f.r_true, f.signals.squaredNorm(), f.geom);
    const doa::DoaFullBound full = doa::mcrb_doa_full(f.psi, f.signals, f.r_model, f.r_true, f.geom);
    return check("closed-form DOA bound equals (1,1) entry of the 3x3 sandwich", rel(closed, full.mcrb(0, 0)), 1e-8,
                 "rel err");
}

Eigen::VectorXd ar3() {
    Eigen::VectorXd a(3);
    a << 0.5, -0.3, 0.1;
    return a;
}

SelftestCheck levinson_vs_toeplitz() {
    Rng rng = derive_aux_rng(7, 2, 0);
    ar::ArmaModel model;
    model.ar = ar3();
    const Eigen::VectorXd x = ar::simulate_arma(model, 400, rng);
    const int m = 6;
    const Eigen::VectorXd r = ar::sample_autocov(x, m);
    Eigen::MatrixXd toe(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            toe(i, j) = r(std::abs(i - j));
        }
    }
    const Eigen::VectorXd dense = toe.ldlt().solve(-r.segment(1, m));
    const ar::ArFit fit = ar::yule_walker(r, m);
    const double err = (fit.coeffs() - dense).cwiseAbs().maxCoeff();
    return check("Levinson-Durbin equals dense Toeplitz solve", err, 1e-10, "max abs err");
}

SelftestCheck edge_toeplitz() {
    Rng rng = derive_aux_rng(7, 3, 0);
    Eigen::VectorXd x(25);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        x(i) = standard_normal(rng);
    }
    const int m = 4;
    const ar::EdgeMatrices e = ar::build_edge_matrices(x, m);
    const Eigen::VectorXd r = ar::sample_autocov(x, m);
    double err = 0.0;
    const Eigen::MatrixXd gram = e.x.transpose() * e.x;
    for (int i = 0; i <= m; ++i) {
        for (int j = 0; j <= m; ++j) {
            err = std::max(err, std::abs(gram(i, j) - x.size() * r(std::abs(i - j))));
        }
    }
    return check("edge matrices: X^T X equals T times the Toeplitz autocovariance", err / (x.size() * r(0)), 1e-10,
                 "rel err");
}

SelftestCheck edge_exact_quadratic() {
    // With the true coefficients, v^T Q v is sigma^2 x^T Sigma^-1 x exactly.
    Rng rng = derive_aux_rng(7, 4, 0);
    Eigen::VectorXd x(14);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        x(i) = standard_normal(rng);
    }
    const Eigen::VectorXd a = ar3();
    const Eigen::VectorXd r = ar::ar_autocov(a, 1.0, static_cast<int>(x.size()) - 1);
    Eigen::MatrixXd sigma(x.size(), x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        for (Eigen::Index j = 0; j < x.size(); ++j) {
            sigma(i, j) = r(std::abs(i - j));
        }
    }
    const double exact = x.dot(sigma.llt().solve(x));
    Eigen::VectorXd v(4);
    v << a.reverse(), 1.0;
    const double approx = v.dot(ar::likelihood_quadratic(x, 3) * v);
    return check("edge-corrected quadratic equals exact Gaussian AR quadratic", rel(approx, exact), 1e-10, "rel err");
}

std::pair<SelftestCheck, SelftestCheck> derivative_checks() {
    Rng rng = derive_aux_rng(7, 5, 0);
    ar::ArmaModel model;
    model.ar = ar3();
    const Eigen::VectorXd x = ar::simulate_arma(model, 300, rng);
    const ar::ApproxLikelihood lik(x, 3);
    ar::ArPoint p{1.3, Eigen::Vector3d(0.05, -0.2, 0.4)};
    const ar::Gradient g = lik.score_and_hessian(p);

    auto shifted = [&](int i, double h) {
        ar::ArPoint q = p;
        if (i == 0) {
            q.innov_var += h;
        } else {
            q.coeffs_rev(i - 1) += h;
        }
        return q;
    };
    Eigen::VectorXd fd_grad(4);
    Eigen::MatrixXd fd_hess(4, 4);
    const double h = 1e-5;
    for (int i = 0; i < 4; ++i) {
        fd_grad(i) = (lik.value(shifted(i, h)) - lik.value(shifted(i, -h))) / (2 * h);
        fd_hess.col(i) =
            (lik.score_and_hessian(shifted(i, h)).gradient - lik.score_and_hessian(shifted(i, -h)).gradient) / (2 * h);
    }
    const double eg = (fd_grad - g.gradient).norm() / g.gradient.norm();
    const double eh = (fd_hess - g.hessian).norm() / g.hessian.norm();
    return {check("score matches central finite differences", eg, 1e-6, "rel err"),
            check("Hessian matches finite differences of the score", eh, 1e-4, "rel err")};
}

SelftestCheck whittle() {
    const double got = ar::whittle_crb(0, 5, 1000.0);
    SelftestCheck c;
    c.name = "Whittle bound 2(p+q+1)/T";
    c.passed = got == 12.0 / 1000.0;
    c.detail = fmt("value", got);
    return c;
}

}  // namespace

std::vector<SelftestCheck> run_selftest() {
    std::vector<SelftestCheck> out;
    auto guarded = [&](const std::string& name, const std::function<void()>& body) {
        try {
            body();
        } catch (const std::exception& e) {
            out.push_back({name, false, std::string("threw: ") + e.what()});
        }
    };
    guarded("matched model: sandwich equals inverse Fisher", [&] { out.push_back(matched_sandwich()); });
    guarded("DOA identities", [&] {
        const DoaFixture f;
        out.push_back(matched_doa(f));
        out.push_back(doa_scale(f));
        out.push_back(doa_full(f));
    });
    guarded("Levinson-Durbin equals dense Toeplitz solve", [&] { out.push_back(levinson_vs_toeplitz()); });
    guarded("edge matrices", [&] {
        out.push_back(edge_toeplitz());
        out.push_back(edge_exact_quadratic());
    });
    guarded("likelihood derivatives", [&] {
        auto [g, h] = derivative_checks();
        out.push_back(g);
        out.push_back(h);
    });
    guarded("Whittle bound 2(p+q+1)/T", [&] { out.push_back(whittle()); });
    return out;
}

}  // namespace mcrb
