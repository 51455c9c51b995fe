#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "mcrb/core.hpp"
#include "mcrb/error.hpp"
#include "mcrb/rng.hpp"

using namespace mcrb;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = standard_normal(rng);
    }
    return m;
}

}  // namespace

TEST_CASE("sandwich of identities is the identity") {
    const Eigen::MatrixXd i3 = Eigen::MatrixXd::Identity(3, 3);
    CHECK((sandwich_mcrb(SandwichPair(i3, i3)) - i3).norm() < 1e-15);
}

TEST_CASE("sandwich scales as B / a^2") {
    const Eigen::MatrixXd i2 = Eigen::MatrixXd::Identity(2, 2);
    CHECK((sandwich_mcrb(SandwichPair(2.0 * i2, i2)) - 0.25 * i2).norm() < 1e-15);
}

TEST_CASE("rank-one A is rejected") {
    Eigen::MatrixXd a(2, 2);
    a << 1, 1, 1, 1;
    CHECK_THROWS_AS(sandwich_mcrb(SandwichPair(a, Eigen::MatrixXd::Identity(2, 2))), SingularMatrix);
}

TEST_CASE("matched sandwich equals inverse information") {
    Rng rng = derive_aux_rng(1, 0, 0);
    const Eigen::MatrixXd g = random_matrix(4, 4, rng);
    const Eigen::MatrixXd f = g * g.transpose() + Eigen::MatrixXd::Identity(4, 4);
    CHECK((sandwich_mcrb(SandwichPair(-f, f)) - f.inverse()).norm() < 1e-10 * f.inverse().norm());
}

TEST_CASE("sandwich pair validates its inputs") {
    const Eigen::MatrixXd i2 = Eigen::MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(SandwichPair(Eigen::MatrixXd::Identity(3, 3), i2), DimensionMismatch);
    CHECK_THROWS_AS(SandwichPair(Eigen::MatrixXd::Ones(2, 3), Eigen::MatrixXd::Ones(2, 3)), DimensionMismatch);
    Eigen::MatrixXd skew = i2;
    skew(0, 1) = 1.0;
    CHECK_THROWS(SandwichPair(skew, i2));
    CHECK_THROWS(SandwichPair(i2, -i2));
}

TEST_CASE("sandwich result is symmetric") {
    Rng rng = derive_aux_rng(1, 1, 0);
    const Eigen::MatrixXd g = random_matrix(5, 5, rng);
    const Eigen::MatrixXd h = random_matrix(5, 5, rng);
    const Eigen::MatrixXd a = -(g * g.transpose() + Eigen::MatrixXd::Identity(5, 5));
    const Eigen::MatrixXd b = h * h.transpose();
    const Eigen::MatrixXd m = sandwich_mcrb(SandwichPair(a, b));
    CHECK((m - m.transpose()).norm() == 0.0);
    const Eigen::MatrixXd direct = a.inverse() * b * a.inverse();
    CHECK((m - direct).norm() < 1e-10 * direct.norm());
}

TEST_CASE("mapped trace") {
    SUBCASE("identity map gives the trace") {
        Eigen::MatrixXd m(3, 3);
        m << 2, 0.5, 0, 0.5, 3, 0.1, 0, 0.1, 4;
        CHECK(mapped_cov_trace(Eigen::MatrixXd::Identity(3, 3), m) == doctest::Approx(9.0).epsilon(1e-15));
    }
    SUBCASE("row of ones") {
        CHECK(mapped_cov_trace(Eigen::MatrixXd::Ones(1, 2), Eigen::MatrixXd::Identity(2, 2)) == doctest::Approx(2.0));
    }
    SUBCASE("random J and M against the explicit triple product") {
        Rng rng = derive_aux_rng(1, 2, 0);
        const Eigen::MatrixXd j = random_matrix(3, 2, rng);
        const Eigen::MatrixXd g = random_matrix(2, 2, rng);
        const Eigen::MatrixXd m = g * g.transpose();
        const Eigen::MatrixXd full = j * m * j.transpose();
        CHECK(mapped_cov_trace(j, m) == doctest::Approx(full.trace()).epsilon(1e-12));
    }
    SUBCASE("tiny negative round-off is clamped to zero") {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
        m(0, 0) = -1e-14;
        m(1, 1) = 1.0;
        Eigen::MatrixXd j(1, 2);
        j << 1.0, 0.0;
        CHECK(mapped_cov_trace(j, m) == 0.0);
    }
    SUBCASE("column mismatch") {
        CHECK_THROWS_AS(mapped_cov_trace(Eigen::MatrixXd::Ones(2, 3), Eigen::MatrixXd::Identity(2, 2)),
                        DimensionMismatch);
    }
}

TEST_CASE("selection picks the smallest total") {
    const SelectionResult r = select_model({CriterionScore::make(0, 0, 3.0), CriterionScore::make(1, 0, 1.0),
                                            CriterionScore::make(2, 0, 2.0)});
    CHECK(r.selected == 1);
    CHECK(r.selected_score().total == 1.0);
}

TEST_CASE("ties go to the smaller model") {
    const SelectionResult r = select_model({CriterionScore::make(5, 0, 1.0), CriterionScore::make(2, 0, 1.0)});
    CHECK(r.selected == 2);
}

TEST_CASE("non-finite score names the offending model") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    try {
        select_model({CriterionScore::make(0, 0, nan), CriterionScore::make(1, 0, 1.0)});
        FAIL("expected NonFiniteScore");
    } catch (const NonFiniteScore& e) {
        CHECK(e.model_index() == 0);
    }
}

TEST_CASE("empty candidate set") {
    CHECK_THROWS_AS(select_model({}), EmptyCandidateSet);
}

TEST_CASE("score total is bias plus covariance") {
    const CriterionScore s = CriterionScore::make(3, 0.25, 0.5);
    CHECK(s.total == 0.75);
    CHECK(s.model_index == 3);
}

TEST_CASE("trial streams") {
    SUBCASE("same triple reproduces the first 1000 draws") {
        Rng a = derive_trial_rng(42, 3, 7);
        Rng b = derive_trial_rng(42, 3, 7);
        for (int i = 0; i < 1000; ++i) {
            REQUIRE(a() == b());
        }
    }
    SUBCASE("neighbouring trials differ in their first 16 draws") {
        Rng a = derive_trial_rng(42, 3, 7);
        Rng b = derive_trial_rng(42, 3, 8);
        int same = 0;
        for (int i = 0; i < 16; ++i) {
            same += a() == b() ? 1 : 0;
        }
        CHECK(same == 0);
    }
    SUBCASE("chi-square uniformity smoke test") {
        // 20 bins, 100000 draws: the 0.999 quantile of chi2(19) is 43.82.
        Rng rng = derive_trial_rng(9, 0, 0);
        std::vector<int> bins(20, 0);
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            ++bins[static_cast<std::size_t>(uniform_open(rng) * 20.0)];
        }
        double chi2 = 0.0;
        const double expect = n / 20.0;
        for (int c : bins) {
            chi2 += (c - expect) * (c - expect) / expect;
        }
        CHECK(chi2 < 43.82);
    }
    SUBCASE("normal draws have unit variance") {
        Rng rng = derive_aux_rng(9, 1, 0);
        double s = 0.0;
        double s2 = 0.0;
        const int n = 200000;
        for (int i = 0; i < n; ++i) {
            const double z = standard_normal(rng);
            s += z;
            s2 += z * z;
        }
        CHECK(std::abs(s / n) < 0.01);
        CHECK(std::abs(s2 / n - 1.0) < 0.02);
    }
}
