#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "glyforge/common.hpp"
#include "glyforge/expm.hpp"

using namespace glyforge;

namespace {

// Independent oracle: plain truncated Taylor series. Valid for the small
// norms used below (40 terms push the truncation error far below 1e-12).
Eigen::MatrixXd taylor_exp(const Eigen::MatrixXd& m, int terms) {
    Eigen::MatrixXd sum = Eigen::MatrixXd::Identity(m.rows(), m.cols());
    Eigen::MatrixXd term = sum;
    for (int k = 1; k <= terms; ++k) {
        term = (term * m) / static_cast<double>(k);
        sum += term;
    }
    return sum;
}

Eigen::MatrixXd random_matrix(int n, double scale, Rng& rng) {
    Eigen::MatrixXd m(n, n);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) m(r, c) = rng.uniform(-scale, scale);
    }
    return m;
}

} // namespace

TEST_CASE("zero matrix maps to identity") {
    const Eigen::MatrixXd m = Eigen::MatrixXd::Zero(6, 6);
    CHECK((matrix_exp(m) - Eigen::MatrixXd::Identity(6, 6)).norm() == 0.0);
}

TEST_CASE("nilpotent matrix: exact two-term expansion") {
    // Strictly upper triangular 3x3 => M^3 = 0, exp(M) = I + M + M^2/2.
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 3);
    m(0, 1) = 2.0;
    m(1, 2) = -3.0;
    const Eigen::MatrixXd expected =
        Eigen::MatrixXd::Identity(3, 3) + m + 0.5 * m * m;
    CHECK((matrix_exp(m) - expected).norm() < 1e-14);
}

TEST_CASE("diagonal matrix: closed-form scalar exponentials") {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(4, 4);
    m(0, 0) = -0.5;
    m(1, 1) = 1.25;
    m(2, 2) = 0.0;
    m(3, 3) = -3.0;
    const Eigen::MatrixXd e = matrix_exp(m);
    CHECK(e(0, 0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-13));
    CHECK(e(1, 1) == doctest::Approx(std::exp(1.25)).epsilon(1e-13));
    CHECK(e(2, 2) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(e(3, 3) == doctest::Approx(std::exp(-3.0)).epsilon(1e-13));
    CHECK(std::abs(e(0, 1)) == 0.0);
}

TEST_CASE("matches a 40-term Taylor oracle on random matrices") {
    Rng rng(12345);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(12)); // up to 13x13
        Eigen::MatrixXd m = random_matrix(n, 1.0, rng);
        m *= 2.0 / std::max(m.cwiseAbs().colwise().sum().maxCoeff(), 1e-12);
        const Eigen::MatrixXd got = matrix_exp(m);
        const Eigen::MatrixXd want = taylor_exp(m, 40);
        CHECK((got - want).norm() / want.norm() < 1e-10);
    }
}

TEST_CASE("inverse consistency: exp(M) exp(-M) = I") {
    Rng rng(777);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd m = random_matrix(8, 0.5, rng);
        const Eigen::MatrixXd prod = matrix_exp(m) * matrix_exp(-m);
        CHECK((prod - Eigen::MatrixXd::Identity(8, 8)).norm() < 1e-9);
    }
}

TEST_CASE("commuting sum property: exp(A)exp(B) = exp(A+B) for commuting A,B") {
    // Polynomials in one matrix commute.
    Rng rng(99);
    const Eigen::MatrixXd base = random_matrix(5, 0.3, rng);
    const Eigen::MatrixXd a = base;
    const Eigen::MatrixXd b = 0.5 * base * base;
    CHECK((matrix_exp(a) * matrix_exp(b) - matrix_exp(a + b)).norm() < 1e-11);
}

TEST_CASE("input validation") {
    CHECK_THROWS_AS(matrix_exp(Eigen::MatrixXd::Zero(3, 4)), NumericError);
    CHECK_THROWS_AS(matrix_exp(Eigen::MatrixXd::Zero(17, 17)), NumericError);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(matrix_exp(bad), NumericError);
    bad(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(matrix_exp(bad), NumericError);
}
