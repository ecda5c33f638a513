#include <doctest.h>

#include <cmath>
#include <random>

#include "mlblue/blue_core.hpp"
#include "mlblue/error.hpp"
#include "support.hpp"

using namespace mlblue;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd rho_matrix(double rho) {
    MatrixXd c(2, 2);
    c << 1, rho, rho, 1;
    return c;
}

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

}  // namespace

TEST_CASE("psi assembly") {
    const auto one = BlueSystem::from_groups(1, {{0}}, {scalar(4)});
    const std::vector<double> n25 = {25};
    CHECK(assemble_psi(n25, one)(0, 0) == doctest::Approx(6.25));

    const auto disjoint = BlueSystem::from_groups(2, {{0}, {1}}, {scalar(1), scalar(1)});
    const std::vector<double> n37 = {3, 7};
    CHECK(assemble_psi(n37, disjoint).isApprox(Eigen::Vector2d(3, 7).asDiagonal().toDenseMatrix()));

    const MatrixXd c = rho_matrix(0.9);
    const auto joint = BlueSystem::from_groups(2, {{0, 1}}, {c});
    const std::vector<double> n10 = {10};
    const MatrixXd psi = assemble_psi(n10, joint);
    CHECK(psi.isApprox(10.0 * c.inverse()));
    CHECK(pseudo_inverse(psi).matrix().isApprox(c / 10.0));
}

TEST_CASE("pseudo-inverse") {
    MatrixXd d = MatrixXd::Zero(2, 2);
    d(0, 0) = 2;
    const MatrixXd dp = pseudo_inverse(d).matrix();
    CHECK(dp(0, 0) == doctest::Approx(0.5));
    CHECK(dp(1, 1) == 0.0);
    CHECK(pseudo_inverse(MatrixXd::Identity(3, 3)).matrix().isApprox(MatrixXd::Identity(3, 3)));

    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    MatrixXd b(4, 2);
    for (int i = 0; i < 4; ++i) b.row(i) << g(rng), g(rng);
    const MatrixXd a = b * b.transpose();
    const auto pinv = pseudo_inverse(a);
    CHECK(pinv.rank == 2);
    const MatrixXd x = pinv.matrix();
    CHECK((a * x * a - a).norm() < 1e-10);
    CHECK((x * a * x - x).norm() < 1e-10);
    CHECK(((a * x).transpose() - a * x).norm() < 1e-10);
    CHECK(((x * a).transpose() - x * a).norm() < 1e-10);
}

TEST_CASE("blue variance closed forms") {
    const auto one = BlueSystem::from_groups(1, {{0}}, {scalar(4)});
    const std::vector<double> n100 = {100};
    CHECK(blue_variance(n100, one) == doctest::Approx(0.04));

    const auto joint = BlueSystem::from_groups(2, {{0, 1}}, {rho_matrix(0.9)});
    const std::vector<double> n10 = {10};
    CHECK(blue_variance(n10, joint) == doctest::Approx(0.1));

    const auto lf_only = BlueSystem::from_groups(2, {{0}, {1}}, {scalar(1), scalar(1)});
    const std::vector<double> n0 = {0, 5};
    CHECK_THROWS_AS(blue_variance(n0, lf_only), WellPosednessError);
}

TEST_CASE("variance matches the oracle and Monte Carlo replication") {
    const MatrixXd c = rho_matrix(0.9);
    const auto sys = BlueSystem::from_groups(2, {{0, 1}, {1}}, {c, scalar(1)});
    const std::vector<double> n = {10, 100};
    const double v = blue_variance(n, sys);
    CHECK(v == doctest::Approx(testsupport::oracle_variance(n, {{0, 1}, {1}}, c, 2)).epsilon(1e-12));
    CHECK(hf_variance_from_psi(assemble_psi(n, sys)) == doctest::Approx(v).epsilon(1e-12));

    std::mt19937_64 rng(2024);
    std::normal_distribution<double> g;
    const Eigen::LLT<MatrixXd> chol(c);
    const MatrixXd lower = chol.matrixL();
    const std::vector<long> counts = {10, 100};
    const int reps = 100000;
    double sum = 0.0, sum2 = 0.0;
    std::vector<MatrixXd> drawn = {MatrixXd(10, 2), MatrixXd(100, 1)};
    for (int r = 0; r < reps; ++r) {
        for (int j = 0; j < 10; ++j) drawn[0].row(j) = (lower * Eigen::Vector2d(g(rng), g(rng))).transpose();
        for (int j = 0; j < 100; ++j) drawn[1](j, 0) = g(rng);
        const double mu = combine_samples(counts, drawn, sys).mu_hf;
        sum += mu;
        sum2 += mu * mu;
    }
    const double mean = sum / reps;
    const double var = (sum2 - reps * mean * mean) / (reps - 1);
    const double se = var * std::sqrt(2.0 / (reps - 1));
    CHECK(std::abs(var - v) < 3.0 * se);
    CHECK(std::abs(mean) < 3.0 * std::sqrt(var / reps));
}

TEST_CASE("null space of psi") {
    const auto two = BlueSystem::from_groups(2, {{0}, {1}}, {scalar(1), scalar(1)});
    const std::vector<double> only_hf = {4, 0};
    const MatrixXd basis = null_space_basis(only_hf, two);
    REQUIRE(basis.cols() == 1);
    CHECK(basis.col(0).isApprox(VectorXd::Unit(2, 1)));
    const std::vector<double> both = {4, 1};
    CHECK(null_space_basis(both, two).cols() == 0);

    std::mt19937_64 rng(9);
    const MatrixXd c = testsupport::random_covariance(3, rng);
    const auto three = BlueSystem::from_groups(3, {{0, 1}, {2}}, {testsupport::principal(c, {0, 1}), scalar(c(2, 2))});
    const std::vector<double> n = {5, 0};
    const MatrixXd psi = assemble_psi(n, three);
    const MatrixXd nb = null_space_basis(n, three);
    REQUIRE(nb.cols() == 1);
    CHECK((psi * nb).norm() < 1e-14);
    const VectorXd ev = Eigen::SelfAdjointEigenSolver<MatrixXd>(psi).eigenvalues();
    CHECK(std::abs(ev(0)) < 1e-12 * ev(2));
}

TEST_CASE("combining samples") {
    const auto one = BlueSystem::from_groups(1, {{0}}, {scalar(1)});
    const std::vector<long> n3 = {3};
    MatrixXd x(3, 1);
    x << 1, 2, 3;
    CHECK(combine_samples(n3, {x}, one).mu_hf == doctest::Approx(2.0));

    // Degenerate models: every sample equals the mean.
    const MatrixXd c = rho_matrix(0.5);
    const auto sys = BlueSystem::from_groups(2, {{0, 1}, {1}}, {c, scalar(1)});
    const std::vector<long> n = {4, 6};
    std::vector<MatrixXd> drawn = {MatrixXd(4, 2), MatrixXd::Constant(6, 1, -2.0)};
    drawn[0].col(0).setConstant(7.5);
    drawn[0].col(1).setConstant(-2.0);
    const auto est = combine_samples(n, drawn, sys);
    CHECK(est.mu_hf == doctest::Approx(7.5).epsilon(1e-14));
    CHECK(est.mu(1) == doctest::Approx(-2.0).epsilon(1e-14));
}

TEST_CASE("variance under a mismatched covariance") {
    std::mt19937_64 rng(4);
    const MatrixXd truth = testsupport::random_covariance(2, rng);
    const MatrixXd wrong = rho_matrix(0.3);
    const std::vector<Group> groups = {{0}, {0, 1}, {1}};
    auto system_of = [&](const MatrixXd& c) {
        return BlueSystem::from_groups(2, groups, {testsupport::principal(c, {0}), c, testsupport::principal(c, {1})});
    };
    const std::vector<double> n = {3, 5, 40};
    const auto t = system_of(truth);
    CHECK(blue_variance_under(n, t, t) == doctest::Approx(blue_variance(n, t)).epsilon(1e-10));
    // The BLUE is optimal under the truth, so any other weights do worse.
    CHECK(blue_variance_under(n, system_of(wrong), t) > blue_variance(n, t));
}
