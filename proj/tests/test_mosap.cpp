#include <doctest.h>

#include <cmath>
#include <random>

#include "mlblue/blue_core.hpp"
#include "mlblue/error.hpp"
#include "mlblue/mosap.hpp"
#include "support.hpp"

using namespace mlblue;
using Eigen::MatrixXd;

namespace {

MosapSpec spec_for(const std::vector<double>& costs, const std::vector<MatrixXd>& covs, int kappa,
                   std::vector<Group> deny = {}) {
    std::vector<Model> models;
    const int m = static_cast<int>(covs.size());
    for (double c : costs) {
        Model mdl;
        mdl.cost = c;
        for (int s = 0; s < m; ++s) mdl.outputs.push_back(s);
        models.push_back(mdl);
    }
    const ModelSet set(models, m);
    return make_mosap_spec(set, enumerate_groups(set, kappa, deny), CovarianceStore::from_dense(covs));
}

MatrixXd two_by_two() {
    MatrixXd c(2, 2);
    c << 1, 0.9, 0.9, 1;
    return c;
}

}  // namespace

TEST_CASE("single model budget and tolerance") {
    auto spec = spec_for({1.0}, {MatrixXd::Constant(1, 1, 4.0)}, 1);
    spec.budget = 100.0;
    const auto a = solve_mosap(spec);
    CHECK(a.n[0] == doctest::Approx(100.0).epsilon(1e-6));
    CHECK(a.per_output_variance[0] == doctest::Approx(0.04).epsilon(1e-6));

    spec.mode = MosapMode::tolerance;
    spec.tolerance = {0.04};
    const auto t = solve_mosap(spec);
    CHECK(t.n[0] == doctest::Approx(100.0).epsilon(1e-6));
    CHECK(t.total_cost == doctest::Approx(100.0).epsilon(1e-6));
}

TEST_CASE("two-model budget beats plain Monte Carlo and matches the grid oracle") {
    auto spec = spec_for({1.0, 0.01}, {two_by_two()}, 2);
    spec.budget = 10.0;
    const auto a = solve_mosap(spec);
    CHECK(a.solver.status == SdpStatus::optimal);
    CHECK(a.per_output_variance[0] < 0.1);
    std::vector<Group> groups = {{0}, {1}, {0, 1}};
    const double oracle = testsupport::oracle_budget_minimum(groups, two_by_two(), spec.group_costs, 10.0, 2, 400);
    CHECK(a.per_output_variance[0] == doctest::Approx(oracle).epsilon(1e-3));
    CHECK(std::abs(a.sdp_t - a.per_output_variance[0]) / a.per_output_variance[0] < 1e-6);
    CHECK(a.total_cost <= 10.0 * (1 + 1e-7));
}

TEST_CASE("a model lacking an output is never used for it") {
    std::mt19937_64 rng(31);
    const MatrixXd c1 = testsupport::random_covariance(3, rng);
    MatrixXd c2 = testsupport::random_covariance(3, rng);
    const ModelSet set({{1.0, {0, 1}}, {0.1, {0, 1}}, {0.01, {0}}}, 2);
    const GroupSet groups = enumerate_groups(set, 3);
    auto store = CovarianceStore::from_dense({c1, c2});
    for (int i = 0; i < 3; ++i) store.forget(1, 2, i);
    auto spec = make_mosap_spec(set, restrict_to_known(groups, store), store);
    spec.budget = 50.0;
    const auto a = solve_mosap(spec);
    const MatrixXd psi2 = assemble_psi(a.n, spec.systems[1]);
    CHECK(psi2.row(2).norm() == 0.0);
    const MatrixXd basis = null_space_basis(a.n, spec.systems[1]);
    REQUIRE(basis.cols() == 1);
    CHECK(std::abs(basis(2, 0)) == doctest::Approx(1.0));
}

TEST_CASE("tolerance duality and monotonicity") {
    std::mt19937_64 rng(41);
    const MatrixXd c = testsupport::random_covariance(3, rng);
    auto spec = spec_for({1.0, 0.05, 0.002}, {c}, 3);
    spec.budget = 30.0;
    const auto b = solve_mosap(spec);
    auto tol = spec;
    tol.mode = MosapMode::tolerance;
    tol.tolerance = {b.max_variance()};
    CHECK(solve_mosap(tol).total_cost == doctest::Approx(30.0).epsilon(1e-3));

    double prev = std::numeric_limits<double>::infinity();
    for (double eps2 : {1e-3, 3e-3, 1e-2, 3e-2, 1e-1}) {
        tol.tolerance = {eps2};
        const auto a = solve_mosap(tol);
        CHECK(a.total_cost <= prev * (1 + 1e-7));
        CHECK(a.max_variance() <= eps2 * (1 + 1e-6));
        prev = a.total_cost;
    }
}

TEST_CASE("single output equals a one-output multi-output solve") {
    std::mt19937_64 rng(43);
    const MatrixXd c = testsupport::random_covariance(3, rng);
    auto a = spec_for({1.0, 0.1, 0.01}, {c}, 3);
    auto b = spec_for({1.0, 0.1, 0.01}, {c}, 3);
    a.budget = b.budget = 10.0;
    CHECK(solve_mosap(a).n == solve_mosap(b).n);
}

TEST_CASE("denied groups stay unsampled") {
    std::mt19937_64 rng(47);
    const MatrixXd c = testsupport::random_covariance(3, rng);
    auto spec = spec_for({1.0, 0.1, 0.01}, {c}, 3, {{0, 1}, {0, 1, 2}});
    spec.budget = 10.0;
    const auto a = solve_mosap(spec);
    CHECK(a.n.size() == 5);
    CHECK(solve_mosap(spec).solver.status == SdpStatus::optimal);
}

TEST_CASE("pareto extremes and frontier consistency") {
    std::mt19937_64 rng(53);
    const MatrixXd c = testsupport::random_covariance(4, rng);
    auto spec = spec_for({1.0, 0.2, 0.04, 0.008}, {c}, 4);
    spec.mode = MosapMode::pareto;
    std::vector<double> grid;
    for (int e = -7; e <= 4; ++e) grid.push_back(std::pow(10.0, e));
    const auto pts = pareto_sweep(spec, grid);
    REQUIRE(pts.size() == grid.size());
    for (const auto& p : pts) REQUIRE(p.ok);
    const auto& last = pts.back();
    CHECK(last.cost == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(last.allocation.n[0] == doctest::Approx(1.0).epsilon(1e-6));
    for (std::size_t i = 1; i < pts.size(); ++i) {
        CHECK(pts[i].cost <= pts[i - 1].cost * (1 + 1e-6));
        CHECK(pts[i].variance >= pts[i - 1].variance * (1 - 1e-6));
    }
    // No computed point is strictly dominated by another.
    for (const auto& p : pts) {
        for (const auto& q : pts) {
            CHECK_FALSE((q.cost < p.cost * (1 - 1e-6) && q.variance < p.variance * (1 - 1e-6)));
        }
    }
    std::vector<double> lx, ly;
    for (int i = 0; i < 4; ++i) {
        lx.push_back(std::log10(pts[static_cast<std::size_t>(i)].cost));
        ly.push_back(std::log10(pts[static_cast<std::size_t>(i)].normalized_error));
    }
    CHECK(testsupport::fit_slope(lx, ly) == doctest::Approx(-0.5).epsilon(0.05));
}

TEST_CASE("integer projection basics") {
    auto spec = spec_for({1.0, 0.01}, {two_by_two()}, 2);
    spec.budget = 10.0;
    Allocation whole;
    whole.mode = MosapMode::budget;
    whole.n = {3, 0, 500};
    spec.budget = 3 + 500 * 1.01;
    refresh_allocation(whole, spec);
    CHECK(integer_projection(whole, spec).n == whole.n);

    // Two fractional entries: the winner is the best of four candidates.
    Allocation frac;
    frac.mode = MosapMode::budget;
    frac.n = {2.3, 0, 7.8};
    spec.budget = 2.3 + 7.8 * 1.01;
    refresh_allocation(frac, spec);
    const auto p = integer_projection(frac, spec);
    double best = testsupport::kInf;
    std::vector<double> arg;
    for (double a : {2.0, 3.0}) {
        for (double b : {7.0, 8.0}) {
            const std::vector<double> n = {a, 0, b};
            if (a + 1.01 * b > spec.budget) continue;
            const double v = testsupport::oracle_variance(n, {{0}, {1}, {0, 1}}, two_by_two(), 2);
            if (v < best) {
                best = v;
                arg = n;
            }
        }
    }
    CHECK(p.n == arg);
    CHECK(p.is_integer);

    auto tol = spec_for({1.0}, {MatrixXd::Constant(1, 1, 1.0)}, 1);
    tol.mode = MosapMode::tolerance;
    tol.tolerance = {3.0};
    Allocation small;
    small.mode = MosapMode::tolerance;
    small.n = {0.4};
    const auto forced = integer_projection(small, tol);
    CHECK(forced.n[0] == 1.0);
    CHECK(forced.max_variance() <= 3.0);
}

TEST_CASE("spec validation") {
    auto spec = spec_for({1.0, 0.01}, {two_by_two()}, 2);
    spec.budget = 0.5;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec.mode = MosapMode::tolerance;
    spec.tolerance = {-1.0};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    CHECK(tau_from_normalized(5.0, {3.0, 4.0}) == doctest::Approx(1.0));
    CHECK(mosap_mode_from_string("pareto") == MosapMode::pareto);
    CHECK_THROWS_AS(mosap_mode_from_string("fastest"), ConfigError);
}
