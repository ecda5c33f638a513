#include <doctest.h>

#include <cmath>
#include <random>

#include "mlblue/baselines.hpp"
#include "mlblue/error.hpp"
#include "support.hpp"

using namespace mlblue;
using Eigen::MatrixXd;

TEST_CASE("MLMC level allocation") {
    const std::vector<double> v1 = {4.0};
    const std::vector<double> c1 = {1.0};
    const auto one = mlmc_allocation(v1, c1, 0.01);
    CHECK(one.continuous[0] == doctest::Approx(400.0));

    const std::vector<double> v = {1.0, 0.01};
    const std::vector<double> c = {0.01, 1.0};
    const double eps2 = 1e-2;
    const auto two = mlmc_allocation(v, c, eps2);
    CHECK(two.continuous[0] == doctest::Approx(2.0 / eps2));
    CHECK(two.continuous[1] == doctest::Approx(0.02 / eps2));
    CHECK(two.predicted_variance <= eps2);

    // Oracle: minimize n1 c1 + n2 c2 subject to V1/n1 + V2/n2 = eps2 on a grid of n1.
    double best_cost = testsupport::kInf, best_n1 = 0.0;
    for (int i = 1; i <= 2000000; ++i) {
        const double n1 = 100.0 + i * 1e-4;
        const double rest = eps2 - v[0] / n1;
        if (rest <= 0.0) continue;
        const double cost = n1 * c[0] + v[1] / rest * c[1];
        if (cost < best_cost) {
            best_cost = cost;
            best_n1 = n1;
        }
    }
    CHECK(two.continuous[0] == doctest::Approx(best_n1).epsilon(1e-3));
}

TEST_CASE("MFMC allocation") {
    const std::vector<double> rho1 = {1.0};
    const std::vector<double> var1 = {4.0};
    const std::vector<double> cost1 = {1.0};
    const auto mc = mfmc_allocation(rho1, var1, cost1, 0.01);
    REQUIRE(mc.admissible);
    CHECK(mc.continuous[0] == doctest::Approx(400.0));

    const std::vector<double> rho = {1.0, 0.9};
    const std::vector<double> var = {1.0, 1.0};
    const std::vector<double> cost = {1.0, 0.01};
    const double eps2 = 1e-3;
    const auto a = mfmc_allocation(rho, var, cost, eps2);
    REQUIRE(a.admissible);
    CHECK(a.predicted_variance <= eps2);
    CHECK(a.counts[0] <= a.counts[1]);
    // Oracle: for each m1, the smallest m2 meeting eps2 under the control-variate formula.
    double best = testsupport::kInf, best_m1 = 0.0;
    for (int i = 0; i <= 400000; ++i) {
        const double m1 = 100.0 + i * 0.0025;
        // eps2 = (1/m1 - (1/m1 - 1/m2) rho^2)
        const double inv_m2 = (eps2 - (1.0 - rho[1] * rho[1]) / m1) / (rho[1] * rho[1]);
        if (inv_m2 <= 0.0 || 1.0 / inv_m2 < m1) continue;
        const double c = m1 * cost[0] + cost[1] / inv_m2;
        if (c < best) {
            best = c;
            best_m1 = m1;
        }
    }
    CHECK(a.continuous[0] == doctest::Approx(best_m1).epsilon(1e-3));
    CHECK(a.continuous[0] * cost[0] + a.continuous[1] * cost[1] == doctest::Approx(best).epsilon(1e-3));

    const std::vector<double> bad = {1.0, 0.5, 0.8};
    const std::vector<double> v3 = {1, 1, 1};
    const std::vector<double> c3 = {1, 0.1, 0.01};
    const auto rej = mfmc_allocation(bad, v3, c3, 0.01);
    CHECK_FALSE(rej.admissible);
    CHECK_FALSE(rej.reason.empty());
}

TEST_CASE("MFMC admissibility does not depend on the cost unit") {
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> rho = {1.0, 0.7 + 0.29 * u(rng), 0.0, 0.0};
        rho[2] = rho[1] * u(rng);
        rho[3] = rho[2] * u(rng);
        const std::vector<double> var = {1, 1, 1, 1};
        std::vector<double> cost = {1.0, u(rng), 0.0, 0.0};
        cost[2] = cost[1] * u(rng);
        cost[3] = cost[2] * u(rng);
        std::vector<double> scaled = cost;
        for (double& c : scaled) c *= 1234.5;
        CHECK(mfmc_allocation(rho, var, cost, 0.01).admissible == mfmc_allocation(rho, var, scaled, 0.01).admissible);
    }
}

TEST_CASE("multi-output baselines") {
    std::mt19937_64 rng(67);
    const MatrixXd c = testsupport::random_covariance(3, rng);
    const std::vector<double> costs = {1.0, 0.1, 0.01};
    const auto one = CovarianceStore::from_dense({c});
    const auto twin = CovarianceStore::from_dense({c, c});
    for (auto method : {BaselineMethod::mc, BaselineMethod::mlmc, BaselineMethod::mfmc}) {
        BaselineAllocation a, b;
        try {
            a = multi_output_baseline(method, one, costs, {1e-3});
            b = multi_output_baseline(method, twin, costs, {1e-3, 1e-3});
        } catch (const ConfigError&) {
            CHECK(method == BaselineMethod::mfmc);
            continue;
        }
        CHECK(a.samples == b.samples);
        CHECK(a.total_cost == b.total_cost);
    }

    // Exhaustive oracle over the four MLMC subsets containing model 0.
    const auto best = multi_output_baseline(BaselineMethod::mlmc, one, costs, {1e-3});
    double oracle = testsupport::kInf;
    std::vector<int> arg;
    for (const std::vector<int>& subset : std::vector<std::vector<int>>{{0}, {0, 1}, {0, 2}, {0, 1, 2}}) {
        std::vector<double> lv, lc;
        for (std::size_t j = 0; j < subset.size(); ++j) {
            const int a = subset[j];
            if (j + 1 < subset.size()) {
                const int b = subset[j + 1];
                lv.push_back(c(a, a) + c(b, b) - 2 * c(a, b));
                lc.push_back(costs[static_cast<std::size_t>(a)] + costs[static_cast<std::size_t>(b)]);
            } else {
                lv.push_back(c(a, a));
                lc.push_back(costs[static_cast<std::size_t>(a)]);
            }
        }
        const double cost = mlmc_allocation(lv, lc, 1e-3).cost;
        if (cost < oracle) {
            oracle = cost;
            arg = subset;
        }
    }
    CHECK(best.model_subset == arg);
    CHECK(best.total_cost == doctest::Approx(oracle));
    for (double v : best.predicted_variance) CHECK(v <= 1e-3);
}

TEST_CASE("MFMC with nothing admissible") {
    MatrixXd c = MatrixXd::Identity(2, 2) * 1.0;
    c(0, 1) = c(1, 0) = 0.1;
    // Cheap model too expensive to pass the cost-ratio condition.
    const auto store = CovarianceStore::from_dense({c});
    const auto a = multi_output_baseline(BaselineMethod::mfmc, store, {1.0, 0.9}, {0.01});
    CHECK(a.model_subset == std::vector<int>{0});
    CHECK(baseline_method_from_string("mlmc") == BaselineMethod::mlmc);
    CHECK_THROWS_AS(baseline_method_from_string("acv"), ConfigError);
}
