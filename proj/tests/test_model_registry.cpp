#include <doctest.h>

#include "mlblue/error.hpp"
#include "mlblue/model_registry.hpp"
#include "support.hpp"

using namespace mlblue;

namespace {

ModelSet uniform_models(int l, int m = 1, double cost = 1.0) {
    std::vector<Model> models;
    for (int i = 0; i < l; ++i) {
        Model mdl;
        mdl.cost = cost;
        for (int s = 0; s < m; ++s) mdl.outputs.push_back(s);
        models.push_back(mdl);
    }
    return ModelSet(models, m);
}

}  // namespace

TEST_CASE("three models, all groups, in size-then-lexicographic order") {
    const GroupSet g = enumerate_groups(uniform_models(3), 3);
    const std::vector<Group> expected = {{0}, {1}, {2}, {0, 1}, {0, 2}, {1, 2}, {0, 1, 2}};
    CHECK(g.groups == expected);
    CHECK(g.costs == std::vector<double>{1, 1, 1, 2, 2, 2, 3});
}

TEST_CASE("single model gives one group") {
    const GroupSet g = enumerate_groups(uniform_models(1), 1);
    REQUIRE(g.size() == 1);
    CHECK(g.groups[0] == Group{0});
}

TEST_CASE("group counts match binomial sums") {
    CHECK(enumerate_groups(uniform_models(12), 3).size() == 298);
    CHECK(enumerate_groups(uniform_models(12), 5).size() == 1585);
    CHECK(binomial(12, 3) == 220);
    for (int l = 1; l <= 6; ++l) {
        for (int kappa = 1; kappa <= l; ++kappa) {
            CHECK(enumerate_groups(uniform_models(l), kappa).groups == testsupport::all_subsets(l, kappa));
        }
    }
}

TEST_CASE("deny list and output restrictions") {
    std::vector<Model> models = {{1.0, {0, 1}}, {0.5, {0, 1}}, {0.1, {0}}};
    const ModelSet set(models, 2);
    const GroupSet g = enumerate_groups(set, 3, {{2, 0}});
    CHECK_FALSE(g.index_of({0, 2}).has_value());
    const int k = *g.index_of({0, 1, 2});
    CHECK(g.allowed[0][static_cast<std::size_t>(k)]);
    CHECK_FALSE(g.allowed[1][static_cast<std::size_t>(k)]);
    CHECK(g.active_models(1) == std::vector<int>{0, 1});
    CHECK_THROWS_AS(enumerate_groups(set, 3, {{0}, {0, 1}}), ConfigError);
    CHECK_THROWS_AS(enumerate_groups(set, 4), ConfigError);
}

TEST_CASE("restriction indices") {
    CHECK(restriction_indices({0, 2}, 3) == std::vector<int>{0, 2});
    CHECK(restriction_indices({1}, 2) == std::vector<int>{1});
    CHECK(restriction_indices({0, 1, 2}, 3) == std::vector<int>{0, 1, 2});
    CHECK_THROWS_AS(restriction_indices({3}, 3), ConfigError);
}

TEST_CASE("budget feasibility against the cheapest high-fidelity group") {
    const ModelSet set({{10.0, {0}}, {0.5, {0}}}, 1);
    const GroupSet g = enumerate_groups(set, 2);
    CHECK(check_budget_feasibility(g, 10.0, 0));
    CHECK_FALSE(check_budget_feasibility(g, 9.99, 0));
    CHECK(g.groups[static_cast<std::size_t>(cheapest_hf_group(g, 0))] == Group{0});
    const GroupSet one = enumerate_groups(uniform_models(1), 1);
    CHECK(check_budget_feasibility(one, 1.0, 0));
}
