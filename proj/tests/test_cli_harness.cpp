#include <doctest.h>

#include <cmath>
#include <mutex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mlblue/blue_core.hpp"
#include "mlblue/error.hpp"
#include "mlblue/estimate.hpp"
#include "mlblue/evaluator.hpp"
#include "mlblue/problem_config.hpp"
#include "mlblue/report_io.hpp"

using namespace mlblue;
using nlohmann::json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

json two_model_doc() {
    return json::parse(R"({
      "models": [{"cost": 1.0}, {"cost": 0.05}],
      "evaluator": {"synthetic": {"input_dim": 2, "loadings": [[[1.0, 0.3], [1.0, 0.6]]], "offsets": [[2.5, 2.0]]}},
      "covariance": {"source": "exact"},
      "mode": {"type": "budget", "budget": 20.0},
      "seed": 11
    })");
}

// Records every input handed to each model.
class RecordingEvaluator final : public Evaluator {
public:
    explicit RecordingEvaluator(SyntheticSuite inner) : inner_(std::move(inner)) {}
    [[nodiscard]] int num_models() const override { return inner_.num_models(); }
    [[nodiscard]] int num_outputs() const override { return inner_.num_outputs(); }
    [[nodiscard]] int input_dim() const override { return inner_.input_dim(); }
    [[nodiscard]] bool thread_safe() const override { return true; }
    void evaluate(const VectorXd& z, std::span<const int> models, MatrixXd& out) override {
        {
            std::lock_guard lock(mutex_);
            calls.emplace_back(std::vector<int>(models.begin(), models.end()), z);
        }
        inner_.evaluate(z, models, out);
    }
    std::vector<std::pair<std::vector<int>, VectorXd>> calls;

private:
    SyntheticSuite inner_;
    std::mutex mutex_;
};

}  // namespace

TEST_CASE("minimal config") {
    const auto cfg = parse_problem(json::parse(R"({"models": [{"cost": 2.0}],
        "covariance": {"source": "inline", "matrices": [[[4.0]]]},
        "mode": {"type": "budget", "budget": 10.0}})"));
    CHECK(cfg.num_outputs == 1);
    const auto p = prepare_problem(cfg);
    CHECK(p.groups.size() == 1);
}

TEST_CASE("strict parsing reports JSON pointers") {
    auto doc = two_model_doc();
    doc["models"][0]["colour"] = "red";
    CHECK_THROWS_WITH_AS(parse_problem(doc), doctest::Contains("/models/0/colour"), ConfigError);
    doc = two_model_doc();
    doc["mode"]["budget"] = "lots";
    CHECK_THROWS_WITH_AS(parse_problem(doc), doctest::Contains("/mode/budget"), ConfigError);
    doc = two_model_doc();
    doc["models"][1]["outputs"] = json::array({3});
    CHECK_THROWS_AS(parse_problem(doc), ConfigError);
}

TEST_CASE("unknown covariance entry denies the group") {
    const auto cfg = parse_problem(json::parse(R"({
      "models": [{"cost": 1.0}, {"cost": 0.1}, {"cost": 0.01}],
      "covariance": {"source": "inline", "matrices": [[[1.0, 0.8, null], [0.8, 1.0, 0.7], [null, 0.7, 1.0]]]},
      "mode": {"type": "budget", "budget": 10.0}
    })"));
    const auto p = prepare_problem(cfg);
    CHECK_FALSE(p.groups.index_of({0, 2}).has_value());
    CHECK_FALSE(p.groups.index_of({0, 1, 2}).has_value());
    CHECK(p.groups.index_of({1, 2}).has_value());
    CHECK(p.groups.size() == 5);
}

TEST_CASE("canonical round trip") {
    for (const char* path : {"two_model_budget.json", "synthetic_two_outputs.json", "subprocess_pilot.json"}) {
        const auto cfg = load_problem(std::string(MLBLUE_SOURCE_DIR) + "/configs/" + path);
        const auto again = parse_problem(json::parse(canonical_form(cfg)));
        CHECK(canonical_form(again) == canonical_form(cfg));
    }
    CHECK_THROWS_AS(load_problem("/nonexistent/problem.json"), ConfigError);
}

TEST_CASE("zero-variance suite returns the offset") {
    SyntheticSuite suite({MatrixXd::Zero(2, 3)}, {VectorXd::Constant(2, 4.25)}, {{true, true}});
    const ModelSet models({{1.0, {0}}, {0.1, {0}}}, 1);
    const GroupSet groups = enumerate_groups(models, 2);
    MosapSpec spec = make_mosap_spec(models, groups, CovarianceStore::from_dense({MatrixXd::Identity(2, 2)}));
    Allocation a;
    a.n = {3, 5, 2};
    a.is_integer = true;
    refresh_allocation(a, spec);
    EstimateOptions opts;
    opts.replications = 20;
    const auto r = run_estimate(spec, groups, a, suite, opts);
    CHECK(r.mu_hat[0] == doctest::Approx(4.25).epsilon(1e-14));
    CHECK(r.empirical_variance[0] == doctest::Approx(0.0).epsilon(1e-20));
    CHECK(r.total_cost == 3 * 1.0 + 5 * 0.1 + 2 * 1.1);
}

TEST_CASE("two-model suite variance matches the prediction") {
    const auto cfg = parse_problem(two_model_doc());
    const auto p = prepare_problem(cfg);
    const auto a = integer_projection(solve_mosap(p.spec), p.spec);
    EstimateOptions opts;
    opts.seed = 5;
    opts.replications = 10000;
    const auto r = run_estimate(p.spec, p.groups, a, *p.evaluator, opts);
    CHECK(std::abs(r.empirical_variance[0] / r.predicted_variance[0] - 1.0) < 0.1);
    CHECK(std::abs(r.empirical_mean[0] - 2.5) < 3.0 * std::sqrt(r.empirical_variance[0] / 10000));
    double cost = 0.0;
    for (std::size_t k = 0; k < a.n.size(); ++k) cost += a.n[k] * p.spec.group_costs[k];
    CHECK(r.total_cost == cost);
}

TEST_CASE("determinism and coupling of the random streams") {
    const auto cfg = parse_problem(two_model_doc());
    const auto p = prepare_problem(cfg);
    const auto a = integer_projection(solve_mosap(p.spec), p.spec);
    EstimateOptions opts;
    opts.seed = 9;
    opts.replications = 50;
    const auto r1 = run_estimate(p.spec, p.groups, a, *p.evaluator, opts);
    opts.parallel = false;
    const auto r2 = run_estimate(p.spec, p.groups, a, *p.evaluator, opts);
    CHECK(r1.empirical_mean == r2.empirical_mean);
    CHECK(r1.empirical_variance == r2.empirical_variance);

    auto* suite = dynamic_cast<SyntheticSuite*>(p.evaluator.get());
    REQUIRE(suite != nullptr);
    RecordingEvaluator rec(*suite);
    opts.replications = 3;
    (void)run_estimate(p.spec, p.groups, a, rec, opts);
    // One evaluate call per group sample, all models of the group at once, and
    // no input vector reused across groups, samples or replications.
    std::set<std::vector<double>> seen;
    std::size_t expected = 0;
    for (double n : a.n) expected += static_cast<std::size_t>(n) * 3;
    CHECK(rec.calls.size() == expected);
    for (const auto& [models, z] : rec.calls) {
        const int k = *p.groups.index_of(models);
        CHECK(a.n[static_cast<std::size_t>(k)] > 0);
        seen.insert(std::vector<double>(z.data(), z.data() + z.size()));
    }
    CHECK(seen.size() == rec.calls.size());

    const VectorXd est = draw_input(4, 1, StreamDomain::estimate, 0, 0, 0);
    const VectorXd pil = draw_input(4, 1, StreamDomain::pilot, 0, 0, 0);
    CHECK(est != pil);
    CHECK(est == draw_input(4, 1, StreamDomain::estimate, 0, 0, 0));
}

TEST_CASE("efficiency report") {
    CHECK(efficiency_report(0.5, 0.5) == 0.0);
    CHECK(efficiency_report(10.0, 1.0) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(efficiency_report(0.0, 1.0), ConfigError);
}

TEST_CASE("allocation JSON round trip") {
    const auto cfg = parse_problem(two_model_doc());
    const auto p = prepare_problem(cfg);
    for (bool integer : {false, true}) {
        Allocation a = solve_mosap(p.spec);
        if (integer) a = integer_projection(a, p.spec);
        const json doc = allocation_to_json(a, p.groups);
        const Allocation back = allocation_from_json(json::parse(doc.dump()), p.groups);
        CHECK(back.n == a.n);
        CHECK(back.selected_groups == a.selected_groups);
        CHECK(back.per_output_variance == a.per_output_variance);
        CHECK(back.total_cost == a.total_cost);
        CHECK(back.is_integer == a.is_integer);
        CHECK(back.solver.iterations == a.solver.iterations);
        CHECK(back.solver.status == a.solver.status);
        CHECK(back.relaxation_gap == a.relaxation_gap);
        CHECK(back.flags == a.flags);
        CHECK(allocation_to_json(back, p.groups) == doc);
    }
}

TEST_CASE("frontier CSV") {
    std::vector<FrontierPoint> pts(3);
    pts[0].tau_tilde = 10.0;
    pts[0].cost = 1.0;
    pts[0].variance = 0.1;
    pts[0].normalized_error = 0.3;
    pts[1].tau_tilde = 0.1;
    pts[1].cost = 1.0 / 3.0;
    pts[1].variance = 0.2;
    pts[1].normalized_error = 0.4;
    pts[2].ok = false;
    std::ostringstream out;
    write_frontier_csv(pts, out);
    CHECK(out.str() ==
          "tau_tilde,cost,variance,normalized_error\n"
          "0.10000000000000001,0.33333333333333331,0.20000000000000001,0.40000000000000002\n"
          "10,1,0.10000000000000001,0.29999999999999999\n");
    std::ostringstream empty;
    write_frontier_csv({}, empty);
    CHECK(empty.str() == "tau_tilde,cost,variance,normalized_error\n");
    CHECK_THROWS_AS(emit_text("x", "/nonexistent/dir/out.csv"), IoError);
}

TEST_CASE("subprocess evaluator") {
    const std::string script = std::string(MLBLUE_SOURCE_DIR) + "/configs/linear_model.py";
    SubprocessEvaluator eval({{"python3", script, "1.0", "0.3"}, {"python3", script, "2.0"}}, 1, 2);
    VectorXd z(2);
    z << 0.5, -1.0;
    MatrixXd out;
    const std::vector<int> both = {0, 1};
    eval.evaluate(z, both, out);
    CHECK(out(0, 0) == doctest::Approx(0.2));
    CHECK(out(1, 0) == doctest::Approx(1.0));

    SubprocessEvaluator broken({{"python3", std::string(MLBLUE_SOURCE_DIR) + "/configs/missing.py"}}, 1, 2);
    const std::vector<int> first = {0};
    CHECK_THROWS_AS(broken.evaluate(z, first, out), EvaluatorError);

    auto cfg = load_problem(std::string(MLBLUE_SOURCE_DIR) + "/configs/subprocess_pilot.json");
    cfg.subprocess->commands = {{"python3", script, "1.0", "0.3"}, {"python3", script, "1.0", "0.6"}};
    const auto p = prepare_problem(cfg);
    // Pilot covariance of (z1 + 0.3 z2, z1 + 0.6 z2) from 50 draws.
    CHECK(p.store.value(0, 0, 0) == doctest::Approx(1.09).epsilon(0.5));
    const auto a = integer_projection(solve_mosap(p.spec), p.spec);
    EstimateOptions opts;
    opts.replications = 2;
    const auto r = run_estimate(p.spec, p.groups, a, *p.evaluator, opts);
    CHECK(std::isfinite(r.mu_hat[0]));
}
