#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mlblue/baselines.hpp"
#include "mlblue/error.hpp"
#include "mlblue/estimate.hpp"
#include "mlblue/mosap.hpp"
#include "mlblue/problem_config.hpp"
#include "mlblue/report_io.hpp"

namespace {

using namespace mlblue;
using nlohmann::json;

enum ExitCode { kOk = 0, kConfig = 2, kSolver = 3, kEvaluator = 4 };

struct CommonOptions {
    std::string config;
    std::string output = "-";
    std::optional<std::uint64_t> seed;
    std::optional<int> reps;
    std::optional<double> feastol;
    std::optional<double> gap_tol;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "Problem file (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--output", o.output, "Output path, '-' for stdout");
    cmd->add_option("--seed", o.seed, "Random seed, overrides the problem file");
    cmd->add_option("--reps", o.reps, "Replication count, overrides the problem file")->check(CLI::PositiveNumber);
    cmd->add_option("--feastol", o.feastol, "SDP feasibility tolerance")->check(CLI::PositiveNumber);
    cmd->add_option("--gap-tol", o.gap_tol, "SDP duality gap tolerance")->check(CLI::PositiveNumber);
}

ProblemConfig load(const CommonOptions& o) {
    ProblemConfig cfg = load_problem(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (o.reps) cfg.replications = *o.reps;
    if (o.feastol) cfg.solver.feas_tol = *o.feastol;
    if (o.gap_tol) cfg.solver.gap_tol = *o.gap_tol;
    return cfg;
}

Allocation allocate(const PreparedProblem& p, const SdpSettings& settings, bool integer) {
    Allocation a = solve_mosap(p.spec, settings);
    return integer ? integer_projection(a, p.spec) : a;
}

void run_allocate(const CommonOptions& o, bool continuous, const std::string& dump_sdp) {
    const auto cfg = load(o);
    const auto p = prepare_problem(cfg);
    if (!dump_sdp.empty()) {
        std::ofstream out(dump_sdp);
        if (!out) throw IoError(dump_sdp + ": cannot open for writing");
        write_sdp_triplets(build_sdp(p.spec).problem, out);
        if (!out) throw IoError(dump_sdp + ": write failed");
    }
    emit_json(allocation_to_json(allocate(p, cfg.solver, !continuous), p.groups), o.output);
}

void run_pareto(const CommonOptions& o, const std::string& format, bool integer) {
    const auto cfg = load(o);
    auto p = prepare_problem(cfg);
    const auto grid = cfg.tau_tilde_grid.empty() ? default_tau_tilde_grid() : cfg.tau_tilde_grid;
    p.spec.mode = MosapMode::pareto;
    const auto points = pareto_sweep(p.spec, grid, cfg.solver, integer);
    for (const auto& pt : points) {
        if (!pt.ok) std::cerr << "tau_tilde " << pt.tau_tilde << ": " << pt.error << '\n';
    }
    emit_frontier(points, o.output, format == "json" ? OutputFormat::json : OutputFormat::csv);
}

void run_estimate_cmd(const CommonOptions& o) {
    const auto cfg = load(o);
    const auto p = prepare_problem(cfg);
    if (!p.evaluator) throw ConfigError("/evaluator: estimation needs an evaluator");
    const Allocation a = allocate(p, cfg.solver, true);
    EstimateOptions opts;
    opts.seed = cfg.seed;
    opts.replications = cfg.replications;
    auto report = run_estimate(p.spec, p.groups, a, *p.evaluator, opts);
    // Reference: the continuous optimum under the exact covariances at the same budget.
    if (p.exact && cfg.mode == MosapMode::budget && report.replications > 1) {
        const GroupSet exact_groups = restrict_to_known(enumerate_groups(p.models, cfg.kappa, cfg.deny), *p.exact);
        MosapSpec best = make_mosap_spec(p.models, exact_groups, *p.exact);
        best.mode = MosapMode::budget;
        best.budget = cfg.budget;
        best.extra_linear.clear();
        const Allocation ref = solve_mosap(best, cfg.solver);
        for (int s = 0; s < p.spec.num_outputs(); ++s) {
            const double v = report.empirical_variance[static_cast<std::size_t>(s)];
            if (v > 0.0) {
                report.normalized_efficiency[static_cast<std::size_t>(s)] =
                    efficiency_report(v, ref.per_output_variance[static_cast<std::size_t>(s)]);
            }
        }
    }
    emit_json(estimate_to_json(report, p.groups), o.output);
}

void run_benchmark(const CommonOptions& o, const std::string& format) {
    const auto cfg = load(o);
    auto p = prepare_problem(cfg);
    std::vector<double> eps2 = cfg.eps2;
    if (cfg.mode != MosapMode::tolerance) {
        // Compare at the tolerance the configured MLBLUE allocation attains.
        const Allocation a = solve_mosap(p.spec, cfg.solver);
        eps2 = a.per_output_variance;
        p.spec.mode = MosapMode::tolerance;
        p.spec.tolerance = eps2;
    }
    const Allocation cont = solve_mosap(p.spec, cfg.solver);
    const Allocation mlblue = integer_projection(cont, p.spec);
    std::vector<std::pair<std::string, std::optional<BaselineAllocation>>> rows;
    std::vector<std::string> notes;
    for (auto method : {BaselineMethod::mc, BaselineMethod::mlmc, BaselineMethod::mfmc}) {
        try {
            rows.emplace_back(to_string(method), multi_output_baseline(method, p.store, p.spec.model_costs, eps2));
        } catch (const ConfigError& e) {
            rows.emplace_back(to_string(method), std::nullopt);
            notes.push_back(std::string(to_string(method)) + ": " + e.what());
        }
    }
    if (format == "csv") {
        std::ostringstream out;
        out << std::setprecision(17) << "method,total_cost,max_variance,cost_ratio\n";
        out << "mlblue," << mlblue.total_cost << ',' << mlblue.max_variance() << ",1\n";
        for (const auto& [name, b] : rows) {
            if (!b) continue;
            double v = 0.0;
            for (double x : b->predicted_variance) v = std::max(v, x);
            out << name << ',' << b->total_cost << ',' << v << ',' << b->total_cost / mlblue.total_cost << '\n';
        }
        emit_text(out.str(), o.output);
        for (const auto& n : notes) std::cerr << n << '\n';
        return;
    }
    json doc;
    doc["eps2"] = eps2;
    doc["mlblue"] = allocation_to_json(mlblue, p.groups);
    doc["mlblue_continuous_cost"] = cont.total_cost;
    doc["baselines"] = json::array();
    for (const auto& [name, b] : rows) {
        if (b) {
            json e = baseline_to_json(*b);
            e["cost_ratio"] = b->total_cost / mlblue.total_cost;
            doc["baselines"].push_back(std::move(e));
        }
    }
    doc["notes"] = notes;
    emit_json(doc, o.output);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multilevel best linear unbiased estimators: sample allocation, estimation and baselines"};
    app.require_subcommand(1);

    CommonOptions alloc_opts;
    bool continuous = false;
    std::string dump_sdp;
    auto* alloc = app.add_subcommand("allocate", "Solve the sample allocation problem in the configured mode");
    add_common(alloc, alloc_opts);
    alloc->add_flag("--continuous", continuous, "Skip integer projection");
    alloc->add_option("--dump-sdp", dump_sdp, "Write the SDP as sparse triplets to this path");

    CommonOptions pareto_opts;
    std::string pareto_format = "csv";
    bool pareto_integer = false;
    auto* pareto = app.add_subcommand("pareto", "Sweep the cost/variance frontier");
    add_common(pareto, pareto_opts);
    pareto->add_option("--format", pareto_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    pareto->add_flag("--integer", pareto_integer, "Project every frontier point to integers");

    CommonOptions est_opts;
    auto* est = app.add_subcommand("estimate", "Allocate, sample the evaluator and combine the estimates");
    add_common(est, est_opts);

    CommonOptions bench_opts;
    std::string bench_format = "json";
    auto* bench = app.add_subcommand("benchmark", "Compare MLBLUE against MC, MLMC and MFMC at equal tolerance");
    add_common(bench, bench_opts);
    bench->add_option("--format", bench_format, "json or csv")->check(CLI::IsMember({"csv", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*alloc) run_allocate(alloc_opts, continuous, dump_sdp);
        if (*pareto) run_pareto(pareto_opts, pareto_format, pareto_integer);
        if (*est) run_estimate_cmd(est_opts);
        if (*bench) run_benchmark(bench_opts, bench_format);
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return kSolver;
    } catch (const WellPosednessError& e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return kSolver;
    } catch (const EvaluatorError& e) {
        std::cerr << "evaluator error: " << e.what() << '\n';
        return kEvaluator;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    }
    return kOk;
}
