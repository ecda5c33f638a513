#include "mlblue/estimate.hpp"

#include <cmath>
#include <exception>
#include <string>

#include "mlblue/blue_core.hpp"
#include "mlblue/error.hpp"

namespace mlblue {

namespace {

std::string group_label(const Group& g) {
    std::string s = "{";
    for (std::size_t i = 0; i < g.size(); ++i) s += (i ? "," : "") + std::to_string(g[i] + 1);
    return s + "}";
}

// mu_hat per output for one replication.
std::vector<double> one_replication(const MosapSpec& spec, const GroupSet& groups, const std::vector<long>& n,
                                    Evaluator& evaluator, std::uint64_t seed, int rep) {
    const int m = spec.num_outputs();
    const auto k_groups = static_cast<std::size_t>(groups.size());
    // drawn[s][k]: n_k x |G_k| values of output s.
    std::vector<std::vector<Eigen::MatrixXd>> drawn(static_cast<std::size_t>(m), std::vector<Eigen::MatrixXd>(k_groups));
    Eigen::MatrixXd values;
    for (std::size_t k = 0; k < k_groups; ++k) {
        const long nk = n[k];
        if (nk == 0) continue;
        const auto& g = groups.groups[k];
        const auto width = static_cast<Eigen::Index>(g.size());
        for (int s = 0; s < m; ++s) drawn[static_cast<std::size_t>(s)][k].resize(nk, width);
        for (long j = 0; j < nk; ++j) {
            const auto z = draw_input(evaluator.input_dim(), seed, StreamDomain::estimate, k, static_cast<std::uint64_t>(j),
                                      static_cast<std::uint64_t>(rep));
            try {
                evaluator.evaluate(z, g, values);
            } catch (const EvaluatorError& e) {
                throw EvaluatorError("group " + group_label(g) + ", sample " + std::to_string(j + 1) + ", replication " +
                                     std::to_string(rep + 1) + ": " + e.what());
            }
            for (int s = 0; s < m; ++s) drawn[static_cast<std::size_t>(s)][k].row(j) = values.col(s).transpose();
        }
    }
    std::vector<double> mu(static_cast<std::size_t>(m));
    for (int s = 0; s < m; ++s) {
        const auto& sys = spec.systems[static_cast<std::size_t>(s)];
        for (const auto& t : sys.terms()) {
            const auto& block = drawn[static_cast<std::size_t>(s)][static_cast<std::size_t>(t.group)];
            if (block.size() > 0 && !block.allFinite()) {
                throw EvaluatorError("group " + group_label(groups.groups[static_cast<std::size_t>(t.group)]) +
                                     ", replication " + std::to_string(rep + 1) + ": missing value for output " +
                                     std::to_string(s + 1));
            }
        }
        mu[static_cast<std::size_t>(s)] = combine_samples(n, drawn[static_cast<std::size_t>(s)], sys).mu_hf;
    }
    return mu;
}

}  // namespace

EstimateReport run_estimate(const MosapSpec& spec, const GroupSet& groups, const Allocation& allocation,
                            Evaluator& evaluator, const EstimateOptions& options) {
    if (options.replications < 1) throw ConfigError("at least one replication is required");
    if (static_cast<int>(allocation.n.size()) != groups.size()) throw ConfigError("allocation does not match the group set");
    if (evaluator.num_models() != groups.num_models) throw ConfigError("evaluator and group set disagree on the model count");
    std::vector<long> n;
    for (double x : allocation.n) {
        if (x < 0.0 || x != std::floor(x)) throw ConfigError("estimation needs a nonnegative integer allocation");
        n.push_back(static_cast<long>(x));
    }
    const int m = spec.num_outputs();
    const int reps = options.replications;

    EstimateReport report;
    report.allocation = allocation;
    report.replications = reps;
    for (std::size_t k = 0; k < n.size(); ++k) report.total_cost += static_cast<double>(n[k]) * spec.group_costs[k];
    for (const auto& sys : spec.systems) report.predicted_variance.push_back(blue_variance(allocation.n, sys));

    std::vector<std::vector<double>> results(static_cast<std::size_t>(reps));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(reps));
    const bool parallel = options.parallel && evaluator.thread_safe();
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
    for (int r = 0; r < reps; ++r) {
        try {
            results[static_cast<std::size_t>(r)] = one_replication(spec, groups, n, evaluator, options.seed, r);
        } catch (...) {
            errors[static_cast<std::size_t>(r)] = std::current_exception();
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    report.mu_hat = results.front();
    report.empirical_mean.assign(static_cast<std::size_t>(m), 0.0);
    report.empirical_variance.assign(static_cast<std::size_t>(m), 0.0);
    for (const auto& r : results) {
        for (int s = 0; s < m; ++s) report.empirical_mean[static_cast<std::size_t>(s)] += r[static_cast<std::size_t>(s)];
    }
    for (double& v : report.empirical_mean) v /= reps;
    if (reps > 1) {
        for (const auto& r : results) {
            for (int s = 0; s < m; ++s) {
                const double d = r[static_cast<std::size_t>(s)] - report.empirical_mean[static_cast<std::size_t>(s)];
                report.empirical_variance[static_cast<std::size_t>(s)] += d * d;
            }
        }
        for (double& v : report.empirical_variance) v /= reps - 1;
    }
    report.exact_mean.assign(static_cast<std::size_t>(m), std::nullopt);
    report.normalized_efficiency.assign(static_cast<std::size_t>(m), std::nullopt);
    if (const auto* suite = dynamic_cast<const SyntheticSuite*>(&evaluator)) {
        for (int s = 0; s < m; ++s) report.exact_mean[static_cast<std::size_t>(s)] = suite->mean(s, 0);
    }
    return report;
}

double efficiency_report(double variance, double reference_variance) {
    if (!(variance > 0.0) || !(reference_variance > 0.0)) {
        throw ConfigError("efficiency needs positive variances");
    }
    return std::log10(reference_variance / variance);
}

}  // namespace mlblue
