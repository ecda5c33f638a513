#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mlblue/evaluator.hpp"
#include "mlblue/model_registry.hpp"
#include "mlblue/mosap.hpp"

namespace mlblue {

struct EstimateReport {
    std::vector<double> mu_hat;              // first replication, per output
    std::vector<double> predicted_variance;  // e_1^T Psi_s^+ e_1
    std::vector<double> empirical_mean;      // over replications
    std::vector<double> empirical_variance;  // divisor R - 1; 0 when R = 1
    std::vector<std::optional<double>> exact_mean;
    std::vector<std::optional<double>> normalized_efficiency;
    int replications = 0;
    double total_cost = 0.0;  // per replication, n^T c
    Allocation allocation;
};

struct EstimateOptions {
    std::uint64_t seed = 0;
    int replications = 1;
    bool parallel = true;  // only honored for thread-safe evaluators
};

// Draws n_k coupled samples of every group (all models of a group share one
// input), combines them per output and repeats for each replication with
// independent streams. Replication results are reduced in index order, so
// the report does not depend on the thread count.
EstimateReport run_estimate(const MosapSpec& spec, const GroupSet& groups, const Allocation& allocation,
                            Evaluator& evaluator, const EstimateOptions& options);

// log10(reference_variance / variance); 0 is the best attainable.
double efficiency_report(double variance, double reference_variance);

}  // namespace mlblue
