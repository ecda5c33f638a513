#pragma once

#include <span>
#include <string>
#include <vector>

#include "mlblue/covariance_lab.hpp"
#include "mlblue/model_registry.hpp"

namespace mlblue {

enum class BaselineMethod { mc, mlmc, mfmc };

const char* to_string(BaselineMethod m);
BaselineMethod baseline_method_from_string(const std::string& name);

// Single-output MLMC over levels with variances V_j and costs c_j:
// n_j = eps^-2 sqrt(V_j / c_j) sum_i sqrt(V_i c_i), ceiled, at least 1.
struct LevelAllocation {
    std::vector<double> continuous;
    std::vector<double> counts;
    double predicted_variance = 0.0;  // sum_j V_j / counts_j
    double cost = 0.0;
};

LevelAllocation mlmc_allocation(std::span<const double> level_variances, std::span<const double> level_costs,
                                double eps2);

// Single-output MFMC with models already ordered (rho[0] = 1). A rejected
// input returns admissible = false with a reason instead of throwing.
struct MfmcAllocation {
    bool admissible = false;
    std::string reason;
    std::vector<double> ratios;      // r_i = m_i / m_1
    std::vector<double> continuous;  // m_i
    std::vector<double> counts;      // ceiled, nondecreasing
    std::vector<double> alpha;       // control-variate coefficients
    double predicted_variance = 0.0;
    double cost = 0.0;
};

MfmcAllocation mfmc_allocation(std::span<const double> rho, std::span<const double> variances,
                               std::span<const double> costs, double eps2);

// Exact MFMC variance for nested counts m_1 <= ... <= m_L with optimal alphas.
double mfmc_variance(std::span<const double> rho, double hf_variance, std::span<const double> counts);

struct BaselineAllocation {
    BaselineMethod method = BaselineMethod::mc;
    std::vector<int> model_subset;  // 0-based, in the method's ordering
    // MC/MLMC: sampled groups with their counts (pairs of consecutive models
    // and the last model alone). MFMC: one singleton per model with its
    // total evaluation count.
    std::vector<Group> groups;
    std::vector<double> samples;
    double total_cost = 0.0;
    std::vector<double> predicted_variance;  // per output
};

// Over every subset containing model 0 (l <= 12), the per-output
// allocations are merged by taking the largest count of each group (MLMC)
// or model (MFMC); the cheapest subset wins, ties going to the
// lexicographically smaller subset. Subsets needing an unknown covariance
// entry are skipped. Throws ConfigError when nothing is admissible.
BaselineAllocation multi_output_baseline(BaselineMethod method, const CovarianceStore& store,
                                         const std::vector<double>& model_costs, const std::vector<double>& eps2);

inline constexpr int kMaxBaselineModels = 12;

}  // namespace mlblue
