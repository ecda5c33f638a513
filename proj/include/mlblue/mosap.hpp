#pragma once

#include <string>
#include <vector>

#include "mlblue/blue_core.hpp"
#include "mlblue/conic_solver.hpp"
#include "mlblue/covariance_lab.hpp"
#include "mlblue/model_registry.hpp"

namespace mlblue {

enum class MosapMode { budget, tolerance, pareto };

const char* to_string(MosapMode mode);
MosapMode mosap_mode_from_string(const std::string& name);

// a^T n <= bound over the group allocation vector.
struct LinearConstraint {
    std::vector<double> coefficients;
    double bound = 0.0;
};

struct MosapSpec {
    MosapMode mode = MosapMode::budget;
    double budget = 0.0;              // budget mode
    std::vector<double> tolerance;    // eps_s^2 per output, tolerance mode
    double tau = 0.0;                 // pareto mode, unnormalized
    std::vector<BlueSystem> systems;  // one per output, all over the same group list
    std::vector<double> group_costs;
    std::vector<double> model_costs;  // only used to normalize tau
    std::vector<LinearConstraint> extra_linear;
    double cost_cap_factor = 1e12;    // pareto guard: n^T c <= factor * min(c)

    [[nodiscard]] int num_groups() const { return static_cast<int>(group_costs.size()); }
    [[nodiscard]] int num_outputs() const { return static_cast<int>(systems.size()); }
    [[nodiscard]] int num_models() const { return systems.empty() ? 0 : systems.front().num_models(); }
    // Group indices in h^s.
    [[nodiscard]] std::vector<int> hf_groups(int output) const;
    [[nodiscard]] double cost_cap() const;
    // Throws ConfigError on inconsistent sizes, infeasible budgets and bad parameters.
    void validate() const;
};

// One BlueSystem per output from the group set and covariance store.
MosapSpec make_mosap_spec(const ModelSet& models, const GroupSet& groups, const CovarianceStore& store);

// Variance of model i for the output a system describes, read from any term containing it.
double model_variance(const BlueSystem& system, int model);

// tau = tau_tilde / ||model costs||_2.
double tau_from_normalized(double tau_tilde, const std::vector<double>& model_costs);

// The SDPs are posed in scaled variables n = n_scale * nu and
// t = t_scale * tau_t; each output block is congruence-scaled by the model
// standard deviations so that its entries are correlation-sized.
struct ScaledSdp {
    SdpProblem problem;
    double n_scale = 1.0;
    double t_scale = 1.0;
    bool has_t = false;  // variable 0 is tau_t when set
    // Maps (variable index) -> group index, -1 for tau_t.
    std::vector<int> var_group;
};

ScaledSdp build_budget_sdp(const MosapSpec& spec);
ScaledSdp build_tolerance_sdp(const MosapSpec& spec);
ScaledSdp build_pareto_sdp(const MosapSpec& spec);
ScaledSdp build_sdp(const MosapSpec& spec);

struct SolverInfo {
    SdpStatus status = SdpStatus::optimal;
    int iterations = 0;
    double gap = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
};

struct Allocation {
    MosapMode mode = MosapMode::budget;
    std::vector<double> n;  // one entry per group
    std::vector<double> per_output_variance;
    double total_cost = 0.0;
    bool is_integer = false;
    std::vector<int> selected_groups;  // k with n_k > 0
    double sdp_t = 0.0;                // advisory corner value from the solver
    double tau = 0.0;                  // pareto weight used
    SolverInfo solver;
    std::vector<std::string> flags;
    double relaxation_gap = 1.0;  // integer objective / continuous objective

    [[nodiscard]] double max_variance() const;
};

// Mode objective: max variance (budget), cost (tolerance), max variance + tau * cost (pareto).
double mode_objective(const Allocation& a, const MosapSpec& spec);

// Fills cost, selected groups and recomputed per-output variances.
void refresh_allocation(Allocation& a, const MosapSpec& spec);

// Continuous optimum. Throws SolverError unless the solver reports optimal.
Allocation solve_mosap(const MosapSpec& spec, const SdpSettings& settings = {});

// Largest number of fractional entries enumerated exhaustively.
inline constexpr int kMaxEnumeratedEntries = 20;

// Best floor/ceiling combination of the fractional entries; see the README
// for the tie-breaking and fallback rules.
Allocation integer_projection(const Allocation& continuous, const MosapSpec& spec);

// True when the (integer or continuous) allocation satisfies every
// constraint of the spec, variances included for tolerance mode.
bool satisfies_constraints(const std::vector<double>& n, const MosapSpec& spec);

struct FrontierPoint {
    double tau_tilde = 0.0;
    double cost = 0.0;
    double variance = 0.0;          // max over outputs
    double normalized_error = 0.0;  // max_s sqrt(V_s / V[p_1^s])
    bool ok = true;
    std::string error;
    Allocation allocation;
};

// One Pareto solve per tau_tilde (points run concurrently); result sorted by
// ascending tau_tilde. Failed points keep ok = false and their message.
std::vector<FrontierPoint> pareto_sweep(const MosapSpec& spec, const std::vector<double>& tau_tilde_grid,
                                        const SdpSettings& settings = {}, bool integer = false);

}  // namespace mlblue
