#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mlblue/kernels.hpp"

namespace mlblue {

// F(x) = constant + sum_i x_i F_i, required to be positive semidefinite.
struct PsdBlock {
    int size = 0;
    Eigen::MatrixXd constant;
    std::vector<std::pair<int, SparseSym>> terms;  // (variable, F_i); at most one entry per variable
};

// minimize q^T x  subject to  F_b(x) >= 0 (PSD) for every block,
//                             G x <= g,  x_i >= 0 where nonneg[i].
struct SdpProblem {
    int num_vars = 0;
    Eigen::VectorXd objective;
    std::vector<PsdBlock> psd_blocks;
    Eigen::MatrixXd ineq_matrix;  // rows of G
    Eigen::VectorXd ineq_rhs;     // g
    std::vector<bool> nonneg;     // empty means all variables are nonnegative

    void validate() const;
    [[nodiscard]] bool is_nonneg(int i) const { return nonneg.empty() || nonneg[static_cast<std::size_t>(i)]; }
};

struct SdpSettings {
    double gap_tol = 1e-8;
    double feas_tol = 1e-8;
    int max_iter = 200;
    bool parallel = true;  // OpenMP Schur assembly
};

enum class SdpStatus { optimal, infeasible, unbounded, max_iter, numerical_error };

const char* to_string(SdpStatus s);

struct SdpSolution {
    SdpStatus status = SdpStatus::max_iter;
    Eigen::VectorXd x;
    double objective_value = 0.0;  // q^T x
    double dual_objective = 0.0;
    double primal_residual = 0.0;  // relative
    double dual_residual = 0.0;    // relative
    double gap = 0.0;              // <S, Z>
    int iterations = 0;
    std::vector<Eigen::MatrixXd> slack;  // F_b(x) per PSD block
    std::vector<Eigen::MatrixXd> dual;   // Z_b per PSD block
};

// Infeasible-start primal-dual path-following method with the HKM search
// direction and Mehrotra predictor-corrector steps. Deterministic.
SdpSolution solve_sdp(const SdpProblem& problem, const SdpSettings& settings = {});

// F_b(x) evaluated at x.
Eigen::MatrixXd evaluate_block(const PsdBlock& block, const Eigen::VectorXd& x);

// Certificate for [[psi, e1], [e1^T, t]] >= 0: psi PSD, psi psi^+ e1 = e1 and
// t >= e1^T psi^+ e1, each up to rtol.
bool verify_schur_feasibility(double t, const Eigen::MatrixXd& psi, double rtol = 1e-8);

// Plain-text dump, one nonzero per line: "block row col var value" with
// 1-based block/row/col, var 0 for the constant term. The linear
// inequalities and bounds form a final diagonal block.
void write_sdp_triplets(const SdpProblem& problem, std::ostream& out);

}  // namespace mlblue
