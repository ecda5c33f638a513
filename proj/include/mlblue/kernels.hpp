#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mlblue {

// Symmetric matrix supported on a few rows/columns:
// full(index[a], index[b]) = values(a, b), zero elsewhere.
struct SparseSym {
    std::vector<int> index;
    Eigen::MatrixXd values;
};

namespace kernels {

// State of one dense PSD block at the current interior-point iterate.
struct SchurBlock {
    const Eigen::MatrixXd* s_inv = nullptr;                   // S^{-1}
    const Eigen::MatrixXd* z = nullptr;                       // Z
    const std::vector<std::pair<int, SparseSym>>* terms = nullptr;  // (variable, F_i)
};

// Adds sum_b tr(F_i S^{-1} F_j Z) to m(i, j) for every pair of variables
// sharing a block. Both versions accumulate blocks in the same order and
// produce bit-identical results.
void schur_dense_serial(std::span<const SchurBlock> blocks, Eigen::MatrixXd& m);
void schur_dense_omp(std::span<const SchurBlock> blocks, Eigen::MatrixXd& m);

// Adds A^T diag(w) A for a sparse row-stored A (rows of (variable, coef)).
void schur_diagonal(const std::vector<std::vector<std::pair<int, double>>>& rows, const Eigen::VectorXd& w,
                    Eigen::MatrixXd& m);

int max_threads();

}  // namespace kernels
}  // namespace mlblue
