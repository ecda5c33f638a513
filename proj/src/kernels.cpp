#include "mlblue/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mlblue::kernels {

namespace {

// P = S^{-1} F_j Z restricted to the columns/rows F_j touches.
Eigen::MatrixXd left_right_product(const SparseSym& f, const Eigen::MatrixXd& s_inv, const Eigen::MatrixXd& z) {
    const auto n = s_inv.rows();
    const auto k = static_cast<Eigen::Index>(f.index.size());
    Eigen::MatrixXd left(n, k);
    Eigen::MatrixXd right(k, n);
    for (Eigen::Index a = 0; a < k; ++a) {
        left.col(a) = s_inv.col(f.index[static_cast<std::size_t>(a)]);
        right.row(a) = z.row(f.index[static_cast<std::size_t>(a)]);
    }
    return left * (f.values * right);
}

double sparse_inner(const SparseSym& f, const Eigen::MatrixXd& p) {
    double acc = 0.0;
    const auto k = f.index.size();
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
            acc += f.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * p(f.index[a], f.index[b]);
        }
    }
    return acc;
}

void block_column(const SchurBlock& blk, std::size_t j, Eigen::MatrixXd& m) {
    const auto& terms = *blk.terms;
    const auto& [var_j, f_j] = terms[j];
    const Eigen::MatrixXd p = left_right_product(f_j, *blk.s_inv, *blk.z);
    for (std::size_t i = 0; i <= j; ++i) {
        const auto& [var_i, f_i] = terms[i];
        const double v = sparse_inner(f_i, p);
        m(var_i, var_j) += v;
        if (var_i != var_j) m(var_j, var_i) += v;
    }
}

}  // namespace

void schur_dense_serial(std::span<const SchurBlock> blocks, Eigen::MatrixXd& m) {
    for (const auto& blk : blocks) {
        const auto count = blk.terms->size();
        for (std::size_t j = 0; j < count; ++j) block_column(blk, j, m);
    }
}

void schur_dense_omp(std::span<const SchurBlock> blocks, Eigen::MatrixXd& m) {
    for (const auto& blk : blocks) {
        const auto count = static_cast<long>(blk.terms->size());
        // Each (i, j) pair within a block is visited exactly once, so the
        // writes below never collide.
#pragma omp parallel for schedule(dynamic, 4)
        for (long j = 0; j < count; ++j) block_column(blk, static_cast<std::size_t>(j), m);
    }
}

void schur_diagonal(const std::vector<std::vector<std::pair<int, double>>>& rows, const Eigen::VectorXd& w,
                    Eigen::MatrixXd& m) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double wr = w(static_cast<Eigen::Index>(r));
        const auto& row = rows[r];
        for (const auto& [i, ai] : row) {
            for (const auto& [j, aj] : row) m(i, j) += wr * ai * aj;
        }
    }
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace mlblue::kernels
