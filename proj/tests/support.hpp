#pragma once

// Independent oracles and instance generators shared by the test binaries.
// Nothing here calls into blue_core or the SDP solver.

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mlblue/model_registry.hpp"

namespace testsupport {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Random covariance with unit-free correlations bounded by max_rho in
// magnitude and variances in [0.5, 2].
inline Eigen::MatrixXd random_covariance(int l, std::mt19937_64& rng, double max_rho = 0.99) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd a(l, l + 2);
    const double common = 0.5 + 2.5 * u(rng);
    Eigen::VectorXd base(l + 2);
    for (int c = 0; c < l + 2; ++c) base(c) = g(rng);
    for (int i = 0; i < l; ++i) {
        for (int c = 0; c < l + 2; ++c) a(i, c) = common * base(c) + g(rng) * (0.2 + u(rng));
    }
    Eigen::MatrixXd c = a * a.transpose();
    const Eigen::VectorXd d = c.diagonal().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd r = d.asDiagonal() * c * d.asDiagonal();
    const double lam = 1.0 - max_rho;
    r = (1.0 - lam) * r + lam * Eigen::MatrixXd::Identity(l, l);
    Eigen::VectorXd sd(l);
    for (int i = 0; i < l; ++i) sd(i) = std::sqrt(0.5 + 1.5 * u(rng));
    return sd.asDiagonal() * r * sd.asDiagonal();
}

inline Eigen::MatrixXd principal(const Eigen::MatrixXd& c, const mlblue::Group& g) {
    const auto k = static_cast<Eigen::Index>(g.size());
    Eigen::MatrixXd out(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = 0; b < k; ++b) out(a, b) = c(g[static_cast<std::size_t>(a)], g[static_cast<std::size_t>(b)]);
    }
    return out;
}

// Psi(n) assembled entry by entry from explicit inverses.
inline Eigen::MatrixXd oracle_psi(const std::vector<double>& n, const std::vector<mlblue::Group>& groups,
                                  const Eigen::MatrixXd& cov, int l) {
    Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(l, l);
    for (std::size_t k = 0; k < groups.size(); ++k) {
        if (n[k] == 0.0) continue;
        const Eigen::MatrixXd inv = principal(cov, groups[k]).inverse();
        for (std::size_t a = 0; a < groups[k].size(); ++a) {
            for (std::size_t b = 0; b < groups[k].size(); ++b) {
                psi(groups[k][a], groups[k][b]) += n[k] * inv(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
            }
        }
    }
    return psi;
}

// e1^T Psi^+ e1 by inverting Psi on the sampled models only; infinity when
// model 0 is unsampled.
inline double oracle_variance(const std::vector<double>& n, const std::vector<mlblue::Group>& groups,
                              const Eigen::MatrixXd& cov, int l) {
    std::vector<bool> sampled(static_cast<std::size_t>(l), false);
    for (std::size_t k = 0; k < groups.size(); ++k) {
        if (n[k] > 0.0) {
            for (int i : groups[k]) sampled[static_cast<std::size_t>(i)] = true;
        }
    }
    if (!sampled[0]) return kInf;
    std::vector<int> support;
    for (int i = 0; i < l; ++i) {
        if (sampled[static_cast<std::size_t>(i)]) support.push_back(i);
    }
    const Eigen::MatrixXd psi = principal(oracle_psi(n, groups, cov, l), support);
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(psi.rows());
    e1(0) = 1.0;
    return e1.dot(psi.fullPivLu().solve(e1));
}

// Minimizes a function of budget fractions w on the unit simplex: a full
// grid with `grid` steps per unit, then compass search along the transfer
// directions e_i - e_j with step halving down to `min_step`.
inline std::vector<double> simplex_search(int dim, const std::function<double(const std::vector<double>&)>& f,
                                          int grid, double min_step = 1e-9) {
    std::vector<double> best(static_cast<std::size_t>(dim), 0.0);
    double best_val = kInf;
    std::vector<int> idx(static_cast<std::size_t>(dim), 0);
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == dim - 1) {
            idx[static_cast<std::size_t>(pos)] = left;
            std::vector<double> w(static_cast<std::size_t>(dim));
            for (int i = 0; i < dim; ++i) w[static_cast<std::size_t>(i)] = static_cast<double>(idx[static_cast<std::size_t>(i)]) / grid;
            const double v = f(w);
            if (v < best_val) {
                best_val = v;
                best = w;
            }
            return;
        }
        for (int q = 0; q <= left; ++q) {
            idx[static_cast<std::size_t>(pos)] = q;
            rec(pos + 1, left - q);
        }
    };
    rec(0, grid);
    double step = 1.0 / grid;
    while (step > min_step) {
        bool improved = false;
        for (int i = 0; i < dim; ++i) {
            for (int j = 0; j < dim; ++j) {
                if (i == j) continue;
                const double move = std::min(step, best[static_cast<std::size_t>(j)]);
                if (move <= 0.0) continue;
                auto w = best;
                w[static_cast<std::size_t>(i)] += move;
                w[static_cast<std::size_t>(j)] -= move;
                const double v = f(w);
                if (v < best_val) {
                    best_val = v;
                    best = w;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
    return best;
}

// Budget-constrained minimum of e1^T Psi^+ e1 over the given groups.
inline double oracle_budget_minimum(const std::vector<mlblue::Group>& groups, const Eigen::MatrixXd& cov,
                                    const std::vector<double>& group_costs, double budget, int l, int grid) {
    const int dim = static_cast<int>(groups.size());
    auto f = [&](const std::vector<double>& w) {
        std::vector<double> n(w.size());
        for (std::size_t k = 0; k < w.size(); ++k) n[k] = w[k] * budget / group_costs[k];
        return oracle_variance(n, groups, cov, l);
    };
    return f(simplex_search(dim, f, grid));
}

inline std::vector<mlblue::Group> all_subsets(int l, int kappa) {
    std::vector<mlblue::Group> out;
    for (int size = 1; size <= kappa; ++size) {
        for (unsigned mask = 1; mask < (1U << l); ++mask) {
            if (std::popcount(mask) != size) continue;
            mlblue::Group g;
            for (int i = 0; i < l; ++i) {
                if (mask & (1U << i)) g.push_back(i);
            }
            out.push_back(g);
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.size() != b.size() ? a.size() < b.size() : a < b;
    });
    return out;
}

inline double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    return std::exp(u(rng));
}

// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace testsupport
