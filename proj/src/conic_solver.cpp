#include "mlblue/conic_solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>

#include "mlblue/blue_core.hpp"
#include "mlblue/error.hpp"

namespace mlblue {

const char* to_string(SdpStatus s) {
    switch (s) {
        case SdpStatus::optimal: return "optimal";
        case SdpStatus::infeasible: return "infeasible";
        case SdpStatus::unbounded: return "unbounded";
        case SdpStatus::max_iter: return "max_iter";
        case SdpStatus::numerical_error: return "numerical_error";
    }
    return "unknown";
}

void SdpProblem::validate() const {
    if (num_vars < 1) throw SolverError("SDP needs at least one variable");
    if (objective.size() != num_vars) throw SolverError("objective length does not match the variable count");
    if (!nonneg.empty() && static_cast<int>(nonneg.size()) != num_vars) {
        throw SolverError("nonneg mask length does not match the variable count");
    }
    if (ineq_matrix.rows() != ineq_rhs.size() || (ineq_matrix.rows() > 0 && ineq_matrix.cols() != num_vars)) {
        throw SolverError("inequality matrix and right-hand side are inconsistent");
    }
    std::vector<bool> used(static_cast<std::size_t>(num_vars), false);
    for (int i = 0; i < num_vars; ++i) {
        if (is_nonneg(i)) used[static_cast<std::size_t>(i)] = true;
        for (Eigen::Index r = 0; r < ineq_matrix.rows(); ++r) {
            if (ineq_matrix(r, i) != 0.0) used[static_cast<std::size_t>(i)] = true;
        }
    }
    for (std::size_t b = 0; b < psd_blocks.size(); ++b) {
        const auto& blk = psd_blocks[b];
        if (blk.size < 1 || blk.constant.rows() != blk.size || blk.constant.cols() != blk.size) {
            throw SolverError("PSD block " + std::to_string(b) + " has an inconsistent size");
        }
        if ((blk.constant - blk.constant.transpose()).cwiseAbs().maxCoeff() > 0.0) {
            throw SolverError("PSD block " + std::to_string(b) + " constant is not symmetric");
        }
        std::vector<bool> seen(static_cast<std::size_t>(num_vars), false);
        for (const auto& [var, f] : blk.terms) {
            if (var < 0 || var >= num_vars) throw SolverError("PSD block term references an unknown variable");
            if (seen[static_cast<std::size_t>(var)]) throw SolverError("variable appears twice in one PSD block");
            seen[static_cast<std::size_t>(var)] = true;
            used[static_cast<std::size_t>(var)] = true;
            const auto k = static_cast<Eigen::Index>(f.index.size());
            if (f.values.rows() != k || f.values.cols() != k) throw SolverError("coefficient matrix shape mismatch");
            for (int idx : f.index) {
                if (idx < 0 || idx >= blk.size) throw SolverError("coefficient index outside its block");
            }
            if ((f.values - f.values.transpose()).cwiseAbs().maxCoeff() > 0.0) {
                throw SolverError("coefficient matrix is not symmetric");
            }
        }
    }
    for (int i = 0; i < num_vars; ++i) {
        if (!used[static_cast<std::size_t>(i)]) {
            throw SolverError("variable " + std::to_string(i) + " appears in no constraint");
        }
    }
}

Eigen::MatrixXd evaluate_block(const PsdBlock& block, const Eigen::VectorXd& x) {
    Eigen::MatrixXd out = block.constant;
    for (const auto& [var, f] : block.terms) {
        const double xi = x(var);
        if (xi == 0.0) continue;
        for (std::size_t a = 0; a < f.index.size(); ++a) {
            for (std::size_t b = 0; b < f.index.size(); ++b) {
                out(f.index[a], f.index[b]) += xi * f.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
            }
        }
    }
    return out;
}

namespace {

// Nonnegativity bounds and linear inequalities as one diagonal cone:
// s_r = constant_r + sum_i coef x_i >= 0.
struct LinearCone {
    Eigen::VectorXd constant;
    std::vector<std::vector<std::pair<int, double>>> rows;
    std::vector<std::vector<std::pair<int, double>>> by_var;

    [[nodiscard]] Eigen::Index size() const { return constant.size(); }
};

LinearCone make_linear_cone(const SdpProblem& p) {
    LinearCone lc;
    std::vector<double> constant;
    for (int i = 0; i < p.num_vars; ++i) {
        if (!p.is_nonneg(i)) continue;
        lc.rows.push_back({{i, 1.0}});
        constant.push_back(0.0);
    }
    for (Eigen::Index r = 0; r < p.ineq_matrix.rows(); ++r) {
        std::vector<std::pair<int, double>> row;
        for (int i = 0; i < p.num_vars; ++i) {
            if (p.ineq_matrix(r, i) != 0.0) row.emplace_back(i, -p.ineq_matrix(r, i));
        }
        lc.rows.push_back(std::move(row));
        constant.push_back(p.ineq_rhs(r));
    }
    lc.constant = Eigen::Map<Eigen::VectorXd>(constant.data(), static_cast<Eigen::Index>(constant.size()));
    lc.by_var.assign(static_cast<std::size_t>(p.num_vars), {});
    for (std::size_t r = 0; r < lc.rows.size(); ++r) {
        for (const auto& [i, a] : lc.rows[r]) lc.by_var[static_cast<std::size_t>(i)].emplace_back(static_cast<int>(r), a);
    }
    return lc;
}

double frob_inner(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a.array() * b.array()).sum(); }

double sparse_inner(const SparseSym& f, const Eigen::MatrixXd& m) {
    double acc = 0.0;
    for (std::size_t a = 0; a < f.index.size(); ++a) {
        for (std::size_t b = 0; b < f.index.size(); ++b) {
            acc += f.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * m(f.index[a], f.index[b]);
        }
    }
    return acc;
}

struct Iterate {
    Eigen::VectorXd x;
    std::vector<Eigen::MatrixXd> s;  // dense slacks
    std::vector<Eigen::MatrixXd> z;  // dense duals
    Eigen::VectorXd sl;              // linear slacks
    Eigen::VectorXd zl;              // linear duals
};

struct Direction {
    Eigen::VectorXd dx;
    std::vector<Eigen::MatrixXd> ds;
    std::vector<Eigen::MatrixXd> dz;
    Eigen::VectorXd dsl;
    Eigen::VectorXd dzl;
};

class InteriorPoint {
public:
    InteriorPoint(const SdpProblem& p, const SdpSettings& settings)
        : p_(p), settings_(settings), lc_(make_linear_cone(p)) {
        nu_ = static_cast<double>(lc_.size());
        for (const auto& b : p_.psd_blocks) nu_ += b.size;
        f0_norm_ = lc_.constant.squaredNorm();
        for (const auto& b : p_.psd_blocks) f0_norm_ += b.constant.squaredNorm();
        f0_norm_ = std::sqrt(f0_norm_);
        q_norm_ = p_.objective.norm();
    }

    SdpSolution run();

private:
    // F(x) without the constant term.
    std::vector<Eigen::MatrixXd> apply_dense(const Eigen::VectorXd& x) const {
        std::vector<Eigen::MatrixXd> out;
        out.reserve(p_.psd_blocks.size());
        for (const auto& b : p_.psd_blocks) {
            Eigen::MatrixXd m = evaluate_block(b, x) - b.constant;
            out.push_back(std::move(m));
        }
        return out;
    }

    Eigen::VectorXd apply_linear(const Eigen::VectorXd& x) const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(lc_.size());
        for (std::size_t r = 0; r < lc_.rows.size(); ++r) {
            for (const auto& [i, a] : lc_.rows[r]) out(static_cast<Eigen::Index>(r)) += a * x(i);
        }
        return out;
    }

    Eigen::VectorXd adjoint(const std::vector<Eigen::MatrixXd>& z, const Eigen::VectorXd& zl) const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(p_.num_vars);
        for (std::size_t b = 0; b < p_.psd_blocks.size(); ++b) {
            for (const auto& [var, f] : p_.psd_blocks[b].terms) out(var) += sparse_inner(f, z[b]);
        }
        for (std::size_t r = 0; r < lc_.rows.size(); ++r) {
            for (const auto& [i, a] : lc_.rows[r]) out(i) += a * zl(static_cast<Eigen::Index>(r));
        }
        return out;
    }

    static double max_step_dense(const Eigen::MatrixXd& s, const Eigen::MatrixXd& ds) {
        Eigen::LLT<Eigen::MatrixXd> llt(s);
        if (llt.info() != Eigen::Success) return 0.0;
        Eigen::MatrixXd w = llt.matrixL().solve(ds);
        w = llt.matrixL().solve(w.transpose()).transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (w + w.transpose()), Eigen::EigenvaluesOnly);
        const double lmin = eig.eigenvalues()(0);
        return lmin < 0.0 ? -1.0 / lmin : std::numeric_limits<double>::infinity();
    }

    static double max_step_linear(const Eigen::VectorXd& s, const Eigen::VectorXd& ds) {
        double a = std::numeric_limits<double>::infinity();
        for (Eigen::Index r = 0; r < s.size(); ++r) {
            if (ds(r) < 0.0) a = std::min(a, -s(r) / ds(r));
        }
        return a;
    }

    void initialize(Iterate& it) const;
    bool solve_direction(const Iterate& it, const std::vector<Eigen::MatrixXd>& k_dense, const Eigen::VectorXd& k_lin,
                         Direction& d) const;

    const SdpProblem& p_;
    SdpSettings settings_;
    LinearCone lc_;
    double nu_ = 0.0;
    double f0_norm_ = 0.0;
    double q_norm_ = 0.0;

    // Per-iteration state shared by predictor and corrector.
    std::vector<Eigen::MatrixXd> s_inv_;
    std::vector<Eigen::MatrixXd> rp_dense_;
    Eigen::VectorXd rp_lin_;
    Eigen::VectorXd rd_;
    Eigen::LLT<Eigen::MatrixXd> schur_;
};

void InteriorPoint::initialize(Iterate& it) const {
    double max_f = 0.0;
    double max_ratio = 0.0;
    for (int i = 0; i < p_.num_vars; ++i) {
        double fnorm2 = 0.0;
        for (const auto& b : p_.psd_blocks) {
            for (const auto& [var, f] : b.terms) {
                if (var == i) fnorm2 += f.values.squaredNorm();
            }
        }
        for (const auto& [r, a] : lc_.by_var[static_cast<std::size_t>(i)]) fnorm2 += a * a;
        const double fnorm = std::sqrt(fnorm2);
        max_f = std::max(max_f, fnorm);
        max_ratio = std::max(max_ratio, (1.0 + std::abs(p_.objective(i))) / (1.0 + fnorm));
    }
    it.x = Eigen::VectorXd::Zero(p_.num_vars);
    it.s.clear();
    it.z.clear();
    for (const auto& b : p_.psd_blocks) {
        const double n = b.size;
        const double rho_s = std::max({10.0, std::sqrt(n), max_f, b.constant.norm()});
        const double rho_z = std::max({10.0, std::sqrt(n), n * max_ratio});
        it.s.push_back(rho_s * Eigen::MatrixXd::Identity(b.size, b.size));
        it.z.push_back(rho_z * Eigen::MatrixXd::Identity(b.size, b.size));
    }
    const double c0_max = lc_.size() > 0 ? lc_.constant.cwiseAbs().maxCoeff() : 0.0;
    const double rho_sl = std::max({10.0, max_f, c0_max});
    const double rho_zl = std::max(10.0, max_ratio);
    it.sl = Eigen::VectorXd::Constant(lc_.size(), rho_sl);
    it.zl = Eigen::VectorXd::Constant(lc_.size(), rho_zl);
}

bool InteriorPoint::solve_direction(const Iterate& it, const std::vector<Eigen::MatrixXd>& k_dense,
                                    const Eigen::VectorXd& k_lin, Direction& d) const {
    const std::size_t nb = p_.psd_blocks.size();
    // G = S^{-1}(K - R_p Z) - Z ; rhs_i = <F_i, G> - rd_i.
    std::vector<Eigen::MatrixXd> g(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        g[b] = s_inv_[b] * (k_dense[b] - rp_dense_[b] * it.z[b]) - it.z[b];
    }
    const Eigen::VectorXd gl = (k_lin - rp_lin_.cwiseProduct(it.zl)).cwiseQuotient(it.sl) - it.zl;
    Eigen::VectorXd rhs = adjoint(g, gl) - rd_;
    d.dx = schur_.solve(rhs);
    if (!d.dx.allFinite()) return false;

    const auto fdx = apply_dense(d.dx);
    d.ds.resize(nb);
    d.dz.resize(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        d.ds[b] = rp_dense_[b] + fdx[b];
        d.ds[b] = 0.5 * (d.ds[b] + d.ds[b].transpose()).eval();
        Eigen::MatrixXd dz = s_inv_[b] * (k_dense[b] - d.ds[b] * it.z[b]) - it.z[b];
        d.dz[b] = 0.5 * (dz + dz.transpose());
    }
    d.dsl = rp_lin_ + apply_linear(d.dx);
    d.dzl = (k_lin - d.dsl.cwiseProduct(it.zl)).cwiseQuotient(it.sl) - it.zl;
    return true;
}

SdpSolution InteriorPoint::run() {
    const std::size_t nb = p_.psd_blocks.size();
    Iterate it;
    initialize(it);

    SdpSolution best;
    double best_merit = std::numeric_limits<double>::infinity();
    SdpSolution sol;
    sol.status = SdpStatus::max_iter;
    int stalls = 0;

    auto snapshot = [&](SdpSolution& out, double pobj, double dobj, double pres, double dres, double gap, int iter) {
        out.x = it.x;
        out.objective_value = pobj;
        out.dual_objective = dobj;
        out.primal_residual = pres;
        out.dual_residual = dres;
        out.gap = gap;
        out.iterations = iter;
        out.slack.clear();
        out.dual = it.z;
        for (const auto& b : p_.psd_blocks) out.slack.push_back(evaluate_block(b, it.x));
    };

    for (int iter = 0;; ++iter) {
        // Residuals and objectives.
        const auto fx = apply_dense(it.x);
        rp_dense_.resize(nb);
        double rp2 = 0.0;
        double gap = 0.0;
        double dobj = 0.0;
        for (std::size_t b = 0; b < nb; ++b) {
            rp_dense_[b] = p_.psd_blocks[b].constant + fx[b] - it.s[b];
            rp2 += rp_dense_[b].squaredNorm();
            gap += frob_inner(it.s[b], it.z[b]);
            dobj -= frob_inner(p_.psd_blocks[b].constant, it.z[b]);
        }
        rp_lin_ = lc_.constant + apply_linear(it.x) - it.sl;
        rp2 += rp_lin_.squaredNorm();
        gap += it.sl.dot(it.zl);
        dobj -= lc_.constant.dot(it.zl);
        const Eigen::VectorXd atz = adjoint(it.z, it.zl);
        rd_ = p_.objective - atz;
        const double pobj = p_.objective.dot(it.x);
        const double pres = std::sqrt(rp2) / (1.0 + f0_norm_);
        const double dres = rd_.norm() / (1.0 + q_norm_);
        const double rel_gap = gap / std::max(1.0, std::abs(pobj));

        const double merit = std::max({pres / settings_.feas_tol, dres / settings_.feas_tol, rel_gap / settings_.gap_tol});
        if (merit < best_merit) {
            best_merit = merit;
            snapshot(best, pobj, dobj, pres, dres, gap, iter);
        }
        if (pres <= settings_.feas_tol && dres <= settings_.feas_tol && rel_gap <= settings_.gap_tol) {
            snapshot(sol, pobj, dobj, pres, dres, gap, iter);
            sol.status = SdpStatus::optimal;
            return sol;
        }
        // Z/dobj approaches a certificate {Z >= 0, F^T(Z) = 0, <F0, Z> = -1}.
        if (dobj > 0.0 && atz.norm() <= 1e-9 * dobj && pres > settings_.feas_tol) {
            snapshot(sol, pobj, dobj, pres, dres, gap, iter);
            sol.status = SdpStatus::infeasible;
            return sol;
        }
        if (-pobj > 1e12 * (1.0 + f0_norm_) && dres > settings_.feas_tol) {
            snapshot(sol, pobj, dobj, pres, dres, gap, iter);
            sol.status = SdpStatus::unbounded;
            return sol;
        }
        if (iter >= settings_.max_iter) break;

        // Schur complement.
        s_inv_.resize(nb);
        std::vector<kernels::SchurBlock> views(nb);
        for (std::size_t b = 0; b < nb; ++b) {
            Eigen::LLT<Eigen::MatrixXd> llt(it.s[b]);
            if (llt.info() != Eigen::Success) {
                best.status = SdpStatus::numerical_error;
                return best;
            }
            s_inv_[b] = llt.solve(Eigen::MatrixXd::Identity(it.s[b].rows(), it.s[b].cols()));
            s_inv_[b] = 0.5 * (s_inv_[b] + s_inv_[b].transpose()).eval();
            views[b] = {&s_inv_[b], &it.z[b], &p_.psd_blocks[b].terms};
        }
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p_.num_vars, p_.num_vars);
        if (settings_.parallel) {
            kernels::schur_dense_omp(views, m);
        } else {
            kernels::schur_dense_serial(views, m);
        }
        kernels::schur_diagonal(lc_.rows, it.zl.cwiseQuotient(it.sl), m);
        schur_.compute(m);
        if (schur_.info() != Eigen::Success) {
            const double jitter = 1e-14 * std::max(1.0, m.diagonal().cwiseAbs().maxCoeff());
            m.diagonal().array() += jitter;
            schur_.compute(m);
            if (schur_.info() != Eigen::Success) {
                best.status = SdpStatus::numerical_error;
                return best;
            }
        }

        // Predictor.
        std::vector<Eigen::MatrixXd> k_dense(nb);
        for (std::size_t b = 0; b < nb; ++b) k_dense[b] = Eigen::MatrixXd::Zero(it.s[b].rows(), it.s[b].cols());
        Eigen::VectorXd k_lin = Eigen::VectorXd::Zero(lc_.size());
        Direction pred;
        if (!solve_direction(it, k_dense, k_lin, pred)) {
            best.status = SdpStatus::numerical_error;
            return best;
        }
        double ap = max_step_linear(it.sl, pred.dsl);
        double ad = max_step_linear(it.zl, pred.dzl);
        for (std::size_t b = 0; b < nb; ++b) {
            ap = std::min(ap, max_step_dense(it.s[b], pred.ds[b]));
            ad = std::min(ad, max_step_dense(it.z[b], pred.dz[b]));
        }
        ap = std::min(1.0, ap);
        ad = std::min(1.0, ad);
        const double mu = gap / nu_;
        double gap_aff = (it.sl + ap * pred.dsl).dot(it.zl + ad * pred.dzl);
        for (std::size_t b = 0; b < nb; ++b) gap_aff += frob_inner(it.s[b] + ap * pred.ds[b], it.z[b] + ad * pred.dz[b]);
        const double mu_aff = std::max(gap_aff, 0.0) / nu_;
        const double expon = std::max(1.0, 3.0 * std::min(ap, ad) * std::min(ap, ad));
        const double sigma = std::min(1.0, std::pow(mu_aff / mu, expon));
        const double gamma = 0.9 + 0.09 * std::min(ap, ad);

        // Corrector.
        for (std::size_t b = 0; b < nb; ++b) {
            k_dense[b] = sigma * mu * Eigen::MatrixXd::Identity(it.s[b].rows(), it.s[b].cols()) - pred.ds[b] * pred.dz[b];
        }
        k_lin = Eigen::VectorXd::Constant(lc_.size(), sigma * mu) - pred.dsl.cwiseProduct(pred.dzl);
        Direction corr;
        if (!solve_direction(it, k_dense, k_lin, corr)) {
            best.status = SdpStatus::numerical_error;
            return best;
        }
        ap = max_step_linear(it.sl, corr.dsl);
        ad = max_step_linear(it.zl, corr.dzl);
        for (std::size_t b = 0; b < nb; ++b) {
            ap = std::min(ap, max_step_dense(it.s[b], corr.ds[b]));
            ad = std::min(ad, max_step_dense(it.z[b], corr.dz[b]));
        }
        ap = std::min(1.0, gamma * ap);
        ad = std::min(1.0, gamma * ad);
        if (ap < 1e-10 && ad < 1e-10) {
            if (++stalls >= 3) {
                best.status = SdpStatus::numerical_error;
                return best;
            }
        } else {
            stalls = 0;
        }

        it.x += ap * corr.dx;
        it.sl += ap * corr.dsl;
        it.zl += ad * corr.dzl;
        for (std::size_t b = 0; b < nb; ++b) {
            it.s[b] += ap * corr.ds[b];
            it.s[b] = 0.5 * (it.s[b] + it.s[b].transpose()).eval();
            it.z[b] += ad * corr.dz[b];
            it.z[b] = 0.5 * (it.z[b] + it.z[b].transpose()).eval();
        }
    }
    best.status = SdpStatus::max_iter;
    best.iterations = settings_.max_iter;
    return best;
}

}  // namespace

SdpSolution solve_sdp(const SdpProblem& problem, const SdpSettings& settings) {
    problem.validate();
    InteriorPoint ipm(problem, settings);
    return ipm.run();
}

bool verify_schur_feasibility(double t, const Eigen::MatrixXd& psi, double rtol) {
    const auto pinv = pseudo_inverse(psi);
    const double lambda_max = std::max(1.0, std::abs(pinv.eigenvalues.size() > 0 ? pinv.eigenvalues(0) : 0.0));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (psi + psi.transpose()), Eigen::EigenvaluesOnly);
    if (eig.eigenvalues()(0) < -rtol * lambda_max) return false;
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(psi.rows());
    e1(0) = 1.0;
    const Eigen::VectorXd x = pinv.apply(e1);
    if ((psi * x - e1).norm() > std::max(rtol, kWellPosednessTolerance)) return false;
    return t >= x(0) - rtol * std::max(1.0, std::abs(x(0)));
}

void write_sdp_triplets(const SdpProblem& problem, std::ostream& out) {
    problem.validate();
    out << std::setprecision(17);
    out << "# block row col var value\n";
    out << "# vars " << problem.num_vars << "\n";
    out << "# objective";
    for (Eigen::Index i = 0; i < problem.objective.size(); ++i) out << ' ' << problem.objective(i);
    out << '\n';
    for (std::size_t b = 0; b < problem.psd_blocks.size(); ++b) {
        const auto& blk = problem.psd_blocks[b];
        for (int r = 0; r < blk.size; ++r) {
            for (int c = r; c < blk.size; ++c) {
                if (blk.constant(r, c) != 0.0) {
                    out << b + 1 << ' ' << r + 1 << ' ' << c + 1 << " 0 " << blk.constant(r, c) << '\n';
                }
            }
        }
        for (const auto& [var, f] : blk.terms) {
            for (std::size_t a = 0; a < f.index.size(); ++a) {
                for (std::size_t c = 0; c < f.index.size(); ++c) {
                    const int row = f.index[a];
                    const int col = f.index[c];
                    const double v = f.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c));
                    if (row > col || v == 0.0) continue;
                    out << b + 1 << ' ' << row + 1 << ' ' << col + 1 << ' ' << var + 1 << ' ' << v << '\n';
                }
            }
        }
    }
    const auto lc = make_linear_cone(problem);
    const std::size_t lin_block = problem.psd_blocks.size() + 1;
    for (std::size_t r = 0; r < lc.rows.size(); ++r) {
        const double c0 = lc.constant(static_cast<Eigen::Index>(r));
        if (c0 != 0.0) out << lin_block << ' ' << r + 1 << ' ' << r + 1 << " 0 " << c0 << '\n';
        for (const auto& [i, a] : lc.rows[r]) out << lin_block << ' ' << r + 1 << ' ' << r + 1 << ' ' << i + 1 << ' ' << a << '\n';
    }
}

}  // namespace mlblue
