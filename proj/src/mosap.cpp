#include "mlblue/mosap.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include "mlblue/error.hpp"

namespace mlblue {

const char* to_string(MosapMode mode) {
    switch (mode) {
        case MosapMode::budget: return "budget";
        case MosapMode::tolerance: return "tolerance";
        case MosapMode::pareto: return "pareto";
    }
    return "unknown";
}

MosapMode mosap_mode_from_string(const std::string& name) {
    if (name == "budget") return MosapMode::budget;
    if (name == "tolerance") return MosapMode::tolerance;
    if (name == "pareto") return MosapMode::pareto;
    throw ConfigError("unknown mode '" + name + "'");
}

std::vector<int> MosapSpec::hf_groups(int output) const {
    const auto& sys = systems.at(static_cast<std::size_t>(output));
    std::vector<int> out;
    for (int k = 0; k < num_groups(); ++k) {
        const int t = sys.term_of_group(k);
        if (t >= 0 && sys.contains_hf(t)) out.push_back(k);
    }
    return out;
}

double MosapSpec::cost_cap() const {
    return cost_cap_factor * *std::min_element(group_costs.begin(), group_costs.end());
}

void MosapSpec::validate() const {
    if (systems.empty()) throw ConfigError("MOSAP needs at least one output");
    if (group_costs.empty()) throw ConfigError("MOSAP needs at least one group");
    for (double c : group_costs) {
        if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("group costs must be positive and finite");
    }
    for (const auto& sys : systems) {
        if (sys.num_groups() != num_groups()) throw ConfigError("every output system must span the same groups");
        if (sys.num_models() != num_models()) throw ConfigError("every output system must span the same models");
    }
    for (int s = 0; s < num_outputs(); ++s) {
        if (hf_groups(s).empty()) {
            throw ConfigError("output " + std::to_string(s + 1) + " has no group containing the high-fidelity model");
        }
    }
    for (const auto& lc : extra_linear) {
        if (static_cast<int>(lc.coefficients.size()) != num_groups()) {
            throw ConfigError("linear constraint length does not match the group count");
        }
    }
    switch (mode) {
        case MosapMode::budget:
            if (!(budget > 0.0) || !std::isfinite(budget)) throw ConfigError("budget must be positive and finite");
            for (int s = 0; s < num_outputs(); ++s) {
                double cheapest = std::numeric_limits<double>::infinity();
                for (int k : hf_groups(s)) cheapest = std::min(cheapest, group_costs[static_cast<std::size_t>(k)]);
                if (budget < cheapest) {
                    throw ConfigError("budget is below the cheapest group containing the high-fidelity model for output " +
                                      std::to_string(s + 1));
                }
            }
            break;
        case MosapMode::tolerance:
            if (static_cast<int>(tolerance.size()) != num_outputs()) {
                throw ConfigError("one tolerance per output required");
            }
            for (double e : tolerance) {
                if (!(e > 0.0) || !std::isfinite(e)) throw ConfigError("tolerances must be positive and finite");
            }
            break;
        case MosapMode::pareto:
            if (!(tau >= 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be nonnegative and finite");
            break;
    }
}

MosapSpec make_mosap_spec(const ModelSet& models, const GroupSet& groups, const CovarianceStore& store) {
    MosapSpec spec;
    for (int s = 0; s < groups.num_outputs(); ++s) spec.systems.push_back(BlueSystem::from_store(groups, store, s));
    spec.group_costs = groups.costs;
    spec.model_costs = models.costs();
    return spec;
}

double model_variance(const BlueSystem& system, int model) {
    for (const auto& t : system.terms()) {
        const auto it = std::find(t.indices.begin(), t.indices.end(), model);
        if (it != t.indices.end()) {
            const auto a = static_cast<Eigen::Index>(it - t.indices.begin());
            return t.covariance(a, a);
        }
    }
    throw ConfigError("model " + std::to_string(model + 1) + " appears in no group of this output");
}

double tau_from_normalized(double tau_tilde, const std::vector<double>& model_costs) {
    double norm = 0.0;
    for (double c : model_costs) norm += c * c;
    if (!(norm > 0.0)) throw ConfigError("tau normalization needs positive model costs");
    return tau_tilde / std::sqrt(norm);
}

namespace {

constexpr double kPruneRelative = 1e-9;
constexpr double kIntegerSnap = 1e-6;
constexpr double kConstraintSlack = 1e-12;

void add_row(SdpProblem& p, std::vector<double> row, double rhs) {
    double scale = 0.0;
    for (double v : row) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) return;
    const auto r = p.ineq_matrix.rows();
    p.ineq_matrix.conservativeResize(r + 1, p.num_vars);
    p.ineq_rhs.conservativeResize(r + 1);
    for (int i = 0; i < p.num_vars; ++i) p.ineq_matrix(r, i) = row[static_cast<std::size_t>(i)] / scale;
    p.ineq_rhs(r) = rhs / scale;
}

double hf_cost(const MosapSpec& spec) {
    if (!spec.model_costs.empty()) return spec.model_costs.front();
    double c = std::numeric_limits<double>::infinity();
    for (int s = 0; s < spec.num_outputs(); ++s) {
        for (int k : spec.hf_groups(s)) c = std::min(c, spec.group_costs[static_cast<std::size_t>(k)]);
    }
    return c;
}

// Congruence by diag(L^{-1}, 1), where L L^T is the information matrix of a
// uniform budget split. Strongly correlated models make the raw blocks nearly
// singular along difference directions; the whitened blocks are balanced
// around that reference. Terms become dense over the active models.
void whiten_block(PsdBlock& blk, int corner, std::size_t first_group_term, const MosapSpec& spec, int offset) {
    const std::size_t count = blk.terms.size() - first_group_term;
    if (count == 0 || corner == 0) return;
    const double c_ref = hf_cost(spec);
    Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(corner, corner);
    for (std::size_t t = first_group_term; t < blk.terms.size(); ++t) {
        const auto& [var, f] = blk.terms[t];
        const double w = c_ref / (static_cast<double>(count) * spec.group_costs[static_cast<std::size_t>(var - offset)]);
        for (std::size_t a = 0; a < f.index.size(); ++a) {
            for (std::size_t b = 0; b < f.index.size(); ++b) {
                ref(f.index[a], f.index[b]) += w * f.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
            }
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(ref);
    if (llt.info() != Eigen::Success) return;
    const auto l = llt.matrixL();
    std::vector<int> all(static_cast<std::size_t>(corner));
    for (int i = 0; i < corner; ++i) all[static_cast<std::size_t>(i)] = i;
    for (std::size_t t = first_group_term; t < blk.terms.size(); ++t) {
        auto& f = blk.terms[t].second;
        Eigen::MatrixXd full = Eigen::MatrixXd::Zero(corner, corner);
        for (std::size_t a = 0; a < f.index.size(); ++a) {
            for (std::size_t b = 0; b < f.index.size(); ++b) {
                full(f.index[a], f.index[b]) = f.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
            }
        }
        Eigen::MatrixXd w = l.solve(full);
        w = l.solve(w.transpose().eval()).transpose().eval();
        f.index = all;
        f.values = 0.5 * (w + w.transpose());
    }
    const Eigen::VectorXd border = l.solve(blk.constant.col(corner).head(corner));
    blk.constant.col(corner).head(corner) = border;
    blk.constant.row(corner).head(corner) = border.transpose();
}

// Shared skeleton: one PSD block per output over the models active for it.
// When `corner` is empty, variable 0 is tau_t; otherwise corner[s] is the
// fixed (scaled) corner value.
ScaledSdp skeleton(const MosapSpec& spec, double n_scale, bool with_t, const std::vector<double>& fixed_corner) {
    ScaledSdp out;
    out.n_scale = n_scale;
    out.has_t = with_t;
    const int k_groups = spec.num_groups();
    const int offset = with_t ? 1 : 0;
    auto& p = out.problem;
    p.num_vars = k_groups + offset;
    p.objective = Eigen::VectorXd::Zero(p.num_vars);
    p.ineq_matrix.resize(0, p.num_vars);
    p.ineq_rhs.resize(0);
    out.var_group.assign(static_cast<std::size_t>(p.num_vars), -1);
    for (int k = 0; k < k_groups; ++k) out.var_group[static_cast<std::size_t>(k + offset)] = k;

    double ref = 0.0;
    for (const auto& sys : spec.systems) ref = std::max(ref, model_variance(sys, 0));
    out.t_scale = ref / n_scale;

    for (int s = 0; s < spec.num_outputs(); ++s) {
        const auto& sys = spec.systems[static_cast<std::size_t>(s)];
        std::vector<int> active;
        for (const auto& t : sys.terms()) active.insert(active.end(), t.indices.begin(), t.indices.end());
        std::sort(active.begin(), active.end());
        active.erase(std::unique(active.begin(), active.end()), active.end());
        std::vector<int> pos(static_cast<std::size_t>(sys.num_models()), -1);
        std::vector<double> sd(static_cast<std::size_t>(sys.num_models()), 1.0);
        for (std::size_t a = 0; a < active.size(); ++a) {
            pos[static_cast<std::size_t>(active[a])] = static_cast<int>(a);
            const double v = model_variance(sys, active[a]);
            sd[static_cast<std::size_t>(active[a])] = v > 0.0 ? std::sqrt(v) : 1.0;
        }
        const int corner = static_cast<int>(active.size());
        const double var_hf = model_variance(sys, 0);

        PsdBlock blk;
        blk.size = corner + 1;
        blk.constant = Eigen::MatrixXd::Zero(blk.size, blk.size);
        blk.constant(pos[0], corner) = 1.0;
        blk.constant(corner, pos[0]) = 1.0;
        if (with_t) {
            SparseSym f;
            f.index = {corner};
            f.values = Eigen::MatrixXd::Constant(1, 1, ref / var_hf);
            blk.terms.emplace_back(0, std::move(f));
        } else {
            blk.constant(corner, corner) = fixed_corner[static_cast<std::size_t>(s)] * n_scale / var_hf;
        }
        for (int k = 0; k < k_groups; ++k) {
            const int ti = sys.term_of_group(k);
            if (ti < 0) continue;
            const auto& term = sys.terms()[static_cast<std::size_t>(ti)];
            SparseSym f;
            const auto g = static_cast<Eigen::Index>(term.indices.size());
            f.values.resize(g, g);
            for (Eigen::Index a = 0; a < g; ++a) {
                f.index.push_back(pos[static_cast<std::size_t>(term.indices[static_cast<std::size_t>(a)])]);
                for (Eigen::Index b = 0; b < g; ++b) {
                    f.values(a, b) = sd[static_cast<std::size_t>(term.indices[static_cast<std::size_t>(a)])] *
                                     sd[static_cast<std::size_t>(term.indices[static_cast<std::size_t>(b)])] *
                                     term.precision(a, b);
                }
            }
            f.values = 0.5 * (f.values + f.values.transpose()).eval();
            blk.terms.emplace_back(k + offset, std::move(f));
        }
        whiten_block(blk, corner, with_t ? 1 : 0, spec, offset);
        p.psd_blocks.push_back(std::move(blk));

        std::vector<double> row(static_cast<std::size_t>(p.num_vars), 0.0);
        for (int k : spec.hf_groups(s)) row[static_cast<std::size_t>(k + offset)] = -1.0;
        add_row(p, std::move(row), -1.0 / n_scale);
    }

    for (const auto& lc : spec.extra_linear) {
        std::vector<double> row(static_cast<std::size_t>(p.num_vars), 0.0);
        for (int k = 0; k < k_groups; ++k) {
            row[static_cast<std::size_t>(k + offset)] = n_scale * lc.coefficients[static_cast<std::size_t>(k)];
        }
        add_row(p, std::move(row), lc.bound);
    }
    return out;
}

std::vector<double> cost_row(const MosapSpec& spec, const ScaledSdp& sdp) {
    std::vector<double> row(static_cast<std::size_t>(sdp.problem.num_vars), 0.0);
    for (std::size_t v = 0; v < row.size(); ++v) {
        const int k = sdp.var_group[v];
        if (k >= 0) row[v] = sdp.n_scale * spec.group_costs[static_cast<std::size_t>(k)];
    }
    return row;
}

}  // namespace

ScaledSdp build_budget_sdp(const MosapSpec& spec) {
    spec.validate();
    if (spec.mode != MosapMode::budget) throw ConfigError("spec is not in budget mode");
    const double n_scale = spec.budget / hf_cost(spec);
    auto out = skeleton(spec, n_scale, true, {});
    out.problem.objective(0) = 1.0;
    add_row(out.problem, cost_row(spec, out), spec.budget);
    return out;
}

ScaledSdp build_tolerance_sdp(const MosapSpec& spec) {
    spec.validate();
    if (spec.mode != MosapMode::tolerance) throw ConfigError("spec is not in tolerance mode");
    double n_scale = 0.0;
    for (int s = 0; s < spec.num_outputs(); ++s) {
        n_scale = std::max(n_scale, model_variance(spec.systems[static_cast<std::size_t>(s)], 0) /
                                        spec.tolerance[static_cast<std::size_t>(s)]);
    }
    n_scale = std::max(n_scale, 1e-300);
    auto out = skeleton(spec, n_scale, false, spec.tolerance);
    const double c_ref = hf_cost(spec);
    for (std::size_t v = 0; v < out.var_group.size(); ++v) {
        out.problem.objective(static_cast<Eigen::Index>(v)) = spec.group_costs[static_cast<std::size_t>(out.var_group[v])] / c_ref;
    }
    return out;
}

ScaledSdp build_pareto_sdp(const MosapSpec& spec) {
    spec.validate();
    if (spec.mode != MosapMode::pareto) throw ConfigError("spec is not in pareto mode");
    const double c_hf = hf_cost(spec);
    const double upper = std::max(1.0, spec.cost_cap() / c_hf);
    double n_scale = upper;
    if (spec.tau > 0.0) {
        n_scale = 0.0;
        for (const auto& sys : spec.systems) {
            n_scale = std::max(n_scale, std::sqrt(model_variance(sys, 0) / (spec.tau * c_hf)));
        }
        n_scale = std::clamp(n_scale, 1.0, upper);
    }
    auto out = skeleton(spec, n_scale, true, {});
    out.problem.objective(0) = 1.0;
    // t + tau n^T c, divided by t_scale.
    for (std::size_t v = 1; v < out.var_group.size(); ++v) {
        out.problem.objective(static_cast<Eigen::Index>(v)) =
            spec.tau * n_scale * spec.group_costs[static_cast<std::size_t>(out.var_group[v])] / out.t_scale;
    }
    add_row(out.problem, cost_row(spec, out), spec.cost_cap());
    return out;
}

ScaledSdp build_sdp(const MosapSpec& spec) {
    switch (spec.mode) {
        case MosapMode::budget: return build_budget_sdp(spec);
        case MosapMode::tolerance: return build_tolerance_sdp(spec);
        case MosapMode::pareto: return build_pareto_sdp(spec);
    }
    throw ConfigError("unknown mode");
}

double Allocation::max_variance() const {
    double v = 0.0;
    for (double x : per_output_variance) v = std::max(v, x);
    return v;
}

double mode_objective(const Allocation& a, const MosapSpec& spec) {
    switch (spec.mode) {
        case MosapMode::budget: return a.max_variance();
        case MosapMode::tolerance: return a.total_cost;
        case MosapMode::pareto: return a.max_variance() + spec.tau * a.total_cost;
    }
    return 0.0;
}

void refresh_allocation(Allocation& a, const MosapSpec& spec) {
    a.total_cost = 0.0;
    a.selected_groups.clear();
    for (int k = 0; k < spec.num_groups(); ++k) {
        const double nk = a.n[static_cast<std::size_t>(k)];
        a.total_cost += nk * spec.group_costs[static_cast<std::size_t>(k)];
        if (nk > 0.0) a.selected_groups.push_back(k);
    }
    a.per_output_variance.clear();
    for (const auto& sys : spec.systems) a.per_output_variance.push_back(blue_variance(a.n, sys));
}

Allocation solve_mosap(const MosapSpec& spec, const SdpSettings& settings) {
    const auto sdp = build_sdp(spec);
    const auto sol = solve_sdp(sdp.problem, settings);
    if (sol.status != SdpStatus::optimal) {
        std::ostringstream msg;
        msg << "SDP solver stopped with status " << to_string(sol.status) << " after " << sol.iterations
            << " iterations (primal residual " << sol.primal_residual << ", dual residual " << sol.dual_residual
            << ", gap " << sol.gap << ")";
        throw SolverError(msg.str());
    }
    Allocation a;
    a.mode = spec.mode;
    a.tau = spec.tau;
    a.n.assign(static_cast<std::size_t>(spec.num_groups()), 0.0);
    for (std::size_t v = 0; v < sdp.var_group.size(); ++v) {
        const int k = sdp.var_group[v];
        if (k >= 0) a.n[static_cast<std::size_t>(k)] = std::max(0.0, sdp.n_scale * sol.x(static_cast<Eigen::Index>(v)));
    }
    const double nmax = *std::max_element(a.n.begin(), a.n.end());
    for (double& x : a.n) {
        if (x < kPruneRelative * nmax) x = 0.0;
    }
    if (sdp.has_t) {
        a.sdp_t = sdp.t_scale * sol.x(0);
    } else {
        a.sdp_t = *std::max_element(spec.tolerance.begin(), spec.tolerance.end());
    }
    a.solver = {sol.status, sol.iterations, sol.gap, sol.primal_residual, sol.dual_residual};
    refresh_allocation(a, spec);
    return a;
}

namespace {

struct Candidate {
    std::vector<double> n;
    std::vector<double> variance;
    double cost = 0.0;
    double objective = 0.0;
};

bool better(const Candidate& a, const Candidate& b) {
    const double tie = 1e-12 * std::max(std::abs(a.objective), std::abs(b.objective));
    if (a.objective < b.objective - tie) return true;
    if (a.objective > b.objective + tie) return false;
    if (a.cost != b.cost) return a.cost < b.cost;
    return std::lexicographical_compare(a.n.begin(), a.n.end(), b.n.begin(), b.n.end());
}

// Constraints that need no variance evaluation.
bool cheap_feasible(const std::vector<double>& n, double cost, const MosapSpec& spec,
                    const std::vector<std::vector<int>>& hf) {
    for (const auto& groups : hf) {
        double count = 0.0;
        for (int k : groups) count += n[static_cast<std::size_t>(k)];
        if (count < 1.0) return false;
    }
    if (spec.mode == MosapMode::budget && cost > spec.budget * (1.0 + kConstraintSlack)) return false;
    if (spec.mode == MosapMode::pareto && cost > spec.cost_cap()) return false;
    for (const auto& lc : spec.extra_linear) {
        double v = 0.0;
        for (std::size_t k = 0; k < n.size(); ++k) v += lc.coefficients[k] * n[k];
        if (v > lc.bound + kConstraintSlack * std::max(1.0, std::abs(lc.bound))) return false;
    }
    return true;
}

double group_cost(const std::vector<double>& n, const MosapSpec& spec) {
    double c = 0.0;
    for (std::size_t k = 0; k < n.size(); ++k) c += n[k] * spec.group_costs[k];
    return c;
}

// Fills variance/objective; false if a tolerance is violated.
bool evaluate(Candidate& c, const MosapSpec& spec) {
    c.variance.clear();
    double vmax = 0.0;
    for (int s = 0; s < spec.num_outputs(); ++s) {
        const double v = hf_variance_from_psi(assemble_psi(c.n, spec.systems[static_cast<std::size_t>(s)]));
        if (spec.mode == MosapMode::tolerance && v > spec.tolerance[static_cast<std::size_t>(s)]) return false;
        c.variance.push_back(v);
        vmax = std::max(vmax, v);
    }
    switch (spec.mode) {
        case MosapMode::budget: c.objective = vmax; break;
        case MosapMode::tolerance: c.objective = c.cost; break;
        case MosapMode::pareto: c.objective = vmax + spec.tau * c.cost; break;
    }
    return true;
}

}  // namespace

bool satisfies_constraints(const std::vector<double>& n, const MosapSpec& spec) {
    if (static_cast<int>(n.size()) != spec.num_groups()) return false;
    for (double x : n) {
        if (!(x >= 0.0)) return false;
    }
    std::vector<std::vector<int>> hf;
    for (int s = 0; s < spec.num_outputs(); ++s) hf.push_back(spec.hf_groups(s));
    if (!cheap_feasible(n, group_cost(n, spec), spec, hf)) return false;
    Candidate c;
    c.n = n;
    c.cost = group_cost(n, spec);
    return evaluate(c, spec);
}

Allocation integer_projection(const Allocation& continuous, const MosapSpec& spec) {
    spec.validate();
    const auto k_groups = static_cast<std::size_t>(spec.num_groups());
    if (continuous.n.size() != k_groups) throw ConfigError("allocation length does not match the group count");
    std::vector<std::vector<int>> hf;
    for (int s = 0; s < spec.num_outputs(); ++s) hf.push_back(spec.hf_groups(s));

    std::vector<double> base(k_groups);
    std::vector<int> fractional;
    for (std::size_t k = 0; k < k_groups; ++k) {
        const double x = std::max(0.0, continuous.n[k]);
        const double r = std::round(x);
        if (std::abs(x - r) <= kIntegerSnap) {
            base[k] = r;
        } else {
            base[k] = std::floor(x);
            fractional.push_back(static_cast<int>(k));
        }
    }
    std::vector<std::string> flags;
    if (static_cast<int>(fractional.size()) > kMaxEnumeratedEntries) {
        auto frac = [&](int k) { return continuous.n[static_cast<std::size_t>(k)] - base[static_cast<std::size_t>(k)]; };
        std::stable_sort(fractional.begin(), fractional.end(), [&](int a, int b) { return frac(a) > frac(b); });
        const std::size_t extra = fractional.size() - static_cast<std::size_t>(kMaxEnumeratedEntries);
        for (std::size_t i = 0; i < extra; ++i) base[static_cast<std::size_t>(fractional[i])] += 1.0;
        fractional.erase(fractional.begin(), fractional.begin() + static_cast<std::ptrdiff_t>(extra));
        std::sort(fractional.begin(), fractional.end());
        flags.emplace_back("greedy_ceiling");
    }

    const int f = static_cast<int>(fractional.size());
    std::optional<Candidate> best;
    Candidate cand;
    cand.n = base;
    const std::uint64_t count = std::uint64_t{1} << f;
    for (std::uint64_t code = 0; code < count; ++code) {
        if (code > 0) {
            // Gray code: flip one entry between floor and ceiling.
            const int bit = std::countr_zero(code);
            const auto k = static_cast<std::size_t>(fractional[static_cast<std::size_t>(bit)]);
            const std::uint64_t gray = code ^ (code >> 1);
            cand.n[k] = base[k] + static_cast<double>((gray >> bit) & 1U);
        }
        cand.cost = group_cost(cand.n, spec);
        if (!cheap_feasible(cand.n, cand.cost, spec, hf)) continue;
        if (best && spec.mode == MosapMode::tolerance && cand.cost > best->cost) continue;
        if (!evaluate(cand, spec)) continue;
        if (!best || better(cand, *best)) best = cand;
    }

    Allocation out = continuous;
    out.is_integer = true;
    out.flags = flags;
    if (best) {
        out.n = best->n;
    } else if (spec.mode == MosapMode::budget) {
        out.flags.emplace_back("fallback_scaled_floor");
        int anchor = hf.front().front();
        for (int k : hf.front()) {
            if (spec.group_costs[static_cast<std::size_t>(k)] < spec.group_costs[static_cast<std::size_t>(anchor)]) anchor = k;
        }
        std::vector<double> n(k_groups, 0.0);
        bool found = false;
        for (double alpha = 1.0; alpha > 1e-9 && !found; alpha *= 0.95) {
            for (std::size_t k = 0; k < k_groups; ++k) n[k] = std::floor(alpha * continuous.n[k]);
            for (const auto& groups : hf) {
                double cnt = 0.0;
                for (int k : groups) cnt += n[static_cast<std::size_t>(k)];
                if (cnt < 1.0) n[static_cast<std::size_t>(groups.front())] = 1.0;
            }
            found = cheap_feasible(n, group_cost(n, spec), spec, hf);
        }
        if (!found) {
            std::fill(n.begin(), n.end(), 0.0);
            for (const auto& groups : hf) n[static_cast<std::size_t>(groups.front())] = 1.0;
            n[static_cast<std::size_t>(anchor)] = std::max(n[static_cast<std::size_t>(anchor)], 1.0);
            if (group_cost(n, spec) > spec.budget) out.flags.emplace_back("budget_violated");
        }
        out.n = n;
    } else {
        out.flags.emplace_back("fallback_ceiling");
        for (std::size_t k = 0; k < k_groups; ++k) out.n[k] = std::ceil(std::max(0.0, continuous.n[k]) - kIntegerSnap);
        const double cost = group_cost(out.n, spec);
        if (spec.mode == MosapMode::pareto && cost > spec.cost_cap()) out.flags.emplace_back("cost_cap_violated");
        for (const auto& lc : spec.extra_linear) {
            double v = 0.0;
            for (std::size_t k = 0; k < k_groups; ++k) v += lc.coefficients[k] * out.n[k];
            if (v > lc.bound) {
                out.flags.emplace_back("linear_constraint_violated");
                break;
            }
        }
    }
    refresh_allocation(out, spec);
    const double cont_obj = mode_objective(continuous, spec);
    out.relaxation_gap = cont_obj > 0.0 ? mode_objective(out, spec) / cont_obj : 1.0;
    return out;
}

std::vector<FrontierPoint> pareto_sweep(const MosapSpec& spec, const std::vector<double>& tau_tilde_grid,
                                        const SdpSettings& settings, bool integer) {
    std::vector<double> grid = tau_tilde_grid;
    std::sort(grid.begin(), grid.end());
    for (double t : grid) {
        if (!(t >= 0.0) || !std::isfinite(t)) throw ConfigError("tau_tilde values must be nonnegative and finite");
    }
    std::vector<double> hf_var;
    for (const auto& sys : spec.systems) hf_var.push_back(model_variance(sys, 0));
    std::vector<FrontierPoint> points(grid.size());
    SdpSettings inner = settings;
    inner.parallel = false;
    const auto count = static_cast<long>(grid.size());
#pragma omp parallel for schedule(dynamic, 1) if (settings.parallel)
    for (long i = 0; i < count; ++i) {
        auto& pt = points[static_cast<std::size_t>(i)];
        pt.tau_tilde = grid[static_cast<std::size_t>(i)];
        try {
            MosapSpec local = spec;
            local.mode = MosapMode::pareto;
            local.tau = tau_from_normalized(pt.tau_tilde, spec.model_costs);
            Allocation a = solve_mosap(local, inner);
            if (integer) a = integer_projection(a, local);
            pt.cost = a.total_cost;
            pt.variance = a.max_variance();
            double err = 0.0;
            for (std::size_t s = 0; s < hf_var.size(); ++s) {
                err = std::max(err, std::sqrt(a.per_output_variance[s] / hf_var[s]));
            }
            pt.normalized_error = err;
            pt.allocation = std::move(a);
        } catch (const std::exception& e) {
            pt.ok = false;
            pt.error = e.what();
        }
    }
    return points;
}

}  // namespace mlblue
