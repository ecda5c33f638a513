#include "mlblue/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "mlblue/error.hpp"

namespace mlblue {

const char* to_string(BaselineMethod m) {
    switch (m) {
        case BaselineMethod::mc: return "mc";
        case BaselineMethod::mlmc: return "mlmc";
        case BaselineMethod::mfmc: return "mfmc";
    }
    return "unknown";
}

BaselineMethod baseline_method_from_string(const std::string& name) {
    if (name == "mc") return BaselineMethod::mc;
    if (name == "mlmc") return BaselineMethod::mlmc;
    if (name == "mfmc") return BaselineMethod::mfmc;
    throw ConfigError("unknown baseline method '" + name + "'");
}

LevelAllocation mlmc_allocation(std::span<const double> level_variances, std::span<const double> level_costs,
                                double eps2) {
    if (level_variances.size() != level_costs.size() || level_variances.empty()) {
        throw ConfigError("MLMC needs one cost per level");
    }
    if (!(eps2 > 0.0)) throw ConfigError("MLMC tolerance must be positive");
    double sum = 0.0;
    for (std::size_t j = 0; j < level_variances.size(); ++j) {
        if (!(level_variances[j] >= 0.0)) throw ConfigError("MLMC level variances must be nonnegative");
        if (!(level_costs[j] > 0.0)) throw ConfigError("MLMC level costs must be positive");
        sum += std::sqrt(level_variances[j] * level_costs[j]);
    }
    LevelAllocation out;
    for (std::size_t j = 0; j < level_variances.size(); ++j) {
        const double n = std::sqrt(level_variances[j] / level_costs[j]) * sum / eps2;
        out.continuous.push_back(n);
        out.counts.push_back(std::max(1.0, std::ceil(n)));
        out.predicted_variance += level_variances[j] / out.counts.back();
        out.cost += out.counts.back() * level_costs[j];
    }
    return out;
}

double mfmc_variance(std::span<const double> rho, double hf_variance, std::span<const double> counts) {
    double v = 1.0 / counts[0];
    for (std::size_t i = 1; i < counts.size(); ++i) v -= (1.0 / counts[i - 1] - 1.0 / counts[i]) * rho[i] * rho[i];
    return hf_variance * v;
}

MfmcAllocation mfmc_allocation(std::span<const double> rho, std::span<const double> variances,
                               std::span<const double> costs, double eps2) {
    const std::size_t l = rho.size();
    if (l == 0 || variances.size() != l || costs.size() != l) throw ConfigError("MFMC input lengths differ");
    if (!(eps2 > 0.0)) throw ConfigError("MFMC tolerance must be positive");
    MfmcAllocation out;
    auto reject = [&](std::string why) {
        out.admissible = false;
        out.reason = std::move(why);
        return out;
    };
    std::vector<double> r2(l + 1, 0.0);
    for (std::size_t i = 0; i < l; ++i) r2[i] = rho[i] * rho[i];
    for (std::size_t i = 1; i < l; ++i) {
        if (!(r2[i] < r2[i - 1])) return reject("correlations are not strictly decreasing at position " + std::to_string(i + 1));
    }
    if (l > 1 && !(r2[l - 1] > 0.0)) return reject("last model is uncorrelated with the high-fidelity model");
    for (std::size_t i = 1; i < l; ++i) {
        const double need = (r2[i - 1] - r2[i]) / (r2[i] - r2[i + 1]);
        if (!(costs[i - 1] / costs[i] > need)) {
            return reject("cost ratio condition fails at position " + std::to_string(i + 1));
        }
    }
    out.ratios.assign(l, 1.0);
    for (std::size_t i = 1; i < l; ++i) {
        out.ratios[i] = std::sqrt(costs[0] * (r2[i] - r2[i + 1]) / (costs[i] * (1.0 - r2[1])));
    }
    double factor = 1.0;
    for (std::size_t i = 1; i < l; ++i) factor -= (1.0 / out.ratios[i - 1] - 1.0 / out.ratios[i]) * r2[i];
    const double m1 = variances[0] * factor / eps2;
    double prev = 1.0;
    for (std::size_t i = 0; i < l; ++i) {
        out.continuous.push_back(out.ratios[i] * m1);
        prev = std::max(prev, std::ceil(out.continuous.back()));
        out.counts.push_back(prev);
        out.alpha.push_back(variances[i] > 0.0 ? rho[i] * std::sqrt(variances[0] / variances[i]) : 0.0);
        out.cost += prev * costs[i];
    }
    out.predicted_variance = mfmc_variance(rho, variances[0], out.counts);
    out.admissible = true;
    return out;
}

namespace {

bool subset_known(const CovarianceStore& store, const std::vector<int>& subset) {
    for (int s = 0; s < store.num_outputs(); ++s) {
        if (!store.group_known(s, subset)) return false;
    }
    return true;
}

std::optional<BaselineAllocation> mlmc_subset(const CovarianceStore& store, const std::vector<double>& costs,
                                              const std::vector<double>& eps2, std::vector<int> subset) {
    // High-fidelity first, then by decreasing cost, ties by id.
    std::stable_sort(subset.begin() + 1, subset.end(), [&](int a, int b) {
        return costs[static_cast<std::size_t>(a)] > costs[static_cast<std::size_t>(b)];
    });
    const std::size_t levels = subset.size();
    BaselineAllocation out;
    out.method = BaselineMethod::mlmc;
    out.model_subset = subset;
    std::vector<double> level_costs;
    for (std::size_t j = 0; j < levels; ++j) {
        const int a = subset[j];
        if (j + 1 < levels) {
            const int b = subset[j + 1];
            out.groups.push_back(a < b ? Group{a, b} : Group{b, a});
            level_costs.push_back(costs[static_cast<std::size_t>(a)] + costs[static_cast<std::size_t>(b)]);
        } else {
            out.groups.push_back({a});
            level_costs.push_back(costs[static_cast<std::size_t>(a)]);
        }
    }
    out.samples.assign(levels, 0.0);
    std::vector<std::vector<double>> level_var(static_cast<std::size_t>(store.num_outputs()));
    for (int s = 0; s < store.num_outputs(); ++s) {
        auto& lv = level_var[static_cast<std::size_t>(s)];
        for (std::size_t j = 0; j < levels; ++j) {
            const int a = subset[j];
            double v = store.value(s, a, a);
            if (j + 1 < levels) {
                const int b = subset[j + 1];
                v += store.value(s, b, b) - 2.0 * store.value(s, a, b);
            }
            lv.push_back(std::max(0.0, v));
        }
        const auto alloc = mlmc_allocation(lv, level_costs, eps2[static_cast<std::size_t>(s)]);
        for (std::size_t j = 0; j < levels; ++j) out.samples[j] = std::max(out.samples[j], alloc.counts[j]);
    }
    for (std::size_t j = 0; j < levels; ++j) out.total_cost += out.samples[j] * level_costs[j];
    for (const auto& lv : level_var) {
        double v = 0.0;
        for (std::size_t j = 0; j < levels; ++j) v += lv[j] / out.samples[j];
        out.predicted_variance.push_back(v);
    }
    return out;
}

std::optional<BaselineAllocation> mfmc_subset(const CovarianceStore& store, const std::vector<double>& costs,
                                              const std::vector<double>& eps2, const std::vector<int>& subset) {
    BaselineAllocation out;
    out.method = BaselineMethod::mfmc;
    std::vector<double> per_model(static_cast<std::size_t>(store.num_models()), 0.0);
    for (int s = 0; s < store.num_outputs(); ++s) {
        const double v0 = store.value(s, 0, 0);
        auto rho_of = [&](int i) {
            const double vi = store.value(s, i, i);
            return (v0 > 0.0 && vi > 0.0) ? store.value(s, 0, i) / std::sqrt(v0 * vi) : 0.0;
        };
        std::vector<int> order = subset;
        std::stable_sort(order.begin() + 1, order.end(),
                         [&](int a, int b) { return std::abs(rho_of(a)) > std::abs(rho_of(b)); });
        std::vector<double> rho;
        std::vector<double> var;
        std::vector<double> c;
        for (int i : order) {
            rho.push_back(i == 0 ? 1.0 : rho_of(i));
            var.push_back(store.value(s, i, i));
            c.push_back(costs[static_cast<std::size_t>(i)]);
        }
        const auto alloc = mfmc_allocation(rho, var, c, eps2[static_cast<std::size_t>(s)]);
        if (!alloc.admissible) return std::nullopt;
        if (s == 0) out.model_subset = order;
        for (std::size_t j = 0; j < order.size(); ++j) {
            auto& m = per_model[static_cast<std::size_t>(order[j])];
            m = std::max(m, alloc.counts[j]);
        }
        // Each output uses the leading m_i^s evaluations of every model.
        out.predicted_variance.push_back(alloc.predicted_variance);
    }
    for (int i : out.model_subset) {
        out.groups.push_back({i});
        out.samples.push_back(per_model[static_cast<std::size_t>(i)]);
        out.total_cost += per_model[static_cast<std::size_t>(i)] * costs[static_cast<std::size_t>(i)];
    }
    return out;
}

}  // namespace

BaselineAllocation multi_output_baseline(BaselineMethod method, const CovarianceStore& store,
                                         const std::vector<double>& model_costs, const std::vector<double>& eps2) {
    const int l = store.num_models();
    const int m = store.num_outputs();
    if (static_cast<int>(model_costs.size()) != l) throw ConfigError("one cost per model required");
    if (static_cast<int>(eps2.size()) != m) throw ConfigError("one tolerance per output required");
    for (double e : eps2) {
        if (!(e > 0.0)) throw ConfigError("tolerances must be positive");
    }
    for (int s = 0; s < m; ++s) {
        if (!store.known(s, 0, 0)) throw ConfigError("high-fidelity variance unknown for output " + std::to_string(s + 1));
    }

    if (method == BaselineMethod::mc) {
        BaselineAllocation out;
        out.method = method;
        out.model_subset = {0};
        out.groups = {{0}};
        double n = 1.0;
        for (int s = 0; s < m; ++s) n = std::max(n, std::ceil(store.value(s, 0, 0) / eps2[static_cast<std::size_t>(s)]));
        out.samples = {n};
        out.total_cost = n * model_costs[0];
        for (int s = 0; s < m; ++s) out.predicted_variance.push_back(store.value(s, 0, 0) / n);
        return out;
    }

    if (l > kMaxBaselineModels) {
        throw ConfigError("baseline subset search is limited to " + std::to_string(kMaxBaselineModels) + " models");
    }
    const long count = 1L << (l - 1);
    std::vector<std::optional<BaselineAllocation>> results(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic, 8)
    for (long mask = 0; mask < count; ++mask) {
        std::vector<int> subset{0};
        for (int i = 1; i < l; ++i) {
            if (mask & (1L << (i - 1))) subset.push_back(i);
        }
        if (!subset_known(store, subset)) continue;
        results[static_cast<std::size_t>(mask)] = method == BaselineMethod::mlmc
                                                      ? mlmc_subset(store, model_costs, eps2, subset)
                                                      : mfmc_subset(store, model_costs, eps2, subset);
    }

    std::optional<BaselineAllocation> best;
    std::vector<int> best_ids;
    for (const auto& r : results) {
        if (!r) continue;
        std::vector<int> ids = r->model_subset;
        std::sort(ids.begin(), ids.end());
        if (!best || r->total_cost < best->total_cost ||
            (r->total_cost == best->total_cost && ids < best_ids)) {
            best = r;
            best_ids = ids;
        }
    }
    if (!best) {
        throw ConfigError(method == BaselineMethod::mfmc ? "no admissible MFMC configuration"
                                                         : "no admissible MLMC configuration");
    }
    return *best;
}

}  // namespace mlblue
