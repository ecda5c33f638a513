#include "mlblue/model_registry.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>

#include "mlblue/error.hpp"

namespace mlblue {

ModelSet::ModelSet(std::vector<Model> models, int num_outputs)
    : models_(std::move(models)), num_outputs_(num_outputs) {
    if (num_outputs_ < 1) throw ConfigError("model set needs at least one output");
    if (models_.empty()) throw ConfigError("model set is empty");
    if (models_.size() > 62) throw ConfigError("at most 62 models are supported");
    produces_.assign(models_.size(), std::vector<bool>(static_cast<std::size_t>(num_outputs_), false));
    for (std::size_t i = 0; i < models_.size(); ++i) {
        const auto& m = models_[i];
        if (!(m.cost > 0.0) || !std::isfinite(m.cost)) {
            throw ConfigError("model " + std::to_string(i + 1) + ": cost must be positive and finite");
        }
        if (m.outputs.empty()) {
            throw ConfigError("model " + std::to_string(i + 1) + " produces no outputs");
        }
        for (int s : m.outputs) {
            if (s < 0 || s >= num_outputs_) {
                throw ConfigError("model " + std::to_string(i + 1) + ": output index " +
                                  std::to_string(s + 1) + " out of range");
            }
            produces_[i][static_cast<std::size_t>(s)] = true;
        }
    }
    for (int s = 0; s < num_outputs_; ++s) {
        if (!produces_[0][static_cast<std::size_t>(s)]) {
            throw ConfigError("model 1 must produce every output (missing output " +
                              std::to_string(s + 1) + ")");
        }
    }
}

bool ModelSet::produces(int model, int output) const {
    return produces_.at(static_cast<std::size_t>(model)).at(static_cast<std::size_t>(output));
}

std::vector<double> ModelSet::costs() const {
    std::vector<double> c;
    c.reserve(models_.size());
    for (const auto& m : models_) c.push_back(m.cost);
    return c;
}

bool GroupSet::contains(int k, int model) const {
    const auto& g = groups.at(static_cast<std::size_t>(k));
    return std::binary_search(g.begin(), g.end(), model);
}

std::vector<bool> GroupSet::hf_mask(int output) const {
    std::vector<bool> h(groups.size(), false);
    const auto& mask = allowed.at(static_cast<std::size_t>(output));
    for (std::size_t k = 0; k < groups.size(); ++k) h[k] = mask[k] && groups[k].front() == 0;
    return h;
}

std::optional<int> GroupSet::index_of(const Group& group) const {
    Group sorted = group;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < groups.size(); ++k) {
        if (groups[k] == sorted) return static_cast<int>(k);
    }
    return std::nullopt;
}

std::vector<int> GroupSet::active_models(int output) const {
    std::vector<bool> seen(static_cast<std::size_t>(num_models), false);
    const auto& mask = allowed.at(static_cast<std::size_t>(output));
    for (std::size_t k = 0; k < groups.size(); ++k) {
        if (!mask[k]) continue;
        for (int i : groups[k]) seen[static_cast<std::size_t>(i)] = true;
    }
    std::vector<int> active;
    for (int i = 0; i < num_models; ++i) {
        if (seen[static_cast<std::size_t>(i)]) active.push_back(i);
    }
    return active;
}

std::size_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    std::size_t r = 1;
    for (int j = 1; j <= k; ++j) r = r * static_cast<std::size_t>(n - k + j) / static_cast<std::size_t>(j);
    return r;
}

namespace {

void check_well_posed(const GroupSet& gs) {
    for (int s = 0; s < gs.num_outputs(); ++s) {
        const auto h = gs.hf_mask(s);
        if (std::none_of(h.begin(), h.end(), [](bool b) { return b; })) {
            throw ConfigError("output " + std::to_string(s + 1) +
                              ": no allowed group contains model 1; the estimator cannot be well-posed");
        }
    }
}

// Calls visit(combination) for every k-subset of {0..n-1} in lexicographic order.
template <typename Visit>
void for_each_combination(int n, int k, Visit&& visit) {
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
    while (true) {
        visit(idx);
        int i = k - 1;
        while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - k + i) --i;
        if (i < 0) return;
        ++idx[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
}

}  // namespace

GroupSet enumerate_groups(const ModelSet& models, int kappa, const std::vector<Group>& deny_list) {
    const int l = models.size();
    if (kappa < 1 || kappa > l) {
        throw ConfigError("kappa must lie in [1, " + std::to_string(l) + "], got " + std::to_string(kappa));
    }
    std::set<Group> denied;
    for (Group g : deny_list) {
        std::sort(g.begin(), g.end());
        for (int i : g) {
            if (i < 0 || i >= l) throw ConfigError("deny list references unknown model " + std::to_string(i + 1));
        }
        denied.insert(std::move(g));
    }

    GroupSet gs;
    gs.num_models = l;
    gs.kappa = kappa;
    gs.allowed.assign(static_cast<std::size_t>(models.num_outputs()), {});
    for (int size = 1; size <= kappa; ++size) {
        for_each_combination(l, size, [&](const std::vector<int>& combo) {
            if (denied.count(combo) != 0) return;
            double cost = 0.0;
            for (int i : combo) cost += models.model(i).cost;
            bool any = false;
            std::vector<bool> per_output(static_cast<std::size_t>(models.num_outputs()));
            for (int s = 0; s < models.num_outputs(); ++s) {
                const bool ok = std::all_of(combo.begin(), combo.end(),
                                            [&](int i) { return models.produces(i, s); });
                per_output[static_cast<std::size_t>(s)] = ok;
                any = any || ok;
            }
            if (!any) return;
            gs.groups.push_back(combo);
            gs.costs.push_back(cost);
            for (int s = 0; s < models.num_outputs(); ++s) {
                gs.allowed[static_cast<std::size_t>(s)].push_back(per_output[static_cast<std::size_t>(s)]);
            }
        });
    }
    check_well_posed(gs);
    return gs;
}

GroupSet restrict_groups(const GroupSet& groups,
                         const std::function<bool(int, const Group&)>& keep) {
    GroupSet out;
    out.num_models = groups.num_models;
    out.kappa = groups.kappa;
    out.allowed.assign(groups.allowed.size(), {});
    for (int k = 0; k < groups.size(); ++k) {
        const auto& g = groups.groups[static_cast<std::size_t>(k)];
        std::vector<bool> mask(groups.allowed.size());
        bool any = false;
        for (std::size_t s = 0; s < groups.allowed.size(); ++s) {
            mask[s] = groups.allowed[s][static_cast<std::size_t>(k)] && keep(static_cast<int>(s), g);
            any = any || mask[s];
        }
        if (!any) continue;
        out.groups.push_back(g);
        out.costs.push_back(groups.costs[static_cast<std::size_t>(k)]);
        for (std::size_t s = 0; s < mask.size(); ++s) out.allowed[s].push_back(mask[s]);
    }
    check_well_posed(out);
    return out;
}

std::vector<int> restriction_indices(const Group& group, int num_models) {
    if (group.empty()) throw ConfigError("empty group");
    std::vector<int> idx = group;
    std::sort(idx.begin(), idx.end());
    for (int i : idx) {
        if (i < 0 || i >= num_models) throw ConfigError("group references unknown model " + std::to_string(i + 1));
    }
    return idx;
}

int cheapest_hf_group(const GroupSet& groups, int output) {
    const auto h = groups.hf_mask(output);
    int best = -1;
    for (int k = 0; k < groups.size(); ++k) {
        if (!h[static_cast<std::size_t>(k)]) continue;
        if (best < 0 || groups.costs[static_cast<std::size_t>(k)] < groups.costs[static_cast<std::size_t>(best)]) best = k;
    }
    return best;
}

bool check_budget_feasibility(const GroupSet& groups, double budget, int output) {
    const int k = cheapest_hf_group(groups, output);
    return k >= 0 && budget >= groups.costs[static_cast<std::size_t>(k)];
}

}  // namespace mlblue
