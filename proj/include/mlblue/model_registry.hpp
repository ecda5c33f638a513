#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace mlblue {

// Model indices are 0-based inside the library; index 0 is the
// high-fidelity reference model. Files and CLI output use 1-based ids.
using Group = std::vector<int>;

struct Model {
    double cost = 1.0;
    std::vector<int> outputs;  // 0-based output indices this model produces
};

class ModelSet {
public:
    ModelSet() = default;
    ModelSet(std::vector<Model> models, int num_outputs);

    [[nodiscard]] int size() const { return static_cast<int>(models_.size()); }
    [[nodiscard]] int num_outputs() const { return num_outputs_; }
    [[nodiscard]] const Model& model(int i) const { return models_.at(static_cast<std::size_t>(i)); }
    [[nodiscard]] const std::vector<Model>& models() const { return models_; }
    [[nodiscard]] bool produces(int model, int output) const;
    [[nodiscard]] std::vector<double> costs() const;

private:
    std::vector<Model> models_;
    int num_outputs_ = 1;
    std::vector<std::vector<bool>> produces_;
};

// Ordered list of allowed model groupings. Groups are sorted by size and
// then lexicographically; allowed[s][k] says whether group k may be used
// to estimate output s.
struct GroupSet {
    int num_models = 0;
    int kappa = 1;
    std::vector<Group> groups;
    std::vector<double> costs;
    std::vector<std::vector<bool>> allowed;

    [[nodiscard]] int size() const { return static_cast<int>(groups.size()); }
    [[nodiscard]] int num_outputs() const { return static_cast<int>(allowed.size()); }
    [[nodiscard]] bool contains(int k, int model) const;
    // h^s: allowed for output s and containing the high-fidelity model.
    [[nodiscard]] std::vector<bool> hf_mask(int output) const;
    [[nodiscard]] std::optional<int> index_of(const Group& group) const;
    // Models appearing in at least one group allowed for `output`.
    [[nodiscard]] std::vector<int> active_models(int output) const;
};

// All subsets of {0..l-1} of size <= kappa, minus the deny list, in
// size-then-lexicographic order. Throws ConfigError if some output has no
// allowed group containing model 0.
GroupSet enumerate_groups(const ModelSet& models, int kappa,
                          const std::vector<Group>& deny_list = {});

// Clears allowed[s][k] wherever keep(s, group) is false, drops groups no
// longer allowed for any output and re-validates well-posedness.
GroupSet restrict_groups(const GroupSet& groups,
                         const std::function<bool(int output, const Group&)>& keep);

// Sorted model indices of the group: the rows of the identity forming R_k.
std::vector<int> restriction_indices(const Group& group, int num_models);

// budget >= cheapest allowed group (for `output`) containing model 0.
bool check_budget_feasibility(const GroupSet& groups, double budget, int output);

// Cheapest allowed group containing model 0 for `output`; -1 if none.
int cheapest_hf_group(const GroupSet& groups, int output);

std::size_t binomial(int n, int k);

}  // namespace mlblue
