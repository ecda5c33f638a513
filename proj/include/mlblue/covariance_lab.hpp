#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mlblue/model_registry.hpp"

namespace mlblue {

enum class Provenance { unknown, pilot, extrapolated, clipped, exact };

const char* to_string(Provenance p);

inline constexpr double kDefaultSpdFloor = 1e-10;

// Per-output symmetric l x l covariance matrices with a known/unknown mask.
// Unknown entries are the single source of truth for which groups can be
// used: a group is usable for output s only if all its pairs are known.
class CovarianceStore {
public:
    CovarianceStore() = default;
    CovarianceStore(int num_models, int num_outputs);

    [[nodiscard]] int num_models() const { return num_models_; }
    [[nodiscard]] int num_outputs() const { return static_cast<int>(values_.size()); }

    void set(int output, int i, int j, double value, Provenance provenance);
    void forget(int output, int i, int j);

    [[nodiscard]] bool known(int output, int i, int j) const;
    [[nodiscard]] double value(int output, int i, int j) const;
    [[nodiscard]] Provenance provenance(int output, int i, int j) const;
    [[nodiscard]] const Eigen::MatrixXd& matrix(int output) const { return values_.at(static_cast<std::size_t>(output)); }

    // First unknown pair (i <= j) inside the group, if any.
    [[nodiscard]] std::optional<std::pair<int, int>> first_unknown(int output, const Group& group) const;
    [[nodiscard]] bool group_known(int output, const Group& group) const { return !first_unknown(output, group); }

    // Models whose known variance is exactly zero for this output.
    [[nodiscard]] std::vector<int> degenerate_models(int output) const;

    // Dense constructor: every entry known, provenance `exact`.
    static CovarianceStore from_dense(const std::vector<Eigen::MatrixXd>& per_output,
                                      Provenance provenance = Provenance::exact);

private:
    [[nodiscard]] std::size_t flat(int i, int j) const {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(num_models_) + static_cast<std::size_t>(j);
    }

    int num_models_ = 0;
    std::vector<Eigen::MatrixXd> values_;
    std::vector<std::vector<Provenance>> provenance_;
};

// Coupled pilot samples: samples[s] is n_pilot x l, row r holds every
// model's output s evaluated at the same input. available[s][i] marks the
// columns that carry data.
struct PilotBatch {
    std::vector<Eigen::MatrixXd> samples;
    std::vector<std::vector<bool>> available;

    [[nodiscard]] int n_pilot() const { return samples.empty() ? 0 : static_cast<int>(samples.front().rows()); }
};

// Unbiased (n-1) sample covariance for every pair of available columns.
CovarianceStore sample_covariance(const PilotBatch& batch);

// Raises eigenvalues below floor * lambda_max (absolute floor when
// lambda_max <= 0). Inputs that need no change are returned bit-identical.
Eigen::MatrixXd spd_repair(const Eigen::MatrixXd& matrix, double floor = kDefaultSpdFloor);

// Principal submatrix on the group, in restriction-index order, repaired to SPD.
Eigen::MatrixXd extract_group_covariance(const CovarianceStore& store, const Group& group, int output,
                                         double floor = kDefaultSpdFloor);

// Groups (per output) whose covariance entries are all known.
GroupSet restrict_to_known(const GroupSet& groups, const CovarianceStore& store);

struct RichardsonResult {
    std::vector<double> values;  // values[j] at level j+1 finer than the finest known
    double limit = 0.0;          // v(0)
    double constant = 0.0;       // K, in units of the finest known spacing
    std::vector<std::string> warnings;
};

// Fits v(h) = v_inf + K h^rate through the two finest known values
// (coarse_to_fine ordering, spacing shrinking by `ratio` per level) and
// evaluates it on `num_finer` further levels. With `known_limit`, v_inf is
// fixed and K comes from the finest value alone.
RichardsonResult richardson_extrapolate(std::span<const double> coarse_to_fine, double rate, int num_finer,
                                        double ratio = 2.0, std::optional<double> known_limit = std::nullopt);

// Least-squares slope of log|v_j - v_{j+1}| against log h_j; needs >= 3 values.
double fit_rate(std::span<const double> coarse_to_fine, double ratio = 2.0);

struct ReconstructedCovariance {
    double covariance = 0.0;
    bool clipped = false;
};

// C(p_i, p_j) = (V[p_i] + V[p_j] - V[p_i - p_j]) / 2, clipped to |rho| <= 1.
ReconstructedCovariance reconstruct_highfi_covariance(double var_i, double var_j, double var_diff);

// Fills in the covariances of the `num_hf` finest models (indices 0..num_hf-1,
// refinement ratio `ratio` per index) by extrapolating V[p_i] and
// V[p_i - p_{i+j}], j = 1..dbar, from the known low-fidelity block of
// `lowfi`. Entries not reachable this way stay unknown.
CovarianceStore extrapolate_highfi_covariances(const CovarianceStore& lowfi, int num_hf, int dbar, double rate,
                                               double ratio = 2.0);

}  // namespace mlblue
