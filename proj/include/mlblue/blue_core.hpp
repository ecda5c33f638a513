#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mlblue/covariance_lab.hpp"
#include "mlblue/model_registry.hpp"

namespace mlblue {

inline constexpr double kDefaultRankTolerance = 1e-12;
inline constexpr double kWellPosednessTolerance = 1e-8;

// One sampled group of a BLUE system: B_k = R_k^T C_k^{-1} R_k, kept
// alongside the Cholesky factor of C_k.
struct BlueTerm {
    int group = 0;                 // index into the allocation vector
    std::vector<int> indices;      // restriction indices
    Eigen::MatrixXd covariance;    // C_k (repaired)
    Eigen::LLT<Eigen::MatrixXd> factor;
    Eigen::MatrixXd precision;     // C_k^{-1}, formed from the factor
    double cost = 0.0;
};

// The single-output linear model over all groups usable for one output.
// Groups not usable for the output simply have no term; models that appear
// in no term give zero rows/columns of Psi.
class BlueSystem {
public:
    BlueSystem() = default;
    BlueSystem(int num_models, int num_groups, std::vector<BlueTerm> terms);

    // Terms for every group allowed for `output`, covariances pulled from the store.
    static BlueSystem from_store(const GroupSet& groups, const CovarianceStore& store, int output,
                                 double spd_floor = kDefaultSpdFloor);
    // Explicit (group, covariance) list; group k maps to allocation entry k.
    static BlueSystem from_groups(int num_models, const std::vector<Group>& groups,
                                  const std::vector<Eigen::MatrixXd>& covariances,
                                  const std::vector<double>& costs = {});

    [[nodiscard]] int num_models() const { return num_models_; }
    [[nodiscard]] int num_groups() const { return num_groups_; }
    [[nodiscard]] const std::vector<BlueTerm>& terms() const { return terms_; }
    // -1 if the group has no term in this system.
    [[nodiscard]] int term_of_group(int k) const { return term_of_group_.at(static_cast<std::size_t>(k)); }
    [[nodiscard]] bool contains_hf(int term) const { return terms_.at(static_cast<std::size_t>(term)).indices.front() == 0; }

private:
    int num_models_ = 0;
    int num_groups_ = 0;
    std::vector<BlueTerm> terms_;
    std::vector<int> term_of_group_;
};

struct SpectralPseudoInverse {
    Eigen::VectorXd eigenvalues;   // nonincreasing
    Eigen::MatrixXd eigenvectors;  // orthonormal columns, matching eigenvalues
    double rank_tolerance = kDefaultRankTolerance;
    int rank = 0;

    [[nodiscard]] Eigen::MatrixXd matrix() const;
    [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
    // Orthogonal projector onto the column space.
    [[nodiscard]] Eigen::MatrixXd range_projector() const;
};

Eigen::MatrixXd assemble_psi(std::span<const double> n, const BlueSystem& system);

SpectralPseudoInverse pseudo_inverse(const Eigen::MatrixXd& m, double rtol = kDefaultRankTolerance);

// e_1^T Psi(n)^dagger e_1. Throws WellPosednessError when no group
// containing model 0 is sampled or e_1 is outside col(Psi).
double blue_variance(std::span<const double> n, const BlueSystem& system, double rtol = kDefaultRankTolerance);

// Same quantity from an assembled Psi: Cholesky on the sampled support,
// pseudo-inverse fallback. Used in enumeration loops.
double hf_variance_from_psi(const Eigen::MatrixXd& psi);

// Variance of the estimator built from `estimator` (possibly from estimated
// covariances) when samples actually follow `truth`.
double blue_variance_under(std::span<const double> n, const BlueSystem& estimator, const BlueSystem& truth);

// Basis of null(Psi(n)): e_i for every model appearing in no sampled group.
Eigen::MatrixXd null_space_basis(std::span<const double> n, const BlueSystem& system);

struct BlueEstimate {
    Eigen::VectorXd mu;
    double mu_hf = 0.0;
};

// drawn[k] holds n_k rows of width |G_k| for every group k with a term.
BlueEstimate combine_samples(std::span<const long> n, const std::vector<Eigen::MatrixXd>& drawn,
                             const BlueSystem& system);

}  // namespace mlblue
