#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mlblue/conic_solver.hpp"
#include "mlblue/covariance_lab.hpp"
#include "mlblue/evaluator.hpp"
#include "mlblue/model_registry.hpp"
#include "mlblue/mosap.hpp"

namespace mlblue {

// inline: matrices in the file (null = unknown); exact: A A^T of the
// synthetic evaluator; pilot: sample covariance of fresh pilot draws.
enum class CovarianceSource { inline_matrices, exact, pilot };

struct SyntheticSpec {
    int input_dim = 0;
    std::vector<Eigen::MatrixXd> loadings;  // per output, l x d; rows of non-producing models ignored
    std::vector<Eigen::VectorXd> offsets;   // per output, l
};

struct SubprocessSpec {
    int input_dim = 0;
    std::vector<std::vector<std::string>> commands;  // argv per model
};

struct SampleCap {
    int model = 0;  // 0-based
    double max_samples = 0.0;
};

struct ProblemConfig {
    int num_outputs = 1;
    std::vector<Model> models;

    CovarianceSource covariance_source = CovarianceSource::inline_matrices;
    std::vector<Eigen::MatrixXd> covariance;  // inline only; NaN marks unknown entries
    int pilot_samples = 0;

    std::optional<SyntheticSpec> synthetic;
    std::optional<SubprocessSpec> subprocess;

    int kappa = 0;  // 0 means the model count
    std::vector<Group> deny;

    MosapMode mode = MosapMode::budget;
    double budget = 0.0;
    std::vector<double> eps2;
    double tau_tilde = 0.0;
    std::vector<double> tau_tilde_grid;

    std::vector<SampleCap> caps;
    std::uint64_t seed = 0;
    int replications = 100;
    SdpSettings solver;
};

// Strict parse: unknown keys and type mismatches raise ConfigError with a
// JSON pointer to the offending value.
ProblemConfig parse_problem(const nlohmann::json& doc);
ProblemConfig load_problem(const std::string& path);

// Every field written out, defaults included; keys sorted.
nlohmann::json to_json(const ProblemConfig& config);
std::string canonical_form(const ProblemConfig& config);

std::vector<double> default_tau_tilde_grid();

struct PreparedProblem {
    ModelSet models;
    GroupSet groups;
    CovarianceStore store;
    std::optional<CovarianceStore> exact;  // when the evaluator is synthetic
    MosapSpec spec;
    std::shared_ptr<Evaluator> evaluator;  // null when the config has none
    std::vector<std::vector<bool>> produces;
};

std::shared_ptr<Evaluator> make_evaluator(const ProblemConfig& config);

// Model set, covariances (drawing pilot samples if asked), groups with
// unknown couplings removed, and the MOSAP spec with sample caps.
PreparedProblem prepare_problem(const ProblemConfig& config);

}  // namespace mlblue
