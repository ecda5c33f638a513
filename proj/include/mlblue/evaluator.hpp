#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlblue/covariance_lab.hpp"
#include "mlblue/random_streams.hpp"

namespace mlblue {

// Models evaluated at a shared standard-normal input z.
class Evaluator {
public:
    virtual ~Evaluator() = default;

    [[nodiscard]] virtual int num_models() const = 0;
    [[nodiscard]] virtual int num_outputs() const = 0;
    [[nodiscard]] virtual int input_dim() const = 0;
    // Concurrent evaluate() calls are allowed.
    [[nodiscard]] virtual bool thread_safe() const = 0;

    // out(a, s) = output s of model models[a] at z; NaN where not produced.
    // Throws EvaluatorError.
    virtual void evaluate(const Eigen::VectorXd& z, std::span<const int> models, Eigen::MatrixXd& out) = 0;
};

// Draws the input vector for one (group, sample, replication) key.
Eigen::VectorXd draw_input(int dim, std::uint64_t seed, StreamDomain domain, std::uint64_t group,
                           std::uint64_t sample, std::uint64_t replication);

// p_i^s(z) = offsets[s](i) + loadings[s].row(i) . z. produces[s][i] marks
// the models that have output s.
class SyntheticSuite final : public Evaluator {
public:
    SyntheticSuite(std::vector<Eigen::MatrixXd> loadings, std::vector<Eigen::VectorXd> offsets,
                   std::vector<std::vector<bool>> produces);

    [[nodiscard]] int num_models() const override { return static_cast<int>(loadings_.front().rows()); }
    [[nodiscard]] int num_outputs() const override { return static_cast<int>(loadings_.size()); }
    [[nodiscard]] int input_dim() const override { return static_cast<int>(loadings_.front().cols()); }
    [[nodiscard]] bool thread_safe() const override { return true; }
    void evaluate(const Eigen::VectorXd& z, std::span<const int> models, Eigen::MatrixXd& out) override;

    // A A^T per output, entries of non-producing models unknown.
    [[nodiscard]] CovarianceStore exact_covariance() const;
    [[nodiscard]] double mean(int output, int model) const { return offsets_[static_cast<std::size_t>(output)](model); }
    [[nodiscard]] const std::vector<Eigen::MatrixXd>& loadings() const { return loadings_; }
    [[nodiscard]] const std::vector<Eigen::VectorXd>& offsets() const { return offsets_; }
    [[nodiscard]] const std::vector<std::vector<bool>>& produces() const { return produces_; }

private:
    std::vector<Eigen::MatrixXd> loadings_;
    std::vector<Eigen::VectorXd> offsets_;
    std::vector<std::vector<bool>> produces_;
};

// One child process per model. Each request is a JSON array (the input z)
// on one line; the reply is a JSON array of num_outputs numbers, null for
// outputs the model does not produce.
class SubprocessEvaluator final : public Evaluator {
public:
    SubprocessEvaluator(std::vector<std::vector<std::string>> commands, int num_outputs, int input_dim);
    ~SubprocessEvaluator() override;
    SubprocessEvaluator(const SubprocessEvaluator&) = delete;
    SubprocessEvaluator& operator=(const SubprocessEvaluator&) = delete;

    [[nodiscard]] int num_models() const override { return static_cast<int>(commands_.size()); }
    [[nodiscard]] int num_outputs() const override { return num_outputs_; }
    [[nodiscard]] int input_dim() const override { return input_dim_; }
    [[nodiscard]] bool thread_safe() const override { return false; }
    void evaluate(const Eigen::VectorXd& z, std::span<const int> models, Eigen::MatrixXd& out) override;

private:
    struct Child;
    Child& child(int model);

    std::vector<std::vector<std::string>> commands_;
    int num_outputs_;
    int input_dim_;
    std::vector<std::unique_ptr<Child>> children_;
};

// n_pilot coupled evaluations of every model from the pilot stream domain,
// followed by the unbiased sample covariance.
CovarianceStore pilot_covariance(Evaluator& evaluator, const std::vector<std::vector<bool>>& produces, int n_pilot,
                                 std::uint64_t seed);

}  // namespace mlblue
