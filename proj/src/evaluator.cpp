#include "mlblue/evaluator.hpp"

#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <random>

#include <fcntl.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "mlblue/error.hpp"

namespace mlblue {

Eigen::VectorXd draw_input(int dim, std::uint64_t seed, StreamDomain domain, std::uint64_t group,
                           std::uint64_t sample, std::uint64_t replication) {
    StreamEngine engine(seed, domain, group, sample, replication);
    std::normal_distribution<double> normal;
    Eigen::VectorXd z(dim);
    for (int i = 0; i < dim; ++i) z(i) = normal(engine);
    return z;
}

SyntheticSuite::SyntheticSuite(std::vector<Eigen::MatrixXd> loadings, std::vector<Eigen::VectorXd> offsets,
                               std::vector<std::vector<bool>> produces)
    : loadings_(std::move(loadings)), offsets_(std::move(offsets)), produces_(std::move(produces)) {
    if (loadings_.empty()) throw ConfigError("synthetic suite needs at least one output");
    const auto l = loadings_.front().rows();
    const auto d = loadings_.front().cols();
    if (l < 1 || d < 1) throw ConfigError("synthetic loadings must be nonempty");
    if (offsets_.size() != loadings_.size() || produces_.size() != loadings_.size()) {
        throw ConfigError("synthetic suite needs loadings, offsets and availability for every output");
    }
    for (std::size_t s = 0; s < loadings_.size(); ++s) {
        if (loadings_[s].rows() != l || loadings_[s].cols() != d || offsets_[s].size() != l ||
            static_cast<Eigen::Index>(produces_[s].size()) != l) {
            throw ConfigError("synthetic suite shapes differ between outputs");
        }
        if (!loadings_[s].allFinite() || !offsets_[s].allFinite()) throw ConfigError("synthetic suite has non-finite data");
    }
}

void SyntheticSuite::evaluate(const Eigen::VectorXd& z, std::span<const int> models, Eigen::MatrixXd& out) {
    out.resize(static_cast<Eigen::Index>(models.size()), num_outputs());
    for (std::size_t a = 0; a < models.size(); ++a) {
        const int i = models[a];
        for (int s = 0; s < num_outputs(); ++s) {
            const auto ss = static_cast<std::size_t>(s);
            out(static_cast<Eigen::Index>(a), s) = produces_[ss][static_cast<std::size_t>(i)]
                                                       ? offsets_[ss](i) + loadings_[ss].row(i).dot(z)
                                                       : std::numeric_limits<double>::quiet_NaN();
        }
    }
}

CovarianceStore SyntheticSuite::exact_covariance() const {
    CovarianceStore store(num_models(), num_outputs());
    for (int s = 0; s < num_outputs(); ++s) {
        const auto ss = static_cast<std::size_t>(s);
        const Eigen::MatrixXd c = loadings_[ss] * loadings_[ss].transpose();
        for (int i = 0; i < num_models(); ++i) {
            for (int j = i; j < num_models(); ++j) {
                if (produces_[ss][static_cast<std::size_t>(i)] && produces_[ss][static_cast<std::size_t>(j)]) {
                    store.set(s, i, j, 0.5 * (c(i, j) + c(j, i)), Provenance::exact);
                }
            }
        }
    }
    return store;
}

struct SubprocessEvaluator::Child {
    pid_t pid = -1;
    FILE* to_child = nullptr;
    FILE* from_child = nullptr;

    ~Child() {
        if (to_child) std::fclose(to_child);
        if (from_child) std::fclose(from_child);
        if (pid > 0) {
            int status = 0;
            waitpid(pid, &status, 0);
        }
    }
};

SubprocessEvaluator::SubprocessEvaluator(std::vector<std::vector<std::string>> commands, int num_outputs,
                                         int input_dim)
    : commands_(std::move(commands)), num_outputs_(num_outputs), input_dim_(input_dim) {
    if (commands_.empty()) throw ConfigError("subprocess evaluator needs one command per model");
    for (const auto& c : commands_) {
        if (c.empty()) throw ConfigError("empty model command");
    }
    if (num_outputs_ < 1 || input_dim_ < 1) throw ConfigError("subprocess evaluator needs positive dimensions");
    children_.resize(commands_.size());
    // A dead child must surface as an error on write, not kill the process.
    std::signal(SIGPIPE, SIG_IGN);
}

SubprocessEvaluator::~SubprocessEvaluator() = default;

SubprocessEvaluator::Child& SubprocessEvaluator::child(int model) {
    auto& slot = children_.at(static_cast<std::size_t>(model));
    if (slot) return *slot;
    int in_pipe[2];
    int out_pipe[2];
    if (pipe2(in_pipe, O_CLOEXEC) != 0 || pipe2(out_pipe, O_CLOEXEC) != 0) throw EvaluatorError("cannot create pipes for model " + std::to_string(model + 1));
    const pid_t pid = fork();
    if (pid < 0) throw EvaluatorError("cannot fork model " + std::to_string(model + 1));
    if (pid == 0) {
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        close(in_pipe[0]);
        close(in_pipe[1]);
        close(out_pipe[0]);
        close(out_pipe[1]);
        const auto& cmd = commands_[static_cast<std::size_t>(model)];
        std::vector<char*> argv;
        for (const auto& a : cmd) argv.push_back(const_cast<char*>(a.c_str()));
        argv.push_back(nullptr);
        execvp(argv[0], argv.data());
        _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    slot = std::make_unique<Child>();
    slot->pid = pid;
    slot->to_child = fdopen(in_pipe[1], "w");
    slot->from_child = fdopen(out_pipe[0], "r");
    if (!slot->to_child || !slot->from_child) throw EvaluatorError("cannot open pipes for model " + std::to_string(model + 1));
    return *slot;
}

void SubprocessEvaluator::evaluate(const Eigen::VectorXd& z, std::span<const int> models, Eigen::MatrixXd& out) {
    if (z.size() != input_dim_) throw EvaluatorError("input has the wrong dimension");
    nlohmann::json request = nlohmann::json::array();
    for (Eigen::Index i = 0; i < z.size(); ++i) request.push_back(z(i));
    const std::string line = request.dump() + "\n";
    out.resize(static_cast<Eigen::Index>(models.size()), num_outputs_);
    for (std::size_t a = 0; a < models.size(); ++a) {
        const int model = models[a];
        const std::string who = "model " + std::to_string(model + 1);
        auto& c = child(model);
        if (std::fputs(line.c_str(), c.to_child) < 0 || std::fflush(c.to_child) != 0) {
            throw EvaluatorError(who + ": cannot write request");
        }
        char* buf = nullptr;
        std::size_t cap = 0;
        const ssize_t got = getline(&buf, &cap, c.from_child);
        std::string reply = got > 0 ? std::string(buf, static_cast<std::size_t>(got)) : std::string();
        std::free(buf);
        if (got <= 0) throw EvaluatorError(who + ": process closed its output");
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(reply);
        } catch (const nlohmann::json::exception& e) {
            throw EvaluatorError(who + ": malformed reply: " + e.what());
        }
        if (!parsed.is_array() || static_cast<int>(parsed.size()) != num_outputs_) {
            throw EvaluatorError(who + ": reply must be an array of " + std::to_string(num_outputs_) + " values");
        }
        for (int s = 0; s < num_outputs_; ++s) {
            const auto& v = parsed[static_cast<std::size_t>(s)];
            if (v.is_null()) {
                out(static_cast<Eigen::Index>(a), s) = std::numeric_limits<double>::quiet_NaN();
            } else if (v.is_number()) {
                out(static_cast<Eigen::Index>(a), s) = v.get<double>();
            } else {
                throw EvaluatorError(who + ": output " + std::to_string(s + 1) + " is not a number");
            }
        }
    }
}

CovarianceStore pilot_covariance(Evaluator& evaluator, const std::vector<std::vector<bool>>& produces, int n_pilot,
                                 std::uint64_t seed) {
    const int l = evaluator.num_models();
    const int m = evaluator.num_outputs();
    if (n_pilot < 2) throw ConfigError("at least 2 pilot samples are needed");
    PilotBatch batch;
    batch.available = produces;
    batch.samples.assign(static_cast<std::size_t>(m), Eigen::MatrixXd::Zero(n_pilot, l));
    std::vector<int> all(static_cast<std::size_t>(l));
    for (int i = 0; i < l; ++i) all[static_cast<std::size_t>(i)] = i;
    Eigen::MatrixXd values;
    for (int r = 0; r < n_pilot; ++r) {
        const auto z = draw_input(evaluator.input_dim(), seed, StreamDomain::pilot, 0, static_cast<std::uint64_t>(r), 0);
        try {
            evaluator.evaluate(z, all, values);
        } catch (const EvaluatorError& e) {
            throw EvaluatorError("pilot sample " + std::to_string(r + 1) + ": " + e.what());
        }
        for (int s = 0; s < m; ++s) {
            for (int i = 0; i < l; ++i) {
                const bool has = produces[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)];
                if (has && !std::isfinite(values(i, s))) {
                    throw EvaluatorError("pilot sample " + std::to_string(r + 1) + ": model " + std::to_string(i + 1) +
                                         " returned no finite value for output " + std::to_string(s + 1));
                }
                batch.samples[static_cast<std::size_t>(s)](r, i) = has ? values(i, s) : 0.0;
            }
        }
    }
    return sample_covariance(batch);
}

}  // namespace mlblue
