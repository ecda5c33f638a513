#include "mlblue/problem_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "mlblue/error.hpp"

namespace mlblue {

using nlohmann::json;

namespace {

std::string escape(const std::string& key) {
    std::string out;
    for (char c : key) {
        if (c == '~') {
            out += "~0";
        } else if (c == '/') {
            out += "~1";
        } else {
            out += c;
        }
    }
    return out;
}

// A JSON value together with its pointer, for error messages.
class Node {
public:
    Node(const json& value, std::string pointer) : value_(value), pointer_(std::move(pointer)) {}

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError((pointer_.empty() ? std::string("/") : pointer_) + ": " + msg);
    }

    [[nodiscard]] const std::string& pointer() const { return pointer_; }
    [[nodiscard]] const json& raw() const { return value_; }
    [[nodiscard]] bool is_null() const { return value_.is_null(); }

    void require_object(std::initializer_list<const char*> allowed) const {
        if (!value_.is_object()) fail("expected an object");
        for (const auto& [key, _] : value_.items()) {
            if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
                Node(value_[key], pointer_ + "/" + escape(key)).fail("unknown key");
            }
        }
    }

    [[nodiscard]] bool has(const char* key) const { return value_.contains(key); }

    [[nodiscard]] Node at(const char* key) const {
        if (!value_.contains(key)) Node(value_, pointer_ + "/" + escape(key)).fail("required key is missing");
        return {value_.at(key), pointer_ + "/" + escape(key)};
    }

    [[nodiscard]] std::vector<Node> array(std::optional<std::size_t> size = std::nullopt) const {
        if (!value_.is_array()) fail("expected an array");
        if (size && value_.size() != *size) fail("expected " + std::to_string(*size) + " entries, got " + std::to_string(value_.size()));
        std::vector<Node> out;
        for (std::size_t i = 0; i < value_.size(); ++i) out.emplace_back(value_[i], pointer_ + "/" + std::to_string(i));
        return out;
    }

    [[nodiscard]] double number() const {
        if (!value_.is_number()) fail("expected a number");
        const double v = value_.get<double>();
        if (!std::isfinite(v)) fail("expected a finite number");
        return v;
    }

    [[nodiscard]] double positive() const {
        const double v = number();
        if (!(v > 0.0)) fail("must be positive");
        return v;
    }

    [[nodiscard]] long long integer() const {
        if (!value_.is_number_integer()) fail("expected an integer");
        return value_.get<long long>();
    }

    [[nodiscard]] std::string string() const {
        if (!value_.is_string()) fail("expected a string");
        return value_.get<std::string>();
    }

private:
    const json& value_;
    std::string pointer_;
};

int model_id(const Node& n, int num_models) {
    const long long id = n.integer();
    if (id < 1 || id > num_models) n.fail("model id must be in 1.." + std::to_string(num_models));
    return static_cast<int>(id - 1);
}

Group parse_group(const Node& n, int num_models) {
    Group g;
    for (const auto& e : n.array()) g.push_back(model_id(e, num_models));
    if (g.empty()) n.fail("group must not be empty");
    std::sort(g.begin(), g.end());
    if (std::adjacent_find(g.begin(), g.end()) != g.end()) n.fail("group repeats a model");
    return g;
}

Eigen::MatrixXd parse_matrix(const Node& n, std::size_t rows, std::size_t cols, bool allow_null, bool allow_null_rows) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const auto r = n.array(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        if (allow_null_rows && r[i].is_null()) {
            m.row(static_cast<Eigen::Index>(i)).setConstant(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const auto c = r[i].array(cols);
        for (std::size_t j = 0; j < cols; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                (allow_null && c[j].is_null()) ? std::numeric_limits<double>::quiet_NaN() : c[j].number();
        }
    }
    return m;
}

void parse_mode(const Node& n, ProblemConfig& cfg) {
    const std::string type = n.at("type").string();
    if (type == "budget") {
        n.require_object({"type", "budget"});
        cfg.mode = MosapMode::budget;
        cfg.budget = n.at("budget").positive();
    } else if (type == "tolerance") {
        n.require_object({"type", "eps2"});
        cfg.mode = MosapMode::tolerance;
        for (const auto& e : n.at("eps2").array(static_cast<std::size_t>(cfg.num_outputs))) cfg.eps2.push_back(e.positive());
    } else if (type == "pareto") {
        n.require_object({"type", "tau_tilde", "grid"});
        cfg.mode = MosapMode::pareto;
        if (n.has("tau_tilde")) {
            cfg.tau_tilde = n.at("tau_tilde").number();
            if (cfg.tau_tilde < 0.0) n.at("tau_tilde").fail("must be nonnegative");
        }
        if (n.has("grid")) {
            for (const auto& e : n.at("grid").array()) {
                const double v = e.number();
                if (v < 0.0) e.fail("must be nonnegative");
                cfg.tau_tilde_grid.push_back(v);
            }
        }
    } else {
        n.at("type").fail("expected one of budget, tolerance, pareto");
    }
}

}  // namespace

std::vector<double> default_tau_tilde_grid() {
    std::vector<double> g;
    for (int e = -7; e <= 4; ++e) g.push_back(std::pow(10.0, e));
    return g;
}

ProblemConfig parse_problem(const json& doc) {
    const Node root(doc, "");
    root.require_object({"num_outputs", "models", "covariance", "evaluator", "groups", "mode", "caps", "seed",
                         "replications", "solver"});
    ProblemConfig cfg;
    if (root.has("num_outputs")) {
        const auto n = root.at("num_outputs");
        const long long m = n.integer();
        if (m < 1) n.fail("must be at least 1");
        cfg.num_outputs = static_cast<int>(m);
    }

    const auto models = root.at("models").array();
    if (models.empty()) root.at("models").fail("at least one model is required");
    const int l = static_cast<int>(models.size());
    for (const auto& mn : models) {
        mn.require_object({"cost", "outputs"});
        Model model;
        model.cost = mn.at("cost").positive();
        if (mn.has("outputs")) {
            std::set<int> seen;
            for (const auto& o : mn.at("outputs").array()) {
                const long long s = o.integer();
                if (s < 1 || s > cfg.num_outputs) o.fail("output must be in 1.." + std::to_string(cfg.num_outputs));
                if (!seen.insert(static_cast<int>(s - 1)).second) o.fail("duplicate output");
            }
            model.outputs.assign(seen.begin(), seen.end());
            if (model.outputs.empty()) mn.at("outputs").fail("a model must produce at least one output");
        } else {
            for (int s = 0; s < cfg.num_outputs; ++s) model.outputs.push_back(s);
        }
        cfg.models.push_back(std::move(model));
    }
    if (static_cast<int>(cfg.models.front().outputs.size()) != cfg.num_outputs) {
        root.at("models").array()[0].at("outputs").fail("model 1 must produce every output");
    }

    if (root.has("evaluator")) {
        const auto ev = root.at("evaluator");
        ev.require_object({"synthetic", "subprocess"});
        if (ev.has("synthetic") == ev.has("subprocess")) ev.fail("exactly one of synthetic, subprocess is required");
        if (ev.has("synthetic")) {
            const auto sn = ev.at("synthetic");
            sn.require_object({"input_dim", "loadings", "offsets"});
            SyntheticSpec spec;
            const long long d = sn.at("input_dim").integer();
            if (d < 1) sn.at("input_dim").fail("must be at least 1");
            spec.input_dim = static_cast<int>(d);
            const auto loadings = sn.at("loadings").array(static_cast<std::size_t>(cfg.num_outputs));
            for (std::size_t s = 0; s < loadings.size(); ++s) {
                spec.loadings.push_back(parse_matrix(loadings[s], static_cast<std::size_t>(l), static_cast<std::size_t>(d), false, true));
                for (int i = 0; i < l; ++i) {
                    const auto& outs = cfg.models[static_cast<std::size_t>(i)].outputs;
                    const bool has = std::find(outs.begin(), outs.end(), static_cast<int>(s)) != outs.end();
                    const bool null_row = !spec.loadings.back().row(i).allFinite();
                    if (has && null_row) loadings[s].array()[static_cast<std::size_t>(i)].fail("model produces this output; row must not be null");
                    if (!has) spec.loadings.back().row(i).setZero();
                }
            }
            if (sn.has("offsets")) {
                const auto offsets = sn.at("offsets").array(static_cast<std::size_t>(cfg.num_outputs));
                for (const auto& o : offsets) {
                    Eigen::VectorXd v(l);
                    const auto e = o.array(static_cast<std::size_t>(l));
                    for (int i = 0; i < l; ++i) v(i) = e[static_cast<std::size_t>(i)].number();
                    spec.offsets.push_back(v);
                }
            } else {
                spec.offsets.assign(static_cast<std::size_t>(cfg.num_outputs), Eigen::VectorXd::Zero(l));
            }
            cfg.synthetic = std::move(spec);
        } else {
            const auto sn = ev.at("subprocess");
            sn.require_object({"input_dim", "commands"});
            SubprocessSpec spec;
            const long long d = sn.at("input_dim").integer();
            if (d < 1) sn.at("input_dim").fail("must be at least 1");
            spec.input_dim = static_cast<int>(d);
            for (const auto& c : sn.at("commands").array(static_cast<std::size_t>(l))) {
                std::vector<std::string> argv;
                for (const auto& a : c.array()) argv.push_back(a.string());
                if (argv.empty()) c.fail("command must not be empty");
                spec.commands.push_back(std::move(argv));
            }
            cfg.subprocess = std::move(spec);
        }
    }

    const auto cov = root.at("covariance");
    cov.require_object({"source", "matrices", "samples"});
    const std::string source = cov.at("source").string();
    if (source == "inline") {
        if (cov.has("samples")) cov.at("samples").fail("only valid for pilot covariances");
        cfg.covariance_source = CovarianceSource::inline_matrices;
        const auto mats = cov.at("matrices").array(static_cast<std::size_t>(cfg.num_outputs));
        for (std::size_t s = 0; s < mats.size(); ++s) {
            Eigen::MatrixXd c = parse_matrix(mats[s], static_cast<std::size_t>(l), static_cast<std::size_t>(l), true, false);
            for (int i = 0; i < l; ++i) {
                for (int j = 0; j < l; ++j) {
                    const double a = c(i, j);
                    const double b = c(j, i);
                    if (std::isnan(a) != std::isnan(b) || (!std::isnan(a) && a != b)) {
                        mats[s].array()[static_cast<std::size_t>(i)].array()[static_cast<std::size_t>(j)].fail("matrix is not symmetric");
                    }
                }
            }
            cfg.covariance.push_back(std::move(c));
        }
    } else if (source == "exact") {
        if (cov.has("matrices") || cov.has("samples")) cov.fail("exact covariances take no further keys");
        if (!cfg.synthetic) cov.at("source").fail("exact covariances need a synthetic evaluator");
        cfg.covariance_source = CovarianceSource::exact;
    } else if (source == "pilot") {
        if (cov.has("matrices")) cov.at("matrices").fail("only valid for inline covariances");
        if (!cfg.synthetic && !cfg.subprocess) cov.at("source").fail("pilot covariances need an evaluator");
        cfg.covariance_source = CovarianceSource::pilot;
        const long long n = cov.at("samples").integer();
        if (n < 2) cov.at("samples").fail("at least 2 pilot samples are needed");
        cfg.pilot_samples = static_cast<int>(n);
    } else {
        cov.at("source").fail("expected one of inline, exact, pilot");
    }

    cfg.kappa = l;
    if (root.has("groups")) {
        const auto g = root.at("groups");
        g.require_object({"kappa", "deny"});
        if (g.has("kappa")) {
            const long long k = g.at("kappa").integer();
            if (k < 1 || k > l) g.at("kappa").fail("must be in 1.." + std::to_string(l));
            cfg.kappa = static_cast<int>(k);
        }
        if (g.has("deny")) {
            for (const auto& d : g.at("deny").array()) cfg.deny.push_back(parse_group(d, l));
        }
    }

    parse_mode(root.at("mode"), cfg);

    if (root.has("caps")) {
        for (const auto& c : root.at("caps").array()) {
            c.require_object({"model", "max_samples"});
            SampleCap cap;
            cap.model = model_id(c.at("model"), l);
            cap.max_samples = c.at("max_samples").number();
            if (cap.max_samples < 1.0) c.at("max_samples").fail("must be at least 1");
            cfg.caps.push_back(cap);
        }
    }
    if (root.has("seed")) {
        const long long s = root.at("seed").integer();
        if (s < 0) root.at("seed").fail("must be nonnegative");
        cfg.seed = static_cast<std::uint64_t>(s);
    }
    if (root.has("replications")) {
        const long long r = root.at("replications").integer();
        if (r < 1) root.at("replications").fail("must be at least 1");
        cfg.replications = static_cast<int>(r);
    }
    if (root.has("solver")) {
        const auto sv = root.at("solver");
        sv.require_object({"gap_tol", "feas_tol", "max_iter"});
        if (sv.has("gap_tol")) cfg.solver.gap_tol = sv.at("gap_tol").positive();
        if (sv.has("feas_tol")) cfg.solver.feas_tol = sv.at("feas_tol").positive();
        if (sv.has("max_iter")) {
            const long long it = sv.at("max_iter").integer();
            if (it < 1) sv.at("max_iter").fail("must be at least 1");
            cfg.solver.max_iter = static_cast<int>(it);
        }
    }
    return cfg;
}

ProblemConfig load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open file");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_problem(doc);
}

namespace {

json matrix_json(const Eigen::MatrixXd& m, bool null_rows) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (null_rows && !m.row(i).allFinite()) {
            rows.push_back(nullptr);
            continue;
        }
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (std::isnan(m(i, j))) {
                row.push_back(nullptr);
            } else {
                row.push_back(m(i, j));
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

json to_json(const ProblemConfig& cfg) {
    json doc;
    doc["num_outputs"] = cfg.num_outputs;
    doc["models"] = json::array();
    for (const auto& m : cfg.models) {
        json outs = json::array();
        for (int s : m.outputs) outs.push_back(s + 1);
        doc["models"].push_back({{"cost", m.cost}, {"outputs", outs}});
    }
    switch (cfg.covariance_source) {
        case CovarianceSource::inline_matrices: {
            json mats = json::array();
            for (const auto& c : cfg.covariance) mats.push_back(matrix_json(c, false));
            doc["covariance"] = {{"source", "inline"}, {"matrices", mats}};
            break;
        }
        case CovarianceSource::exact: doc["covariance"] = {{"source", "exact"}}; break;
        case CovarianceSource::pilot: doc["covariance"] = {{"source", "pilot"}, {"samples", cfg.pilot_samples}}; break;
    }
    if (cfg.synthetic) {
        json loadings = json::array();
        json offsets = json::array();
        for (std::size_t s = 0; s < cfg.synthetic->loadings.size(); ++s) {
            Eigen::MatrixXd a = cfg.synthetic->loadings[s];
            for (int i = 0; i < static_cast<int>(cfg.models.size()); ++i) {
                const auto& outs = cfg.models[static_cast<std::size_t>(i)].outputs;
                if (std::find(outs.begin(), outs.end(), static_cast<int>(s)) == outs.end()) {
                    a.row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
                }
            }
            loadings.push_back(matrix_json(a, true));
            json off = json::array();
            for (Eigen::Index i = 0; i < cfg.synthetic->offsets[s].size(); ++i) off.push_back(cfg.synthetic->offsets[s](i));
            offsets.push_back(std::move(off));
        }
        doc["evaluator"] = {{"synthetic", {{"input_dim", cfg.synthetic->input_dim}, {"loadings", loadings}, {"offsets", offsets}}}};
    } else if (cfg.subprocess) {
        doc["evaluator"] = {{"subprocess", {{"input_dim", cfg.subprocess->input_dim}, {"commands", cfg.subprocess->commands}}}};
    }
    json deny = json::array();
    for (const auto& g : cfg.deny) {
        json ids = json::array();
        for (int i : g) ids.push_back(i + 1);
        deny.push_back(std::move(ids));
    }
    doc["groups"] = {{"kappa", cfg.kappa}, {"deny", deny}};
    switch (cfg.mode) {
        case MosapMode::budget: doc["mode"] = {{"type", "budget"}, {"budget", cfg.budget}}; break;
        case MosapMode::tolerance: doc["mode"] = {{"type", "tolerance"}, {"eps2", cfg.eps2}}; break;
        case MosapMode::pareto:
            doc["mode"] = {{"type", "pareto"}, {"tau_tilde", cfg.tau_tilde}, {"grid", cfg.tau_tilde_grid}};
            break;
    }
    doc["caps"] = json::array();
    for (const auto& c : cfg.caps) doc["caps"].push_back({{"model", c.model + 1}, {"max_samples", c.max_samples}});
    doc["seed"] = cfg.seed;
    doc["replications"] = cfg.replications;
    doc["solver"] = {{"gap_tol", cfg.solver.gap_tol}, {"feas_tol", cfg.solver.feas_tol}, {"max_iter", cfg.solver.max_iter}};
    return doc;
}

std::string canonical_form(const ProblemConfig& config) { return to_json(config).dump(); }

std::shared_ptr<Evaluator> make_evaluator(const ProblemConfig& cfg) {
    std::vector<std::vector<bool>> produces(static_cast<std::size_t>(cfg.num_outputs),
                                            std::vector<bool>(cfg.models.size(), false));
    for (std::size_t i = 0; i < cfg.models.size(); ++i) {
        for (int s : cfg.models[i].outputs) produces[static_cast<std::size_t>(s)][i] = true;
    }
    if (cfg.synthetic) {
        return std::make_shared<SyntheticSuite>(cfg.synthetic->loadings, cfg.synthetic->offsets, produces);
    }
    if (cfg.subprocess) {
        return std::make_shared<SubprocessEvaluator>(cfg.subprocess->commands, cfg.num_outputs, cfg.subprocess->input_dim);
    }
    return nullptr;
}

PreparedProblem prepare_problem(const ProblemConfig& cfg) {
    PreparedProblem p;
    p.models = ModelSet(cfg.models, cfg.num_outputs);
    const int l = p.models.size();
    p.produces.assign(static_cast<std::size_t>(cfg.num_outputs), std::vector<bool>(static_cast<std::size_t>(l), false));
    for (int s = 0; s < cfg.num_outputs; ++s) {
        for (int i = 0; i < l; ++i) p.produces[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)] = p.models.produces(i, s);
    }
    p.evaluator = make_evaluator(cfg);
    if (auto* suite = dynamic_cast<SyntheticSuite*>(p.evaluator.get())) p.exact = suite->exact_covariance();

    switch (cfg.covariance_source) {
        case CovarianceSource::inline_matrices: {
            p.store = CovarianceStore(l, cfg.num_outputs);
            for (int s = 0; s < cfg.num_outputs; ++s) {
                const auto& c = cfg.covariance[static_cast<std::size_t>(s)];
                for (int i = 0; i < l; ++i) {
                    for (int j = i; j < l; ++j) {
                        if (!std::isnan(c(i, j)) && p.models.produces(i, s) && p.models.produces(j, s)) {
                            p.store.set(s, i, j, c(i, j), Provenance::exact);
                        }
                    }
                }
            }
            break;
        }
        case CovarianceSource::exact: p.store = *p.exact; break;
        case CovarianceSource::pilot:
            p.store = pilot_covariance(*p.evaluator, p.produces, cfg.pilot_samples, cfg.seed);
            break;
    }

    const GroupSet all = enumerate_groups(p.models, cfg.kappa, cfg.deny);
    p.groups = restrict_to_known(all, p.store);
    p.spec = make_mosap_spec(p.models, p.groups, p.store);
    p.spec.mode = cfg.mode;
    p.spec.budget = cfg.budget;
    p.spec.tolerance = cfg.eps2;
    if (cfg.mode == MosapMode::pareto) p.spec.tau = tau_from_normalized(cfg.tau_tilde, p.spec.model_costs);
    for (const auto& cap : cfg.caps) {
        LinearConstraint lc;
        lc.bound = cap.max_samples;
        for (int k = 0; k < p.groups.size(); ++k) lc.coefficients.push_back(p.groups.contains(k, cap.model) ? 1.0 : 0.0);
        p.spec.extra_linear.push_back(std::move(lc));
    }
    p.spec.validate();
    return p;
}

}  // namespace mlblue
