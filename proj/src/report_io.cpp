#include "mlblue/report_io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "mlblue/error.hpp"

namespace mlblue {

using nlohmann::json;

namespace {

json group_ids(const Group& g) {
    json ids = json::array();
    for (int i : g) ids.push_back(i + 1);
    return ids;
}

json optional_array(const std::vector<std::optional<double>>& v) {
    json out = json::array();
    for (const auto& x : v) {
        if (x) {
            out.push_back(*x);
        } else {
            out.push_back(nullptr);
        }
    }
    return out;
}

SdpStatus status_from_string(const std::string& s) {
    for (auto st : {SdpStatus::optimal, SdpStatus::infeasible, SdpStatus::unbounded, SdpStatus::max_iter,
                    SdpStatus::numerical_error}) {
        if (s == to_string(st)) return st;
    }
    throw ConfigError("/solver/status: unknown solver status '" + s + "'");
}

}  // namespace

json allocation_to_json(const Allocation& a, const GroupSet& groups) {
    json doc;
    doc["mode"] = to_string(a.mode);
    json n = json::array();
    json g = json::array();
    for (int k : a.selected_groups) {
        const double nk = a.n[static_cast<std::size_t>(k)];
        if (a.is_integer) {
            n.push_back(static_cast<long long>(nk));
        } else {
            n.push_back(nk);
        }
        g.push_back(group_ids(groups.groups[static_cast<std::size_t>(k)]));
    }
    doc["n"] = n;
    doc["groups"] = g;
    doc["total_cost"] = a.total_cost;
    doc["per_output_variance"] = a.per_output_variance;
    doc["solver"] = {{"iterations", a.solver.iterations},
                     {"gap", a.solver.gap},
                     {"status", to_string(a.solver.status)},
                     {"primal_residual", a.solver.primal_residual},
                     {"dual_residual", a.solver.dual_residual}};
    doc["is_integer"] = a.is_integer;
    doc["relaxation_gap"] = a.relaxation_gap;
    doc["sdp_t"] = a.sdp_t;
    doc["tau"] = a.tau;
    doc["flags"] = a.flags;
    return doc;
}

Allocation allocation_from_json(const json& doc, const GroupSet& groups) {
    try {
        Allocation a;
        a.mode = mosap_mode_from_string(doc.at("mode").get<std::string>());
        const auto& n = doc.at("n");
        const auto& g = doc.at("groups");
        if (!n.is_array() || !g.is_array() || n.size() != g.size()) throw ConfigError("/n: must parallel /groups");
        a.n.assign(static_cast<std::size_t>(groups.size()), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            Group grp;
            for (const auto& id : g[i]) grp.push_back(id.get<int>() - 1);
            const auto k = groups.index_of(grp);
            if (!k) throw ConfigError("/groups/" + std::to_string(i) + ": group is not in the group set");
            a.n[static_cast<std::size_t>(*k)] = n[i].get<double>();
            a.selected_groups.push_back(*k);
        }
        a.total_cost = doc.at("total_cost").get<double>();
        a.per_output_variance = doc.at("per_output_variance").get<std::vector<double>>();
        const auto& s = doc.at("solver");
        a.solver.iterations = s.at("iterations").get<int>();
        a.solver.gap = s.at("gap").get<double>();
        if (s.contains("status")) a.solver.status = status_from_string(s.at("status").get<std::string>());
        if (s.contains("primal_residual")) a.solver.primal_residual = s.at("primal_residual").get<double>();
        if (s.contains("dual_residual")) a.solver.dual_residual = s.at("dual_residual").get<double>();
        if (doc.contains("is_integer")) a.is_integer = doc.at("is_integer").get<bool>();
        if (doc.contains("relaxation_gap")) a.relaxation_gap = doc.at("relaxation_gap").get<double>();
        if (doc.contains("sdp_t")) a.sdp_t = doc.at("sdp_t").get<double>();
        if (doc.contains("tau")) a.tau = doc.at("tau").get<double>();
        if (doc.contains("flags")) a.flags = doc.at("flags").get<std::vector<std::string>>();
        std::sort(a.selected_groups.begin(), a.selected_groups.end());
        return a;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("allocation: ") + e.what());
    }
}

json estimate_to_json(const EstimateReport& r, const GroupSet& groups) {
    json doc;
    doc["allocation"] = allocation_to_json(r.allocation, groups);
    doc["mu_hat"] = r.mu_hat;
    doc["predicted_variance"] = r.predicted_variance;
    doc["empirical_mean"] = r.empirical_mean;
    doc["empirical_variance"] = r.empirical_variance;
    doc["exact_mean"] = optional_array(r.exact_mean);
    doc["normalized_efficiency"] = optional_array(r.normalized_efficiency);
    doc["replications"] = r.replications;
    doc["total_cost"] = r.total_cost;
    return doc;
}

json baseline_to_json(const BaselineAllocation& b) {
    json doc;
    doc["method"] = to_string(b.method);
    json subset = json::array();
    for (int i : b.model_subset) subset.push_back(i + 1);
    doc["model_subset"] = subset;
    json g = json::array();
    json n = json::array();
    for (std::size_t i = 0; i < b.groups.size(); ++i) {
        g.push_back(group_ids(b.groups[i]));
        n.push_back(static_cast<long long>(b.samples[i]));
    }
    doc["groups"] = g;
    doc["n"] = n;
    doc["total_cost"] = b.total_cost;
    doc["per_output_variance"] = b.predicted_variance;
    return doc;
}

void write_frontier_csv(const std::vector<FrontierPoint>& points, std::ostream& out) {
    std::vector<const FrontierPoint*> ok;
    for (const auto& p : points) {
        if (p.ok) ok.push_back(&p);
    }
    std::stable_sort(ok.begin(), ok.end(), [](const auto* a, const auto* b) { return a->tau_tilde < b->tau_tilde; });
    out << "tau_tilde,cost,variance,normalized_error\n";
    std::ostringstream row;
    row << std::setprecision(17);
    for (const auto* p : ok) {
        row.str("");
        row << p->tau_tilde << ',' << p->cost << ',' << p->variance << ',' << p->normalized_error << '\n';
        out << row.str();
    }
}

void emit_text(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
        std::cout.flush();
        if (!std::cout) throw IoError("cannot write to standard output");
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path + ": " + std::strerror(errno));
    out << text;
    out.close();
    if (!out) throw IoError(path + ": " + std::strerror(errno));
}

void emit_json(const json& doc, const std::string& path) { emit_text(doc.dump(2) + "\n", path); }

void emit_frontier(const std::vector<FrontierPoint>& points, const std::string& path, OutputFormat format) {
    if (format == OutputFormat::csv) {
        std::ostringstream out;
        write_frontier_csv(points, out);
        emit_text(out.str(), path);
        return;
    }
    json arr = json::array();
    for (const auto& p : points) {
        json e = {{"tau_tilde", p.tau_tilde}, {"ok", p.ok}};
        if (p.ok) {
            e["cost"] = p.cost;
            e["variance"] = p.variance;
            e["normalized_error"] = p.normalized_error;
        } else {
            e["error"] = p.error;
        }
        arr.push_back(std::move(e));
    }
    emit_json(arr, path);
}

}  // namespace mlblue
