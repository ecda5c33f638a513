#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlblue/baselines.hpp"
#include "mlblue/estimate.hpp"
#include "mlblue/model_registry.hpp"
#include "mlblue/mosap.hpp"

namespace mlblue {

// {mode, n, groups, total_cost, per_output_variance, solver: {iterations, gap, status}, ...}
// listing only the sampled groups, with 1-based model ids.
nlohmann::json allocation_to_json(const Allocation& a, const GroupSet& groups);
// Inverse of allocation_to_json; groups not present in `groups` are a ConfigError.
Allocation allocation_from_json(const nlohmann::json& doc, const GroupSet& groups);

nlohmann::json estimate_to_json(const EstimateReport& report, const GroupSet& groups);
nlohmann::json baseline_to_json(const BaselineAllocation& b);

// Header "tau_tilde,cost,variance,normalized_error", one row per successful
// point in ascending tau_tilde, 17 significant digits.
void write_frontier_csv(const std::vector<FrontierPoint>& points, std::ostream& out);

enum class OutputFormat { json, csv };

// Writes to `path`, or stdout when the path is empty or "-". Throws IoError.
void emit_text(const std::string& text, const std::string& path);
void emit_json(const nlohmann::json& doc, const std::string& path);
void emit_frontier(const std::vector<FrontierPoint>& points, const std::string& path, OutputFormat format);

}  // namespace mlblue
