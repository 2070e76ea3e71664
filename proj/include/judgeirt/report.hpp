#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "judgeirt/fit.hpp"
#include "judgeirt/phases.hpp"

namespace judgeirt {

// Bumped on any incompatible change to the report JSON layout.
inline constexpr const char* kReportSchemaVersion = "1.0.0";

nlohmann::json to_json(const Phase1Report& r);
nlohmann::json to_json(const Phase2Report& r);
Phase1Report phase1_report_from_json(const nlohmann::json& j);
Phase2Report phase2_report_from_json(const nlohmann::json& j);

std::string render_markdown(const Phase1Report& r);
std::string render_markdown(const Phase2Report& r);
// Combined document; either part may be absent.
std::string render_markdown(const std::optional<Phase1Report>& p1,
                            const std::optional<Phase2Report>& p2);

/// Plot data: human_score,count,median_theta_llm,median_theta_human.
std::string median_theta_csv(const Phase2Report& r);

/// Posterior means, variances and medians keyed by subject and item.
nlohmann::json summary_to_json(const FitResult& fit);
nlohmann::json diagnostics_to_json(const FitResult& fit, const QualityThresholds& t);

/// Unconstrained draws with the parameter-layout descriptor needed to
/// map coordinates back to theta, alpha and beta.
nlohmann::json draws_to_json(const FitResult& fit, const IndexedDataset& d);

}  // namespace judgeirt
