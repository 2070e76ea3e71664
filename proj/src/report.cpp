#include "judgeirt/report.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace judgeirt {

namespace {

using nlohmann::json;

// NaN and infinities serialize as null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

std::string fixed(double v, int digits = 3) {
  if (!std::isfinite(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string vbar_name(VbarDenominator d) { return d == VbarDenominator::paper ? "paper" : "mean"; }

VbarDenominator vbar_from(const std::string& s) {
  if (s == "paper") return VbarDenominator::paper;
  if (s == "mean") return VbarDenominator::mean;
  throw InputError("unknown vbar_denominator '" + s + "'");
}

ConditioningScore conditioning_from(const std::string& s) {
  if (s == "median") return ConditioningScore::median;
  if (s == "mean_rounded") return ConditioningScore::mean_rounded;
  throw InputError("unknown conditioning score '" + s + "'");
}

json quality_json(const FitQuality& q) {
  return {{"max_rhat", number(q.max_rhat)},   {"min_ess_bulk", number(q.min_ess_bulk)},
          {"divergences", q.divergences},     {"total_draws", q.total_draws},
          {"rhat_ok", q.rhat_ok},             {"divergences_ok", q.divergences_ok},
          {"clean", q.clean()}};
}

FitQuality quality_from(const json& j) {
  FitQuality q;
  q.max_rhat = number_from(j.at("max_rhat"));
  q.min_ess_bulk = number_from(j.at("min_ess_bulk"));
  q.divergences = j.at("divergences").get<int>();
  q.total_draws = j.at("total_draws").get<int>();
  q.rhat_ok = j.at("rhat_ok").get<bool>();
  q.divergences_ok = j.at("divergences_ok").get<bool>();
  return q;
}

json thresholds_json(const Thresholds& t) {
  return {{"cv_gate", t.cv_gate},
          {"rho_gate", t.rho_gate},
          {"near_human_delta", t.near_human_delta},
          {"dw_high", t.dw_high},
          {"max_rhat", t.quality.max_rhat},
          {"max_divergence_fraction", t.quality.max_divergence_fraction}};
}

Thresholds thresholds_from(const json& j) {
  Thresholds t;
  t.cv_gate = j.at("cv_gate").get<double>();
  t.rho_gate = j.at("rho_gate").get<double>();
  t.near_human_delta = j.at("near_human_delta").get<double>();
  t.dw_high = j.at("dw_high").get<double>();
  t.quality.max_rhat = j.at("max_rhat").get<double>();
  t.quality.max_divergence_fraction = j.at("max_divergence_fraction").get<double>();
  return t;
}

void check_header(const json& j, const std::string& kind) {
  if (!j.is_object()) throw InputError("report must be a JSON object");
  if (j.value("report", "") != kind) {
    throw InputError("expected a " + kind + " report, found '" + j.value("report", "") + "'");
  }
  const auto version = j.value("schema_version", "");
  if (version.substr(0, version.find('.')) !=
      std::string(kReportSchemaVersion).substr(0, std::string(kReportSchemaVersion).find('.'))) {
    throw InputError("unsupported report schema_version '" + version + "'");
  }
}

std::string bullet_list(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += "- " + l + "\n";
  return out;
}

std::string quality_line(const std::string& label, const FitQuality& q) {
  return "| " + label + " | " + fixed(q.max_rhat) + " | " + fixed(q.min_ess_bulk, 0) + " | " +
         std::to_string(q.divergences) + " / " + std::to_string(q.total_draws) + " | " +
         (q.clean() ? "clean" : "flagged") + " |\n";
}

}  // namespace

json to_json(const Phase1Report& r) {
  json items = json::array();
  for (const auto& i : r.items) {
    items.push_back({{"item_id", i.item_id},
                     {"num_categories", i.num_categories},
                     {"vbar", number(i.vbar)},
                     {"retained_categories", i.retained_categories},
                     {"excluded_categories", i.excluded_categories}});
  }
  return {{"schema_version", kReportSchemaVersion},
          {"report", "phase1"},
          {"criterion", r.criterion},
          {"model", r.model},
          {"num_subjects", r.num_subjects},
          {"vbar_denominator", vbar_name(r.vbar_denominator)},
          {"items", items},
          {"excluded_items", r.excluded_items},
          {"mu_v", number(r.mu_v)},
          {"sigma_v", number(r.sigma_v)},
          {"cv", number(r.cv)},
          {"rho", number(r.rho)},
          {"fit_quality", quality_json(r.quality)},
          {"thresholds", thresholds_json(r.thresholds)},
          {"verdict", r.pass ? "pass" : "fail"},
          {"interpretation", r.interpretation},
          {"warnings", r.warnings}};
}

Phase1Report phase1_report_from_json(const json& j) {
  check_header(j, "phase1");
  try {
    Phase1Report r;
    r.criterion = j.at("criterion").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.num_subjects = j.at("num_subjects").get<int>();
    r.vbar_denominator = vbar_from(j.at("vbar_denominator").get<std::string>());
    for (const auto& i : j.at("items")) {
      ItemConsistency ic;
      ic.item_id = i.at("item_id").get<std::string>();
      ic.num_categories = i.at("num_categories").get<int>();
      ic.vbar = number_from(i.at("vbar"));
      ic.retained_categories = i.at("retained_categories").get<int>();
      ic.excluded_categories = i.at("excluded_categories").get<std::vector<int>>();
      r.items.push_back(std::move(ic));
    }
    r.excluded_items = j.at("excluded_items").get<std::vector<std::string>>();
    r.mu_v = number_from(j.at("mu_v"));
    r.sigma_v = number_from(j.at("sigma_v"));
    r.cv = number_from(j.at("cv"));
    r.rho = number_from(j.at("rho"));
    r.quality = quality_from(j.at("fit_quality"));
    r.thresholds = thresholds_from(j.at("thresholds"));
    r.pass = j.at("verdict").get<std::string>() == "pass";
    r.interpretation = j.at("interpretation").get<std::vector<std::string>>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed phase1 report: ") + e.what());
  }
}

json to_json(const Phase2Report& r) {
  json table = json::array();
  for (const auto& row : r.median_theta_table) {
    table.push_back({{"human_score", row.human_score},
                     {"count", row.count},
                     {"median_theta_llm", number(row.median_theta_llm)},
                     {"median_theta_human", number(row.median_theta_human)}});
  }
  json pearson_json = nullptr;
  if (r.pearson) pearson_json = {{"r", number(r.pearson->r)}, {"p_value", number(r.pearson->p_value)}};
  return {{"schema_version", kReportSchemaVersion},
          {"report", "phase2"},
          {"criterion", r.criterion},
          {"llm_items", r.llm_items},
          {"human_items", r.human_items},
          {"num_subjects", r.num_subjects},
          {"conditioning_score", to_string(r.conditioning)},
          {"theta_range_llm", number(r.theta_range_llm)},
          {"theta_range_human", number(r.theta_range_human)},
          {"theta_ratio", number(r.theta_ratio)},
          {"calibration", to_string(r.calibration)},
          {"d_wasserstein", number(r.d_wasserstein)},
          {"pearson", pearson_json},
          {"median_theta_by_human_score", table},
          {"llm_fit_quality", quality_json(r.llm_quality)},
          {"human_fit_quality", quality_json(r.human_quality)},
          {"gate_overridden", r.gate_overridden},
          {"thresholds", thresholds_json(r.thresholds)},
          {"interpretation", r.interpretation},
          {"warnings", r.warnings}};
}

Phase2Report phase2_report_from_json(const json& j) {
  check_header(j, "phase2");
  try {
    Phase2Report r;
    r.criterion = j.at("criterion").get<std::string>();
    r.llm_items = j.at("llm_items").get<std::vector<std::string>>();
    r.human_items = j.at("human_items").get<std::vector<std::string>>();
    r.num_subjects = j.at("num_subjects").get<int>();
    r.conditioning = conditioning_from(j.at("conditioning_score").get<std::string>());
    r.theta_range_llm = number_from(j.at("theta_range_llm"));
    r.theta_range_human = number_from(j.at("theta_range_human"));
    r.theta_ratio = number_from(j.at("theta_ratio"));
    r.calibration = calibration_from_string(j.at("calibration").get<std::string>());
    r.d_wasserstein = number_from(j.at("d_wasserstein"));
    if (!j.at("pearson").is_null()) {
      r.pearson = PearsonResult{number_from(j["pearson"].at("r")),
                                number_from(j["pearson"].at("p_value"))};
    }
    for (const auto& row : j.at("median_theta_by_human_score")) {
      r.median_theta_table.push_back({row.at("human_score").get<double>(),
                                      row.at("count").get<int>(),
                                      number_from(row.at("median_theta_llm")),
                                      number_from(row.at("median_theta_human"))});
    }
    r.llm_quality = quality_from(j.at("llm_fit_quality"));
    r.human_quality = quality_from(j.at("human_fit_quality"));
    r.gate_overridden = j.at("gate_overridden").get<bool>();
    r.thresholds = thresholds_from(j.at("thresholds"));
    r.interpretation = j.at("interpretation").get<std::vector<std::string>>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed phase2 report: ") + e.what());
  }
}

std::string render_markdown(const Phase1Report& r) {
  std::ostringstream md;
  md << "## Phase 1: reliability (" << r.criterion << ")\n\n";
  md << "Verdict: **" << (r.pass ? "PASS" : "FAIL") << "** (gate: C_V <= "
     << fixed(r.thresholds.cv_gate, 2) << " and rho >= " << fixed(r.thresholds.rho_gate, 2)
     << ", clean fit)\n\n";
  md << "Model: " << r.model << ", subjects: " << r.num_subjects
     << ", V-bar denominator: " << vbar_name(r.vbar_denominator) << "\n\n";
  md << "| Item | K | V-bar | Retained categories | Excluded scores |\n";
  md << "|---|---|---|---|---|\n";
  for (const auto& i : r.items) {
    std::string excluded;
    for (std::size_t k = 0; k < i.excluded_categories.size(); ++k) {
      if (k) excluded += ", ";
      excluded += std::to_string(i.excluded_categories[k]);
    }
    md << "| " << i.item_id << " | " << i.num_categories << " | " << fixed(i.vbar) << " | "
       << i.retained_categories << " | " << (excluded.empty() ? "-" : excluded) << " |\n";
  }
  md << "\n| Metric | Value |\n|---|---|\n";
  md << "| mu_V | " << fixed(r.mu_v) << " |\n";
  md << "| sigma_V | " << fixed(r.sigma_v) << " |\n";
  md << "| C_V | " << fixed(r.cv) << " |\n";
  md << "| rho | " << fixed(r.rho) << " |\n\n";
  md << "| Fit | max R-hat | min bulk ESS | divergences | status |\n|---|---|---|---|---|\n";
  md << quality_line("joint", r.quality) << "\n";
  md << "### Interpretation\n\n" << bullet_list(r.interpretation);
  if (!r.excluded_items.empty()) {
    md << "\nExcluded items (single category): ";
    for (std::size_t i = 0; i < r.excluded_items.size(); ++i) {
      md << (i ? ", " : "") << r.excluded_items[i];
    }
    md << "\n";
  }
  if (!r.warnings.empty()) md << "\n### Warnings\n\n" << bullet_list(r.warnings);
  return md.str();
}

std::string render_markdown(const Phase2Report& r) {
  std::ostringstream md;
  md << "## Phase 2: human alignment (" << r.criterion << ")\n\n";
  if (r.gate_overridden) md << "Phase 1 gate was overridden; treat results with care.\n\n";
  md << "| Metric | Value |\n|---|---|\n";
  md << "| theta_range (LLM) | " << fixed(r.theta_range_llm) << " |\n";
  md << "| theta_range (human) | " << fixed(r.theta_range_human) << " |\n";
  md << "| theta_ratio | " << fixed(r.theta_ratio) << " |\n";
  md << "| calibration | " << to_string(r.calibration) << " |\n";
  md << "| D_W | " << fixed(r.d_wasserstein) << " |\n";
  if (r.pearson) {
    md << "| Pearson r | " << fixed(r.pearson->r) << " (p = " << fixed(r.pearson->p_value, 4)
       << ") |\n";
  }
  md << "\n| Human score | n | median theta (LLM) | median theta (human) |\n|---|---|---|---|\n";
  for (const auto& row : r.median_theta_table) {
    md << "| " << general(row.human_score) << " | " << row.count << " | "
       << fixed(row.median_theta_llm) << " | " << fixed(row.median_theta_human) << " |\n";
  }
  md << "\n| Fit | max R-hat | min bulk ESS | divergences | status |\n|---|---|---|---|---|\n";
  md << quality_line("LLM", r.llm_quality) << quality_line("human", r.human_quality) << "\n";
  md << "### Interpretation\n\n" << bullet_list(r.interpretation);
  if (!r.warnings.empty()) md << "\n### Warnings\n\n" << bullet_list(r.warnings);
  return md.str();
}

std::string render_markdown(const std::optional<Phase1Report>& p1,
                            const std::optional<Phase2Report>& p2) {
  std::string out = "# LLM judge reliability report\n\n";
  if (p1) out += render_markdown(*p1) + "\n";
  if (p2) out += render_markdown(*p2) + "\n";
  if (!p1 && !p2) out += "No phase reports were supplied.\n";
  return out;
}

std::string median_theta_csv(const Phase2Report& r) {
  std::string out = "human_score,count,median_theta_llm,median_theta_human\n";
  for (const auto& row : r.median_theta_table) {
    out += general(row.human_score) + "," + std::to_string(row.count) + "," +
           general(row.median_theta_llm) + "," + general(row.median_theta_human) + "\n";
  }
  return out;
}

json summary_to_json(const FitResult& fit) {
  const auto& s = fit.summary;
  json theta = json::object();
  for (int j = 0; j < s.num_subjects(); ++j) {
    theta[s.subject_ids[j]] = {{"mean", number(s.theta_hat[j])},
                               {"variance", number(s.theta_var[j])},
                               {"median", number(s.theta_median[j])}};
  }
  json items = json::object();
  for (std::size_t p = 0; p < s.item_ids.size(); ++p) {
    const auto& b = s.beta_mean[p];
    items[s.item_ids[p]] = {{"alpha_mean", number(s.alpha_mean[static_cast<Eigen::Index>(p)])},
                            {"alpha_sd", number(s.alpha_sd[static_cast<Eigen::Index>(p)])},
                            {"beta_mean", std::vector<double>(b.data(), b.data() + b.size())}};
  }
  return {{"criterion", fit.criterion}, {"model", to_string(fit.model)},
          {"theta", theta},             {"items", items},
          {"warnings", fit.warnings}};
}

json diagnostics_to_json(const FitResult& fit, const QualityThresholds& t) {
  const auto& d = fit.diagnostics;
  json params = json::array();
  for (const auto& p : d.parameters) {
    params.push_back({{"name", p.name},
                      {"rhat", number(p.rhat.value)},
                      {"rhat_degenerate", p.rhat.degenerate},
                      {"ess_bulk", number(p.ess_bulk.value)},
                      {"ess_bulk_degenerate", p.ess_bulk.degenerate}});
  }
  return {{"rhat_kind", "rank_normalized"},
          {"max_rhat", number(d.max_rhat)},
          {"min_ess_bulk", number(d.min_ess_bulk)},
          {"divergences", d.divergences},
          {"total_draws", d.total_draws},
          {"divergence_fraction", d.divergence_fraction()},
          {"thresholds", {{"max_rhat", t.max_rhat}, {"max_divergence_fraction", t.max_divergence_fraction}}},
          {"clean", d.clean(t)},
          {"step_size", fit.draws.step_size},
          {"parameters", params}};
}

json draws_to_json(const FitResult& fit, const IndexedDataset& d) {
  json items = json::array();
  for (int p = 0; p < d.num_items(); ++p) {
    items.push_back({{"item_id", d.item_ids[p]},
                     {"num_categories", d.num_categories[p]},
                     {"z_offset", fit.layout.z_offset(p)}});
  }
  json layout = {{"parameterization", "unconstrained"},
                 {"dimension", fit.layout.dimension()},
                 {"theta_offset", fit.layout.theta_offset()},
                 {"log_alpha_offset", fit.layout.log_alpha_offset()},
                 {"subject_ids", d.subject_ids},
                 {"items", items},
                 {"transforms",
                  {{"alpha", "exp(log_alpha)"},
                   {"beta", "beta[1] = z[1]; beta[k] = beta[k-1] + exp(z[k])"}}}};
  json chains = json::array();
  for (int c = 0; c < fit.draws.num_chains; ++c) {
    const auto& m = fit.draws.samples[static_cast<std::size_t>(c)];
    json rows = json::array();
    for (Eigen::Index t = 0; t < m.cols(); ++t) {
      rows.push_back(std::vector<double>(m.col(t).data(), m.col(t).data() + m.rows()));
    }
    json stats = json::array();
    for (const auto& s : fit.draws.stats[static_cast<std::size_t>(c)]) {
      stats.push_back({{"tree_depth", s.tree_depth},
                       {"n_leapfrog", s.n_leapfrog},
                       {"divergent", s.divergent},
                       {"accept_stat", number(s.accept_stat)},
                       {"energy", number(s.energy)}});
    }
    const auto& im = fit.draws.inv_metric[static_cast<std::size_t>(c)];
    chains.push_back({{"step_size", fit.draws.step_size[static_cast<std::size_t>(c)]},
                      {"inv_metric", std::vector<double>(im.data(), im.data() + im.size())},
                      {"draws", rows},
                      {"stats", stats}});
  }
  return {{"model", to_string(fit.model)},
          {"criterion", fit.criterion},
          {"names", fit.draws.names},
          {"layout", layout},
          {"chains", chains}};
}

}  // namespace judgeirt
