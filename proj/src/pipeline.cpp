#include "judgeirt/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "judgeirt/report.hpp"
#include "judgeirt/synthetic.hpp"

namespace judgeirt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw InputError("unknown config key '" + where + k + "'");
  }
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const GateError*>(&e)) return kExitGate;
  if (dynamic_cast<const FitError*>(&e)) return kExitFitQuality;
  if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const AuthError*>(&e) ||
      dynamic_cast<const ResponseParseError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e) ||
      dynamic_cast<const json::exception*>(&e)) {
    return kExitInput;
  }
  return kExitInternal;
}

void PipelineConfig::validate() const {
  sampler.validate();
  const auto& t = thresholds;
  if (!(t.cv_gate > 0) || !(t.rho_gate > 0) || !(t.near_human_delta > 0) || !(t.dw_high > 0) ||
      !(t.quality.max_rhat > 0) || !(t.quality.max_divergence_fraction > 0)) {
    throw InputError("all thresholds must be positive");
  }
  if (criterion.empty()) throw InputError("criterion must not be empty");
}

Phase1Config PipelineConfig::phase1() const {
  Phase1Config c;
  c.sampler = sampler;
  c.thresholds = thresholds;
  c.vbar_denominator = vbar_denominator;
  return c;
}

Phase2Config PipelineConfig::phase2(bool override_gate) const {
  Phase2Config c;
  c.sampler = sampler;
  c.thresholds = thresholds;
  c.conditioning = conditioning;
  c.llm_items = llm_items;
  c.override_gate = override_gate;
  return c;
}

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  PipelineConfig c;
  try {
    reject_unknown(j,
                   {"seed", "criterion", "sampler", "thresholds", "vbar_denominator",
                    "conditioning_score", "llm_items", "protected_words", "judge", "paths",
                    "output_dir"},
                   "");
    read_key(j, "seed", c.seed);
    read_key(j, "criterion", c.criterion);
    c.sampler.seed = c.seed;
    if (j.contains("sampler")) {
      const auto& s = j["sampler"];
      reject_unknown(s, {"chains", "warmup", "draws", "target_accept", "max_tree_depth", "parallel"},
                     "sampler.");
      read_key(s, "chains", c.sampler.chains);
      read_key(s, "warmup", c.sampler.warmup);
      read_key(s, "draws", c.sampler.draws);
      read_key(s, "target_accept", c.sampler.target_accept);
      read_key(s, "max_tree_depth", c.sampler.max_tree_depth);
      read_key(s, "parallel", c.sampler.parallel);
    }
    if (j.contains("thresholds")) {
      const auto& t = j["thresholds"];
      reject_unknown(t,
                     {"cv_gate", "rho_gate", "near_human_delta", "dw_high", "max_rhat",
                      "max_divergence_fraction"},
                     "thresholds.");
      read_key(t, "cv_gate", c.thresholds.cv_gate);
      read_key(t, "rho_gate", c.thresholds.rho_gate);
      read_key(t, "near_human_delta", c.thresholds.near_human_delta);
      read_key(t, "dw_high", c.thresholds.dw_high);
      read_key(t, "max_rhat", c.thresholds.quality.max_rhat);
      read_key(t, "max_divergence_fraction", c.thresholds.quality.max_divergence_fraction);
    }
    if (j.contains("vbar_denominator")) {
      const auto v = j["vbar_denominator"].get<std::string>();
      if (v == "paper") {
        c.vbar_denominator = VbarDenominator::paper;
      } else if (v == "mean") {
        c.vbar_denominator = VbarDenominator::mean;
      } else {
        throw InputError("vbar_denominator must be 'paper' or 'mean'");
      }
    }
    if (j.contains("conditioning_score")) {
      const auto v = j["conditioning_score"].get<std::string>();
      if (v == "median") {
        c.conditioning = ConditioningScore::median;
      } else if (v == "mean_rounded") {
        c.conditioning = ConditioningScore::mean_rounded;
      } else {
        throw InputError("conditioning_score must be 'median' or 'mean_rounded'");
      }
    }
    read_key(j, "llm_items", c.llm_items);
    read_key(j, "protected_words", c.protected_words);
    if (j.contains("judge")) {
      const auto& e = j["judge"];
      reject_unknown(e,
                     {"endpoint", "path", "model", "api_key_env", "timeout_seconds", "max_retries",
                      "max_concurrency", "backoff_base_seconds", "cache_dir"},
                     "judge.");
      read_key(e, "endpoint", c.endpoint.base_url);
      read_key(e, "path", c.endpoint.path);
      read_key(e, "model", c.endpoint.model);
      read_key(e, "api_key_env", c.endpoint.api_key_env);
      read_key(e, "timeout_seconds", c.endpoint.timeout_seconds);
      read_key(e, "max_retries", c.endpoint.max_retries);
      read_key(e, "max_concurrency", c.endpoint.max_concurrency);
      read_key(e, "backoff_base_seconds", c.endpoint.backoff_base_seconds);
      if (e.contains("cache_dir")) c.cache_dir = resolve(base_dir, e["cache_dir"].get<std::string>());
    }
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      reject_unknown(p, {"template", "subjects", "ratings", "human_ratings", "schema", "params"},
                     "paths.");
      auto set = [&](const char* key, fs::path& out) {
        if (p.contains(key)) out = resolve(base_dir, p[key].get<std::string>());
      };
      set("template", c.template_path);
      set("subjects", c.subjects_path);
      set("ratings", c.ratings_path);
      set("human_ratings", c.human_ratings_path);
      set("schema", c.schema_path);
      set("params", c.params_path);
    }
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j["output_dir"].get<std::string>());
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  return pipeline_config_from_json(read_json_file(path), path.parent_path());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
    if (!out) throw InputError("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

void write_json_file(const fs::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

json read_json_file(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw InputError("cannot parse " + path.string() + ": " + e.what());
  }
}

VariantSet cmd_perturb(const fs::path& template_path, std::uint64_t seed, const fs::path& out_path,
                       const std::vector<std::string>& protected_words) {
  auto t = PromptTemplate::with_default_protection(read_text_file(template_path), protected_words);
  auto variants = generate_all(t, PerturbationHooks::defaults(), seed);
  write_json_file(out_path, to_json(variants));
  return variants;
}

CollectionResult cmd_collect(const fs::path& variants_path, const fs::path& subjects_path,
                             const JudgeEndpoint& endpoint, const fs::path& schema_path,
                             const fs::path& out_path, const CollectOptions& options) {
  auto variants = variant_set_from_json(read_json_file(variants_path));
  auto subjects = load_subjects(subjects_path);
  auto schema = rating_schema_from_json(read_json_file(schema_path));
  auto result = collect_ratings(variants, subjects, endpoint, schema, options);
  save_ratings(result.ratings, out_path);
  json missing = json::array();
  for (const auto& m : result.missing) {
    missing.push_back({{"subject_id", m.subject_id}, {"item_id", m.item_id}, {"reason", m.reason}});
  }
  auto log_path = out_path;
  log_path += ".log.json";
  write_json_file(log_path, {{"missing_cells", missing},
                             {"warnings", result.warnings},
                             {"network_calls", result.network_calls}});
  return result;
}

RatingDataset cmd_simulate(const fs::path& params_path, int num_subjects, std::uint64_t seed,
                           const fs::path& out_path, const std::string& criterion) {
  auto tp = true_parameters_from_json(read_json_file(params_path));
  auto d = simulate_dataset(tp, num_subjects, seed, std::nullopt, criterion);
  save_ratings(d, out_path);
  return d;
}

FitOutputs cmd_fit(const fs::path& ratings_path, const PipelineConfig& config,
                   const std::optional<fs::path>& draws_out, bool allow_bad_fit) {
  auto ratings = load_ratings(ratings_path);
  auto d = relabel_categories(ratings, config.criterion);
  FitOutputs out{fit_model(d, config.sampler), config.output_dir / "fit_summary.json",
                 config.output_dir / "fit_diagnostics.json"};
  auto summary = summary_to_json(out.fit);
  summary["excluded_items"] = d.excluded_items;
  write_json_file(out.summary_path, summary);
  auto diag = diagnostics_to_json(out.fit, config.thresholds.quality);
  diag["excluded_items"] = d.excluded_items;
  write_json_file(out.diagnostics_path, diag);
  if (draws_out) write_json_file(*draws_out, draws_to_json(out.fit, d));
  const auto& q = out.fit.diagnostics;
  if (!allow_bad_fit && !q.clean(config.thresholds.quality)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "fit quality gate failed: max R-hat %.4f, %d divergent of %d draws",
                  q.max_rhat, q.divergences, q.total_draws);
    throw FitError(buf);
  }
  return out;
}

Phase1Report cmd_phase1(const fs::path& ratings_path, const PipelineConfig& config) {
  auto ratings = load_ratings(ratings_path);
  auto report = run_phase1(ratings, config.criterion, config.phase1());
  write_json_file(config.output_dir / "phase1_report.json", to_json(report));
  write_text_file(config.output_dir / "phase1_report.md", render_markdown(report));
  if (!report.pass) {
    throw GateError("Phase 1 verdict: fail (C_V = " + std::to_string(report.cv) +
                    ", rho = " + std::to_string(report.rho) + ")");
  }
  return report;
}

Phase2Report cmd_phase2(const fs::path& llm_path, const fs::path& human_path,
                        const std::optional<fs::path>& phase1_report_path,
                        const PipelineConfig& config, bool override_gate) {
  bool passed = false;
  if (phase1_report_path) {
    auto p1 = phase1_report_from_json(read_json_file(*phase1_report_path));
    if (p1.criterion != config.criterion) {
      throw InputError("Phase 1 report is for criterion '" + p1.criterion + "', not '" +
                       config.criterion + "'");
    }
    passed = p1.pass;
  } else if (!override_gate) {
    throw GateError("Phase 2 needs a passing Phase 1 report (--phase1) or --override-gate");
  }
  auto llm = load_ratings(llm_path);
  auto human = load_ratings(human_path);
  auto report = run_phase2(llm, human, config.criterion, config.phase2(override_gate), passed);
  write_json_file(config.output_dir / "phase2_report.json", to_json(report));
  write_text_file(config.output_dir / "phase2_report.md", render_markdown(report));
  write_text_file(config.output_dir / "median_theta.csv", median_theta_csv(report));
  return report;
}

json cmd_report(const std::optional<fs::path>& phase1_path,
                const std::optional<fs::path>& phase2_path, const fs::path& out_dir) {
  if (!phase1_path && !phase2_path) throw InputError("report needs --phase1 and/or --phase2");
  std::optional<Phase1Report> p1;
  std::optional<Phase2Report> p2;
  json combined = {{"schema_version", kReportSchemaVersion}, {"report", "combined"}};
  if (phase1_path) {
    p1 = phase1_report_from_json(read_json_file(*phase1_path));
    combined["phase1"] = to_json(*p1);
  }
  if (phase2_path) {
    p2 = phase2_report_from_json(read_json_file(*phase2_path));
    combined["phase2"] = to_json(*p2);
    write_text_file(out_dir / "median_theta.csv", median_theta_csv(*p2));
  }
  write_json_file(out_dir / "report.json", combined);
  write_text_file(out_dir / "report.md", render_markdown(p1, p2));
  return combined;
}

}  // namespace judgeirt
