#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "judgeirt/fit.hpp"
#include "judgeirt/judge.hpp"
#include "judgeirt/perturbation.hpp"
#include "judgeirt/phases.hpp"
#include "judgeirt/rating_data.hpp"

namespace judgeirt {

// CLI exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitGate = 2;
inline constexpr int kExitInput = 3;
inline constexpr int kExitFitQuality = 4;
inline constexpr int kExitInternal = 1;

/// Maps an exception to the CLI exit-code contract.
int exit_code_for(const std::exception& e);

/// Settings shared by every subcommand. See README for the JSON key set.
struct PipelineConfig {
  std::uint64_t seed = 42;
  std::string criterion = "quality";
  nuts::SamplerConfig sampler;
  Thresholds thresholds;
  VbarDenominator vbar_denominator = VbarDenominator::paper;
  ConditioningScore conditioning = ConditioningScore::median;
  std::vector<std::string> llm_items;
  std::vector<std::string> protected_words;

  JudgeEndpoint endpoint;
  std::filesystem::path cache_dir;

  std::filesystem::path template_path;
  std::filesystem::path subjects_path;
  std::filesystem::path ratings_path;
  std::filesystem::path human_ratings_path;
  std::filesystem::path schema_path;
  std::filesystem::path params_path;
  std::filesystem::path output_dir = "out";

  void validate() const;
  Phase1Config phase1() const;
  Phase2Config phase2(bool override_gate) const;
};

/// Unknown keys are rejected so typos surface early.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
// Writes via a temporary file and rename; creates parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

VariantSet cmd_perturb(const std::filesystem::path& template_path, std::uint64_t seed,
                       const std::filesystem::path& out_path,
                       const std::vector<std::string>& protected_words = {});

/// Writes the ratings and a `<out>.log.json` listing missing cells.
CollectionResult cmd_collect(const std::filesystem::path& variants_path,
                             const std::filesystem::path& subjects_path,
                             const JudgeEndpoint& endpoint,
                             const std::filesystem::path& schema_path,
                             const std::filesystem::path& out_path,
                             const CollectOptions& options);

RatingDataset cmd_simulate(const std::filesystem::path& params_path, int num_subjects,
                           std::uint64_t seed, const std::filesystem::path& out_path,
                           const std::string& criterion);

struct FitOutputs {
  FitResult fit;
  std::filesystem::path summary_path;
  std::filesystem::path diagnostics_path;
};

/// Writes fit_summary.json and fit_diagnostics.json (plus draws when
/// requested). Throws FitError after writing if the fit is not clean.
FitOutputs cmd_fit(const std::filesystem::path& ratings_path, const PipelineConfig& config,
                   const std::optional<std::filesystem::path>& draws_out, bool allow_bad_fit);

/// Writes phase1_report.json and phase1_report.md. Throws GateError after
/// writing when the verdict is fail.
Phase1Report cmd_phase1(const std::filesystem::path& ratings_path, const PipelineConfig& config);

/// Writes phase2_report.json, phase2_report.md and median_theta.csv.
Phase2Report cmd_phase2(const std::filesystem::path& llm_path,
                        const std::filesystem::path& human_path,
                        const std::optional<std::filesystem::path>& phase1_report_path,
                        const PipelineConfig& config, bool override_gate);

/// Re-validates existing phase reports and writes report.json and report.md.
nlohmann::json cmd_report(const std::optional<std::filesystem::path>& phase1_path,
                          const std::optional<std::filesystem::path>& phase2_path,
                          const std::filesystem::path& out_dir);

}  // namespace judgeirt
