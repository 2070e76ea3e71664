#pragma once

#include <optional>
#include <string>
#include <vector>

#include "judgeirt/fit.hpp"
#include "judgeirt/metrics.hpp"
#include "judgeirt/rating_data.hpp"

namespace judgeirt {

struct Thresholds {
  double cv_gate = 0.10;
  double rho_gate = 0.70;
  double near_human_delta = 0.1;
  // D_W above this counts as a large distributional gap in interpretations.
  double dw_high = 0.3;
  QualityThresholds quality;
};

struct FitQuality {
  double max_rhat = 1.0;
  double min_ess_bulk = 0.0;
  int divergences = 0;
  int total_draws = 0;
  bool rhat_ok = true;
  bool divergences_ok = true;

  bool clean() const { return rhat_ok && divergences_ok; }
};

FitQuality assess_quality(const FitDiagnostics& d, const QualityThresholds& t);

struct ItemConsistency {
  std::string item_id;
  int num_categories = 0;
  double vbar = 0.0;
  int retained_categories = 0;
  std::vector<int> excluded_categories;  // raw scores with a single subject
};

struct Phase1Config {
  nuts::SamplerConfig sampler;
  Thresholds thresholds;
  VbarDenominator vbar_denominator = VbarDenominator::paper;
};

struct Phase1Report {
  std::string criterion;
  std::string model;
  int num_subjects = 0;
  std::vector<ItemConsistency> items;
  std::vector<std::string> excluded_items;
  VbarDenominator vbar_denominator = VbarDenominator::paper;
  double mu_v = 0.0;
  double sigma_v = 0.0;
  double cv = 0.0;
  double rho = 0.0;
  FitQuality quality;
  Thresholds thresholds;
  bool pass = false;
  std::vector<std::string> interpretation;
  std::vector<std::string> warnings;
};

/// Gate rule: pass iff C_V <= cv_gate, rho >= rho_gate and the fit is clean.
bool phase1_verdict(double cv, double rho, bool quality_clean, const Thresholds& t = {});

std::vector<std::string> interpret_phase1(double cv, double rho, bool quality_clean,
                                          const Thresholds& t = {});

/// Computes the Phase 1 metrics from an existing joint fit over all items.
Phase1Report phase1_from_fit(const IndexedDataset& d, const FitResult& fit,
                             const Phase1Config& config);

/// Fits one joint GRM over every prompt-variant item and applies the gate.
Phase1Report run_phase1(const RatingDataset& ratings, const std::string& criterion,
                        const Phase1Config& config);

enum class ConditioningScore { median, mean_rounded };

std::string to_string(ConditioningScore c);

struct Phase2Config {
  nuts::SamplerConfig sampler;
  Thresholds thresholds;
  ConditioningScore conditioning = ConditioningScore::median;
  // LLM items used for alignment. Empty: "original" when present, else all.
  std::vector<std::string> llm_items;
  bool override_gate = false;
};

struct ScoreRow {
  double human_score = 0.0;
  int count = 0;
  double median_theta_llm = 0.0;
  double median_theta_human = 0.0;
};

struct Phase2Report {
  std::string criterion;
  std::vector<std::string> llm_items;
  std::vector<std::string> human_items;
  int num_subjects = 0;
  ConditioningScore conditioning = ConditioningScore::median;
  double theta_range_llm = 0.0;
  double theta_range_human = 0.0;
  double theta_ratio = 0.0;
  Calibration calibration = Calibration::near_human;
  double d_wasserstein = 0.0;
  std::optional<PearsonResult> pearson;
  std::vector<ScoreRow> median_theta_table;
  FitQuality llm_quality;
  FitQuality human_quality;
  bool gate_overridden = false;
  Thresholds thresholds;
  std::vector<std::string> interpretation;
  std::vector<std::string> warnings;
};

std::vector<std::string> interpret_phase2(double theta_ratio, double d_wasserstein,
                                          const Thresholds& t = {});

/// Per-subject conditioning score: median (or rounded mean) of the raw
/// ratings a subject received across the dataset's items.
std::vector<double> conditioning_scores(const IndexedDataset& d, ConditioningScore mode);

/// Compares LLM and human latent quality from two independent fits.
/// Refuses to run unless Phase 1 passed or the config overrides the gate.
Phase2Report run_phase2(const RatingDataset& llm, const RatingDataset& human,
                        const std::string& criterion, const Phase2Config& config,
                        bool phase1_passed);

/// Phase 2 metrics from two existing fits over the same subject set.
Phase2Report phase2_from_fits(const IndexedDataset& llm, const FitResult& llm_fit,
                              const IndexedDataset& human, const FitResult& human_fit,
                              const Phase2Config& config);

}  // namespace judgeirt
