#pragma once

#include <string>
#include <vector>

#include "judgeirt/diagnostics.hpp"
#include "judgeirt/grm.hpp"
#include "judgeirt/metrics.hpp"
#include "judgeirt/nuts.hpp"

namespace judgeirt {

struct QualityThresholds {
  double max_rhat = 1.05;
  double max_divergence_fraction = 0.01;
};

struct ParameterDiagnostic {
  std::string name;  // constrained name: theta[..], alpha[..], beta[..][k]
  ConvergenceValue rhat;
  ConvergenceValue ess_bulk;
};

struct FitDiagnostics {
  std::vector<ParameterDiagnostic> parameters;
  double max_rhat = 1.0;
  double min_ess_bulk = 0.0;
  int divergences = 0;
  int total_draws = 0;

  double divergence_fraction() const {
    return total_draws > 0 ? static_cast<double>(divergences) / total_draws : 0.0;
  }
  bool rhat_ok(const QualityThresholds& t) const { return max_rhat <= t.max_rhat; }
  bool divergences_ok(const QualityThresholds& t) const {
    return divergence_fraction() <= t.max_divergence_fraction;
  }
  bool clean(const QualityThresholds& t) const { return rhat_ok(t) && divergences_ok(t); }
};

enum class ModelKind { grm, two_pl };

std::string to_string(ModelKind m);

struct FitResult {
  ModelKind model = ModelKind::grm;
  std::string criterion;
  ParameterLayout layout;
  nuts::PosteriorDraws draws;  // unconstrained coordinates
  PosteriorSummary summary;
  FitDiagnostics diagnostics;
  std::vector<std::string> warnings;
};

/// Draws mapped to (theta, alpha, beta) with constrained names.
nuts::PosteriorDraws constrained_draws(const nuts::PosteriorDraws& draws,
                                       const ParameterLayout& layout,
                                       const std::vector<std::string>& subject_ids,
                                       const std::vector<std::string>& item_ids);

FitDiagnostics compute_fit_diagnostics(const nuts::PosteriorDraws& constrained);

/// Fits the GRM (or the 2PL when every item is binary) with NUTS.
FitResult fit_model(const IndexedDataset& d, const nuts::SamplerConfig& config);

}  // namespace judgeirt
