#include "judgeirt/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace judgeirt {

std::string to_string(ModelKind m) { return m == ModelKind::grm ? "grm" : "2pl"; }

nuts::PosteriorDraws constrained_draws(const nuts::PosteriorDraws& draws,
                                       const ParameterLayout& layout,
                                       const std::vector<std::string>& subject_ids,
                                       const std::vector<std::string>& item_ids) {
  nuts::PosteriorDraws out;
  out.num_chains = draws.num_chains;
  out.num_draws = draws.num_draws;
  out.dimension = draws.dimension;
  out.stats = draws.stats;
  out.step_size = draws.step_size;
  out.inv_metric = draws.inv_metric;
  for (int j = 0; j < layout.num_subjects(); ++j) out.names.push_back("theta[" + subject_ids[j] + "]");
  for (int p = 0; p < layout.num_items(); ++p) out.names.push_back("alpha[" + item_ids[p] + "]");
  for (int p = 0; p < layout.num_items(); ++p) {
    for (int k = 1; k < layout.num_categories(p); ++k) {
      out.names.push_back("beta[" + item_ids[p] + "][" + std::to_string(k) + "]");
    }
  }
  for (const auto& chain : draws.samples) {
    Eigen::MatrixXd c = chain;
    for (int t = 0; t < draws.num_draws; ++t) {
      for (int p = 0; p < layout.num_items(); ++p) {
        const int a = layout.log_alpha_offset() + p;
        c(a, t) = std::exp(chain(a, t));
        const int off = layout.z_offset(p);
        const int n = layout.num_categories(p) - 1;
        Eigen::VectorXd z = chain.col(t).segment(off, n);
        c.col(t).segment(off, n) = ordered_from_free<double>(z);
      }
    }
    out.samples.push_back(std::move(c));
  }
  return out;
}

FitDiagnostics compute_fit_diagnostics(const nuts::PosteriorDraws& constrained) {
  FitDiagnostics d;
  d.divergences = constrained.divergences();
  d.total_draws = constrained.num_chains * constrained.num_draws;
  if (constrained.num_chains < 2 || constrained.num_draws < 4) {
    // R-hat and ESS are undefined; report neutral values.
    d.min_ess_bulk = std::numeric_limits<double>::quiet_NaN();
    return d;
  }
  d.min_ess_bulk = std::numeric_limits<double>::infinity();
  for (int i = 0; i < constrained.dimension; ++i) {
    auto m = constrained.coordinate(i);
    ParameterDiagnostic pd{constrained.names[i], rank_normalized_rhat(m), ess_bulk(m)};
    if (!pd.rhat.degenerate || std::isinf(pd.rhat.value)) d.max_rhat = std::max(d.max_rhat, pd.rhat.value);
    if (!pd.ess_bulk.degenerate) d.min_ess_bulk = std::min(d.min_ess_bulk, pd.ess_bulk.value);
    d.parameters.push_back(std::move(pd));
  }
  return d;
}

FitResult fit_model(const IndexedDataset& d, const nuts::SamplerConfig& config) {
  FitResult result;
  result.criterion = d.criterion;
  result.layout = ParameterLayout(d);
  result.model = d.all_binary() ? ModelKind::two_pl : ModelKind::grm;
  result.warnings = d.warnings;
  if (d.num_items() == 1) {
    result.warnings.push_back("single-item fit: theta is weakly identified (prior-anchored)");
  }
  auto names = result.layout.names(d.subject_ids, d.item_ids);
  if (result.model == ModelKind::two_pl) {
    TwoPlLogDensity density(d);
    result.draws = nuts::sample<double>(density, density.dimension(), config, {}, names);
  } else {
    GrmLogDensity density(d);
    result.draws = nuts::sample<double>(density, density.dimension(), config, {}, names);
  }
  result.summary = summarize(result.draws, result.layout, d.subject_ids, d.item_ids);
  result.diagnostics =
      compute_fit_diagnostics(constrained_draws(result.draws, result.layout, d.subject_ids, d.item_ids));
  return result;
}

}  // namespace judgeirt
