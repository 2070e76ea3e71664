#include "judgeirt/phases.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

namespace judgeirt {

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void append(std::vector<std::string>& dst, const std::vector<std::string>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

FitQuality assess_quality(const FitDiagnostics& d, const QualityThresholds& t) {
  FitQuality q;
  q.max_rhat = d.max_rhat;
  q.min_ess_bulk = d.min_ess_bulk;
  q.divergences = d.divergences;
  q.total_draws = d.total_draws;
  q.rhat_ok = d.rhat_ok(t);
  q.divergences_ok = d.divergences_ok(t);
  return q;
}

bool phase1_verdict(double cv, double rho, bool quality_clean, const Thresholds& t) {
  return cv <= t.cv_gate && rho >= t.rho_gate && quality_clean;
}

std::vector<std::string> interpret_phase1(double cv, double rho, bool quality_clean,
                                          const Thresholds& t) {
  std::vector<std::string> out;
  const bool cv_ok = cv <= t.cv_gate;
  const bool rho_ok = rho >= t.rho_gate;
  if (cv_ok && rho_ok) {
    out.push_back("C_V = " + fixed(cv) + " and rho = " + fixed(rho) +
                  " meet both criteria: the judge measures consistently across prompt variants "
                  "and most of the spread in theta reflects real quality differences.");
  } else if (!rho_ok) {
    out.push_back("Low rho (" + fixed(rho) + " < " + fixed(t.rho_gate) +
                  ") regardless of C_V indicates a fundamental model limitation: estimation "
                  "uncertainty rivals the true quality spread, often a sign the rating scale "
                  "is used inadequately.");
  } else {
    out.push_back("High C_V (" + fixed(cv) + " > " + fixed(t.cv_gate) +
                  ") with acceptable rho (" + fixed(rho) +
                  ") points to prompt sensitivity as the primary issue: within-rating spread "
                  "of theta shifts between semantically equivalent prompts.");
  }
  if (!quality_clean) {
    out.push_back("Fit quality flags are raised (R-hat or divergences above limits); the "
                  "metrics are provisional and the gate fails until the fit is clean.");
  }
  return out;
}

Phase1Report phase1_from_fit(const IndexedDataset& d, const FitResult& fit,
                             const Phase1Config& config) {
  Phase1Report r;
  r.criterion = d.criterion;
  r.model = to_string(fit.model);
  r.num_subjects = d.num_subjects();
  r.excluded_items = d.excluded_items;
  r.vbar_denominator = config.vbar_denominator;
  r.thresholds = config.thresholds;
  append(r.warnings, fit.warnings);

  std::map<std::string, double> vbars;
  for (int p = 0; p < d.num_items(); ++p) {
    auto w = within_rating_variance(fit.summary, d, p, config.vbar_denominator);
    ItemConsistency ic;
    ic.item_id = d.item_ids[p];
    ic.num_categories = d.num_categories[p];
    ic.vbar = w.vbar;
    ic.retained_categories = w.retained_categories;
    for (int k : w.excluded_categories) {
      const int raw = d.categories.to_raw(ic.item_id, k);
      ic.excluded_categories.push_back(raw);
      r.warnings.push_back("singleton category (" + ic.item_id + ", " + std::to_string(raw) +
                           ") excluded from the within-rating variance");
    }
    vbars[ic.item_id] = w.vbar;
    r.items.push_back(std::move(ic));
  }
  auto pc = prompt_consistency(vbars);
  r.mu_v = pc.mu_v;
  r.sigma_v = pc.sigma_v;
  r.cv = pc.cv;
  r.rho = marginal_reliability(fit.summary);
  r.quality = assess_quality(fit.diagnostics, config.thresholds.quality);
  r.pass = phase1_verdict(r.cv, r.rho, r.quality.clean(), config.thresholds);
  r.interpretation = interpret_phase1(r.cv, r.rho, r.quality.clean(), config.thresholds);
  return r;
}

Phase1Report run_phase1(const RatingDataset& ratings, const std::string& criterion,
                        const Phase1Config& config) {
  auto d = relabel_categories(ratings, criterion);
  if (d.num_items() < 2) {
    throw InputError("Phase 1 needs at least two fittable prompt-variant items");
  }
  auto fit = fit_model(d, config.sampler);
  return phase1_from_fit(d, fit, config);
}

std::string to_string(ConditioningScore c) {
  return c == ConditioningScore::median ? "median" : "mean_rounded";
}

std::vector<std::string> interpret_phase2(double theta_ratio, double d_wasserstein,
                                          const Thresholds& t) {
  std::vector<std::string> out;
  const auto label = classify_calibration(theta_ratio, t.near_human_delta);
  const bool near = label == Calibration::near_human;
  const bool close = d_wasserstein <= t.dw_high;
  if (label == Calibration::hypersensitive) {
    out.push_back("theta_ratio = " + fixed(theta_ratio) +
                  " < 1: the judge perceives a narrower quality spectrum than humans "
                  "(hypersensitive) and fails to separate samples humans rate differently.");
  } else if (label == Calibration::insensitive) {
    out.push_back("theta_ratio = " + fixed(theta_ratio) +
                  " > 1: the judge perceives a wider quality spectrum than humans "
                  "(insensitive) and amplifies differences beyond human perception.");
  } else {
    out.push_back("theta_ratio = " + fixed(theta_ratio) +
                  " is near 1: discrimination breadth is comparable to humans.");
  }
  if (near && !close) {
    out.push_back("Comparable breadth with a high D_W (" + fixed(d_wasserstein) +
                  "): the judge is systematically more lenient or more strict than humans.");
  } else if (!near && close) {
    out.push_back("Low D_W (" + fixed(d_wasserstein) +
                  ") despite differing breadth: overall quality perception aligns with humans "
                  "even though sensitivity differs.");
  } else if (!near && !close) {
    out.push_back("Both theta_ratio and D_W (" + fixed(d_wasserstein) +
                  ") deviate: the judge perceives quality in a fundamentally different way "
                  "from humans.");
  } else {
    out.push_back("Low D_W (" + fixed(d_wasserstein) +
                  "): the latent quality distributions of judge and humans are close.");
  }
  return out;
}

std::vector<double> conditioning_scores(const IndexedDataset& d, ConditioningScore mode) {
  std::vector<std::vector<double>> per_subject(static_cast<std::size_t>(d.num_subjects()));
  for (const auto& o : d.observations) {
    per_subject[o.subject].push_back(
        static_cast<double>(d.categories.to_raw(d.item_ids[o.item], o.category)));
  }
  std::vector<double> out;
  out.reserve(per_subject.size());
  for (auto& v : per_subject) {
    if (mode == ConditioningScore::median) {
      out.push_back(median(v));
    } else {
      double sum = 0.0;
      for (double x : v) sum += x;
      out.push_back(std::round(sum / static_cast<double>(v.size())));
    }
  }
  return out;
}

Phase2Report phase2_from_fits(const IndexedDataset& llm, const FitResult& llm_fit,
                              const IndexedDataset& human, const FitResult& human_fit,
                              const Phase2Config& config) {
  if (llm.subject_ids != human.subject_ids) {
    throw InputError("LLM and human ratings cover different subject sets");
  }
  Phase2Report r;
  r.criterion = llm.criterion;
  r.llm_items = llm.item_ids;
  r.human_items = human.item_ids;
  r.num_subjects = llm.num_subjects();
  r.conditioning = config.conditioning;
  r.thresholds = config.thresholds;
  for (const auto& w : llm_fit.warnings) r.warnings.push_back("llm: " + w);
  for (const auto& w : human_fit.warnings) r.warnings.push_back("human: " + w);

  const auto& theta_llm = llm_fit.summary.theta_hat;
  const auto& theta_human = human_fit.summary.theta_hat;
  const std::span<const double> tl(theta_llm.data(), static_cast<std::size_t>(theta_llm.size()));
  const std::span<const double> th(theta_human.data(), static_cast<std::size_t>(theta_human.size()));

  const auto scores_llm = conditioning_scores(llm, config.conditioning);
  const auto scores_human = conditioning_scores(human, config.conditioning);

  r.theta_range_llm = theta_range(tl, scores_llm);
  r.theta_range_human = theta_range(th, scores_human);
  auto ratio = discrimination_breadth_ratio(r.theta_range_llm, r.theta_range_human,
                                            config.thresholds.near_human_delta);
  r.theta_ratio = ratio.ratio;
  r.calibration = ratio.label;
  r.d_wasserstein = wasserstein_1d(tl, th);

  try {
    r.pearson = pearson(scores_human, scores_llm);
  } catch (const InputError& e) {
    r.warnings.push_back(std::string("pearson correlation unavailable: ") + e.what());
  }

  auto by_llm = median_theta_by_score(tl, scores_human);
  auto by_human = median_theta_by_score(th, scores_human);
  std::map<double, int> counts;
  for (double s : scores_human) ++counts[s];
  for (const auto& [score, med] : by_llm) {
    r.median_theta_table.push_back({score, counts[score], med, by_human.at(score)});
  }

  r.llm_quality = assess_quality(llm_fit.diagnostics, config.thresholds.quality);
  r.human_quality = assess_quality(human_fit.diagnostics, config.thresholds.quality);
  if (!r.llm_quality.clean()) r.warnings.push_back("llm fit quality flags raised");
  if (!r.human_quality.clean()) r.warnings.push_back("human fit quality flags raised");
  r.interpretation = interpret_phase2(r.theta_ratio, r.d_wasserstein, config.thresholds);
  return r;
}

Phase2Report run_phase2(const RatingDataset& llm, const RatingDataset& human,
                        const std::string& criterion, const Phase2Config& config,
                        bool phase1_passed) {
  if (!phase1_passed && !config.override_gate) {
    throw GateError("Phase 2 requires a passing Phase 1 verdict (or an explicit override)");
  }
  std::vector<std::string> llm_items = config.llm_items;
  if (llm_items.empty()) {
    const auto& items = llm.items();
    if (std::find(items.begin(), items.end(), "original") != items.end()) {
      llm_items = {"original"};
    } else {
      llm_items = items;
    }
  }
  auto llm_subset = llm.restrict_items(llm_items);
  if (llm_subset.empty()) throw InputError("none of the selected LLM items are present");

  auto llm_indexed = relabel_categories(llm_subset, criterion);
  auto human_indexed = relabel_categories(human, criterion);
  if (llm_indexed.subject_ids != human_indexed.subject_ids) {
    throw InputError("LLM and human ratings cover different subject sets");
  }

  auto llm_config = config.sampler;
  auto human_config = config.sampler;
  human_config.seed = nuts::derive_seed(config.sampler.seed, 0x4855u);
  auto llm_fit = fit_model(llm_indexed, llm_config);
  auto human_fit = fit_model(human_indexed, human_config);
  auto report = phase2_from_fits(llm_indexed, llm_fit, human_indexed, human_fit, config);
  report.gate_overridden = !phase1_passed;
  return report;
}

}  // namespace judgeirt
