#include "judgeirt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

namespace judgeirt {

namespace {

using Eigen::VectorXd;

std::span<const double> as_span(const VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

// Step-function quantile F^{-1}(u) of sorted samples, left-continuous.
double quantile_step(const std::vector<double>& sorted, double u) {
  const double n = static_cast<double>(sorted.size());
  auto idx = static_cast<std::size_t>(std::ceil(u * n - 1e-12));
  idx = std::clamp<std::size_t>(idx, 1, sorted.size());
  return sorted[idx - 1];
}

}  // namespace

PosteriorSummary summarize(const nuts::PosteriorDraws& draws, const ParameterLayout& layout,
                           std::vector<std::string> subject_ids,
                           std::vector<std::string> item_ids) {
  if (draws.num_chains < 1 || draws.num_draws < 1) throw InputError("no draws to summarize");
  if (draws.dimension != layout.dimension()) {
    throw InputError("draws do not match the parameter layout");
  }
  const int num_subjects = layout.num_subjects();
  const int num_items = layout.num_items();
  const int total = draws.num_chains * draws.num_draws;

  PosteriorSummary s;
  s.subject_ids = std::move(subject_ids);
  s.item_ids = std::move(item_ids);
  s.theta_hat.resize(num_subjects);
  s.theta_var.resize(num_subjects);
  s.theta_median.resize(num_subjects);
  std::vector<double> pooled(static_cast<std::size_t>(total));
  for (int j = 0; j < num_subjects; ++j) {
    std::size_t n = 0;
    for (const auto& chain : draws.samples) {
      for (int t = 0; t < draws.num_draws; ++t) pooled[n++] = chain(layout.theta_offset() + j, t);
    }
    const double mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) / total;
    double ss = 0.0;
    for (double v : pooled) ss += (v - mean) * (v - mean);
    s.theta_hat[j] = mean;
    s.theta_var[j] = total > 1 ? ss / (total - 1) : 0.0;
    s.theta_median[j] = median(pooled);
  }

  s.alpha_mean = VectorXd::Zero(num_items);
  VectorXd alpha_sq = VectorXd::Zero(num_items);
  for (int p = 0; p < num_items; ++p) s.beta_mean.push_back(VectorXd::Zero(layout.num_categories(p) - 1));
  for (const auto& chain : draws.samples) {
    for (int t = 0; t < draws.num_draws; ++t) {
      for (int p = 0; p < num_items; ++p) {
        const double a = std::exp(chain(layout.log_alpha_offset() + p, t));
        s.alpha_mean[p] += a;
        alpha_sq[p] += a * a;
        const int n = layout.num_categories(p) - 1;
        VectorXd z = chain.col(t).segment(layout.z_offset(p), n);
        s.beta_mean[p] += ordered_from_free<double>(z);
      }
    }
  }
  s.alpha_mean /= total;
  s.alpha_sd.resize(num_items);
  for (int p = 0; p < num_items; ++p) {
    const double var =
        total > 1 ? (alpha_sq[p] - total * s.alpha_mean[p] * s.alpha_mean[p]) / (total - 1) : 0.0;
    s.alpha_sd[p] = std::sqrt(std::max(0.0, var));
    s.beta_mean[p] /= total;
  }
  return s;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InputError("median of an empty set");
  const auto n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (n % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(values.begin(), mid));
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) throw InputError("sample variance needs at least two values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / (n - 1.0);
}

WithinRatingVariance within_rating_variance(const VectorXd& theta_hat, const IndexedDataset& d,
                                            int item, VbarDenominator denominator) {
  if (item < 0 || item >= d.num_items()) throw InputError("item index out of range");
  if (theta_hat.size() != d.num_subjects()) {
    throw InputError("theta_hat length does not match the dataset's subjects");
  }
  std::vector<std::vector<double>> groups(static_cast<std::size_t>(d.num_categories[item]));
  for (const auto& o : d.observations) {
    if (o.item == item) groups[o.category - 1].push_back(theta_hat[o.subject]);
  }
  WithinRatingVariance out;
  double sum = 0.0;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    if (groups[k].empty()) continue;
    if (groups[k].size() < 2) {
      out.excluded_categories.push_back(static_cast<int>(k) + 1);
      continue;
    }
    sum += sample_variance(groups[k]);
    ++out.retained_categories;
  }
  const int denom = denominator == VbarDenominator::paper ? out.retained_categories - 1
                                                          : out.retained_categories;
  if (denom <= 0) {
    throw InputError("item " + d.item_ids[item] +
                     " has too few categories with two or more subjects for a within-rating "
                     "variance");
  }
  out.vbar = sum / denom;
  return out;
}

WithinRatingVariance within_rating_variance(const PosteriorSummary& summary,
                                            const IndexedDataset& d, int item,
                                            VbarDenominator denominator) {
  return within_rating_variance(summary.theta_hat, d, item, denominator);
}

PromptConsistency prompt_consistency(const std::map<std::string, double>& vbars) {
  if (vbars.size() < 2) throw InputError("prompt consistency needs at least two items");
  std::vector<double> v;
  for (const auto& [item, value] : vbars) v.push_back(value);
  PromptConsistency out;
  out.mu_v = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  out.sigma_v = std::sqrt(sample_variance(v));
  if (out.mu_v == 0.0) {
    if (out.sigma_v > 0.0) throw InputError("mean within-rating variance is zero but dispersed");
    out.cv = 0.0;
  } else {
    out.cv = out.sigma_v / out.mu_v;
  }
  return out;
}

double marginal_reliability(const VectorXd& theta_hat, const VectorXd& theta_var) {
  if (theta_hat.size() < 2) throw InputError("marginal reliability needs at least two subjects");
  if (theta_var.size() != theta_hat.size()) throw InputError("theta_var length mismatch");
  const double true_var = sample_variance(as_span(theta_hat));
  const double error_var = theta_var.mean();
  if (true_var + error_var == 0.0) {
    throw InputError("marginal reliability undefined: no variance at all");
  }
  return true_var / (true_var + error_var);
}

double marginal_reliability(const PosteriorSummary& summary) {
  return marginal_reliability(summary.theta_hat, summary.theta_var);
}

double theta_range(std::span<const double> theta_hat, std::span<const double> scores) {
  if (theta_hat.size() != scores.size() || theta_hat.empty()) {
    throw InputError("theta_range needs equally sized, non-empty inputs");
  }
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  if (*lo == *hi) throw InputError("theta_range undefined: all subjects share one score");
  std::vector<double> top;
  std::vector<double> bottom;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] == *hi) top.push_back(theta_hat[j]);
    if (scores[j] == *lo) bottom.push_back(theta_hat[j]);
  }
  return median(top) - median(bottom);
}

std::string to_string(Calibration c) {
  switch (c) {
    case Calibration::hypersensitive:
      return "hypersensitive";
    case Calibration::near_human:
      return "near-human";
    case Calibration::insensitive:
      return "insensitive";
  }
  return "unknown";
}

Calibration calibration_from_string(const std::string& s) {
  if (s == "hypersensitive") return Calibration::hypersensitive;
  if (s == "near-human") return Calibration::near_human;
  if (s == "insensitive") return Calibration::insensitive;
  throw InputError("unknown calibration label '" + s + "'");
}

Calibration classify_calibration(double ratio, double delta) {
  if (ratio < 1.0 - delta) return Calibration::hypersensitive;
  if (ratio > 1.0 + delta) return Calibration::insensitive;
  return Calibration::near_human;
}

BreadthRatio discrimination_breadth_ratio(double range_llm, double range_human, double delta) {
  if (range_human == 0.0) throw InputError("human theta range is zero");
  BreadthRatio out;
  out.ratio = range_llm / range_human;
  out.label = classify_calibration(out.ratio, delta);
  return out;
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InputError("Wasserstein distance needs non-empty samples");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (sa.size() == sb.size()) {
    double total = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) total += std::abs(sa[i] - sb[i]);
    return total / static_cast<double>(sa.size());
  }
  // Integrate |F_a^{-1}(u) - F_b^{-1}(u)| over the merged quantile grid.
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::vector<double> grid;
  for (std::size_t i = 1; i <= sa.size(); ++i) grid.push_back(static_cast<double>(i) / na);
  for (std::size_t j = 1; j <= sb.size(); ++j) grid.push_back(static_cast<double>(j) / nb);
  std::sort(grid.begin(), grid.end());
  double total = 0.0;
  double prev = 0.0;
  for (double u : grid) {
    if (u <= prev) continue;
    const double mid = 0.5 * (prev + u);
    total += (u - prev) * std::abs(quantile_step(sa, mid) - quantile_step(sb, mid));
    prev = u;
  }
  return total;
}

PearsonResult pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("pearson: length mismatch");
  if (a.size() < 3) throw InputError("pearson needs at least three pairs");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw InputError("pearson: zero variance input");
  PearsonResult out;
  out.r = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  const double dof = n - 2.0;
  if (std::abs(out.r) >= 1.0) {
    out.p_value = 0.0;
    return out;
  }
  const double t = out.r * std::sqrt(dof / (1.0 - out.r * out.r));
  const boost::math::students_t dist(dof);
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return out;
}

std::map<double, double> median_theta_by_score(std::span<const double> theta_hat,
                                                std::span<const double> scores) {
  if (theta_hat.size() != scores.size()) {
    throw InputError("median_theta_by_score: length mismatch");
  }
  std::map<double, std::vector<double>> groups;
  for (std::size_t j = 0; j < scores.size(); ++j) groups[scores[j]].push_back(theta_hat[j]);
  std::map<double, double> out;
  for (auto& [score, thetas] : groups) out[score] = median(std::move(thetas));
  return out;
}

}  // namespace judgeirt
