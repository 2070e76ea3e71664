#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "judgeirt/error.hpp"
#include "judgeirt/rating_data.hpp"

namespace judgeirt {

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// Standard deviation of the log-discrimination prior.
inline constexpr double kLogAlphaPriorSd = 0.5;

// Branch form keeps exp() from overflowing for large |x|.
template <typename S>
S logistic(S x) {
  using std::exp;
  if (x >= 0) return S(1) / (S(1) + exp(-x));
  S e = exp(x);
  return e / (S(1) + e);
}

// log(logistic(x)) without cancellation in either tail.
template <typename S>
S log_logistic(S x) {
  using std::exp, std::log1p;
  if (x >= 0) return -log1p(exp(-x));
  return x - log1p(exp(x));
}

/// P(Y >= k | theta) for one threshold of the graded response model.
template <typename S>
S cumulative_probability(S theta, S alpha, S beta_k) {
  return logistic(alpha * (theta - beta_k));
}

template <typename S>
bool strictly_increasing(const Vec<S>& v) {
  for (Eigen::Index k = 1; k < v.size(); ++k) {
    if (!(v[k - 1] < v[k])) return false;
  }
  return true;
}

/// Category probabilities P(Y = k), k = 1..K, for K - 1 ordered thresholds.
/// Adjacent differences are formed in log space so that entries stay
/// accurate even when two cumulative curves nearly coincide.
template <typename S>
Vec<S> category_probabilities(S theta, S alpha, const Vec<S>& beta) {
  using std::exp, std::expm1, std::log;
  if (!(alpha > 0)) throw InputError("discrimination must be positive");
  if (beta.size() < 1) throw InputError("at least one threshold is required");
  if (!strictly_increasing(beta)) throw InputError("thresholds must be strictly increasing");
  const Eigen::Index num_thresholds = beta.size();
  Vec<S> p(num_thresholds + 1);
  p[0] = logistic(-alpha * (theta - beta[0]));
  for (Eigen::Index k = 1; k < num_thresholds; ++k) {
    S upper = alpha * (theta - beta[k - 1]);
    S lower = alpha * (theta - beta[k]);
    p[k] = exp(log_logistic(upper) + log_logistic(-lower) +
               log(-expm1(-alpha * (beta[k] - beta[k - 1]))));
  }
  p[num_thresholds] = logistic(alpha * (theta - beta[num_thresholds - 1]));
  return p;
}

template <typename S>
struct BasicGrmParameters {
  Vec<S> theta;
  Vec<S> alpha;
  std::vector<Vec<S>> beta;  // per item, K_p - 1 strictly increasing thresholds
};

/// Sampling-space image of BasicGrmParameters: log_alpha = log(alpha),
/// beta_1 = z_1 and beta_k = beta_{k-1} + exp(z_k) for k >= 2.
template <typename S>
struct BasicUnconstrainedParams {
  Vec<S> theta;
  Vec<S> log_alpha;
  std::vector<Vec<S>> z;
};

using GrmParameters = BasicGrmParameters<double>;
using UnconstrainedParams = BasicUnconstrainedParams<double>;

template <typename S>
Vec<S> ordered_from_free(const Vec<S>& z) {
  using std::exp;
  Vec<S> beta(z.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    beta[k] = k == 0 ? z[0] : beta[k - 1] + exp(z[k]);
  }
  return beta;
}

template <typename S>
Vec<S> free_from_ordered(const Vec<S>& beta) {
  using std::log;
  if (!strictly_increasing(beta)) throw InputError("thresholds must be strictly increasing");
  Vec<S> z(beta.size());
  for (Eigen::Index k = 0; k < beta.size(); ++k) {
    z[k] = k == 0 ? beta[0] : log(beta[k] - beta[k - 1]);
  }
  return z;
}

template <typename S>
BasicGrmParameters<S> to_constrained(const BasicUnconstrainedParams<S>& u) {
  BasicGrmParameters<S> g;
  g.theta = u.theta;
  g.alpha = u.log_alpha.array().exp().matrix();
  g.beta.reserve(u.z.size());
  for (const auto& z : u.z) g.beta.push_back(ordered_from_free(z));
  return g;
}

template <typename S>
BasicUnconstrainedParams<S> to_unconstrained(const BasicGrmParameters<S>& g) {
  if ((g.alpha.array() <= 0).any()) throw InputError("discrimination must be positive");
  if (static_cast<std::size_t>(g.alpha.size()) != g.beta.size()) {
    throw InputError("alpha and beta disagree on the number of items");
  }
  BasicUnconstrainedParams<S> u;
  u.theta = g.theta;
  u.log_alpha = g.alpha.array().log().matrix();
  u.z.reserve(g.beta.size());
  for (const auto& b : g.beta) u.z.push_back(free_from_ordered(b));
  return u;
}

/// log |d(constrained) / d(unconstrained)|.
template <typename S>
S log_jacobian(const BasicUnconstrainedParams<S>& u) {
  S total = u.log_alpha.sum();
  for (const auto& z : u.z) total += z.tail(z.size() - 1).sum();
  return total;
}

/// Offsets of each block inside the flat unconstrained vector
/// [theta (J) | log_alpha (P) | z_1 (K_1 - 1) | ... | z_P (K_P - 1)].
class ParameterLayout {
 public:
  ParameterLayout() = default;
  ParameterLayout(int num_subjects, std::vector<int> num_categories);
  explicit ParameterLayout(const IndexedDataset& d)
      : ParameterLayout(d.num_subjects(), d.num_categories) {}

  int num_subjects() const { return num_subjects_; }
  int num_items() const { return static_cast<int>(num_categories_.size()); }
  int num_categories(int item) const { return num_categories_[item]; }
  const std::vector<int>& num_categories() const { return num_categories_; }
  int dimension() const { return dimension_; }
  int theta_offset() const { return 0; }
  int log_alpha_offset() const { return num_subjects_; }
  int z_offset(int item) const { return z_offsets_[item]; }

  Eigen::VectorXd pack(const UnconstrainedParams& u) const;
  UnconstrainedParams unpack(const Eigen::VectorXd& x) const;
  // Names of the flat coordinates, e.g. "theta[s1]", "log_alpha[orig]", "z[orig][2]".
  std::vector<std::string> names(const std::vector<std::string>& subject_ids,
                                 const std::vector<std::string>& item_ids) const;

  bool operator==(const ParameterLayout&) const = default;

 private:
  int num_subjects_ = 0;
  std::vector<int> num_categories_;
  std::vector<int> z_offsets_;
  int dimension_ = 0;
};

/// Log posterior of the graded response model in unconstrained space:
/// likelihood over observed cells, N(0,1) on theta, LogNormal(0, 0.5) on
/// alpha, N(0,1) on every ordered threshold, plus the transform's
/// log-Jacobian. Thread-safe; holds a reference to the dataset.
class GrmLogDensity {
 public:
  explicit GrmLogDensity(const IndexedDataset& d) : data_(&d), layout_(d) {}

  const ParameterLayout& layout() const { return layout_; }
  int dimension() const { return layout_.dimension(); }

  double log_density(const Eigen::VectorXd& x) const;
  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const;

 private:
  double evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const;

  const IndexedDataset* data_;
  ParameterLayout layout_;
};

/// Two-parameter logistic posterior for all-binary data. Shares the flat
/// layout with GrmLogDensity (one free threshold per item, no ordering).
class TwoPlLogDensity {
 public:
  explicit TwoPlLogDensity(const IndexedDataset& d);

  const ParameterLayout& layout() const { return layout_; }
  int dimension() const { return layout_.dimension(); }

  double log_density(const Eigen::VectorXd& x) const;
  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const;

 private:
  const IndexedDataset* data_;
  ParameterLayout layout_;
};

double log_posterior(const UnconstrainedParams& u, const IndexedDataset& d);
Eigen::VectorXd grad_log_posterior(const UnconstrainedParams& u, const IndexedDataset& d);
double log_posterior_2pl(const UnconstrainedParams& u, const IndexedDataset& d);

// JSON layout: {"theta": {subject: v}, "alpha": {item: v}, "beta": {item: [..]}}.
nlohmann::json parameters_to_json(const GrmParameters& g,
                                  const std::vector<std::string>& subject_ids,
                                  const std::vector<std::string>& item_ids);

struct NamedGrmParameters {
  std::vector<std::string> subject_ids;  // empty when theta is absent
  std::vector<std::string> item_ids;
  GrmParameters params;
};

NamedGrmParameters parameters_from_json(const nlohmann::json& j);

}  // namespace judgeirt
