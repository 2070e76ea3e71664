#include "judgeirt/grm.hpp"

#include <numbers>

namespace judgeirt {

namespace {

using Eigen::VectorXd;

const double kLogSqrtTwoPi = 0.5 * std::log(2.0 * std::numbers::pi);

double log_normal_density(double x, double sd) {
  double z = x / sd;
  return -0.5 * z * z - std::log(sd) - kLogSqrtTwoPi;
}

void check_shapes(const ParameterLayout& layout, const VectorXd& x) {
  if (x.size() != layout.dimension()) {
    throw InputError("parameter vector has length " + std::to_string(x.size()) +
                     ", expected " + std::to_string(layout.dimension()));
  }
}

void check_observations(const IndexedDataset& d) {
  for (const auto& o : d.observations) {
    if (o.subject < 0 || o.subject >= d.num_subjects() || o.item < 0 ||
        o.item >= d.num_items() || o.category < 1 || o.category > d.num_categories[o.item]) {
      throw InputError("observation indices inconsistent with the dataset shape");
    }
  }
}

}  // namespace

ParameterLayout::ParameterLayout(int num_subjects, std::vector<int> num_categories)
    : num_subjects_(num_subjects), num_categories_(std::move(num_categories)) {
  int offset = num_subjects_ + static_cast<int>(num_categories_.size());
  for (int k : num_categories_) {
    if (k < 2) throw InputError("every fitted item needs at least two categories");
    z_offsets_.push_back(offset);
    offset += k - 1;
  }
  dimension_ = offset;
}

VectorXd ParameterLayout::pack(const UnconstrainedParams& u) const {
  if (u.theta.size() != num_subjects_ || u.log_alpha.size() != num_items() ||
      static_cast<int>(u.z.size()) != num_items()) {
    throw InputError("unconstrained parameters do not match the dataset shape");
  }
  VectorXd x(dimension_);
  x.segment(theta_offset(), num_subjects_) = u.theta;
  x.segment(log_alpha_offset(), num_items()) = u.log_alpha;
  for (int p = 0; p < num_items(); ++p) {
    if (u.z[p].size() != num_categories_[p] - 1) {
      throw InputError("threshold count does not match K_p - 1");
    }
    x.segment(z_offsets_[p], num_categories_[p] - 1) = u.z[p];
  }
  return x;
}

UnconstrainedParams ParameterLayout::unpack(const VectorXd& x) const {
  check_shapes(*this, x);
  UnconstrainedParams u;
  u.theta = x.segment(theta_offset(), num_subjects_);
  u.log_alpha = x.segment(log_alpha_offset(), num_items());
  for (int p = 0; p < num_items(); ++p) {
    u.z.push_back(x.segment(z_offsets_[p], num_categories_[p] - 1));
  }
  return u;
}

std::vector<std::string> ParameterLayout::names(const std::vector<std::string>& subject_ids,
                                                const std::vector<std::string>& item_ids) const {
  std::vector<std::string> out;
  out.reserve(dimension_);
  for (int j = 0; j < num_subjects_; ++j) out.push_back("theta[" + subject_ids.at(j) + "]");
  for (int p = 0; p < num_items(); ++p) out.push_back("log_alpha[" + item_ids.at(p) + "]");
  for (int p = 0; p < num_items(); ++p) {
    for (int k = 1; k < num_categories_[p]; ++k) {
      out.push_back("z[" + item_ids[p] + "][" + std::to_string(k) + "]");
    }
  }
  return out;
}

double GrmLogDensity::log_density(const VectorXd& x) const { return evaluate(x, nullptr); }

double GrmLogDensity::operator()(const VectorXd& x, VectorXd& grad) const {
  grad.resize(layout_.dimension());
  return evaluate(x, &grad);
}

double GrmLogDensity::evaluate(const VectorXd& x, VectorXd* grad) const {
  check_shapes(layout_, x);
  const int num_subjects = layout_.num_subjects();
  const int num_items = layout_.num_items();
  const auto theta = x.segment(layout_.theta_offset(), num_subjects);
  const auto log_alpha = x.segment(layout_.log_alpha_offset(), num_items);
  const VectorXd alpha = log_alpha.array().exp();

  // Thresholds for all items, stored at the same offsets as their z's.
  VectorXd beta(layout_.dimension());
  for (int p = 0; p < num_items; ++p) {
    const int off = layout_.z_offset(p);
    const int n = layout_.num_categories(p) - 1;
    beta.segment(off, n) = ordered_from_free<double>(x.segment(off, n));
  }

  VectorXd g_theta = VectorXd::Zero(num_subjects);
  VectorXd g_alpha = VectorXd::Zero(num_items);
  VectorXd g_beta = VectorXd::Zero(layout_.dimension());

  double lp = 0.0;
  for (const auto& o : data_->observations) {
    const int p = o.item;
    const int num_categories = layout_.num_categories(p);
    const int off = layout_.z_offset(p);
    const double a = alpha[p];
    const double t = theta[o.subject];
    // Each category probability touches at most two linear predictors,
    // eta_i = alpha (theta - beta_i); d_upper/d_lower are d log P / d eta.
    int upper_idx = -1;
    int lower_idx = -1;
    double d_upper = 0.0;
    double d_lower = 0.0;
    if (o.category == 1) {
      lower_idx = off;
      const double eta = a * (t - beta[lower_idx]);
      lp += log_logistic(-eta);
      d_lower = -logistic(eta);
    } else if (o.category == num_categories) {
      upper_idx = off + num_categories - 2;
      const double eta = a * (t - beta[upper_idx]);
      lp += log_logistic(eta);
      d_upper = logistic(-eta);
    } else {
      upper_idx = off + o.category - 2;
      lower_idx = upper_idx + 1;
      const double eta_upper = a * (t - beta[upper_idx]);
      const double eta_lower = a * (t - beta[lower_idx]);
      // beta[lower] - beta[upper] = exp(z[lower]) exactly, so the gap survives large theta.
      const double gap = a * std::exp(x[lower_idx]);
      lp += log_logistic(eta_upper) + log_logistic(-eta_lower) + std::log(-std::expm1(-gap));
      const double inv_expm1 = 1.0 / std::expm1(gap);
      d_upper = logistic(-eta_upper) + inv_expm1;
      d_lower = -logistic(eta_lower) - inv_expm1;
    }
    if (grad == nullptr) continue;
    for (auto [idx, d] : {std::pair{upper_idx, d_upper}, std::pair{lower_idx, d_lower}}) {
      if (idx < 0) continue;
      g_theta[o.subject] += d * a;
      g_alpha[p] += d * (t - beta[idx]);
      g_beta[idx] -= d * a;
    }
  }

  // Priors and log-Jacobian. The LogNormal density on alpha carries a
  // -log(alpha) that cancels the +log(alpha) Jacobian term.
  for (int j = 0; j < num_subjects; ++j) lp += log_normal_density(theta[j], 1.0);
  for (int p = 0; p < num_items; ++p) {
    lp += log_normal_density(log_alpha[p], kLogAlphaPriorSd);
    const int off = layout_.z_offset(p);
    const int n = layout_.num_categories(p) - 1;
    for (int k = 0; k < n; ++k) {
      lp += log_normal_density(beta[off + k], 1.0);
      if (k > 0) lp += x[off + k];
    }
  }

  if (grad != nullptr) {
    grad->segment(layout_.theta_offset(), num_subjects) = g_theta - theta;
    grad->segment(layout_.log_alpha_offset(), num_items) =
        (alpha.array() * g_alpha.array()).matrix() -
        log_alpha / (kLogAlphaPriorSd * kLogAlphaPriorSd);
    for (int p = 0; p < num_items; ++p) {
      const int off = layout_.z_offset(p);
      const int n = layout_.num_categories(p) - 1;
      // d beta_k / d z_1 = 1 and d beta_k / d z_i = exp(z_i) for 2 <= i <= k.
      double tail = 0.0;
      for (int k = n - 1; k >= 0; --k) {
        tail += g_beta[off + k] - beta[off + k];
        (*grad)[off + k] = k == 0 ? tail : tail * std::exp(x[off + k]) + 1.0;
      }
    }
  }
  return lp;
}

TwoPlLogDensity::TwoPlLogDensity(const IndexedDataset& d) : data_(&d), layout_(d) {
  if (!d.all_binary()) throw InputError("the 2PL model requires binary items");
}

double TwoPlLogDensity::log_density(const VectorXd& x) const {
  VectorXd unused;
  return (*this)(x, unused);
}

double TwoPlLogDensity::operator()(const VectorXd& x, VectorXd& grad) const {
  check_shapes(layout_, x);
  const int num_subjects = layout_.num_subjects();
  const int num_items = layout_.num_items();
  grad = VectorXd::Zero(layout_.dimension());

  double ll = 0.0;
  for (const auto& o : data_->observations) {
    const double t = x[o.subject];
    const double la = x[num_subjects + o.item];
    const double b = x[layout_.z_offset(o.item)];
    const double a = std::exp(la);
    const double eta = a * (t - b);
    const double y = o.category == 2 ? 1.0 : 0.0;
    ll += y * log_logistic(eta) + (1.0 - y) * log_logistic(-eta);
    const double residual = y - logistic(eta);
    grad[o.subject] += residual * a;
    grad[num_subjects + o.item] += residual * a * (t - b);
    grad[layout_.z_offset(o.item)] -= residual * a;
  }

  double prior = 0.0;
  for (int j = 0; j < num_subjects; ++j) {
    prior += log_normal_density(x[j], 1.0);
    grad[j] -= x[j];
  }
  for (int p = 0; p < num_items; ++p) {
    const double la = x[num_subjects + p];
    const double b = x[layout_.z_offset(p)];
    // LogNormal density of alpha times the alpha Jacobian.
    prior += log_normal_density(la, kLogAlphaPriorSd);
    prior += log_normal_density(b, 1.0);
    grad[num_subjects + p] -= la / (kLogAlphaPriorSd * kLogAlphaPriorSd);
    grad[layout_.z_offset(p)] -= b;
  }
  return ll + prior;
}

double log_posterior(const UnconstrainedParams& u, const IndexedDataset& d) {
  check_observations(d);
  GrmLogDensity density(d);
  return density.log_density(density.layout().pack(u));
}

VectorXd grad_log_posterior(const UnconstrainedParams& u, const IndexedDataset& d) {
  check_observations(d);
  GrmLogDensity density(d);
  VectorXd grad;
  density(density.layout().pack(u), grad);
  return grad;
}

double log_posterior_2pl(const UnconstrainedParams& u, const IndexedDataset& d) {
  check_observations(d);
  TwoPlLogDensity density(d);
  return density.log_density(density.layout().pack(u));
}

nlohmann::json parameters_to_json(const GrmParameters& g,
                                  const std::vector<std::string>& subject_ids,
                                  const std::vector<std::string>& item_ids) {
  nlohmann::json j;
  if (g.theta.size() > 0) {
    j["theta"] = nlohmann::json::object();
    for (Eigen::Index s = 0; s < g.theta.size(); ++s) j["theta"][subject_ids.at(s)] = g.theta[s];
  }
  j["alpha"] = nlohmann::json::object();
  j["beta"] = nlohmann::json::object();
  for (Eigen::Index p = 0; p < g.alpha.size(); ++p) {
    j["alpha"][item_ids.at(p)] = g.alpha[p];
    j["beta"][item_ids[p]] = std::vector<double>(g.beta[p].data(), g.beta[p].data() + g.beta[p].size());
  }
  return j;
}

NamedGrmParameters parameters_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("alpha") || !j.contains("beta") ||
      !j["alpha"].is_object() || !j["beta"].is_object()) {
    throw InputError("parameter JSON needs 'alpha' and 'beta' objects keyed by item_id");
  }
  NamedGrmParameters out;
  for (const auto& [item, a] : j["alpha"].items()) {
    if (!j["beta"].contains(item)) throw InputError("item " + item + " has no thresholds");
    out.item_ids.push_back(item);
  }
  const auto num_items = static_cast<Eigen::Index>(out.item_ids.size());
  out.params.alpha.resize(num_items);
  for (Eigen::Index p = 0; p < num_items; ++p) {
    const auto& item = out.item_ids[p];
    out.params.alpha[p] = j["alpha"][item].get<double>();
    if (!(out.params.alpha[p] > 0)) throw InputError("alpha for " + item + " must be positive");
    auto b = j["beta"][item].get<std::vector<double>>();
    Eigen::VectorXd beta = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    if (beta.size() < 1 || !strictly_increasing(beta)) {
      throw InputError("thresholds for " + item + " must be non-empty and strictly increasing");
    }
    out.params.beta.push_back(beta);
  }
  if (j["beta"].size() != out.item_ids.size()) {
    throw InputError("'beta' lists items absent from 'alpha'");
  }
  if (j.contains("theta")) {
    const auto& t = j["theta"];
    out.params.theta.resize(static_cast<Eigen::Index>(t.size()));
    Eigen::Index s = 0;
    for (const auto& [subject, v] : t.items()) {
      out.subject_ids.push_back(subject);
      out.params.theta[s++] = v.get<double>();
    }
  }
  return out;
}

}  // namespace judgeirt
