#include "judgeirt/synthetic.hpp"

#include <cmath>
#include <random>

#include "judgeirt/metrics.hpp"
#include "judgeirt/nuts.hpp"

namespace judgeirt {

TrueParameters true_parameters_from_json(const nlohmann::json& j) {
  auto named = parameters_from_json(j);
  TrueParameters tp;
  tp.item_ids = std::move(named.item_ids);
  tp.subject_ids = std::move(named.subject_ids);
  tp.params = std::move(named.params);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw InputError("'seed' must be a non-negative integer");
    tp.seed = j["seed"].get<std::uint64_t>();
  }
  return tp;
}

nlohmann::json to_json(const TrueParameters& tp) {
  auto j = parameters_to_json(tp.params, tp.subject_ids, tp.item_ids);
  j["seed"] = tp.seed;
  return j;
}

TrueParameters make_true_parameters(const std::vector<double>& alphas, int num_categories,
                                    double lo, double hi) {
  if (num_categories < 2) throw InputError("items need at least two categories");
  if (!(lo < hi) && num_categories > 2) throw InputError("threshold range must satisfy lo < hi");
  TrueParameters tp;
  tp.params.alpha = Eigen::Map<const Eigen::VectorXd>(alphas.data(),
                                                      static_cast<Eigen::Index>(alphas.size()));
  for (std::size_t p = 0; p < alphas.size(); ++p) {
    tp.item_ids.push_back("item" + std::to_string(p + 1));
    Eigen::VectorXd beta(num_categories - 1);
    if (num_categories == 2) {
      beta[0] = 0.5 * (lo + hi);
    } else {
      beta = Eigen::VectorXd::LinSpaced(num_categories - 1, lo, hi);
    }
    tp.params.beta.push_back(beta);
  }
  return tp;
}

std::vector<std::string> synthetic_subject_ids(int count) {
  const int width = std::max(3, static_cast<int>(std::to_string(count).size()));
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(count));
  for (int j = 1; j <= count; ++j) {
    auto n = std::to_string(j);
    ids.push_back("s" + std::string(static_cast<std::size_t>(width) - n.size(), '0') + n);
  }
  return ids;
}

SimulatedData simulate(const TrueParameters& tp, int num_subjects, std::uint64_t seed,
                       const std::optional<Eigen::VectorXd>& theta, const std::string& criterion) {
  const auto num_items = static_cast<std::size_t>(tp.params.alpha.size());
  if (num_items == 0 || tp.params.beta.size() != num_items || tp.item_ids.size() != num_items) {
    throw InputError("true parameters need matching alpha, beta and item ids");
  }
  if (num_subjects < 1) throw InputError("number of subjects must be positive");

  SimulatedData out;
  if (theta) {
    out.theta = *theta;
  } else if (tp.params.theta.size() > 0) {
    out.theta = tp.params.theta;
  } else {
    std::mt19937_64 rng(nuts::derive_seed(seed, 0));
    std::normal_distribution<double> normal(0.0, 1.0);
    out.theta.resize(num_subjects);
    for (int j = 0; j < num_subjects; ++j) out.theta[j] = normal(rng);
  }
  if (out.theta.size() != num_subjects) {
    throw InputError("supplied theta has " + std::to_string(out.theta.size()) +
                     " entries for " + std::to_string(num_subjects) + " subjects");
  }
  out.subject_ids = tp.subject_ids.size() == static_cast<std::size_t>(num_subjects)
                        ? tp.subject_ids
                        : synthetic_subject_ids(num_subjects);

  std::vector<Observation> obs;
  obs.reserve(num_items * static_cast<std::size_t>(num_subjects));
  std::map<std::string, ScaleBounds> bounds;
  int max_k = 2;
  for (std::size_t p = 0; p < num_items; ++p) {
    std::mt19937_64 rng(nuts::derive_seed(seed, p + 1));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto& beta = tp.params.beta[p];
    max_k = std::max(max_k, static_cast<int>(beta.size()) + 1);
    for (int j = 0; j < num_subjects; ++j) {
      const double u = unif(rng);
      const Eigen::VectorXd probs =
          category_probabilities<double>(out.theta[j], tp.params.alpha[static_cast<Eigen::Index>(p)], beta);
      int k = 0;
      double cum = 0.0;
      for (; k < probs.size() - 1; ++k) {
        cum += probs[k];
        if (u < cum) break;
      }
      obs.push_back({out.subject_ids[static_cast<std::size_t>(j)], tp.item_ids[p], criterion, k + 1});
    }
  }
  bounds[criterion] = {1, max_k};
  out.ratings = RatingDataset(std::move(obs), bounds);
  return out;
}

RatingDataset simulate_dataset(const TrueParameters& tp, int num_subjects, std::uint64_t seed,
                               const std::optional<Eigen::VectorXd>& theta,
                               const std::string& criterion) {
  return simulate(tp, num_subjects, seed, theta, criterion).ratings;
}

RecoveryReport recovery_experiment(const TrueParameters& tp, int num_subjects,
                                   const nuts::SamplerConfig& config) {
  const std::string criterion = "quality";
  auto sim = simulate(tp, num_subjects, tp.seed, std::nullopt, criterion);
  auto d = relabel_categories(sim.ratings, criterion);
  auto fit = fit_model(d, config);

  RecoveryReport r;
  r.model = to_string(fit.model);
  r.num_subjects = d.num_subjects();

  std::vector<double> truth;
  std::vector<double> estimate;
  for (int s = 0; s < d.num_subjects(); ++s) {
    auto it = std::find(sim.subject_ids.begin(), sim.subject_ids.end(), d.subject_ids[s]);
    truth.push_back(sim.theta[it - sim.subject_ids.begin()]);
    estimate.push_back(fit.summary.theta_hat[s]);
  }
  r.theta_pearson = pearson(truth, estimate).r;

  for (int p = 0; p < d.num_items(); ++p) {
    const auto& item = d.item_ids[p];
    const auto src = std::find(tp.item_ids.begin(), tp.item_ids.end(), item) - tp.item_ids.begin();
    const double a_true = tp.params.alpha[src];
    const double a_hat = fit.summary.alpha_mean[p];
    r.item_ids.push_back(item);
    r.alpha_true.push_back(a_true);
    r.alpha_hat.push_back(a_hat);
    r.alpha_error.push_back(a_hat - a_true);
    std::vector<double> berr;
    const auto& b_true = tp.params.beta[static_cast<std::size_t>(src)];
    const auto& b_hat = fit.summary.beta_mean[static_cast<std::size_t>(p)];
    if (b_true.size() == b_hat.size()) {
      for (Eigen::Index k = 0; k < b_true.size(); ++k) berr.push_back(std::abs(b_hat[k] - b_true[k]));
    }
    r.beta_error.push_back(std::move(berr));
  }
  r.max_rhat = fit.diagnostics.max_rhat;
  r.min_ess_bulk = fit.diagnostics.min_ess_bulk;
  r.divergences = fit.diagnostics.divergences;
  r.total_draws = fit.diagnostics.total_draws;
  return r;
}

nlohmann::json to_json(const RecoveryReport& r) {
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t p = 0; p < r.item_ids.size(); ++p) {
    items.push_back({{"item_id", r.item_ids[p]},
                     {"alpha_true", r.alpha_true[p]},
                     {"alpha_hat", r.alpha_hat[p]},
                     {"alpha_error", r.alpha_error[p]},
                     {"beta_abs_error", r.beta_error[p]}});
  }
  return {{"model", r.model},
          {"num_subjects", r.num_subjects},
          {"theta_pearson", r.theta_pearson},
          {"items", items},
          {"max_rhat", r.max_rhat},
          {"min_ess_bulk", r.min_ess_bulk},
          {"divergences", r.divergences},
          {"total_draws", r.total_draws}};
}

}  // namespace judgeirt
