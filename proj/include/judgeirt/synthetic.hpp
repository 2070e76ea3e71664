#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "judgeirt/fit.hpp"
#include "judgeirt/grm.hpp"
#include "judgeirt/rating_data.hpp"

namespace judgeirt {

/// Generating parameters. Same JSON layout as GrmParameters plus a "seed" key.
/// theta may be empty, in which case it is drawn from N(0, 1).
struct TrueParameters {
  std::vector<std::string> item_ids;
  std::vector<std::string> subject_ids;  // only with a supplied theta
  GrmParameters params;
  std::uint64_t seed = 42;
};

TrueParameters true_parameters_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrueParameters& tp);

/// Items with the given discriminations and K - 1 thresholds evenly spread
/// over [lo, hi]. Items are named item1, item2, ...
TrueParameters make_true_parameters(const std::vector<double>& alphas, int num_categories,
                                    double lo = -1.5, double hi = 1.5);

struct SimulatedData {
  RatingDataset ratings;
  std::vector<std::string> subject_ids;
  Eigen::VectorXd theta;
};

/// Zero-padded ids (s001, s002, ...) so lexical order matches index order.
std::vector<std::string> synthetic_subject_ids(int count);

/// Inverse-CDF sampling with one uniform per observation. Item p draws from
/// its own derived stream; theta uses a separate one. Raw score = category
/// index (1..K_p).
SimulatedData simulate(const TrueParameters& tp, int num_subjects, std::uint64_t seed,
                       const std::optional<Eigen::VectorXd>& theta = std::nullopt,
                       const std::string& criterion = "quality");

RatingDataset simulate_dataset(const TrueParameters& tp, int num_subjects, std::uint64_t seed,
                               const std::optional<Eigen::VectorXd>& theta = std::nullopt,
                               const std::string& criterion = "quality");

struct RecoveryReport {
  std::string model;
  int num_subjects = 0;
  double theta_pearson = 0.0;
  std::vector<std::string> item_ids;
  std::vector<double> alpha_true;
  std::vector<double> alpha_hat;
  std::vector<double> alpha_error;  // alpha_hat - alpha_true
  // Per item |beta_hat - beta_true|; empty when categories went unobserved.
  std::vector<std::vector<double>> beta_error;
  double max_rhat = 1.0;
  double min_ess_bulk = 0.0;
  int divergences = 0;
  int total_draws = 0;
  double divergence_fraction() const {
    return total_draws > 0 ? static_cast<double>(divergences) / total_draws : 0.0;
  }
};

/// Simulates with tp.seed, fits, and compares estimates with the truth.
RecoveryReport recovery_experiment(const TrueParameters& tp, int num_subjects,
                                   const nuts::SamplerConfig& config);

nlohmann::json to_json(const RecoveryReport& r);

}  // namespace judgeirt
