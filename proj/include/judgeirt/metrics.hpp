#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "judgeirt/grm.hpp"
#include "judgeirt/nuts.hpp"
#include "judgeirt/rating_data.hpp"

namespace judgeirt {

struct PosteriorSummary {
  std::vector<std::string> subject_ids;
  std::vector<std::string> item_ids;
  Eigen::VectorXd theta_hat;     // posterior mean
  Eigen::VectorXd theta_var;     // posterior variance, denominator N - 1
  Eigen::VectorXd theta_median;
  Eigen::VectorXd alpha_mean;
  Eigen::VectorXd alpha_sd;
  std::vector<Eigen::VectorXd> beta_mean;

  int num_subjects() const { return static_cast<int>(theta_hat.size()); }
};

/// Pools the post-warmup draws of every chain. `draws` holds unconstrained
/// coordinates laid out by `layout`.
PosteriorSummary summarize(const nuts::PosteriorDraws& draws, const ParameterLayout& layout,
                           std::vector<std::string> subject_ids = {},
                           std::vector<std::string> item_ids = {});

enum class VbarDenominator { paper, mean };

struct WithinRatingVariance {
  double vbar = 0.0;
  int retained_categories = 0;
  std::vector<int> excluded_categories;  // 1-based indices with fewer than 2 subjects
};

/// Mean within-category variance of theta_hat for one item. With the
/// `paper` denominator the sum of retained category variances is divided by
/// (retained - 1); `mean` divides by the retained count.
WithinRatingVariance within_rating_variance(const Eigen::VectorXd& theta_hat,
                                            const IndexedDataset& d, int item,
                                            VbarDenominator denominator = VbarDenominator::paper);
WithinRatingVariance within_rating_variance(const PosteriorSummary& summary,
                                            const IndexedDataset& d, int item,
                                            VbarDenominator denominator = VbarDenominator::paper);

struct PromptConsistency {
  double mu_v = 0.0;
  double sigma_v = 0.0;  // sample standard deviation
  double cv = 0.0;
};

PromptConsistency prompt_consistency(const std::map<std::string, double>& vbars);

/// Var(theta_hat) / (Var(theta_hat) + mean(theta_var)).
double marginal_reliability(const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& theta_var);
double marginal_reliability(const PosteriorSummary& summary);

double median(std::vector<double> values);
double sample_variance(std::span<const double> values);

/// median(theta_hat | top score) - median(theta_hat | bottom score).
double theta_range(std::span<const double> theta_hat, std::span<const double> scores);

enum class Calibration { hypersensitive, near_human, insensitive };

std::string to_string(Calibration c);
Calibration calibration_from_string(const std::string& s);
Calibration classify_calibration(double ratio, double delta = 0.1);

struct BreadthRatio {
  double ratio = 0.0;
  Calibration label = Calibration::near_human;
};

BreadthRatio discrimination_breadth_ratio(double range_llm, double range_human,
                                          double delta = 0.1);

/// 1-Wasserstein distance between two empirical distributions.
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

struct PearsonResult {
  double r = 0.0;
  double p_value = 1.0;  // two-sided, t distribution with n - 2 dof
};

PearsonResult pearson(std::span<const double> a, std::span<const double> b);

/// Median theta_hat per distinct score, ordered by score.
std::map<double, double> median_theta_by_score(std::span<const double> theta_hat,
                                                std::span<const double> scores);

}  // namespace judgeirt
