#include "judgeirt/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "judgeirt/error.hpp"

namespace judgeirt {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void check_shape(const MatrixXd& draws) {
  if (draws.cols() < 2 || draws.rows() < 4) {
    throw InputError("convergence diagnostics need at least 2 chains of 4 draws");
  }
}

MatrixXd split_chains(const MatrixXd& draws) {
  const Eigen::Index half = draws.rows() / 2;
  const Eigen::Index offset = draws.rows() - half;  // drops the middle draw when odd
  MatrixXd out(half, 2 * draws.cols());
  for (Eigen::Index c = 0; c < draws.cols(); ++c) {
    out.col(2 * c) = draws.col(c).head(half);
    out.col(2 * c + 1) = draws.col(c).segment(offset, half);
  }
  return out;
}

bool all_equal(const MatrixXd& draws) {
  return (draws.array() == draws(0, 0)).all();
}

// R-hat on already split chains.
ConvergenceValue rhat_of_split(const MatrixXd& split) {
  const double n = static_cast<double>(split.rows());
  const VectorXd means = split.colwise().mean();
  VectorXd vars(split.cols());
  for (Eigen::Index c = 0; c < split.cols(); ++c) {
    vars[c] = (split.col(c).array() - means[c]).square().sum() / (n - 1.0);
  }
  const double within = vars.mean();
  const double between_over_n =
      (means.array() - means.mean()).square().sum() / static_cast<double>(split.cols() - 1);
  if (within == 0.0) {
    if (between_over_n == 0.0) return {1.0, true};
    return {std::numeric_limits<double>::infinity(), true};
  }
  const double var_plus = (n - 1.0) / n * within + between_over_n;
  return {std::sqrt(var_plus / within), false};
}

// Lazily evaluated biased autocovariance of one chain.
class Autocovariance {
 public:
  explicit Autocovariance(const VectorXd& x) : x_(x.array() - x.mean()) {}

  double at(Eigen::Index lag) const {
    const Eigen::Index n = x_.size();
    return x_.head(n - lag).dot(x_.tail(n - lag)) / static_cast<double>(n);
  }

 private:
  VectorXd x_;
};

ConvergenceValue ess_of_split(const MatrixXd& split) {
  const Eigen::Index num_draws = split.rows();
  const Eigen::Index num_chains = split.cols();
  const double n = static_cast<double>(num_draws);

  std::vector<Autocovariance> acov;
  VectorXd means(num_chains);
  VectorXd vars(num_chains);
  for (Eigen::Index c = 0; c < num_chains; ++c) {
    acov.emplace_back(split.col(c));
    means[c] = split.col(c).mean();
    vars[c] = acov.back().at(0) * n / (n - 1.0);
  }
  const double mean_var = vars.mean();
  double var_plus = mean_var * (n - 1.0) / n;
  if (num_chains > 1) {
    var_plus += (means.array() - means.mean()).square().sum() /
                static_cast<double>(num_chains - 1);
  }
  if (mean_var == 0.0 || var_plus == 0.0) {
    return {std::numeric_limits<double>::quiet_NaN(), true};
  }

  auto mean_acov = [&](Eigen::Index lag) {
    double s = 0.0;
    for (const auto& a : acov) s += a.at(lag);
    return s / static_cast<double>(num_chains);
  };
  auto rho = [&](Eigen::Index lag) { return 1.0 - (mean_var - mean_acov(lag)) / var_plus; };

  VectorXd rho_hat = VectorXd::Zero(num_draws + 2);
  double rho_even = 1.0;
  double rho_odd = rho(1);
  rho_hat[0] = rho_even;
  rho_hat[1] = rho_odd;

  // Geyer's initial positive sequence over pairs of lags.
  Eigen::Index s = 1;
  while (s < num_draws - 4 && rho_even + rho_odd > 0) {
    rho_even = rho(s + 1);
    rho_odd = rho(s + 2);
    if (rho_even + rho_odd >= 0) {
      rho_hat[s + 1] = rho_even;
      rho_hat[s + 2] = rho_odd;
    }
    s += 2;
  }
  const Eigen::Index max_s = s;
  if (rho_even > 0) rho_hat[max_s + 1] = rho_even;

  // Initial monotone sequence.
  for (Eigen::Index t = 1; t <= max_s - 3; t += 2) {
    if (rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t]) {
      rho_hat[t + 1] = (rho_hat[t - 1] + rho_hat[t]) / 2.0;
      rho_hat[t + 2] = rho_hat[t + 1];
    }
  }

  const double total = static_cast<double>(num_chains) * n;
  const double tau = -1.0 + 2.0 * rho_hat.head(max_s).sum() + rho_hat[max_s + 1];
  const double cap = total * std::log10(total);
  if (!(tau > 0.0)) return {cap, false};
  return {std::min(total / tau, cap), false};
}

}  // namespace

MatrixXd rank_normalize(const MatrixXd& draws) {
  const Eigen::Index total = draws.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const double* data = draws.data();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return data[a] < data[b]; });

  MatrixXd out(draws.rows(), draws.cols());
  const boost::math::normal standard;
  const double denom = static_cast<double>(total) + 0.25;
  Eigen::Index i = 0;
  while (i < total) {
    Eigen::Index j = i;
    while (j + 1 < total && data[order[j + 1]] == data[order[i]]) ++j;
    // Average 1-based rank over the tie block.
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    const double z = boost::math::quantile(standard, (rank - 0.375) / denom);
    for (Eigen::Index k = i; k <= j; ++k) out.data()[order[k]] = z;
    i = j + 1;
  }
  return out;
}

ConvergenceValue split_rhat_classic(const MatrixXd& draws) {
  check_shape(draws);
  if (all_equal(draws)) return {1.0, true};
  return rhat_of_split(split_chains(draws));
}

ConvergenceValue rank_normalized_rhat(const MatrixXd& draws) {
  check_shape(draws);
  if (all_equal(draws)) return {1.0, true};
  auto bulk = rhat_of_split(split_chains(rank_normalize(draws)));

  // Folded draws measure convergence of the scale / tails.
  std::vector<double> pooled(draws.data(), draws.data() + draws.size());
  const auto mid = pooled.begin() + static_cast<std::ptrdiff_t>(pooled.size() / 2);
  std::nth_element(pooled.begin(), mid, pooled.end());
  double median = *mid;
  if (pooled.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(pooled.begin(), mid));
  }
  const MatrixXd folded = (draws.array() - median).abs().matrix();
  auto tail = all_equal(folded) ? ConvergenceValue{1.0, true}
                                : rhat_of_split(split_chains(rank_normalize(folded)));
  return {std::max(bulk.value, tail.value), bulk.degenerate && tail.degenerate};
}

ConvergenceValue ess_bulk(const MatrixXd& draws) {
  check_shape(draws);
  if (all_equal(draws)) return {std::numeric_limits<double>::quiet_NaN(), true};
  return ess_of_split(split_chains(rank_normalize(draws)));
}

ConvergenceValue ess_basic(const MatrixXd& draws) {
  check_shape(draws);
  if (all_equal(draws)) return {std::numeric_limits<double>::quiet_NaN(), true};
  return ess_of_split(split_chains(draws));
}

std::vector<ConvergenceValue> split_rhat(const nuts::PosteriorDraws& draws, RhatKind kind) {
  std::vector<ConvergenceValue> out;
  out.reserve(static_cast<std::size_t>(draws.dimension));
  for (int i = 0; i < draws.dimension; ++i) {
    auto m = draws.coordinate(i);
    out.push_back(kind == RhatKind::classic ? split_rhat_classic(m) : rank_normalized_rhat(m));
  }
  return out;
}

std::vector<ConvergenceValue> ess_bulk(const nuts::PosteriorDraws& draws) {
  std::vector<ConvergenceValue> out;
  out.reserve(static_cast<std::size_t>(draws.dimension));
  for (int i = 0; i < draws.dimension; ++i) out.push_back(ess_bulk(draws.coordinate(i)));
  return out;
}

}  // namespace judgeirt
