#pragma once

#include <vector>

#include <Eigen/Dense>

#include "judgeirt/nuts.hpp"

namespace judgeirt {

struct ConvergenceValue {
  double value = 0.0;
  // Zero within-chain variance: the statistic is undefined and `value` is a
  // convention (1 for R-hat when chains agree, NaN for ESS).
  bool degenerate = false;
};

enum class RhatKind { classic, rank_normalized };

// All functions take one parameter's draws as a (draws x chains) matrix and
// require at least 2 chains with at least 4 draws each.

/// Split-chain potential scale reduction on the raw draws.
ConvergenceValue split_rhat_classic(const Eigen::MatrixXd& draws);

/// max(bulk, tail) split R-hat on rank-normalized draws.
ConvergenceValue rank_normalized_rhat(const Eigen::MatrixXd& draws);

/// Bulk effective sample size: split chains, rank normalization, and
/// Geyer's initial monotone sequence truncation.
ConvergenceValue ess_bulk(const Eigen::MatrixXd& draws);

/// Same estimator without rank normalization.
ConvergenceValue ess_basic(const Eigen::MatrixXd& draws);

/// Normal scores of the pooled ranks, (r - 3/8) / (N + 1/4), ties averaged.
Eigen::MatrixXd rank_normalize(const Eigen::MatrixXd& draws);

std::vector<ConvergenceValue> split_rhat(const nuts::PosteriorDraws& draws,
                                         RhatKind kind = RhatKind::rank_normalized);
std::vector<ConvergenceValue> ess_bulk(const nuts::PosteriorDraws& draws);

}  // namespace judgeirt
