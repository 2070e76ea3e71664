#pragma once

// No-U-Turn sampler with multinomial trajectory sampling, dual-averaging
// step-size adaptation and windowed diagonal mass-matrix adaptation.
//
// REFERENCE: Hoffman, M.D. and Gelman, A., 2014. The No-U-Turn sampler:
// adaptively setting path lengths in Hamiltonian Monte Carlo. JMLR 15.
// Betancourt, M., 2017. A conceptual introduction to Hamiltonian Monte Carlo.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "judgeirt/error.hpp"

namespace judgeirt::nuts {

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

struct SamplerConfig {
  int chains = 4;
  int warmup = 1000;
  int draws = 1000;
  double target_accept = 0.95;
  int max_tree_depth = 10;
  std::uint64_t seed = 42;
  // Run chains on separate threads. Results do not depend on this flag.
  bool parallel = true;

  void validate() const {
    if (chains < 1) throw InputError("sampler needs at least one chain");
    if (warmup < 100) throw InputError("warmup must be at least 100 iterations");
    if (draws < 1) throw InputError("draws must be at least 1");
    if (!(target_accept > 0.0 && target_accept < 1.0)) {
      throw InputError("target_accept must lie in (0, 1)");
    }
    if (max_tree_depth < 1) throw InputError("max_tree_depth must be at least 1");
  }
};

struct DrawStats {
  int tree_depth = 0;
  int n_leapfrog = 0;
  bool divergent = false;
  double step_size = 0.0;
  double accept_stat = 0.0;
  double energy = 0.0;
};

template <typename S>
struct BasicPosteriorDraws {
  int num_chains = 0;
  int num_draws = 0;
  int dimension = 0;
  std::vector<std::string> names;  // layout descriptor, one per coordinate
  std::vector<Mat<S>> samples;     // per chain: dimension x num_draws
  std::vector<std::vector<DrawStats>> stats;
  std::vector<Vec<S>> inv_metric;  // adapted diagonal, per chain
  std::vector<S> step_size;        // adapted step size, per chain

  // All draws of one coordinate, num_draws x num_chains.
  Mat<S> coordinate(int index) const {
    Mat<S> out(num_draws, num_chains);
    for (int c = 0; c < num_chains; ++c) out.col(c) = samples[c].row(index).transpose();
    return out;
  }

  int divergences() const {
    int n = 0;
    for (const auto& chain : stats) {
      for (const auto& s : chain) n += s.divergent ? 1 : 0;
    }
    return n;
  }
};

using PosteriorDraws = BasicPosteriorDraws<double>;

// Deterministic per-chain stream derived from the run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <typename S>
S log_sum_exp(S a, S b) {
  if (a == -std::numeric_limits<S>::infinity()) return b;
  if (b == -std::numeric_limits<S>::infinity()) return a;
  S m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// Welford accumulator for the diagonal of the covariance.
template <typename S>
class VarianceEstimator {
 public:
  explicit VarianceEstimator(int n) : mean_(Vec<S>::Zero(n)), m2_(Vec<S>::Zero(n)) {}

  void restart() {
    count_ = 0;
    mean_.setZero();
    m2_.setZero();
  }

  void add_sample(const Vec<S>& q) {
    ++count_;
    Vec<S> delta = q - mean_;
    mean_ += delta / S(count_);
    m2_ += (q - mean_).cwiseProduct(delta);
  }

  int count() const { return count_; }
  Vec<S> variance() const { return m2_ / S(count_ - 1); }

 private:
  int count_ = 0;
  Vec<S> mean_;
  Vec<S> m2_;
};

/// Dual averaging of log step size toward a target acceptance statistic.
template <typename S>
class DualAveraging {
 public:
  explicit DualAveraging(S target) : target_(target) {}

  void set_mu(S mu) { mu_ = mu; }

  void restart() {
    counter_ = 0;
    s_bar_ = 0;
    x_bar_ = 0;
  }

  S learn(S accept_stat) {
    ++counter_;
    accept_stat = std::min(S(1), accept_stat);
    S eta = S(1) / (S(counter_) + t0_);
    s_bar_ = (S(1) - eta) * s_bar_ + eta * (target_ - accept_stat);
    S x = mu_ - s_bar_ * std::sqrt(S(counter_)) / gamma_;
    S x_eta = std::pow(S(counter_), -kappa_);
    x_bar_ = (S(1) - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  S final_step_size() const { return std::exp(x_bar_); }

 private:
  S target_;
  S gamma_ = 0.05;
  S t0_ = 10;
  S kappa_ = 0.75;
  S mu_ = std::log(S(10));
  S s_bar_ = 0;
  S x_bar_ = 0;
  int counter_ = 0;
};

/// Warmup layout: an initial step-size-only buffer (15%), doubling metric
/// windows, and a terminal step-size-only buffer (10%).
class WarmupSchedule {
 public:
  explicit WarmupSchedule(int num_warmup, int base_window = 25) : num_warmup_(num_warmup) {
    init_buffer_ = static_cast<int>(0.15 * num_warmup);
    term_buffer_ = static_cast<int>(0.10 * num_warmup);
    window_size_ = base_window;
    if (init_buffer_ + window_size_ + term_buffer_ > num_warmup) {
      window_size_ = num_warmup - init_buffer_ - term_buffer_;
    }
    next_window_ = init_buffer_ + window_size_ - 1;
  }

  bool in_window() const {
    return counter_ >= init_buffer_ && counter_ < num_warmup_ - term_buffer_ &&
           counter_ != num_warmup_;
  }

  bool end_of_window() const { return counter_ == next_window_ && counter_ != num_warmup_; }

  void advance() {
    if (end_of_window()) compute_next_window();
    ++counter_;
  }

  int init_buffer() const { return init_buffer_; }
  int term_buffer() const { return term_buffer_; }

 private:
  void compute_next_window() {
    const int last = num_warmup_ - term_buffer_ - 1;
    if (next_window_ == last) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ != last && next_window_ + 2 * window_size_ >= num_warmup_ - term_buffer_) {
      next_window_ = last;
    }
  }

  int num_warmup_;
  int init_buffer_ = 0;
  int term_buffer_ = 0;
  int window_size_ = 0;
  int next_window_ = 0;
  int counter_ = 0;
};

template <typename S>
struct PhasePoint {
  Vec<S> q;
  Vec<S> p;
  Vec<S> grad;  // gradient of the log density at q
  S log_density = 0;
};

/// Single-chain NUTS kernel over a density callable as
/// `S density(const Vec<S>& q, Vec<S>& grad)`.
template <typename S, class Density>
class NutsKernel {
 public:
  NutsKernel(const Density& density, std::mt19937_64& rng, int max_depth)
      : density_(density), rng_(rng), max_depth_(max_depth) {}

  void set_inv_metric(Vec<S> inv_metric) { inv_metric_ = std::move(inv_metric); }
  const Vec<S>& inv_metric() const { return inv_metric_; }
  void set_step_size(S step) { step_ = step; }
  S step_size() const { return step_; }

  bool evaluate(PhasePoint<S>& z) const {
    z.log_density = density_(z.q, z.grad);
    return std::isfinite(z.log_density) && z.grad.allFinite();
  }

  S hamiltonian(const PhasePoint<S>& z) const {
    return -z.log_density + S(0.5) * z.p.dot(inv_metric_.cwiseProduct(z.p));
  }

  void leapfrog(PhasePoint<S>& z, S step) const {
    z.p += S(0.5) * step * z.grad;
    z.q += step * inv_metric_.cwiseProduct(z.p);
    z.log_density = density_(z.q, z.grad);
    z.p += S(0.5) * step * z.grad;
  }

  void sample_momentum(PhasePoint<S>& z) {
    z.p.resize(z.q.size());
    for (Eigen::Index i = 0; i < z.q.size(); ++i) {
      z.p[i] = normal_(rng_) / std::sqrt(inv_metric_[i]);
    }
  }

  /// Doubles or halves the step size until a single leapfrog step crosses
  /// an acceptance probability of 0.8.
  void init_step_size(const PhasePoint<S>& start) {
    if (step_ == 0 || step_ > 1e7 || !std::isfinite(step_)) return;
    const S log_threshold = std::log(S(0.8));
    auto delta_h = [&]() {
      PhasePoint<S> z = start;
      sample_momentum(z);
      S h0 = hamiltonian(z);
      leapfrog(z, step_);
      S h = hamiltonian(z);
      if (!std::isfinite(h)) h = std::numeric_limits<S>::infinity();
      return h0 - h;
    };
    const int direction = delta_h() > log_threshold ? 1 : -1;
    while (true) {
      S dh = delta_h();
      if (direction == 1 && !(dh > log_threshold)) break;
      if (direction == -1 && !(dh < log_threshold)) break;
      step_ = direction == 1 ? step_ * 2 : step_ * S(0.5);
      if (step_ > 1e7) throw FitError("step size diverged during initialization");
      if (step_ == 0) throw FitError("step size collapsed to zero during initialization");
    }
  }

  /// One NUTS transition from `z` (momentum is resampled). Returns the
  /// selected point; `stats` receives the transition diagnostics.
  PhasePoint<S> transition(const PhasePoint<S>& start, DrawStats& stats) {
    current_ = start;
    sample_momentum(current_);
    divergent_ = false;

    PhasePoint<S> z_fwd = current_;
    PhasePoint<S> z_bck = current_;
    PhasePoint<S> z_sample = current_;
    PhasePoint<S> z_propose = current_;

    Vec<S> p_fwd_fwd = current_.p;
    Vec<S> p_sharp_fwd_fwd = inv_metric_.cwiseProduct(current_.p);
    Vec<S> p_fwd_bck = p_fwd_fwd;
    Vec<S> p_sharp_fwd_bck = p_sharp_fwd_fwd;
    Vec<S> p_bck_fwd = p_fwd_fwd;
    Vec<S> p_sharp_bck_fwd = p_sharp_fwd_fwd;
    Vec<S> p_bck_bck = p_fwd_fwd;
    Vec<S> p_sharp_bck_bck = p_sharp_fwd_fwd;

    Vec<S> rho = current_.p;
    S log_sum_weight = 0;
    const S h0 = hamiltonian(current_);
    int n_leapfrog = 0;
    S sum_metro_prob = 0;
    int depth = 0;
    const auto n = current_.q.size();

    while (depth < max_depth_) {
      Vec<S> rho_fwd = Vec<S>::Zero(n);
      Vec<S> rho_bck = Vec<S>::Zero(n);
      bool valid_subtree = false;
      S log_sum_weight_subtree = -std::numeric_limits<S>::infinity();

      if (uniform_(rng_) > 0.5) {
        current_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        p_sharp_bck_fwd = p_sharp_fwd_bck;
        valid_subtree = build_tree(depth, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd,
                                   p_fwd_bck, p_fwd_fwd, h0, S(1), n_leapfrog,
                                   log_sum_weight_subtree, sum_metro_prob);
        z_fwd = current_;
      } else {
        current_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        p_sharp_fwd_bck = p_sharp_bck_fwd;
        valid_subtree = build_tree(depth, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck,
                                   p_bck_fwd, p_bck_bck, h0, S(-1), n_leapfrog,
                                   log_sum_weight_subtree, sum_metro_prob);
        z_bck = current_;
      }
      if (!valid_subtree) break;

      ++depth;
      // Biased progressive sampling favors the newer subtree.
      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (uniform_(rng_) < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      rho = rho_bck + rho_fwd;
      bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      Vec<S> rho_extended = rho_bck + p_fwd_bck;
      persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, rho_extended);
      rho_extended = rho_fwd + p_bck_fwd;
      persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_extended);
      if (!persist) break;
    }

    stats.tree_depth = depth;
    stats.n_leapfrog = n_leapfrog;
    stats.divergent = divergent_;
    stats.step_size = static_cast<double>(step_);
    stats.accept_stat = n_leapfrog > 0 ? static_cast<double>(sum_metro_prob / S(n_leapfrog)) : 0.0;
    stats.energy = static_cast<double>(hamiltonian(z_sample));
    return z_sample;
  }

 private:
  static bool no_u_turn(const Vec<S>& p_sharp_minus, const Vec<S>& p_sharp_plus,
                        const Vec<S>& rho) {
    return p_sharp_plus.dot(rho) > 0 && p_sharp_minus.dot(rho) > 0;
  }

  bool build_tree(int depth, PhasePoint<S>& z_propose, Vec<S>& p_sharp_beg,
                  Vec<S>& p_sharp_end, Vec<S>& rho, Vec<S>& p_beg, Vec<S>& p_end, S h0,
                  S sign, int& n_leapfrog, S& log_sum_weight, S& sum_metro_prob) {
    if (depth == 0) {
      leapfrog(current_, sign * step_);
      ++n_leapfrog;
      S h = hamiltonian(current_);
      if (!std::isfinite(h) || !current_.grad.allFinite()) {
        h = std::numeric_limits<S>::infinity();
      }
      if (h - h0 > kMaxDeltaH) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob += h0 - h > 0 ? S(1) : std::exp(h0 - h);
      z_propose = current_;
      p_sharp_beg = inv_metric_.cwiseProduct(current_.p);
      p_sharp_end = p_sharp_beg;
      rho += current_.p;
      p_beg = current_.p;
      p_end = p_beg;
      return !divergent_;
    }

    const auto n = current_.q.size();
    S log_sum_weight_init = -std::numeric_limits<S>::infinity();
    Vec<S> p_init_end(n);
    Vec<S> p_sharp_init_end(n);
    Vec<S> rho_init = Vec<S>::Zero(n);
    if (!build_tree(depth - 1, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
                    p_init_end, h0, sign, n_leapfrog, log_sum_weight_init, sum_metro_prob)) {
      return false;
    }

    PhasePoint<S> z_propose_final = current_;
    S log_sum_weight_final = -std::numeric_limits<S>::infinity();
    Vec<S> p_final_beg(n);
    Vec<S> p_sharp_final_beg(n);
    Vec<S> rho_final = Vec<S>::Zero(n);
    if (!build_tree(depth - 1, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                    p_final_beg, p_end, h0, sign, n_leapfrog, log_sum_weight_final,
                    sum_metro_prob)) {
      return false;
    }

    S log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = z_propose_final;
    } else if (uniform_(rng_) < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = z_propose_final;
    }

    Vec<S> rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
    Vec<S> rho_extended = rho_init + p_final_beg;
    persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, rho_extended);
    rho_extended = rho_final + p_init_end;
    persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, rho_extended);
    return persist;
  }

  static constexpr double kMaxDeltaH = 1000.0;

  const Density& density_;
  std::mt19937_64& rng_;
  int max_depth_;
  Vec<S> inv_metric_;
  S step_ = 1;
  PhasePoint<S> current_;
  bool divergent_ = false;
  std::normal_distribution<S> normal_{0, 1};
  std::uniform_real_distribution<S> uniform_{0, 1};
};

/// How each chain picks its starting point.
template <typename S>
struct InitStrategy {
  // Each coordinate uniform on [-radius, radius] unless `point` is given.
  S radius = 1;
  std::optional<Vec<S>> point;
  int max_attempts = 100;
};

template <typename S, class Density>
void run_chain(const Density& density, int dimension, const SamplerConfig& config,
               const InitStrategy<S>& init, int chain, BasicPosteriorDraws<S>& out) {
  std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(chain)));
  NutsKernel<S, Density> kernel(density, rng, config.max_tree_depth);
  kernel.set_inv_metric(Vec<S>::Ones(dimension));

  PhasePoint<S> z;
  z.grad.resize(dimension);
  std::uniform_real_distribution<S> jitter(-init.radius, init.radius);
  bool ok = false;
  for (int attempt = 0; attempt < init.max_attempts && !ok; ++attempt) {
    if (init.point && attempt == 0) {
      z.q = *init.point;
    } else {
      z.q = Vec<S>::NullaryExpr(dimension, [&](Eigen::Index) { return jitter(rng); });
    }
    ok = kernel.evaluate(z);
  }
  if (!ok) throw FitError("log density is not finite at any tried initial point");

  kernel.set_step_size(1);
  kernel.init_step_size(z);
  DualAveraging<S> adapt(static_cast<S>(config.target_accept));
  adapt.set_mu(std::log(S(10) * kernel.step_size()));
  WarmupSchedule schedule(config.warmup);
  VarianceEstimator<S> variance(dimension);

  int warmup_divergences = 0;
  DrawStats stats;
  for (int it = 0; it < config.warmup; ++it) {
    z = kernel.transition(z, stats);
    warmup_divergences += stats.divergent ? 1 : 0;
    kernel.set_step_size(adapt.learn(static_cast<S>(stats.accept_stat)));
    if (schedule.in_window()) variance.add_sample(z.q);
    if (schedule.end_of_window()) {
      const S n = static_cast<S>(variance.count());
      Vec<S> var = variance.variance();
      var = (n / (n + 5)) * var + Vec<S>::Constant(dimension, S(1e-3) * (5 / (n + 5)));
      kernel.set_inv_metric(var);
      variance.restart();
      kernel.init_step_size(z);
      adapt.set_mu(std::log(S(10) * kernel.step_size()));
      adapt.restart();
    }
    schedule.advance();
  }
  if (warmup_divergences == config.warmup) {
    throw FitError("every warmup transition diverged (chain " + std::to_string(chain) + ")");
  }
  kernel.set_step_size(adapt.final_step_size());

  auto& samples = out.samples[chain];
  auto& chain_stats = out.stats[chain];
  samples.resize(dimension, config.draws);
  chain_stats.resize(config.draws);
  for (int it = 0; it < config.draws; ++it) {
    z = kernel.transition(z, chain_stats[it]);
    if (!z.q.allFinite()) throw FitError("non-finite draw");
    samples.col(it) = z.q;
  }
  out.inv_metric[chain] = kernel.inv_metric();
  out.step_size[chain] = kernel.step_size();
}

/// Runs `config.chains` independent chains. Each chain owns an RNG stream
/// derived from `config.seed`, so threading never changes the draws.
template <typename S, class Density>
BasicPosteriorDraws<S> sample(const Density& density, int dimension, const SamplerConfig& config,
                              const InitStrategy<S>& init = {},
                              std::vector<std::string> names = {}) {
  config.validate();
  if (init.point && init.point->size() != dimension) {
    throw InputError("initial point has the wrong dimension");
  }
  BasicPosteriorDraws<S> out;
  out.num_chains = config.chains;
  out.num_draws = config.draws;
  out.dimension = dimension;
  out.names = std::move(names);
  if (out.names.empty()) {
    for (int i = 0; i < dimension; ++i) out.names.push_back("x[" + std::to_string(i) + "]");
  }
  out.samples.resize(config.chains);
  out.stats.resize(config.chains);
  out.inv_metric.resize(config.chains);
  out.step_size.resize(config.chains);

  std::vector<std::exception_ptr> errors(config.chains);
  auto work = [&](int c) {
    try {
      run_chain(density, dimension, config, init, c, out);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (config.parallel && config.chains > 1 && std::thread::hardware_concurrency() > 1) {
    std::vector<std::thread> threads;
    for (int c = 0; c < config.chains; ++c) threads.emplace_back(work, c);
    for (auto& t : threads) t.join();
  } else {
    for (int c = 0; c < config.chains; ++c) work(c);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace judgeirt::nuts
