// Prints one PASS/FAIL line per acceptance criterion and exits nonzero if
// any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "gate_table.hpp"
#include "judgeirt/diagnostics.hpp"
#include "judgeirt/grm.hpp"
#include "judgeirt/metrics.hpp"
#include "judgeirt/perturbation.hpp"
#include "judgeirt/phases.hpp"
#include "judgeirt/pipeline.hpp"
#include "judgeirt/synthetic.hpp"
#include "support.hpp"
#include "template_gen.hpp"

using namespace judgeirt;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;    // failed requirements
  std::string measured;  // observed values, reported either way

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool close(double a, double b, double tol = 1e-12) { return std::abs(a - b) <= tol; }

// 1. Analytic gradient against central differences.
Outcome gradient_correctness() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(42);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int j = 2 + static_cast<int>(rng() % 9);
    const int p = 1 + static_cast<int>(rng() % 3);
    auto d = relabel_categories(testing::random_ratings(rng, j, p, 5), "quality");
    GrmLogDensity f(d);
    VectorXd x = f.layout().pack(testing::random_unconstrained(rng, f.layout()));
    VectorXd grad;
    f(x, grad);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double h = 1e-6;
      VectorXd a = x, b = x;
      a[i] += h;
      b[i] -= h;
      const double fd = (f.log_density(a) - f.log_density(b)) / (2 * h);
      worst = std::max(worst, std::abs(grad[i] - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  const double secs = seconds_since(t0);
  o.require(worst < 1e-6, "max relative error " + fmt("%.2e", worst));
  o.require(secs < 10.0, "runtime " + fmt("%.1f s", secs));
  o.measured = "max relative error " + fmt("%.2e", worst) + ", " + fmt("%.2f s", secs);
  return o;
}

// 2. NUTS on a 2-D standard normal.
Outcome sampler_correctness() {
  Outcome o;
  const auto t0 = Clock::now();
  auto target = [](const VectorXd& x, VectorXd& g) {
    g = -x;
    return -0.5 * x.squaredNorm();
  };
  nuts::SamplerConfig config;
  config.chains = 4;
  config.draws = 1000;
  config.seed = 42;
  auto draws = nuts::sample<double>(target, 2, config);
  MatrixXd all(2, 4000);
  for (int c = 0; c < 4; ++c) all.middleCols(c * 1000, 1000) = draws.samples[c];
  const VectorXd mean = all.rowwise().mean();
  const MatrixXd centered = all.colwise() - mean;
  const MatrixXd cov = centered * centered.transpose() / 3999.0;
  const double cov_err = (cov - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff();
  auto rhat = split_rhat(draws);
  auto ess = ess_bulk(draws);
  double max_rhat = 0.0, min_ess = 1e300;
  for (int i = 0; i < 2; ++i) {
    max_rhat = std::max(max_rhat, rhat[i].value);
    min_ess = std::min(min_ess, ess[i].value);
  }
  const double secs = seconds_since(t0);
  o.require(mean.cwiseAbs().maxCoeff() < 0.1, "mean " + fmt("%.3f", mean.cwiseAbs().maxCoeff()));
  o.require(cov_err < 0.15, "covariance error " + fmt("%.3f", cov_err));
  o.require(max_rhat < 1.01, "R-hat " + fmt("%.4f", max_rhat));
  o.require(min_ess > 400, "ESS " + fmt("%.0f", min_ess));
  o.require(secs < 30.0, "runtime " + fmt("%.1f s", secs));
  {
    o.measured = "|mean| " + fmt("%.3f", mean.cwiseAbs().maxCoeff()) + ", cov err " +
               fmt("%.3f", cov_err) + ", R-hat " + fmt("%.4f", max_rhat) + ", ESS " +
               fmt("%.0f", min_ess) + ", " + fmt("%.1f s", secs);
  }
  return o;
}

// 3. End-to-end parameter recovery with the default sampler settings.
Outcome parameter_recovery() {
  Outcome o;
  const auto t0 = Clock::now();
  auto tp = make_true_parameters({0.7, 1.0, 1.3, 1.8}, 5, -1.5, 1.5);
  tp.seed = 42;
  nuts::SamplerConfig config;  // 4 chains, 1000 warmup, 1000 draws
  auto r = recovery_experiment(tp, 300, config);
  const double secs = seconds_since(t0);
  double worst_alpha = 0.0;
  for (double e : r.alpha_error) worst_alpha = std::max(worst_alpha, std::abs(e));
  o.require(r.theta_pearson >= 0.85, "theta correlation " + fmt("%.3f", r.theta_pearson));
  o.require(worst_alpha <= 0.3, "alpha error " + fmt("%.3f", worst_alpha));
  o.require(r.max_rhat < 1.01, "R-hat " + fmt("%.4f", r.max_rhat));
  o.require(r.divergence_fraction() < 0.01, "divergences " + std::to_string(r.divergences));
  o.require(secs < 600.0, "runtime " + fmt("%.0f s", secs));
  {
    o.measured = "r(theta) " + fmt("%.3f", r.theta_pearson) + ", max |alpha err| " +
               fmt("%.3f", worst_alpha) + ", R-hat " + fmt("%.4f", r.max_rhat) + ", " +
               std::to_string(r.divergences) + " divergences, " + fmt("%.0f s", secs);
  }
  return o;
}

// 4. 2PL and GRM agree on binary data.
Outcome two_pl_reduction() {
  Outcome o;
  std::mt19937_64 rng(4242);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const int j = 2 + static_cast<int>(rng() % 12);
    const int p = 1 + static_cast<int>(rng() % 4);
    auto d = relabel_categories(testing::random_ratings(rng, j, p, 2), "quality");
    auto u = testing::random_unconstrained(rng, ParameterLayout(d));
    worst = std::max(worst, std::abs(log_posterior(u, d) - log_posterior_2pl(u, d)));
  }
  o.require(worst <= 1e-12, "max difference " + fmt("%.2e", worst));
  o.measured = "max difference " + fmt("%.2e", worst) + " over 50 instances";
  return o;
}

double brute_force_w1(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<std::size_t> perm(b.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) cost += std::abs(a[i] - b[perm[i]]);
    best = std::min(best, cost / static_cast<double>(a.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double cdf_integral_w1(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pts(a);
  pts.insert(pts.end(), b.begin(), b.end());
  std::sort(pts.begin(), pts.end());
  auto ecdf = [](const std::vector<double>& s, double x) {
    return static_cast<double>(std::count_if(s.begin(), s.end(), [&](double v) { return v <= x; })) /
           static_cast<double>(s.size());
  };
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    total += (pts[i + 1] - pts[i]) * std::abs(ecdf(a, pts[i]) - ecdf(b, pts[i]));
  }
  return total;
}

// 5. Metric examples and the Wasserstein oracle suite.
Outcome metric_oracles() {
  Outcome o;
  auto expect = [&](bool ok, const std::string& what) { o.require(ok, what); };
  auto throws = [](const std::function<void()>& f) {
    try {
      f();
    } catch (const InputError&) {
      return true;
    }
    return false;
  };

  {
    ParameterLayout layout(1, {2});
    nuts::PosteriorDraws d;
    d.num_chains = 2;
    d.num_draws = 1;
    d.dimension = 3;
    MatrixXd c0 = MatrixXd::Zero(3, 1), c1 = MatrixXd::Zero(3, 1);
    c1(0, 0) = 2.0;
    d.samples = {c0, c1};
    auto s = summarize(d, layout);
    expect(s.theta_hat[0] == 1.0 && s.theta_var[0] == 2.0, "summarize {0, 2}");
    d.samples = {c0, c0};
    expect(summarize(d, layout).theta_var[0] == 0.0, "summarize constant");
  }
  {
    auto one_item = [](const std::vector<int>& scores) {
      std::vector<Observation> obs;
      for (std::size_t j = 0; j < scores.size(); ++j) {
        obs.push_back({"s" + std::to_string(10 + j), "item", "q", scores[j]});
      }
      return relabel_categories(RatingDataset(obs), "q");
    };
    VectorXd t4(4);
    t4 << 0, 0, 1, 1;
    expect(within_rating_variance(t4, one_item({1, 1, 2, 2}), 0).vbar == 0.0, "vbar zero");
    const double a = std::sqrt(0.2), b = std::sqrt(0.4);
    VectorXd t6(6);
    t6 << -a, 0, a, 1 - b, 1, 1 + b;
    expect(close(within_rating_variance(t6, one_item({1, 1, 1, 2, 2, 2}), 0).vbar, 0.6),
           "vbar 0.2 + 0.4");
    VectorXd t5(5);
    t5 << 0, 1, 2, 2, 9;
    auto w = within_rating_variance(t5, one_item({1, 1, 2, 2, 3}), 0);
    expect(w.excluded_categories == std::vector<int>{3} && close(w.vbar, 0.5), "vbar singleton");
  }
  {
    expect(prompt_consistency({{"a", 1}, {"b", 1}, {"c", 1}, {"d", 1}}).cv == 0.0, "C_V flat");
    auto pc = prompt_consistency({{"a", 1}, {"b", 1}, {"c", 1}, {"d", 2}});
    expect(pc.mu_v == 1.25 && pc.sigma_v == 0.5 && close(pc.cv, 0.4), "C_V 0.4");
    expect(throws([] { prompt_consistency({{"a", 1}}); }), "C_V single item");
    expect(throws([] { prompt_consistency({{"a", 0}, {"b", 0.5}, {"c", -0.5}}); }), "C_V zero mean");
  }
  {
    const double x = std::sqrt(0.7);
    VectorXd t(3);
    t << -x, 0, x;
    expect(close(marginal_reliability(t, VectorXd::Constant(3, 0.3)), 0.7), "rho 0.7");
    expect(marginal_reliability(t, VectorXd::Zero(3)) == 1.0, "rho 1");
    expect(marginal_reliability(VectorXd::Constant(3, 0.5), VectorXd::Constant(3, 0.2)) == 0.0,
           "rho 0");
    expect(throws([] { marginal_reliability(VectorXd::Zero(1), VectorXd::Zero(1)); }), "rho J < 2");
  }
  {
    std::vector<double> th = {-1.0, 0.5, 1.5}, sc = {1, 2, 3}, same = {0.3, 0.3, 0.3}, flat = {2, 2, 2};
    expect(theta_range(th, sc) == 2.5, "theta_range 2.5");
    expect(theta_range(same, sc) == 0.0, "theta_range identical");
    expect(throws([&] { theta_range(th, flat); }), "theta_range single score");
    auto r = discrimination_breadth_ratio(3.0, 1.5);
    expect(r.ratio == 2.0 && r.label == Calibration::insensitive, "ratio 2");
    expect(discrimination_breadth_ratio(0.86, 1.0).label == Calibration::hypersensitive, "ratio 0.86");
    expect(discrimination_breadth_ratio(1.3, 1.3).label == Calibration::near_human, "ratio 1");
    expect(throws([] { discrimination_breadth_ratio(1.0, 0.0); }), "ratio zero human range");
  }
  {
    std::vector<double> a = {0, 1}, b = {1, 2}, empty;
    expect(wasserstein_1d(a, b) == 1.0, "W1 {0,1} {1,2}");
    expect(throws([&] { wasserstein_1d(empty, a); }), "W1 empty");
    std::vector<double> x = {1, 2, 3, 4, 5}, up = {2, 4, 6, 8, 10}, down = {5, 4, 3, 2, 1};
    expect(close(pearson(x, up).r, 1.0) && close(pearson(x, down).r, -1.0), "pearson +-1");
  }

  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> size(1, 6);
  std::normal_distribution<double> n(0.0, 2.0);
  double worst_assign = 0.0, worst_cdf = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const int m = size(rng);
    std::vector<double> a(m), b(m);
    for (auto& v : a) v = n(rng);
    // Half the cases use coarse values so ties occur.
    for (auto& v : b) v = rep % 2 ? n(rng) : std::round(n(rng));
    worst_assign = std::max(worst_assign, std::abs(wasserstein_1d(a, b) - brute_force_w1(a, b)));
    std::vector<double> c(static_cast<std::size_t>(size(rng)));
    for (auto& v : c) v = n(rng);
    worst_cdf = std::max(worst_cdf, std::abs(wasserstein_1d(a, c) - cdf_integral_w1(a, c)));
  }
  expect(worst_assign <= 1e-12, "W1 vs assignment " + fmt("%.2e", worst_assign));
  expect(worst_cdf <= 1e-12, "W1 vs CDF integral " + fmt("%.2e", worst_cdf));
  {
    o.measured = "examples checked; W1 max deviation " + fmt("%.1e", worst_assign) +
               " (assignment), " + fmt("%.1e", worst_cdf) + " (CDF) over 200 cases";
  }
  return o;
}

// 6. Gate semantics.
Outcome gate_semantics() {
  Outcome o;
  int n = 0;
  for (const auto& c : testing::gate_cases()) {
    ++n;
    o.require(phase1_verdict(c.cv, c.rho, true) == c.pass,
              "C_V " + fmt("%.7f", c.cv) + ", rho " + fmt("%.7f", c.rho));
  }
  o.measured = std::to_string(n) + " cases including C_V = 0.10 and rho = 0.70";
  return o;
}

// 7. The same matrix fitted as LLM and human.
Outcome self_consistency() {
  Outcome o;
  const auto t0 = Clock::now();
  auto tp = make_true_parameters({0.7, 1.0, 1.3, 1.8}, 5);
  std::string summary;
  for (std::uint64_t seed : {42u, 43u, 44u, 45u, 46u}) {
    auto d = simulate_dataset(tp, 300, seed);
    Phase2Config config;
    config.sampler.seed = seed;
    auto r = run_phase2(d, d, "quality", config, true);
    const bool ok = r.theta_ratio >= 0.9 && r.theta_ratio <= 1.1 && r.d_wasserstein < 0.1;
    o.require(ok, "seed " + std::to_string(seed) + ": ratio " + fmt("%.3f", r.theta_ratio) +
                      ", D_W " + fmt("%.3f", r.d_wasserstein));
    if (!summary.empty()) summary += ", ";
    summary += fmt("%.3f", r.theta_ratio) + "/" + fmt("%.3f", r.d_wasserstein);
  }
  o.measured = "ratio/D_W per seed " + summary + ", " + fmt("%.0f s", seconds_since(t0));
  return o;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(JUDGEIRT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Runs perturb, simulate, fit, phase1, phase2 and report in `dir`.
std::string run_pipeline(const fs::path& dir) {
  write_text_file(dir / "template.txt",
                  "Please evaluate the summary below on a scale from 1 to 5.\n"
                  "Consider whether it is accurate, relevant and clear.\n"
                  "Provide a careful and detailed judgement of its overall quality.\n"
                  "Summary: {summary}\n"
                  "Return your answer in JSON format.");
  auto llm = make_true_parameters({1.6, 1.5, 1.4, 1.5}, 5);
  llm.item_ids = {"original", "typo", "newline", "paraphrase"};
  write_json_file(dir / "llm_params.json", to_json(llm));
  auto human = make_true_parameters({1.2, 1.0, 1.4}, 5);
  human.item_ids = {"h1", "h2", "h3"};
  write_json_file(dir / "human_params.json", to_json(human));
  write_json_file(dir / "config.json",
                  nlohmann::json::parse(R"({"sampler": {"chains": 4, "warmup": 300, "draws": 300}})"));
  const std::string base = "--seed 42 --config " + q(dir / "config.json");
  const std::string out = " --out " + q(dir / "out");
  std::string codes;
  auto step = [&](const std::string& args) { codes += std::to_string(run_cli(base + args)) + " "; };
  step(" --out " + q(dir / "out/variants.json") + " perturb --template " + q(dir / "template.txt"));
  step(" --out " + q(dir / "out/llm.csv") + " simulate --subjects 120 --params " + q(dir / "llm_params.json"));
  step(" --out " + q(dir / "out/human.csv") + " simulate --subjects 120 --params " + q(dir / "human_params.json"));
  step(out + " fit --allow-bad-fit --ratings " + q(dir / "out/llm.csv"));
  step(out + " phase1 --ratings " + q(dir / "out/llm.csv"));
  step(out + " phase2 --override-gate --phase1 " + q(dir / "out/phase1_report.json") + " --llm " +
       q(dir / "out/llm.csv") + " --human " + q(dir / "out/human.csv"));
  step(out + " report --phase1 " + q(dir / "out/phase1_report.json") + " --phase2 " +
       q(dir / "out/phase2_report.json"));
  return codes;
}

// 8. Byte-identical reports across two runs.
Outcome determinism() {
  Outcome o;
  testing::TempDir a("det_a"), b("det_b");
  const auto codes_a = run_pipeline(a.path());
  const auto codes_b = run_pipeline(b.path());
  o.require(codes_a == codes_b, "exit codes differ: " + codes_a + "vs " + codes_b);
  int compared = 0;
  for (const char* name : {"variants.json", "llm.csv", "human.csv", "fit_summary.json",
                           "fit_diagnostics.json", "phase1_report.json", "phase2_report.json",
                           "report.json"}) {
    const fs::path pa = a / "out" / name, pb = b / "out" / name;
    if (!fs::exists(pa) || !fs::exists(pb)) {
      o.require(false, std::string(name) + " missing");
      continue;
    }
    o.require(read_text_file(pa) == read_text_file(pb), std::string(name) + " differs");
    ++compared;
  }
  o.measured = std::to_string(compared) + " artifacts identical (exit codes " + codes_a + ")";
  return o;
}

// 9. Perturbation fidelity.
Outcome perturbation_fidelity() {
  Outcome o;
  std::mt19937_64 rng(9);
  const auto hooks = PerturbationHooks::defaults();
  int bad = 0;
  for (int rep = 0; rep < 200; ++rep) {
    auto t = testing::random_template(rng);
    try {
      auto v = generate_all(t, hooks, 42 + rep);
      const bool ok = testing::changed_words(t.text, v.typo) == kTypoTokens &&
                      testing::changed_words(t.text, v.paraphrase) == kParaphraseTokens &&
                      testing::skeleton(v.typo) == testing::skeleton(t.text) &&
                      testing::skeleton(v.paraphrase) == testing::skeleton(t.text) &&
                      testing::placeholder_texts(v.newline) == testing::placeholder_texts(t.text) &&
                      strip_inserted_newlines(v.newline, v.log.newline_positions) == t.text;
      bad += !ok;
    } catch (const std::exception&) {
      ++bad;
    }
  }
  o.require(bad == 0, std::to_string(bad) + " of 200 templates violated a property");

  const std::string exemplar =
      "Please evaluate the summary below and provide a careful, accurate score.\n"
      "Consider whether the text is clear and relevant to the {article}.";
  auto t = PromptTemplate::with_default_protection(exemplar);
  auto typo_hooks = hooks;
  typo_hooks.salience = [](const std::string& w, std::size_t) {
    return w == "Please" ? 1e9 : default_salience(w);
  };
  typo_hooks.swap_position = [](const std::string& w, std::mt19937_64& r) -> std::size_t {
    return w == "Please" ? 0 : PerturbationHooks::defaults().swap_position(w, r);
  };
  auto typo = typo_variant(t, typo_hooks, 42);
  const bool please = std::any_of(typo.log.typo_tokens.begin(), typo.log.typo_tokens.end(),
                                  [](const TypoChange& c) { return c.original == "Please" && c.perturbed == "lPease"; });
  o.require(please, "Please -> lPease not reproduced");
  auto para_hooks = hooks;
  para_hooks.pos_tagger = [](const std::string& w) {
    static const std::set<std::string> chosen = {"evaluate", "provide", "careful", "accurate", "clear"};
    return chosen.count(w) ? PosTag::verb : PosTag::other;
  };
  auto para = paraphrase_variant(t, para_hooks, 42);
  const bool assess = std::any_of(para.log.paraphrase_pairs.begin(), para.log.paraphrase_pairs.end(),
                                  [](const SynonymChange& c) { return c.original == "evaluate" && c.replacement == "assess"; });
  o.require(assess, "evaluate -> assess not reproduced");
  o.measured = "200 templates and both exemplars checked";
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"gradient correctness", gradient_correctness},
      {"sampler correctness", sampler_correctness},
      {"parameter recovery", parameter_recovery},
      {"2PL reduction", two_pl_reduction},
      {"metric oracles", metric_oracles},
      {"gate semantics", gate_semantics},
      {"Phase 2 self-consistency", self_consistency},
      {"pipeline determinism", determinism},
      {"perturbation fidelity", perturbation_fidelity},
  };
  int failures = 0;
  int index = 0;
  for (const auto& c : criteria) {
    ++index;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::string text = o.measured;
    if (!o.pass) text = "failed: " + o.detail + (o.measured.empty() ? "" : " | " + o.measured);
    std::printf("[%s] criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", index, c.name,
                text.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
