#include <doctest.h>

#include <cmath>
#include <numbers>

#include "judgeirt/grm.hpp"
#include "support.hpp"

using namespace judgeirt;
using Eigen::VectorXd;

namespace {

double log_normal(double x, double sd) {
  return -0.5 * (x / sd) * (x / sd) - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

// Direct evaluation from category probabilities, priors and the Jacobian.
double reference_log_posterior(const UnconstrainedParams& u, const IndexedDataset& d) {
  auto g = to_constrained(u);
  double lp = 0.0;
  for (const auto& o : d.observations) {
    auto probs = category_probabilities<double>(g.theta[o.subject], g.alpha[o.item], g.beta[o.item]);
    lp += std::log(probs[o.category - 1]);
  }
  for (Eigen::Index j = 0; j < g.theta.size(); ++j) lp += log_normal(g.theta[j], 1.0);
  for (Eigen::Index p = 0; p < g.alpha.size(); ++p) lp += log_normal(u.log_alpha[p], kLogAlphaPriorSd);
  for (const auto& b : g.beta) {
    for (Eigen::Index k = 0; k < b.size(); ++k) lp += log_normal(b[k], 1.0);
  }
  for (const auto& z : u.z) lp += z.tail(z.size() - 1).sum();
  return lp;
}

VectorXd central_difference(const GrmLogDensity& f, const VectorXd& x, double h = 1e-6) {
  VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f.log_density(a) - f.log_density(b)) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("logistic oracle values") {
  CHECK(logistic(2.0) == doctest::Approx(0.8807970779778823).epsilon(1e-15));
  CHECK(logistic(0.0) == 0.5);
  CHECK(logistic(-800.0) >= 0.0);
  CHECK(logistic(800.0) == 1.0);
  CHECK(std::isfinite(log_logistic(-800.0)));
  CHECK(log_logistic(-800.0) == doctest::Approx(-800.0));
  CHECK(cumulative_probability(1.0, 2.0, 0.0) == doctest::Approx(0.8807970779778823));
}

TEST_CASE("category probabilities for symmetric thresholds") {
  VectorXd beta(2);
  beta << -1.0, 1.0;
  auto p = category_probabilities<double>(0.0, 1.0, beta);
  REQUIRE(p.size() == 3);
  CHECK(std::abs(p[0] - 0.2689414213699951) < 1e-12);
  CHECK(std::abs(p[1] - 0.46211715726000974) < 1e-12);
  CHECK(std::abs(p[2] - 0.2689414213699951) < 1e-12);
}

TEST_CASE("category probabilities stay positive and sum to one") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int rep = 0; rep < 500; ++rep) {
    const int k = 2 + rep % 6;
    VectorXd z(k - 1);
    for (int i = 0; i < k - 1; ++i) z[i] = i == 0 ? n(rng) : n(rng) / 3.0 - 3.0;
    auto beta = ordered_from_free<double>(z);
    const double alpha = std::exp(n(rng) / 6.0);
    auto p = category_probabilities<double>(n(rng), alpha, beta);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK((p.array() > 0).all());
  }
}

TEST_CASE("invalid parameters are rejected") {
  VectorXd unordered(2);
  unordered << 1.0, -1.0;
  VectorXd ok(2);
  ok << -1.0, 1.0;
  CHECK_THROWS_AS(category_probabilities<double>(0.0, 1.0, unordered), InputError);
  CHECK_THROWS_AS(category_probabilities<double>(0.0, 0.0, ok), InputError);
  CHECK_THROWS_AS(category_probabilities<double>(0.0, -1.0, ok), InputError);
  GrmParameters g;
  g.theta = VectorXd::Zero(1);
  g.alpha = VectorXd::Constant(1, -0.5);
  g.beta = {ok};
  CHECK_THROWS_AS(to_unconstrained(g), InputError);
}

TEST_CASE("ordered transform") {
  VectorXd z(2);
  z << 0.3, 0.0;
  auto beta = ordered_from_free<double>(z);
  CHECK(beta[0] == doctest::Approx(0.3));
  CHECK(beta[1] == doctest::Approx(1.3));
  auto back = free_from_ordered<double>(beta);
  CHECK((back - z).cwiseAbs().maxCoeff() < 1e-15);
  VectorXd tied(2);
  tied << 0.5, 0.5;
  CHECK_THROWS_AS(free_from_ordered<double>(tied), InputError);
}

TEST_CASE("constrained round trip and Jacobian") {
  std::mt19937_64 rng(11);
  auto d = relabel_categories(testing::random_ratings(rng, 6, 3, 5), "quality");
  ParameterLayout layout(d);
  for (int rep = 0; rep < 20; ++rep) {
    auto u = testing::random_unconstrained(rng, layout);
    auto back = to_unconstrained(to_constrained(u));
    CHECK((layout.pack(back) - layout.pack(u)).cwiseAbs().maxCoeff() < 1e-12);
    double expected = u.log_alpha.sum();
    for (const auto& z : u.z) {
      for (Eigen::Index k = 1; k < z.size(); ++k) expected += z[k];
    }
    CHECK(log_jacobian(u) == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("layout offsets and names") {
  ParameterLayout layout(3, {5, 2});
  CHECK(layout.dimension() == 3 + 2 + 4 + 1);
  CHECK(layout.log_alpha_offset() == 3);
  CHECK(layout.z_offset(0) == 5);
  CHECK(layout.z_offset(1) == 9);
  auto names = layout.names({"a", "b", "c"}, {"x", "y"});
  CHECK(names.front() == "theta[a]");
  CHECK(names[3] == "log_alpha[x]");
  CHECK(names[5] == "z[x][1]");
  CHECK(names.back() == "z[y][1]");
  CHECK_THROWS_AS(ParameterLayout(2, {1}), InputError);
}

TEST_CASE("log posterior matches the direct reference") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 25; ++rep) {
    auto d = relabel_categories(testing::random_ratings(rng, 2 + rep % 8, 1 + rep % 3, 5), "quality");
    ParameterLayout layout(d);
    auto u = testing::random_unconstrained(rng, layout);
    CHECK(log_posterior(u, d) == doctest::Approx(reference_log_posterior(u, d)).epsilon(1e-10));
  }
}

TEST_CASE("analytic gradient agrees with central differences") {
  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 30; ++rep) {
    auto d = relabel_categories(testing::random_ratings(rng, 2 + rep % 9, 1 + rep % 3, 5), "quality");
    GrmLogDensity f(d);
    auto u = testing::random_unconstrained(rng, f.layout());
    VectorXd x = f.layout().pack(u);
    VectorXd grad;
    const double lp = f(x, grad);
    CHECK(lp == doctest::Approx(f.log_density(x)).epsilon(1e-14));
    CHECK((grad - grad_log_posterior(u, d)).cwiseAbs().maxCoeff() == 0.0);
    VectorXd fd = central_difference(f, x);
    const double rel = ((grad - fd).cwiseAbs().array() / (1.0 + fd.cwiseAbs().array())).maxCoeff();
    CHECK(rel < 1e-6);
  }
}

TEST_CASE("gradient is finite for nearly tied thresholds and extreme theta") {
  std::vector<Observation> obs;
  for (int j = 0; j < 4; ++j) obs.push_back({"s" + std::to_string(j), "i", "q", 1 + j % 4});
  auto d = relabel_categories(RatingDataset(obs), "q");
  GrmLogDensity f(d);
  VectorXd x = VectorXd::Zero(f.dimension());
  x.head(4) << -30.0, 30.0, 0.0, 5.0;
  x.tail(3) << 0.0, -40.0, -40.0;
  VectorXd grad;
  const double lp = f(x, grad);
  CHECK(std::isfinite(lp));
  CHECK(grad.allFinite());
}

TEST_CASE("2PL density equals the GRM density on binary data") {
  std::mt19937_64 rng(29);
  for (int rep = 0; rep < 20; ++rep) {
    auto d = relabel_categories(testing::random_ratings(rng, 3 + rep % 7, 1 + rep % 3, 2), "quality");
    REQUIRE(d.all_binary());
    GrmLogDensity grm(d);
    TwoPlLogDensity two_pl(d);
    auto u = testing::random_unconstrained(rng, grm.layout());
    VectorXd x = grm.layout().pack(u);
    VectorXd g1, g2;
    const double a = grm(x, g1);
    const double b = two_pl(x, g2);
    CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));
    CHECK((g1 - g2).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(log_posterior_2pl(u, d) == doctest::Approx(log_posterior(u, d)).epsilon(1e-13));
  }
}

TEST_CASE("2PL rejects polytomous data") {
  std::vector<Observation> obs = {{"a", "i", "q", 1}, {"b", "i", "q", 2}, {"c", "i", "q", 3}};
  auto d = relabel_categories(RatingDataset(obs), "q");
  CHECK_THROWS_AS(TwoPlLogDensity{d}, InputError);
}

TEST_CASE("parameter JSON round trip") {
  GrmParameters g;
  g.theta = VectorXd::LinSpaced(3, -1.0, 1.0);
  g.alpha = VectorXd::Constant(2, 1.25);
  VectorXd b1(2), b2(1);
  b1 << -0.5, 0.5;
  b2 << 0.1;
  g.beta = {b1, b2};
  auto j = parameters_to_json(g, {"s1", "s2", "s3"}, {"x", "y"});
  CHECK(j["alpha"]["x"] == 1.25);
  CHECK(j["beta"]["x"].size() == 2);
  auto back = parameters_from_json(j);
  CHECK(back.item_ids == std::vector<std::string>{"x", "y"});
  CHECK(back.subject_ids == std::vector<std::string>{"s1", "s2", "s3"});
  CHECK(back.params.theta.isApprox(g.theta));
  CHECK(back.params.beta[0].isApprox(b1));
  j["beta"]["x"] = {0.5, -0.5};
  CHECK_THROWS_AS(parameters_from_json(j), InputError);
}
