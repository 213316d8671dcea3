#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "msgp/gp.hpp"
#include "oracles.hpp"

using namespace msgp;

namespace {

BivariateMaternParams demo_params() {
  BivariateMaternParams p;
  p.lambda_c = 0.30;
  p.lambda_f = 0.15;
  p.lambda_cf = 0.22;  // near the a-constraint; rho bound ~0.69
  p.nu_c = 1.5;
  p.nu_f = 0.5;
  p.sigma_c = 0.8;
  p.sigma_f = 1.0;
  p.rho = 0.6;
  return p;
}

MultiscaleDataset random_dataset(int n_c, int n_f, std::uint64_t seed, double noise = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, 2.0), uy(0.0, 1.0), uv(-1.5, 1.5);
  MultiscaleDataset d;
  d.X_c.resize(n_c, 2);
  d.y_c.resize(n_c);
  d.X_f.resize(n_f, 2);
  d.y_f.resize(n_f);
  for (int i = 0; i < n_c; ++i) {
    d.X_c(i, 0) = ux(rng);
    d.X_c(i, 1) = uy(rng);
    d.y_c(i) = uv(rng);
  }
  for (int i = 0; i < n_f; ++i) {
    d.X_f(i, 0) = ux(rng);
    d.X_f(i, 1) = uy(rng);
    d.y_f(i) = uv(rng);
  }
  d.noise_c = d.noise_f = noise;
  return d;
}

} // namespace

TEST_CASE("assemble_cov basics") {
  auto p = demo_params();
  p.sigma_f = 1.0;
  p.sigma_nf = 0.0;
  BivariateMaternCov m(p);

  const std::vector<TaggedPoint> one{{{0.3, 0.4}, Scale::Fine}};
  const Eigen::MatrixXd C1 = assemble_cov(one, one, m);
  CHECK(C1.rows() == 1);
  CHECK(C1(0, 0) == doctest::Approx(1.0).epsilon(1e-14));

  // one coarse + one fine collocated point: off-diagonal rho sigma_c sigma_f
  const std::vector<TaggedPoint> two{{{0.3, 0.4}, Scale::Coarse}, {{0.3, 0.4}, Scale::Fine}};
  const Eigen::MatrixXd C2 = assemble_cov(two, two, m);
  CHECK(C2(0, 1) == doctest::Approx(p.rho * p.sigma_c * p.sigma_f).epsilon(1e-14));
  CHECK(C2(1, 0) == C2(0, 1));

  // 3 random tagged points vs 9 pointwise cov_full_matern calls
  const std::vector<TaggedPoint> three{
      {{0.1, 0.2}, Scale::Coarse}, {{1.2, 0.8}, Scale::Fine}, {{0.7, 0.33}, Scale::Fine}};
  const Eigen::MatrixXd C3 = assemble_cov(three, three, m);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(C3(i, j) ==
            cov_full_matern(three[i].p, three[i].scale, three[j].p, three[j].scale, p));
}

TEST_CASE("factorize identity and rank-1") {
  const auto f = CholFactor::compute(Eigen::MatrixXd::Identity(5, 5));
  CHECK(f.jitter() == 0.0);
  CHECK(f.log_det() == doctest::Approx(0.0).epsilon(1e-14));

  Eigen::VectorXd v(4);
  v << 1.0, -0.5, 2.0, 0.25;
  const Eigen::MatrixXd R1 = v * v.transpose();
  const auto f1 = CholFactor::compute(R1);
  CHECK(f1.jitter() > 0.0);

  Eigen::MatrixXd neg = -Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(CholFactor::compute(neg), msgp::numerical_error);
}

TEST_CASE("factorize near-singular smooth-kernel gram matrix") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 30;
  kernels::MaternEvaluator m(2.91);
  Eigen::MatrixXd pts(n, 2);
  for (int i = 0; i < n; ++i) {
    pts(i, 0) = u(rng);
    pts(i, 1) = u(rng);
  }
  Eigen::MatrixXd C(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      C(i, j) = m(std::hypot(pts(i, 0) - pts(j, 0), pts(i, 1) - pts(j, 1)) / 0.09);
  const auto f = CholFactor::compute(C);
  // log-det against the eigendecomposition of the jittered matrix
  Eigen::MatrixXd A = C;
  A.diagonal().array() += f.jitter();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  const double want = es.eigenvalues().array().log().sum();
  CHECK(std::isfinite(f.log_det()));
  CHECK(f.log_det() == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("condition: exact interpolation at a noiseless observation") {
  const auto p = demo_params();
  BivariateMaternCov m(p);
  auto d = random_dataset(3, 4, 42);
  const std::vector<TaggedPoint> targets{d.obs(1), d.obs(5)};
  const auto post = condition(d, m, targets);
  CHECK(std::abs(post.mean(0) - d.value(1)) < 1e-8);
  CHECK(std::abs(post.mean(1) - d.value(5)) < 1e-8);
  CHECK(post.variance(0) <= 1e-8);
  CHECK(post.variance(1) <= 1e-8);
}

TEST_CASE("condition: empty target set") {
  const auto p = demo_params();
  BivariateMaternCov m(p);
  auto d = random_dataset(2, 2, 1);
  const auto post = condition(d, m, {});
  CHECK(post.mean.size() == 0);
  CHECK(post.variance.size() == 0);
}

TEST_CASE("condition matches the explicit two-point kriging solve") {
  const auto p = demo_params();
  BivariateMaternCov m(p);
  MultiscaleDataset d;
  d.X_f.resize(2, 2);
  d.X_f << 0.2, 0.3, 0.9, 0.6;
  d.y_f.resize(2);
  d.y_f << 1.1, -0.4;
  const Point t{0.5, 0.45};

  const std::vector<TaggedPoint> targets{{t, Scale::Fine}};
  const auto post = condition(d, m, targets, true);

  const Point a{0.2, 0.3}, b{0.9, 0.6};
  const double c11 = m.cov(a, Scale::Fine, a, Scale::Fine);
  const double c22 = m.cov(b, Scale::Fine, b, Scale::Fine);
  const double c12 = m.cov(a, Scale::Fine, b, Scale::Fine);
  const double k1 = m.cov(t, Scale::Fine, a, Scale::Fine);
  const double k2 = m.cov(t, Scale::Fine, b, Scale::Fine);
  const double det = c11 * c22 - c12 * c12;
  const double w1 = (c22 * k1 - c12 * k2) / det;
  const double w2 = (-c12 * k1 + c11 * k2) / det;
  const double mean = w1 * d.y_f(0) + w2 * d.y_f(1);
  const double var = m.cov(t, Scale::Fine, t, Scale::Fine) - (w1 * k1 + w2 * k2);
  CHECK(post.mean(0) == doctest::Approx(mean).epsilon(1e-12));
  CHECK(post.variance(0) == doctest::Approx(var).epsilon(1e-10));
  CHECK(post.covariance.has_value());
  CHECK((*post.covariance)(0, 0) == post.variance(0));
}

TEST_CASE("log marginal likelihood closed forms at N=1") {
  BivariateMaternParams p = demo_params();
  p.sigma_f = 1.0;
  MultiscaleDataset d;
  d.X_f.resize(1, 2);
  d.X_f << 0.5, 0.5;
  d.y_f.resize(1);
  d.y_f << 0.0;
  CHECK(log_marginal_likelihood(d, p) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));

  p.sigma_f = 0.7;
  d.y_f << 1.3;
  const double s2 = 0.49;
  const double want = -1.3 * 1.3 / (2.0 * s2) - 0.5 * std::log(s2) - 0.5 * std::log(2.0 * M_PI);
  CHECK(log_marginal_likelihood(d, p) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("likelihoods match naive oracles on random datasets") {
  const auto p = demo_params();
  BivariateMaternCov m(p);
  auto d = random_dataset(12, 13, 7, 0.05);
  const Eigen::MatrixXd C = assemble_obs_cov(d, m);
  const Eigen::VectorXd y = d.stacked_values();

  CHECK(log_marginal_likelihood(d, m) == doctest::Approx(msgp_test::naive_lml(C, y)).epsilon(1e-8));
  CHECK(loo_cv_pseudolikelihood(d, m) == doctest::Approx(msgp_test::naive_loo(C, y)).epsilon(1e-8));
}

TEST_CASE("loo with identity covariance is a sum of standard normal densities") {
  BivariateMaternParams p = demo_params();
  p.sigma_f = 1e-6;  // negligible spatial signal
  p.sigma_c = 1e-6;
  p.sigma_nf = 1.0;  // unit nugget dominates
  MultiscaleDataset d;
  d.X_f.resize(2, 2);
  d.X_f << 0.1, 0.1, 1.9, 0.9;
  d.y_f.resize(2);
  d.y_f << 0.7, -1.2;
  const double a = 0.7, b = -1.2;
  const double want = -0.5 * (a * a + b * b) - std::log(2.0 * M_PI);
  CHECK(loo_cv_pseudolikelihood(d, p) == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("likelihoods are invariant under observation permutations and relabeling") {
  const auto p = demo_params();
  auto d = random_dataset(8, 9, 21, 0.03);
  const double lml = log_marginal_likelihood(d, p);
  const double loo = loo_cv_pseudolikelihood(d, p);

  // permute within scales (stacked order keeps coarse first)
  MultiscaleDataset d2 = d;
  std::vector<int> pc{4, 0, 6, 2, 7, 1, 3, 5}, pf{8, 3, 0, 6, 1, 7, 2, 4, 5};
  for (int i = 0; i < 8; ++i) {
    d2.X_c.row(i) = d.X_c.row(pc[i]);
    d2.y_c(i) = d.y_c(pc[i]);
  }
  for (int i = 0; i < 9; ++i) {
    d2.X_f.row(i) = d.X_f.row(pf[i]);
    d2.y_f(i) = d.y_f(pf[i]);
  }
  CHECK(log_marginal_likelihood(d2, p) == doctest::Approx(lml).epsilon(1e-10));
  CHECK(loo_cv_pseudolikelihood(d2, p) == doctest::Approx(loo).epsilon(1e-10));

  // relabel which scale is "first": swap scale roles in data and parameters
  MultiscaleDataset swapped;
  swapped.X_c = d.X_f;
  swapped.y_c = d.y_f;
  swapped.X_f = d.X_c;
  swapped.y_f = d.y_c;
  swapped.noise_c = d.noise_f;
  swapped.noise_f = d.noise_c;
  BivariateMaternParams q = p;
  std::swap(q.lambda_c, q.lambda_f);
  std::swap(q.nu_c, q.nu_f);
  std::swap(q.sigma_c, q.sigma_f);
  std::swap(q.sigma_nc, q.sigma_nf);
  CHECK(log_marginal_likelihood(swapped, q) == doctest::Approx(lml).epsilon(1e-10));
}

TEST_CASE("posterior variance never exceeds the prior and shrinks with data") {
  const auto p = demo_params();
  BivariateMaternCov m(p);
  auto d_small = random_dataset(5, 6, 3, 0.05);
  auto d_big = d_small;
  {
    // superset: three more fine observations
    auto extra = random_dataset(0, 3, 4, 0.05);
    d_big.X_f.conservativeResize(9, 2);
    d_big.y_f.conservativeResize(9);
    d_big.X_f.bottomRows(3) = extra.X_f;
    d_big.y_f.tail(3) = extra.y_f;
  }
  std::vector<TaggedPoint> targets;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ux(0.0, 2.0), uy(0.0, 1.0);
  for (int i = 0; i < 20; ++i)
    targets.push_back({{ux(rng), uy(rng)}, i % 2 ? Scale::Fine : Scale::Coarse});

  const auto post_small = condition(d_small, m, targets);
  const auto post_big = condition(d_big, m, targets);
  for (int i = 0; i < 20; ++i) {
    const double prior = m.cov_latent(targets[i].p, targets[i].scale, targets[i].p,
                                      targets[i].scale);
    CHECK(post_small.variance(i) <= prior + 1e-10);
    CHECK(post_big.variance(i) <= post_small.variance(i) + 1e-10);
  }
}

TEST_CASE("single-scale conditioning reproduces univariate simple kriging") {
  const auto p = demo_params();
  BivariateMaternCov m(p);
  auto d = random_dataset(0, 10, 55, 0.02);

  std::vector<TaggedPoint> targets{{{0.4, 0.7}, Scale::Fine}, {{1.6, 0.1}, Scale::Fine}};
  const auto post = condition(d, m, targets);

  // independent univariate reference built directly on the fine kernel
  kernels::MaternEvaluator ev(p.nu_f);
  auto kf = [&](const Point& a, const Point& b) {
    return p.sigma_f * p.sigma_f * ev(distance(a, b) / p.lambda_f);
  };
  const int n = d.n_f();
  Eigen::MatrixXd C(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      C(i, j) = kf({d.X_f(i, 0), d.X_f(i, 1)}, {d.X_f(j, 0), d.X_f(j, 1)});
      if (i == j) C(i, j) += d.noise_f * d.noise_f;
    }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(C);
  for (int t = 0; t < 2; ++t) {
    Eigen::VectorXd k(n);
    for (int i = 0; i < n; ++i) k(i) = kf(targets[t].p, {d.X_f(i, 0), d.X_f(i, 1)});
    const Eigen::VectorXd w = ldlt.solve(k);
    CHECK(post.mean(t) == doctest::Approx(w.dot(d.y_f)).epsilon(1e-10));
    CHECK(post.variance(t) ==
          doctest::Approx(kf(targets[t].p, targets[t].p) - w.dot(k)).epsilon(1e-9));
  }
}

TEST_CASE("infeasible parameters yield a -inf likelihood sentinel") {
  auto p = demo_params();
  p.rho = 0.99;
  p.lambda_cf = 10.0;  // violates both conditions
  auto d = random_dataset(2, 2, 5);
  CHECK(std::isinf(log_marginal_likelihood(d, p)));
  CHECK(log_marginal_likelihood(d, p) < 0);
  CHECK(std::isinf(loo_cv_pseudolikelihood(d, p)));
}

TEST_CASE("duplicate observations without noise are rejected") {
  const auto p = demo_params();
  BivariateMaternCov m(p);
  MultiscaleDataset d;
  d.X_f.resize(2, 2);
  d.X_f << 0.5, 0.5, 0.5, 0.5;
  d.y_f.resize(2);
  d.y_f << 1.0, 1.1;
  CHECK_THROWS_AS(assemble_obs_cov(d, m), msgp::domain_error);
  d.noise_f = 0.1;
  CHECK_NOTHROW(assemble_obs_cov(d, m));
}
