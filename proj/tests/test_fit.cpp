#include <doctest.h>

#include <cmath>
#include <memory>

#include <Eigen/Dense>

#include "msgp/fields.hpp"
#include "msgp/fit.hpp"

using namespace msgp;

namespace {

BivariateMaternParams truth_params(double lambda_f = 0.1) {
  BivariateMaternParams p;
  p.lambda_f = lambda_f;
  p.lambda_c = 2.0 * lambda_f;
  p.lambda_cf = 1.5 * lambda_f;  // close to the a-constraint cap 1.512 l_f
  p.nu_f = 0.5;
  p.nu_c = 1.5;
  p.sigma_f = 1.0;
  p.sigma_c = 0.7;
  p.rho = 0.6;
  p.sigma_nc = p.sigma_nf = 1e-4;
  return p;
}

/// Synthetic multiscale dataset: fine field simulated exactly on a grid,
/// coarse field by moving-window averaging, noisy samples at both scales.
MultiscaleDataset synthetic_dataset(int grid_n, double lambda_f, int m, int n_f, int n_c,
                                    double noise, std::uint64_t seed) {
  BivariateMaternParams p;
  p.lambda_c = p.lambda_f = p.lambda_cf = lambda_f;
  p.nu_c = p.nu_f = 0.5;
  p.sigma_c = p.sigma_f = 1.0;
  p.rho = 0.0;
  auto model = std::make_shared<BivariateMaternCov>(p);
  const auto grid = StructuredGrid::make({0, 0}, 1.0, 1.0, grid_n, grid_n);
  const auto factor = NystromFactor::build(model, Scale::Fine, grid);
  const auto fine = simulate(factor, grid, Scale::Fine, 1, seed)[0];
  const auto coarse = block_average_grid(fine, m);

  const auto obs_f = sample_observations(fine, n_f, noise, seed + 1);
  const auto obs_c = sample_observations(coarse, n_c, noise, seed + 2);
  MultiscaleDataset d;
  d.X_f = obs_f.locations;
  d.y_f = obs_f.values;
  d.X_c = obs_c.locations;
  d.y_c = obs_c.values;
  return d;
}

} // namespace

TEST_CASE("transform special values and round trip") {
  BivariateMaternParams p;
  p.lambda_c = p.lambda_f = p.lambda_cf = 1.0;
  p.nu_c = p.nu_f = 1.0;
  p.sigma_c = p.sigma_f = 1.0;
  p.rho = 0.0;
  p.sigma_nc = p.sigma_nf = 1.0;
  Eigen::VectorXd z = transform(p);
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);

  p.rho = 0.5;
  CHECK(transform(p)(7) == doctest::Approx(std::log(3.0)).epsilon(1e-14));

  p = truth_params();
  z = transform(p);
  const BivariateMaternParams q = untransform(z);
  CHECK(q.lambda_c == doctest::Approx(p.lambda_c).epsilon(1e-12));
  CHECK(q.lambda_cf == doctest::Approx(p.lambda_cf).epsilon(1e-12));
  CHECK(q.nu_c == doctest::Approx(p.nu_c).epsilon(1e-12));
  CHECK(q.rho == doctest::Approx(p.rho).epsilon(1e-12));
  CHECK(q.sigma_nf == doctest::Approx(p.sigma_nf).epsilon(1e-12));

  p.rho = 1.0;
  CHECK_THROWS_AS(transform(p), msgp::domain_error);
}

TEST_CASE("objective equals -L on feasible points and dominates on infeasible ones") {
  auto d = synthetic_dataset(24, 0.15, 4, 12, 10, 0.05, 31);
  const auto p = truth_params(0.15);
  const Eigen::VectorXd z = transform(p);
  const double obj = objective(d, z, Criterion::ML);
  CHECK(obj == doctest::Approx(-log_marginal_likelihood(d, p)).epsilon(1e-12));

  // rho pushed above its bound by ~0.1: barrier plus penalty
  BivariateMaternParams bad = p;
  bad.rho = std::min(0.99, rho_bound(bad) + 0.1);
  const double obj_bad = objective(d, transform(bad), Criterion::ML);
  CHECK(obj_bad > 1e10);
  CHECK(obj_bad > obj);

  // deeper violation costs more (smooth steering penalty)
  BivariateMaternParams worse = bad;
  worse.lambda_cf *= 1.5;
  CHECK(objective(d, transform(worse), Criterion::ML) > obj_bad);
}

TEST_CASE("objective prefers the generating parameters over a perturbation") {
  auto d = synthetic_dataset(32, 0.1, 4, 40, 30, 0.05, 77);
  BivariateMaternParams p;
  p.lambda_c = p.lambda_f = p.lambda_cf = 0.1;
  p.nu_c = p.nu_f = 0.5;
  p.sigma_c = p.sigma_f = 1.0;
  p.rho = 0.0;
  p.sigma_nc = p.sigma_nf = 0.05;
  BivariateMaternParams perturbed = p;
  perturbed.lambda_f *= 1.5;
  for (Criterion c : {Criterion::ML, Criterion::LOO}) {
    CHECK(objective(d, transform(p), c) < objective(d, transform(perturbed), c));
  }
}

TEST_CASE("finite-difference gradient converges at first order or better") {
  auto d = synthetic_dataset(20, 0.2, 4, 10, 8, 0.05, 5);
  const Eigen::VectorXd z0 = transform(truth_params(0.2));
  auto grad = [&](double h) {
    Eigen::VectorXd g(10);
    Eigen::VectorXd z = z0;
    for (int i = 0; i < 10; ++i) {
      const double hh = h * std::max(1.0, std::abs(z0(i)));
      z(i) = z0(i) + hh;
      const double fp = objective(d, z, Criterion::ML);
      z(i) = z0(i) - hh;
      const double fm = objective(d, z, Criterion::ML);
      z(i) = z0(i);
      g(i) = (fp - fm) / (2.0 * hh);
    }
    return g;
  };
  const Eigen::VectorXd g1 = grad(1e-4);
  const Eigen::VectorXd g2 = grad(5e-5);
  const Eigen::VectorXd g3 = grad(2.5e-5);
  const double e12 = (g1 - g2).norm();
  const double e23 = (g2 - g3).norm();
  const double order = std::log2(e12 / e23);
  CHECK(order >= 0.9);
}

TEST_CASE("init_from_empirical recovers scales within broad factors") {
  const double lambda = 0.1;
  auto d = synthetic_dataset(48, lambda, 6, 100, 100, 0.05, 2024);
  const auto p = init_from_empirical(d);
  CHECK(check_validity(p, 1e-9).feasible);
  CHECK(p.lambda_f >= lambda / 3.0);
  CHECK(p.lambda_f <= lambda * 3.0);
  CHECK(p.sigma_f >= 1.0 / 1.5);
  CHECK(p.sigma_f <= 1.5);
  CHECK(p.nu_f == 0.5);
  CHECK(p.nu_c == 1.5);
  CHECK(p.rho > 0.0);

  // constant values: degenerate variogram
  MultiscaleDataset flat = d;
  flat.y_f.setConstant(1.0);
  flat.y_c.setConstant(1.0);
  CHECK_THROWS_AS(init_from_empirical(flat), msgp::config_error);

  // too few observations
  MultiscaleDataset tiny;
  tiny.X_f = d.X_f.topRows(3);
  tiny.y_f = d.y_f.head(3);
  tiny.X_c = d.X_c.topRows(6);
  tiny.y_c = d.y_c.head(6);
  CHECK_THROWS_AS(init_from_empirical(tiny), msgp::config_error);
}

TEST_CASE("fit: descent, feasibility, determinism on a small dataset") {
  auto d = synthetic_dataset(40, 0.1, 6, 60, 40, 0.05, 99);
  FitOptions opt;
  opt.n_starts = 2;
  opt.max_iters = 60;
  opt.seed = 7;

  const auto init = init_from_empirical(d);
  const double obj_init = objective(d, transform(init), Criterion::ML);

  const auto r1 = fit(d, Criterion::ML, init, opt);
  CHECK(check_validity(r1.theta, 1e-9).feasible);
  CHECK(r1.objective_value <= obj_init);
  CHECK(r1.theta.sigma_f > 0.4);
  CHECK(r1.theta.sigma_f < 2.5);

  // objective_value consistent with re-evaluation at theta
  const double re = objective(d, transform(r1.theta), r1.criterion);
  CHECK(std::abs(re - r1.objective_value) <= 1e-10 * std::max(1.0, std::abs(re)));

  // bit-for-bit determinism
  const auto r2 = fit(d, Criterion::ML, init, opt);
  CHECK(r1.theta.lambda_f == r2.theta.lambda_f);
  CHECK(r1.theta.rho == r2.theta.rho);
  CHECK(r1.objective_value == r2.objective_value);
  CHECK(r1.start_index == r2.start_index);
  CHECK(r1.n_evals == r2.n_evals);
}

TEST_CASE("fit on a fine-only dataset reduces to the univariate parameter set") {
  auto full = synthetic_dataset(32, 0.12, 4, 50, 10, 0.05, 123);
  MultiscaleDataset d;
  d.X_f = full.X_f;
  d.y_f = full.y_f;
  FitOptions opt;
  opt.n_starts = 1;
  opt.max_iters = 50;
  const auto r = fit(d, Criterion::ML, std::nullopt, opt);
  CHECK(r.theta.rho == 0.0);
  CHECK(r.theta.lambda_c == r.theta.lambda_f);
  CHECK(r.theta.nu_c == r.theta.nu_f);
  CHECK(check_validity(r.theta, 1e-9).feasible);
}

TEST_CASE("fit_block_avg smoke test") {
  auto d = synthetic_dataset(24, 0.2, 4, 10, 6, 0.05, 17);
  BlockAvgFitConfig cfg;
  cfg.domain = Rect{0, 0, 1, 1};
  cfg.eta_c = 4.0 / 24.0;
  cfg.quad_order = 3;
  FitOptions opt;
  opt.n_starts = 1;
  opt.max_iters = 20;
  opt.max_evals = 400;
  const auto r = fit_block_avg(d, Criterion::ML, cfg, opt);
  CHECK(r.sigma_f > 0.2);
  CHECK(r.sigma_f < 4.0);
  CHECK(r.lambda_f > 0.01);
  CHECK(r.lambda_f < 1.0);
  CHECK(r.eta_c == cfg.eta_c);
  CHECK(r.n_evals > 0);
}
