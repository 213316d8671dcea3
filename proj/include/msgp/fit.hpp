#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msgp/gp.hpp"

namespace msgp {

struct FitOptions {
  int n_starts = 5;
  int max_evals = 2000;      // per start
  double tol = 1e-6;         // gradient-infinity-norm tolerance, transformed space
  std::uint64_t seed = 0;    // restart jitter
  double fd_step = 1e-5;     // central-difference step (relative per coordinate)
  int max_iters = 200;       // per start
};

struct FitResult {
  BivariateMaternParams theta;
  double objective_value = 0.0;  // minimized value (= -L at theta when feasible)
  Criterion criterion = Criterion::ML;
  int n_evals = 0;               // of the selected start
  bool converged = false;
  std::vector<std::string> active_constraints;
  int jitter_events = 0;
  int start_index = 0;
  int iterations = 0;
};

/// z = (log l_c, log l_f, log l_cf, log nu_c, log nu_f, log s_c, log s_f,
///      xi, log s_nc, log s_nf) with xi = log((1+rho)/(1-rho)).
Eigen::VectorXd transform(const BivariateMaternParams& p);
BivariateMaternParams untransform(const Eigen::VectorXd& z);

/// Objective to minimize: -L(D, untransform(z)) when the validity conditions
/// hold; a large barrier plus a smooth quadratic penalty on the violation
/// magnitudes otherwise, plus a soft box on log nu.
double objective(const MultiscaleDataset& data, const Eigen::VectorXd& z, Criterion criterion);

/// Heuristic initialization from the empirical variograms. Needs at least 5
/// observations per present scale; the result is always feasible.
BivariateMaternParams init_from_empirical(const MultiscaleDataset& data);

/// Constrained maximization of the chosen pseudo-likelihood by multi-start
/// BFGS with central finite differences. Single-scale datasets optimize the
/// reduced univariate parameter set (the other block is mirrored, rho = 0).
FitResult fit(const MultiscaleDataset& data, Criterion criterion,
              std::optional<BivariateMaternParams> init = std::nullopt,
              const FitOptions& options = {});

/// Block-average-model fitting over its reduced parameter vector.
struct BlockAvgFitConfig {
  Rect domain;
  double eta_c = 0.1;
  bool fit_eta = false;
  int quad_order = 6;  // likelihood assemblies are quadrature-heavy
};

struct BlockAvgFitResult {
  double sigma_f = 1.0, lambda_f = 0.1, nu_f = 0.5;
  double eta_c = 0.1;
  double nugget_c = 0.0, nugget_f = 0.0;
  double objective_value = 0.0;
  Criterion criterion = Criterion::ML;
  int n_evals = 0;
  bool converged = false;
  int start_index = 0;
};

BlockAvgFitResult fit_block_avg(const MultiscaleDataset& data, Criterion criterion,
                                const BlockAvgFitConfig& config, const FitOptions& options = {});

} // namespace msgp
