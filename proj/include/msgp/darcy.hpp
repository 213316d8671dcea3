#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "msgp/fields.hpp"

namespace msgp {

/// Saturated 2-D Darcy flow on a cell-centered grid: fixed heads on the left
/// and right boundaries, no-flow top and bottom, K = K_G exp(Y).
struct DarcyProblem {
  StructuredGrid grid;
  double K_G = 1.0;
  double h_L = 1.0;
  double h_R = 0.0;
};

/// Head at cell centers by finite volumes with harmonic face conductivities;
/// direct sparse factorization, residual checked to 1e-10 relative.
Eigen::VectorXd solve_darcy(const DarcyProblem& problem, const Eigen::VectorXd& Y);

/// Discrete boundary fluxes (inflow through x1 = 0, outflow through x1 = 2L).
struct BoundaryFluxes {
  double in = 0.0;
  double out = 0.0;
};
BoundaryFluxes boundary_fluxes(const DarcyProblem& problem, const Eigen::VectorXd& Y,
                               const Eigen::VectorXd& h);

struct HeadEnsembleStats {
  std::vector<int> node_ids;  // grid cell indices the moments cover
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  int n_real = 0;
  std::uint64_t seed = 0;
};

/// Monte-Carlo head moments under log-conductivity realizations sampler(k),
/// restricted to node_ids. Realizations are independent given k and may be
/// solved in parallel; moments are reduced by fixed-order pairwise summation,
/// so results do not depend on the thread count.
HeadEnsembleStats mc_propagate(const DarcyProblem& problem,
                               const std::function<Eigen::VectorXd(int)>& sampler, int n_real,
                               std::uint64_t seed, std::span<const int> node_ids);

struct HeadObservationSet {
  std::vector<int> nodes;  // distinct grid cell indices, subset of stats.node_ids
  Eigen::VectorXd h_obs;
  double sigma_eh = 0.0;
};

struct MmseResult {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Linear-Gaussian update of the head ensemble from noisy point observations.
MmseResult mmse_update(const HeadEnsembleStats& stats, const HeadObservationSet& obs);

/// L2 norm of a variance profile: sqrt(sum v_i^2 dx).
double profile_variance_norm(const Eigen::VectorXd& variance_profile, double dx);

/// Cell indices of the row closest to x2 = 0.5 Ly (j = n2/2), ordered by x1.
std::vector<int> profile_node_ids(const StructuredGrid& grid);

} // namespace msgp
