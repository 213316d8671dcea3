#include "msgp/darcy.hpp"

#include <cmath>
#include <unordered_map>

#include <Eigen/Sparse>

namespace msgp {
namespace {

double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

// Fixed-order pairwise reduction over [lo, hi) of rows of H.
Eigen::VectorXd pairwise_mean_rows(const Eigen::MatrixXd& H, int lo, int hi) {
  if (hi - lo == 1) return H.row(lo).transpose();
  const int mid = lo + (hi - lo) / 2;
  Eigen::VectorXd a = pairwise_mean_rows(H, lo, mid);
  Eigen::VectorXd b = pairwise_mean_rows(H, mid, hi);
  const double wa = static_cast<double>(mid - lo), wb = static_cast<double>(hi - mid);
  return (wa * a + wb * b) / (wa + wb);
}

Eigen::MatrixXd pairwise_outer(const Eigen::MatrixXd& Hc, int lo, int hi) {
  if (hi - lo == 1) return Hc.row(lo).transpose() * Hc.row(lo);
  const int mid = lo + (hi - lo) / 2;
  return pairwise_outer(Hc, lo, mid) + pairwise_outer(Hc, mid, hi);
}

} // namespace

Eigen::VectorXd solve_darcy(const DarcyProblem& problem, const Eigen::VectorXd& Y) {
  const StructuredGrid& g = problem.grid;
  const int n = g.size();
  if (Y.size() != n) throw domain_error("solve_darcy: Y does not match the grid");
  if (!Y.allFinite()) throw domain_error("solve_darcy: non-finite log-conductivity");
  if (problem.K_G <= 0.0) throw config_error("solve_darcy: K_G must be positive");

  Eigen::VectorXd K(n);
  for (int i = 0; i < n; ++i) K(i) = problem.K_G * std::exp(Y(i));

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(5 * static_cast<std::size_t>(n));
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);

  auto couple = [&](int a, int b, double T) {
    diag(a) += T;
    diag(b) += T;
    trips.emplace_back(a, b, -T);
    trips.emplace_back(b, a, -T);
  };

  for (int j = 0; j < g.n2; ++j) {
    for (int i = 0; i < g.n1; ++i) {
      const int c = g.index(i, j);
      if (i + 1 < g.n1) couple(c, g.index(i + 1, j), harmonic(K(c), K(g.index(i + 1, j))));
      if (j + 1 < g.n2) couple(c, g.index(i, j + 1), harmonic(K(c), K(g.index(i, j + 1))));
      if (i == 0) {  // Dirichlet through the half-cell ghost face
        diag(c) += 2.0 * K(c);
        rhs(c) += 2.0 * K(c) * problem.h_L;
      }
      if (i == g.n1 - 1) {
        diag(c) += 2.0 * K(c);
        rhs(c) += 2.0 * K(c) * problem.h_R;
      }
    }
  }
  for (int c = 0; c < n; ++c) trips.emplace_back(c, c, diag(c));

  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
  if (solver.info() != Eigen::Success)
    throw numerical_error("solve_darcy: sparse factorization failed");
  const Eigen::VectorXd h = solver.solve(rhs);
  const double resid = (A * h - rhs).norm();
  const double scale = rhs.norm();
  if (!(resid <= 1e-10 * std::max(scale, 1e-300)))
    throw numerical_error("solve_darcy: residual " + std::to_string(resid / scale) +
                          " exceeds 1e-10 relative");
  return h;
}

BoundaryFluxes boundary_fluxes(const DarcyProblem& problem, const Eigen::VectorXd& Y,
                               const Eigen::VectorXd& h) {
  const StructuredGrid& g = problem.grid;
  BoundaryFluxes f;
  for (int j = 0; j < g.n2; ++j) {
    const int left = g.index(0, j);
    const int right = g.index(g.n1 - 1, j);
    const double Kl = problem.K_G * std::exp(Y(left));
    const double Kr = problem.K_G * std::exp(Y(right));
    f.in += 2.0 * Kl * (problem.h_L - h(left));
    f.out += 2.0 * Kr * (h(right) - problem.h_R);
  }
  return f;
}

HeadEnsembleStats mc_propagate(const DarcyProblem& problem,
                               const std::function<Eigen::VectorXd(int)>& sampler, int n_real,
                               std::uint64_t seed, std::span<const int> node_ids) {
  if (n_real < 2) throw config_error("mc_propagate: need at least 2 realizations");
  const auto m = static_cast<Eigen::Index>(node_ids.size());
  if (m == 0) throw config_error("mc_propagate: empty node set");
  for (int id : node_ids)
    if (id < 0 || id >= problem.grid.size()) throw domain_error("mc_propagate: node id off-grid");

  Eigen::MatrixXd H(n_real, m);
  std::string failure;
#pragma omp parallel for schedule(static)
  for (int k = 0; k < n_real; ++k) {
    try {
      const Eigen::VectorXd Y = sampler(k);
      const Eigen::VectorXd h = solve_darcy(problem, Y);
      for (Eigen::Index c = 0; c < m; ++c) H(k, c) = h(node_ids[c]);
    } catch (const std::exception& e) {
#pragma omp critical
      if (failure.empty()) failure = "realization " + std::to_string(k) + ": " + e.what();
    }
  }
  if (!failure.empty()) throw numerical_error("mc_propagate: " + failure);

  HeadEnsembleStats out;
  out.node_ids.assign(node_ids.begin(), node_ids.end());
  out.n_real = n_real;
  out.seed = seed;
  out.mean = pairwise_mean_rows(H, 0, n_real);
  Eigen::MatrixXd Hc = H.rowwise() - out.mean.transpose();
  out.cov = pairwise_outer(Hc, 0, n_real) / static_cast<double>(n_real - 1);
  return out;
}

MmseResult mmse_update(const HeadEnsembleStats& stats, const HeadObservationSet& obs) {
  MmseResult out;
  out.mean = stats.mean;
  out.cov = stats.cov;
  const auto ns = static_cast<Eigen::Index>(obs.nodes.size());
  if (ns == 0) return out;
  if (obs.h_obs.size() != ns) throw domain_error("mmse_update: observation size mismatch");
  if (obs.sigma_eh < 0.0) throw domain_error("mmse_update: negative noise");

  std::unordered_map<int, int> where;
  for (std::size_t i = 0; i < stats.node_ids.size(); ++i) where[stats.node_ids[i]] = static_cast<int>(i);
  Eigen::VectorXi sel(ns);
  for (Eigen::Index i = 0; i < ns; ++i) {
    const auto it = where.find(obs.nodes[i]);
    if (it == where.end())
      throw domain_error("mmse_update: observed node not covered by the ensemble statistics");
    sel(i) = it->second;
    for (Eigen::Index j = 0; j < i; ++j)
      if (sel(j) == sel(i)) throw domain_error("mmse_update: repeated observation node");
  }

  const auto m = stats.mean.size();
  Eigen::MatrixXd CH(m, ns);   // C_h H^T
  Eigen::MatrixXd S(ns, ns);   // H C_h H^T + sigma^2 I
  for (Eigen::Index i = 0; i < ns; ++i) CH.col(i) = stats.cov.col(sel(i));
  for (Eigen::Index i = 0; i < ns; ++i)
    for (Eigen::Index j = 0; j < ns; ++j) S(i, j) = stats.cov(sel(i), sel(j));
  S.diagonal().array() += obs.sigma_eh * obs.sigma_eh;

  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success)
    throw numerical_error("mmse_update: innovation covariance not positive definite");

  Eigen::VectorXd innov = obs.h_obs;
  for (Eigen::Index i = 0; i < ns; ++i) innov(i) -= stats.mean(sel(i));

  const Eigen::MatrixXd gain = llt.solve(CH.transpose()).transpose();  // C_h H^T S^-1
  out.mean = stats.mean + gain * innov;
  out.cov = stats.cov - gain * CH.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

double profile_variance_norm(const Eigen::VectorXd& variance_profile, double dx) {
  return std::sqrt(variance_profile.array().square().sum() * dx);
}

std::vector<int> profile_node_ids(const StructuredGrid& grid) {
  const int j = grid.n2 / 2;
  std::vector<int> ids(grid.n1);
  for (int i = 0; i < grid.n1; ++i) ids[i] = grid.index(i, j);
  return ids;
}

} // namespace msgp
