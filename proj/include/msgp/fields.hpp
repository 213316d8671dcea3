#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "msgp/covariance.hpp"
#include "msgp/gp.hpp"
#include "msgp/types.hpp"

namespace msgp {

/// Rectangular cell-centered grid with square cells.
struct StructuredGrid {
  Point origin{0.0, 0.0};
  double Lx = 1.0, Ly = 1.0;
  int n1 = 1, n2 = 1;

  static StructuredGrid make(Point origin, double Lx, double Ly, int n1, int n2);

  double dx() const { return Lx / n1; }
  int size() const { return n1 * n2; }
  int index(int i, int j) const { return i + n1 * j; }
  Point centroid(int i, int j) const {
    return {origin.x + (i + 0.5) * dx(), origin.y + (j + 0.5) * dx()};
  }
  Point centroid(int idx) const { return centroid(idx % n1, idx / n1); }
  Rect bounds() const { return {origin.x, origin.y, origin.x + Lx, origin.y + Ly}; }
  bool same_geometry(const StructuredGrid& o) const;

  std::vector<TaggedPoint> tagged_centroids(Scale scale) const;
};

struct FieldRealization {
  StructuredGrid grid;
  Eigen::VectorXd values;  // x-fastest ordering, index = i + n1*j
  Scale scale = Scale::Fine;
  std::uint64_t seed = 0;
};

/// Rank-M Nystrom handle: quadrature nodes, the Cholesky factor of the node
/// covariance, and the rectangular-factor simulation path
/// y = C(targets, X~) L~^-T xi.
class NystromFactor {
public:
  static NystromFactor build(std::shared_ptr<const MultiscaleCovariance> model, Scale scale,
                             const StructuredGrid& quad_grid);
  /// Arbitrary tagged node sets (both scales, or grid-plus-observation nodes).
  static NystromFactor build_tagged(std::shared_ptr<const MultiscaleCovariance> model,
                                    std::vector<TaggedPoint> nodes, double weight);

  int rank() const { return static_cast<int>(nodes_.size()); }
  double weight() const { return weight_; }
  double jitter() const;
  const std::vector<TaggedPoint>& nodes() const { return nodes_; }
  const CholFactor& chol() const { return chol_; }
  const MultiscaleCovariance& model() const { return *model_; }

  /// C(targets, X~), latent, assembled in parallel.
  Eigen::MatrixXd cross_cov(std::span<const TaggedPoint> targets) const;

  /// Rank-M approximate covariance C(A, X~) C~^-1 C(X~, B).
  Eigen::MatrixXd approx_cov(std::span<const TaggedPoint> A,
                             std::span<const TaggedPoint> B) const;

  /// targets x n_real realizations; realization k is a pure function of
  /// (seed, k) and may be computed on any thread. Assembly is chunked over
  /// targets to bound memory.
  Eigen::MatrixXd simulate_at(std::span<const TaggedPoint> targets, int n_real,
                              std::uint64_t seed) const;

private:
  std::shared_ptr<const MultiscaleCovariance> model_;
  std::vector<TaggedPoint> nodes_;
  double weight_ = 0.0;
  CholFactor chol_;
};

/// Unconditional realizations on a grid at one scale.
std::vector<FieldRealization> simulate(const NystromFactor& factor, const StructuredGrid& targets,
                                       Scale scale, int n_real, std::uint64_t seed);

/// Moving-window block average with eta_c = m * dx: the coarse value at every
/// fine centroid is the mean of fine values whose centroids fall inside
/// H(z) (clipped at the boundary, renormalized by the clipped count).
FieldRealization block_average_grid(const FieldRealization& fine, int m);

struct Observations {
  Eigen::MatrixX2d locations{0, 2};
  Eigen::VectorXd values;
  std::vector<int> cell_indices;
  Scale scale = Scale::Fine;
  double noise_sigma = 0.0;
};

/// n distinct centroids, sampled uniformly without replacement, with
/// N(0, noise_sigma^2) perturbations; deterministic under (seed).
Observations sample_observations(const FieldRealization& field, int n, double noise_sigma,
                                 std::uint64_t seed);

struct VariogramBins {
  Eigen::VectorXd lag;      // mean pair lag of the bin (bin center if empty)
  Eigen::VectorXd value;    // NaN where count == 0
  Eigen::VectorXi count;
};

/// Classical method-of-moments semivariogram over one scale's observations.
VariogramBins empirical_variogram(const Eigen::MatrixX2d& X, const Eigen::VectorXd& y, int n_bins,
                                  double max_lag);

/// Pseudo cross-variogram 1/2 mean[(y_c_i - y_f_j)^2] over coarse-fine pairs
/// binned by lag (no collocation requirement).
VariogramBins empirical_cross_variogram(const Eigen::MatrixX2d& Xc, const Eigen::VectorXd& yc,
                                        const Eigen::MatrixX2d& Xf, const Eigen::VectorXd& yf,
                                        int n_bins, double max_lag);

/// (1/L^2) integral of E[(y_ref - y)^2 | D] = (y_ref - mean)^2 + variance
/// over the grid, with L the domain's short side (Ly).
double mse(const PosteriorSummary& posterior, const FieldRealization& reference);

/// Conditional mean/variance on full grids through the rank-M approximation
/// of the prediction row blocks C_p; quadrature nodes carry both scale tags.
class GridPredictor {
public:
  GridPredictor(std::shared_ptr<const MultiscaleCovariance> model, const MultiscaleDataset& data,
                const StructuredGrid& quad_grid);

  PosteriorSummary predict(const StructuredGrid& targets, Scale scale) const;
  double jitter() const { return jitter_; }

private:
  /// C(targets at `scale`, nodes). Stationary models on grids aligned with
  /// the quadrature grid go through a lag table (the distinct target-node
  /// offsets live on a half-cell lattice), everything else is assembled
  /// pointwise.
  Eigen::MatrixXd cross_rows(const std::vector<TaggedPoint>& targets, Eigen::Index r0,
                             Eigen::Index rows, const StructuredGrid& target_grid,
                             Scale scale) const;

  std::shared_ptr<const MultiscaleCovariance> model_;
  StructuredGrid quad_grid_;
  std::vector<TaggedPoint> nodes_;
  Eigen::VectorXd u_;   // C~^-1 C(X~,Xs) Cs^-1 y
  Eigen::MatrixXd Z_;   // C~^-1 C(X~,Xs) Ls^-T
  double jitter_ = 0.0;
};

/// Exact conditional simulation of the fine field on a grid given multiscale
/// data: joint unconditional draws at [grid nodes; observation locations]
/// (plain Cholesky; the node set contains every target) plus the kriging
/// correction toward the observed values.
class ConditionalSampler {
public:
  ConditionalSampler(std::shared_ptr<const MultiscaleCovariance> model,
                     const MultiscaleDataset& data, const StructuredGrid& grid,
                     std::uint64_t seed);

  /// Realization k of y^f | D_s at the grid centroids.
  Eigen::VectorXd draw(int k) const;

  const StructuredGrid& grid() const { return grid_; }
  double jitter() const { return chol_.jitter(); }
  std::uint64_t seed() const { return seed_; }

private:
  std::shared_ptr<const MultiscaleCovariance> model_;
  StructuredGrid grid_;
  std::vector<TaggedPoint> nodes_;
  std::vector<int> obs_node_index_;
  std::vector<double> obs_noise_sd_;
  CholFactor chol_;       // joint latent covariance at nodes_
  Eigen::MatrixXd W_;     // C(grid, Xs) Cs^-1
  Eigen::VectorXd y_;
  std::uint64_t seed_ = 0;
  int n_grid_ = 0;
};

} // namespace msgp
