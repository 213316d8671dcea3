#include "msgp/fields.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "msgp/rng.hpp"

namespace msgp {
namespace {

// Non-realization RNG purposes get stream ids far above any realization index.
constexpr std::uint64_t kStreamObservations = std::uint64_t{1} << 62;

} // namespace

StructuredGrid StructuredGrid::make(Point origin, double Lx, double Ly, int n1, int n2) {
  if (n1 < 1 || n2 < 1) throw config_error("grid: shape must be positive");
  if (!(Lx > 0.0) || !(Ly > 0.0)) throw config_error("grid: extent must be positive");
  const double dx1 = Lx / n1, dx2 = Ly / n2;
  if (std::abs(dx1 - dx2) > 1e-12 * std::max(dx1, dx2))
    throw config_error("grid: cells must be square (Lx/n1 == Ly/n2)");
  return {origin, Lx, Ly, n1, n2};
}

bool StructuredGrid::same_geometry(const StructuredGrid& o) const {
  return origin.x == o.origin.x && origin.y == o.origin.y && Lx == o.Lx && Ly == o.Ly &&
         n1 == o.n1 && n2 == o.n2;
}

std::vector<TaggedPoint> StructuredGrid::tagged_centroids(Scale scale) const {
  std::vector<TaggedPoint> pts(size());
  for (int j = 0; j < n2; ++j)
    for (int i = 0; i < n1; ++i) pts[index(i, j)] = {centroid(i, j), scale};
  return pts;
}

NystromFactor NystromFactor::build(std::shared_ptr<const MultiscaleCovariance> model, Scale scale,
                                   const StructuredGrid& quad_grid) {
  return build_tagged(std::move(model), quad_grid.tagged_centroids(scale),
                      quad_grid.bounds().area() / quad_grid.size());
}

NystromFactor NystromFactor::build_tagged(std::shared_ptr<const MultiscaleCovariance> model,
                                          std::vector<TaggedPoint> nodes, double weight) {
  if (nodes.empty()) throw config_error("nystrom: empty node set");
  NystromFactor f;
  f.model_ = std::move(model);
  f.nodes_ = std::move(nodes);
  f.weight_ = weight;
  f.chol_ = CholFactor::compute(assemble_cov(f.nodes_, f.nodes_, *f.model_, NuggetPolicy::None));
  return f;
}

double NystromFactor::jitter() const { return chol_.jitter(); }

Eigen::MatrixXd NystromFactor::cross_cov(std::span<const TaggedPoint> targets) const {
  return assemble_cov(targets, nodes_, *model_, NuggetPolicy::None);
}

Eigen::MatrixXd NystromFactor::approx_cov(std::span<const TaggedPoint> A,
                                          std::span<const TaggedPoint> B) const {
  const Eigen::MatrixXd Ca = cross_cov(A);
  const Eigen::MatrixXd Cbt = cross_cov(B).transpose();
  return Ca * chol_.solve(Cbt);
}

Eigen::MatrixXd NystromFactor::simulate_at(std::span<const TaggedPoint> targets, int n_real,
                                           std::uint64_t seed) const {
  const auto nt = static_cast<Eigen::Index>(targets.size());
  Eigen::MatrixXd out(nt, std::max(n_real, 0));
  if (n_real <= 0 || nt == 0) return out;
  const int m = rank();

  Eigen::MatrixXd eta(m, n_real);
  for (int k = 0; k < n_real; ++k) {
    rng::Stream s(seed, static_cast<std::uint64_t>(k));
    for (int i = 0; i < m; ++i) eta(i, k) = s.normal();
  }
  // y = C(T, X~) L~^-T xi has the same rank-M covariance as the rectangular
  // factorization and avoids forming the |T| x M triangular solve.
  chol_.matrixL().triangularView<Eigen::Lower>().transpose().solveInPlace(eta);

  const Eigen::Index chunk_rows =
      std::max<Eigen::Index>(1, (Eigen::Index{1} << 25) / std::max(1, m));
  for (Eigen::Index r0 = 0; r0 < nt; r0 += chunk_rows) {
    const Eigen::Index rows = std::min(chunk_rows, nt - r0);
    const Eigen::MatrixXd Cc = cross_cov(targets.subspan(r0, rows));
    out.middleRows(r0, rows).noalias() = Cc * eta;
  }
  return out;
}

std::vector<FieldRealization> simulate(const NystromFactor& factor, const StructuredGrid& targets,
                                       Scale scale, int n_real, std::uint64_t seed) {
  if (n_real < 0) throw config_error("simulate: n_real must be >= 0");
  std::vector<FieldRealization> out;
  if (n_real == 0) return out;
  const auto tagged = targets.tagged_centroids(scale);
  const Eigen::MatrixXd Y = factor.simulate_at(tagged, n_real, seed);
  out.reserve(n_real);
  for (int k = 0; k < n_real; ++k) out.push_back({targets, Y.col(k), scale, seed});
  return out;
}

FieldRealization block_average_grid(const FieldRealization& fine, int m) {
  const StructuredGrid& g = fine.grid;
  if (m < 1) throw config_error("block_average_grid: m must be >= 1");
  if (m > g.n1 || m > g.n2) throw config_error("block_average_grid: window exceeds grid extent");
  const int half = m / 2;  // |offset| <= m dx / 2 keeps offsets up to floor(m/2) cells

  // Summed-area table: S(i, j) = sum over cells [0,i) x [0,j).
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(g.n1 + 1, g.n2 + 1);
  for (int j = 0; j < g.n2; ++j)
    for (int i = 0; i < g.n1; ++i)
      S(i + 1, j + 1) = fine.values(g.index(i, j)) + S(i, j + 1) + S(i + 1, j) - S(i, j);

  FieldRealization out;
  out.grid = g;
  out.scale = Scale::Coarse;
  out.seed = fine.seed;
  out.values.resize(g.size());
  for (int j = 0; j < g.n2; ++j) {
    const int j0 = std::max(0, j - half), j1 = std::min(g.n2 - 1, j + half);
    for (int i = 0; i < g.n1; ++i) {
      const int i0 = std::max(0, i - half), i1 = std::min(g.n1 - 1, i + half);
      const double sum = S(i1 + 1, j1 + 1) - S(i0, j1 + 1) - S(i1 + 1, j0) + S(i0, j0);
      const int count = (i1 - i0 + 1) * (j1 - j0 + 1);
      out.values(g.index(i, j)) = sum / count;
    }
  }
  return out;
}

Observations sample_observations(const FieldRealization& field, int n, double noise_sigma,
                                 std::uint64_t seed) {
  const int total = field.grid.size();
  if (n < 0 || n > total)
    throw config_error("sample_observations: n must lie in [0, number of centroids]");
  if (noise_sigma < 0.0) throw config_error("sample_observations: negative noise");

  rng::Stream s(seed, kStreamObservations);
  std::vector<int> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < n; ++i) {
    const int j = i + static_cast<int>(s.below(static_cast<std::uint64_t>(total - i)));
    std::swap(idx[i], idx[j]);
  }

  Observations obs;
  obs.scale = field.scale;
  obs.noise_sigma = noise_sigma;
  obs.locations.resize(n, 2);
  obs.values.resize(n);
  obs.cell_indices.assign(idx.begin(), idx.begin() + n);
  for (int i = 0; i < n; ++i) {
    const Point p = field.grid.centroid(idx[i]);
    obs.locations(i, 0) = p.x;
    obs.locations(i, 1) = p.y;
    obs.values(i) = field.values(idx[i]) + (noise_sigma > 0.0 ? noise_sigma * s.normal() : 0.0);
  }
  return obs;
}

namespace {

struct BinAccum {
  VariogramBins finish(int n_bins, double width) {
    VariogramBins out;
    out.lag.resize(n_bins);
    out.value.resize(n_bins);
    out.count.resize(n_bins);
    for (int b = 0; b < n_bins; ++b) {
      out.count(b) = counts[b];
      if (counts[b] > 0) {
        out.lag(b) = lag_sum[b] / counts[b];
        out.value(b) = val_sum[b] / (2.0 * counts[b]);
      } else {
        out.lag(b) = (b + 0.5) * width;
        out.value(b) = std::numeric_limits<double>::quiet_NaN();
      }
    }
    return out;
  }
  std::vector<double> val_sum, lag_sum;
  std::vector<int> counts;
};

} // namespace

VariogramBins empirical_variogram(const Eigen::MatrixX2d& X, const Eigen::VectorXd& y, int n_bins,
                                  double max_lag) {
  if (max_lag <= 0.0) throw config_error("variogram: max_lag must be positive");
  if (n_bins < 1) throw config_error("variogram: need at least one bin");
  if (X.rows() < 2) throw config_error("variogram: need at least two observations");
  const double width = max_lag / n_bins;
  BinAccum acc;
  acc.val_sum.assign(n_bins, 0.0);
  acc.lag_sum.assign(n_bins, 0.0);
  acc.counts.assign(n_bins, 0);
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = i + 1; j < X.rows(); ++j) {
      const double d = std::hypot(X(i, 0) - X(j, 0), X(i, 1) - X(j, 1));
      if (d > max_lag) continue;
      const int b = std::min(static_cast<int>(d / width), n_bins - 1);
      const double dy = y(i) - y(j);
      acc.val_sum[b] += dy * dy;
      acc.lag_sum[b] += d;
      ++acc.counts[b];
    }
  return acc.finish(n_bins, width);
}

VariogramBins empirical_cross_variogram(const Eigen::MatrixX2d& Xc, const Eigen::VectorXd& yc,
                                        const Eigen::MatrixX2d& Xf, const Eigen::VectorXd& yf,
                                        int n_bins, double max_lag) {
  if (max_lag <= 0.0) throw config_error("variogram: max_lag must be positive");
  if (n_bins < 1) throw config_error("variogram: need at least one bin");
  if (Xc.rows() < 2 || Xf.rows() < 2)
    throw config_error("variogram: need at least two observations per scale");
  const double width = max_lag / n_bins;
  BinAccum acc;
  acc.val_sum.assign(n_bins, 0.0);
  acc.lag_sum.assign(n_bins, 0.0);
  acc.counts.assign(n_bins, 0);
  for (Eigen::Index i = 0; i < Xc.rows(); ++i)
    for (Eigen::Index j = 0; j < Xf.rows(); ++j) {
      const double d = std::hypot(Xc(i, 0) - Xf(j, 0), Xc(i, 1) - Xf(j, 1));
      if (d > max_lag) continue;
      const int b = std::min(static_cast<int>(d / width), n_bins - 1);
      const double dy = yc(i) - yf(j);
      acc.val_sum[b] += dy * dy;
      acc.lag_sum[b] += d;
      ++acc.counts[b];
    }
  return acc.finish(n_bins, width);
}

double mse(const PosteriorSummary& posterior, const FieldRealization& reference) {
  const StructuredGrid& g = reference.grid;
  if (static_cast<int>(posterior.targets.size()) != g.size() ||
      posterior.mean.size() != g.size())
    throw domain_error("mse: posterior does not cover the reference grid");
  const Point first = g.centroid(0);
  const Point last = g.centroid(g.size() - 1);
  const auto& t0 = posterior.targets.front();
  const auto& t1 = posterior.targets.back();
  if (t0.p.x != first.x || t0.p.y != first.y || t1.p.x != last.x || t1.p.y != last.y ||
      t0.scale != reference.scale)
    throw domain_error("mse: posterior targets do not match the reference grid/scale");
  const double cell = g.dx() * g.dx();
  double acc = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    const double r = reference.values(i) - posterior.mean(i);
    acc += (r * r + posterior.variance(i)) * cell;
  }
  return acc / (g.Ly * g.Ly);
}

GridPredictor::GridPredictor(std::shared_ptr<const MultiscaleCovariance> model,
                             const MultiscaleDataset& data, const StructuredGrid& quad_grid)
    : model_(std::move(model)) {
  nodes_ = quad_grid.tagged_centroids(Scale::Coarse);
  const auto fine_nodes = quad_grid.tagged_centroids(Scale::Fine);
  nodes_.insert(nodes_.end(), fine_nodes.begin(), fine_nodes.end());

  const CholFactor cholQ =
      CholFactor::compute(assemble_cov(nodes_, nodes_, *model_, NuggetPolicy::None));
  const CholFactor cholS = CholFactor::compute(assemble_obs_cov(data, *model_));
  jitter_ = std::max(cholQ.jitter(), cholS.jitter());

  const auto obs = data.tagged_points();
  const Eigen::MatrixXd B = assemble_cov(nodes_, obs, *model_, NuggetPolicy::None);
  const Eigen::MatrixXd G = cholQ.solve(B);
  u_ = G * cholS.solve(data.stacked_values());
  const Eigen::MatrixXd Gt = G.transpose();
  const Eigen::MatrixXd Zt = cholS.matrixL().triangularView<Eigen::Lower>().solve(Gt);
  Z_ = Zt.transpose();
}

PosteriorSummary GridPredictor::predict(const StructuredGrid& targets, Scale scale) const {
  PosteriorSummary out;
  out.targets = targets.tagged_centroids(scale);
  out.jitter = jitter_;
  const Eigen::Index nt = targets.size();
  out.mean.resize(nt);
  out.variance.resize(nt);
  const auto m = static_cast<Eigen::Index>(nodes_.size());
  const Eigen::Index chunk_rows = std::max<Eigen::Index>(1, (Eigen::Index{1} << 25) / m);
  for (Eigen::Index r0 = 0; r0 < nt; r0 += chunk_rows) {
    const Eigen::Index rows = std::min(chunk_rows, nt - r0);
    const Eigen::MatrixXd A =
        assemble_cov(std::span(out.targets).subspan(r0, rows), nodes_, *model_,
                     NuggetPolicy::None);
    out.mean.segment(r0, rows).noalias() = A * u_;
    const Eigen::MatrixXd T = A * Z_;
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto& t = out.targets[r0 + i];
      double v = model_->cov_latent(t.p, t.scale, t.p, t.scale) - T.row(i).squaredNorm();
      if (v < 0.0) {
        ++out.clamped;
        v = 0.0;
      }
      out.variance(r0 + i) = v;
    }
  }
  return out;
}

ConditionalSampler::ConditionalSampler(std::shared_ptr<const MultiscaleCovariance> model,
                                       const MultiscaleDataset& data, const StructuredGrid& grid,
                                       std::uint64_t seed)
    : model_(std::move(model)), grid_(grid), seed_(seed), n_grid_(grid.size()) {
  data.validate();
  nodes_ = grid.tagged_centroids(Scale::Fine);
  const auto obs = data.tagged_points();
  const int n_obs = static_cast<int>(obs.size());
  obs_node_index_.resize(n_obs);
  obs_noise_sd_.resize(n_obs);
  std::map<std::tuple<double, double, int>, int> extra;
  for (int i = 0; i < n_obs; ++i) {
    const TaggedPoint& tp = obs[i];
    const double nug = model_->nugget_sd(tp.scale);
    const double ns = data.noise_sd(tp.scale);
    obs_noise_sd_[i] = std::sqrt(nug * nug + ns * ns);

    int node = -1;
    if (tp.scale == Scale::Fine) {
      // exact centroid match reuses the grid node
      const int gi = static_cast<int>(std::floor((tp.p.x - grid.origin.x) / grid.dx()));
      const int gj = static_cast<int>(std::floor((tp.p.y - grid.origin.y) / grid.dx()));
      if (gi >= 0 && gi < grid.n1 && gj >= 0 && gj < grid.n2) {
        const Point c = grid.centroid(gi, gj);
        if (c.x == tp.p.x && c.y == tp.p.y) node = grid.index(gi, gj);
      }
    }
    if (node < 0) {
      const auto key = std::make_tuple(tp.p.x, tp.p.y, static_cast<int>(tp.scale));
      auto it = extra.find(key);
      if (it == extra.end()) {
        node = static_cast<int>(nodes_.size());
        nodes_.push_back(tp);
        extra.emplace(key, node);
      } else {
        node = it->second;
      }
    }
    obs_node_index_[i] = node;
  }

  chol_ = CholFactor::compute(assemble_cov(nodes_, nodes_, *model_, NuggetPolicy::None));

  const CholFactor cholS = CholFactor::compute(assemble_obs_cov(data, *model_));
  const auto grid_tagged = grid.tagged_centroids(Scale::Fine);
  const Eigen::MatrixXd K = assemble_cov(grid_tagged, obs, *model_, NuggetPolicy::None);
  const Eigen::MatrixXd Kt = K.transpose();
  W_ = cholS.solve(Kt).transpose();
  y_ = data.stacked_values();
}

Eigen::VectorXd ConditionalSampler::draw(int k) const {
  rng::Stream s(seed_, static_cast<std::uint64_t>(k));
  const auto m = static_cast<Eigen::Index>(nodes_.size());
  Eigen::VectorXd xi(m);
  for (Eigen::Index i = 0; i < m; ++i) xi(i) = s.normal();
  const Eigen::VectorXd ysim = chol_.matrixL().triangularView<Eigen::Lower>() * xi;

  const int n_obs = static_cast<int>(obs_node_index_.size());
  Eigen::VectorXd obs_sim(n_obs);
  for (int i = 0; i < n_obs; ++i) {
    double v = ysim(obs_node_index_[i]);
    if (obs_noise_sd_[i] > 0.0) v += obs_noise_sd_[i] * s.normal();
    obs_sim(i) = v;
  }
  return ysim.head(n_grid_) + W_ * (y_ - obs_sim);
}

} // namespace msgp
