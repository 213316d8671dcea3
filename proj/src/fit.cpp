#include "msgp/fit.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "msgp/covariance.hpp"
#include "msgp/fields.hpp"
#include "msgp/rng.hpp"

namespace msgp {
namespace {

constexpr double kLarge = 1e10;        // barrier value for infeasible/failed points
constexpr double kViolationWeight = 1e6;
constexpr double kBoxWeight = 1e4;
constexpr double kLogNuMin = -2.995732273553991;  // log 0.05
constexpr double kLogNuMax = 3.4011973816621555;  // log 30
constexpr std::uint64_t kStreamRestarts = (std::uint64_t{1} << 62) + 7;

double soft_box_penalty(double z) {
  if (z > kLogNuMax) return kBoxWeight * (z - kLogNuMax) * (z - kLogNuMax);
  if (z < kLogNuMin) return kBoxWeight * (kLogNuMin - z) * (kLogNuMin - z);
  return 0.0;
}

// ---- generic multi-start BFGS over a scalar objective -----------------------

struct MinimizeStats {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int evals = 0;
  int iters = 0;
  bool converged = false;
};

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double step, int& evals) {
  const auto n = x.size();
  Eigen::VectorXd g(n);
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = step * std::max(1.0, std::abs(x(i)));
    const double xi = x(i);
    xp(i) = xi + h;
    const double fp = f(xp);
    xp(i) = xi - h;
    const double fm = f(xp);
    xp(i) = xi;
    g(i) = (fp - fm) / (2.0 * h);
    evals += 2;
  }
  return g;
}

MinimizeStats minimize_bfgs(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x0, const FitOptions& opt) {
  MinimizeStats st;
  const auto n = x0.size();
  Eigen::VectorXd x = x0;
  double fx = f(x);
  st.evals = 1;
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd g = fd_gradient(f, x, opt.fd_step, st.evals);

  for (st.iters = 0; st.iters < opt.max_iters && st.evals < opt.max_evals; ++st.iters) {
    if (g.lpNorm<Eigen::Infinity>() < opt.tol) {
      st.converged = true;
      break;
    }
    Eigen::VectorXd d = -H * g;
    double gd = g.dot(d);
    if (!(gd < 0.0)) {  // curvature gone bad: reset to steepest descent
      H.setIdentity();
      d = -g;
      gd = g.dot(d);
    }
    // backtracking Armijo line search
    double t = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 40 && st.evals < opt.max_evals; ++ls) {
      x_new = x + t * d;
      f_new = f(x_new);
      ++st.evals;
      if (f_new <= fx + 1e-4 * t * gd) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      st.converged = true;  // line-search stall at a point we could not improve
      break;
    }
    Eigen::VectorXd g_new = fd_gradient(f, x_new, opt.fd_step, st.evals);
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      const Eigen::VectorXd Hy = H * yv;
      const double yHy = yv.dot(Hy);
      // BFGS inverse update
      H += ((sy + yHy) / (sy * sy)) * (s * s.transpose()) -
           (Hy * s.transpose() + s * Hy.transpose()) / sy;
    }
    x = std::move(x_new);
    fx = f_new;
    g = std::move(g_new);
  }
  st.x = x;
  st.value = fx;
  return st;
}

// ---- bivariate-Matern objective with cached geometry -------------------------

enum class FitMode { Full, FineOnly, CoarseOnly };

FitMode mode_of(const MultiscaleDataset& d) {
  if (d.n_c() == 0 && d.n_f() > 0) return FitMode::FineOnly;
  if (d.n_f() == 0 && d.n_c() > 0) return FitMode::CoarseOnly;
  return FitMode::Full;
}

std::vector<int> free_indices(FitMode m) {
  switch (m) {
    case FitMode::Full:
      return {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    case FitMode::FineOnly:
      return {1, 4, 6, 9};  // log l_f, log nu_f, log s_f, log s_nf
    case FitMode::CoarseOnly:
      return {0, 3, 5, 8};
  }
  return {};
}

// Mirror the absent scale so single-scale fits stay trivially feasible
// (equal blocks, rho = 0 sits exactly on the a-constraint equality).
void mirror_params(FitMode m, BivariateMaternParams& p) {
  if (m == FitMode::FineOnly) {
    p.lambda_c = p.lambda_cf = p.lambda_f;
    p.nu_c = p.nu_f;
    p.sigma_c = p.sigma_f;
    p.sigma_nc = p.sigma_nf;
    p.rho = 0.0;
  } else if (m == FitMode::CoarseOnly) {
    p.lambda_f = p.lambda_cf = p.lambda_c;
    p.nu_f = p.nu_c;
    p.sigma_f = p.sigma_c;
    p.sigma_nf = p.sigma_nc;
    p.rho = 0.0;
  }
}

class MaternObjective {
public:
  MaternObjective(const MultiscaleDataset& data, Criterion criterion)
      : data_(data), criterion_(criterion), n_(data.n()) {
    data.validate();
    R_.resize(n_, n_);
    const auto pts = data.tagged_points();
    scale_.resize(n_);
    for (int i = 0; i < n_; ++i) scale_[i] = pts[i].scale;
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) R_(i, j) = distance(pts[i].p, pts[j].p);
    y_ = data.stacked_values();
  }

  // -L + penalties; feasibility via the sentinel/penalty design.
  double operator()(const BivariateMaternParams& p, double box_penalty) {
    const ValidityReport rep = check_validity(p, 1e-9);
    if (!rep.feasible) {
      const double acf2 = p.a_cf() * p.a_cf();
      const double va = std::max(0.0, -rep.margin_a) / acf2;
      const double vr = std::max(0.0, -rep.margin_rho);
      return kLarge + kViolationWeight * (va * va + vr * vr) + box_penalty;
    }
    Eigen::MatrixXd C(n_, n_);
    {
      kernels::MaternEvaluator mc(std::min(p.nu_c, kernels::kNuCap));
      kernels::MaternEvaluator mf(std::min(p.nu_f, kernels::kNuCap));
      kernels::MaternEvaluator mcf(std::min(p.nu_cf(), kernels::kNuCap));
      const double vc = p.sigma_c * p.sigma_c;
      const double vf = p.sigma_f * p.sigma_f;
      const double vcf = p.rho * p.sigma_c * p.sigma_f;
      for (int j = 0; j < n_; ++j) {
        for (int i = j; i < n_; ++i) {
          const double r = R_(i, j);
          double c;
          if (scale_[i] == scale_[j]) {
            c = scale_[i] == Scale::Coarse ? vc * mc(r / p.lambda_c) : vf * mf(r / p.lambda_f);
            if (r == 0.0) {
              const double nug = scale_[i] == Scale::Coarse ? p.sigma_nc : p.sigma_nf;
              c += nug * nug;
            }
          } else {
            c = vcf * mcf(r / p.lambda_cf);
          }
          C(i, j) = c;
          C(j, i) = c;
        }
        const double ns = data_.noise_sd(scale_[j]);
        C(j, j) += ns * ns;
      }
    }
    try {
      const CholFactor f = CholFactor::compute(std::move(C));
      if (f.jitter() > 0.0) ++jitter_events;
      double ll;
      if (criterion_ == Criterion::ML) {
        const Eigen::VectorXd alpha = f.solve(y_);
        ll = -0.5 * y_.dot(alpha) - 0.5 * f.log_det() - 0.5 * n_ * std::log(2.0 * M_PI);
      } else {
        const Eigen::MatrixXd Cinv = f.inverse();
        const Eigen::VectorXd alpha = f.solve(y_);
        ll = 0.0;
        for (int i = 0; i < n_; ++i) {
          const double q = Cinv(i, i);
          if (!(q > 0.0)) return kLarge + box_penalty;
          ll -= 0.5 * (alpha(i) * alpha(i) / q + std::log(1.0 / q) + std::log(2.0 * M_PI));
        }
      }
      if (!std::isfinite(ll)) return kLarge + box_penalty;
      return -ll + box_penalty;
    } catch (const numerical_error&) {
      return kLarge + box_penalty;  // barrier, not a crash
    }
  }

  int jitter_events = 0;

private:
  const MultiscaleDataset& data_;
  Criterion criterion_;
  int n_;
  Eigen::MatrixXd R_;
  std::vector<Scale> scale_;
  Eigen::VectorXd y_;
};

double eval_masked(MaternObjective& obj, FitMode mode, const Eigen::VectorXd& z_full) {
  BivariateMaternParams p = untransform(z_full);
  mirror_params(mode, p);
  double box = soft_box_penalty(z_full(3)) + soft_box_penalty(z_full(4));
  // the kernels cap keeps evaluation safe while the box penalty pulls back
  p.nu_c = std::min(p.nu_c, kernels::kNuCap);
  p.nu_f = std::min(p.nu_f, kernels::kNuCap);
  try {
    return obj(p, box);
  } catch (const domain_error&) {
    return 10.0 * kLarge + box;  // overflowed parameters: hard wall
  }
}

/// Restore feasibility after a jittered restart: clamp lambda_cf to the
/// a-constraint, grow it toward that cap while the rho bound is violated,
/// then shrink rho under the bound.
BivariateMaternParams project_feasible(BivariateMaternParams p) {
  const double avg = 0.5 * (p.a_c() * p.a_c() + p.a_f() * p.a_f());
  const double lcf_cap = std::sqrt(2.0 * p.nu_cf() / avg);
  if (p.lambda_cf > lcf_cap) p.lambda_cf = 0.999 * lcf_cap;
  if (std::abs(p.rho) > rho_bound(p)) {
    p.lambda_cf = 0.999 * lcf_cap;  // largest bound the a-constraint admits
    const double b = std::min(rho_bound(p), 1.0);
    if (std::abs(p.rho) > 0.95 * b) p.rho = (p.rho < 0.0 ? -0.95 : 0.95) * b;
  }
  return p;
}

std::vector<std::string> active_constraints_at(const BivariateMaternParams& p) {
  std::vector<std::string> act;
  const ValidityReport rep = check_validity(p, 1e-9);
  if (std::abs(rep.margin_a) <= 1e-3 * p.a_cf() * p.a_cf()) act.push_back("a_cf");
  if (std::abs(rep.margin_rho) <= 1e-3) act.push_back("rho");
  for (double nu : {p.nu_c, p.nu_f}) {
    const double lz = std::log(nu);
    if (lz >= kLogNuMax - 1e-3 || lz <= kLogNuMin + 1e-3) {
      act.push_back("nu_box");
      break;
    }
  }
  return act;
}

} // namespace

Eigen::VectorXd transform(const BivariateMaternParams& p) {
  p.check_fields();
  if (!(p.sigma_nc > 0.0) || !(p.sigma_nf > 0.0))
    throw domain_error("transform: nuggets must be strictly positive (open domain)");
  Eigen::VectorXd z(10);
  z << std::log(p.lambda_c), std::log(p.lambda_f), std::log(p.lambda_cf), std::log(p.nu_c),
      std::log(p.nu_f), std::log(p.sigma_c), std::log(p.sigma_f),
      std::log((1.0 + p.rho) / (1.0 - p.rho)), std::log(p.sigma_nc), std::log(p.sigma_nf);
  return z;
}

BivariateMaternParams untransform(const Eigen::VectorXd& z) {
  if (z.size() != 10) throw domain_error("untransform: expected 10 coordinates");
  BivariateMaternParams p;
  p.lambda_c = std::exp(z(0));
  p.lambda_f = std::exp(z(1));
  p.lambda_cf = std::exp(z(2));
  p.nu_c = std::exp(z(3));
  p.nu_f = std::exp(z(4));
  p.sigma_c = std::exp(z(5));
  p.sigma_f = std::exp(z(6));
  p.rho = std::tanh(0.5 * z(7));  // inverse of log((1+rho)/(1-rho))
  // tanh rounds to +-1 beyond |z7| ~ 38; keep rho inside the open interval
  if (std::abs(p.rho) >= 1.0) p.rho = std::copysign(1.0 - 1e-12, p.rho);
  p.sigma_nc = std::exp(z(8));
  p.sigma_nf = std::exp(z(9));
  return p;
}

double objective(const MultiscaleDataset& data, const Eigen::VectorXd& z, Criterion criterion) {
  MaternObjective obj(data, criterion);
  return eval_masked(obj, mode_of(data), z);
}

namespace {

struct VariogramSummary {
  double sill = 0.0;    // variance estimate
  double range = 0.0;   // 63%-of-sill lag
};

VariogramSummary summarize_variogram(const VariogramBins& v, double max_lag) {
  VariogramSummary s;
  // plateau: median of the nonempty bins in the last third
  std::vector<double> plateau;
  const int n = static_cast<int>(v.value.size());
  for (int b = 2 * n / 3; b < n; ++b)
    if (v.count(b) > 0) plateau.push_back(v.value(b));
  if (plateau.empty())
    for (int b = 0; b < n; ++b)
      if (v.count(b) > 0) plateau.push_back(v.value(b));
  if (plateau.empty()) throw config_error("init_from_empirical: no populated variogram bins");
  std::sort(plateau.begin(), plateau.end());
  s.sill = plateau[plateau.size() / 2];
  if (!(s.sill > 0.0)) throw config_error("init_from_empirical: degenerate variogram");
  s.range = max_lag / 3.0;
  for (int b = 0; b < n; ++b)
    if (v.count(b) > 0 && v.value(b) >= 0.63 * s.sill) {
      s.range = std::max(v.lag(b), 1e-3 * max_lag);
      break;
    }
  return s;
}

} // namespace

BivariateMaternParams init_from_empirical(const MultiscaleDataset& data) {
  const FitMode mode = mode_of(data);
  if ((mode != FitMode::CoarseOnly && data.n_f() < 5) ||
      (mode != FitMode::FineOnly && data.n_c() < 5))
    throw config_error("init_from_empirical: need at least 5 observations per present scale");

  // lag window: half the bounding-box diagonal
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (int i = 0; i < data.n(); ++i) {
    const auto tp = data.obs(i);
    xmin = std::min(xmin, tp.p.x);
    xmax = std::max(xmax, tp.p.x);
    ymin = std::min(ymin, tp.p.y);
    ymax = std::max(ymax, tp.p.y);
  }
  const double max_lag = 0.5 * std::hypot(xmax - xmin, ymax - ymin);
  if (!(max_lag > 0.0)) throw config_error("init_from_empirical: degenerate observation layout");
  const int n_bins = 15;

  BivariateMaternParams p;
  p.nu_f = 0.5;
  p.nu_c = 1.5;

  double cross_sill_cov = 0.0;
  if (mode != FitMode::CoarseOnly) {
    const auto vf = empirical_variogram(data.X_f, data.y_f, n_bins, max_lag);
    const auto sf = summarize_variogram(vf, max_lag);
    p.sigma_f = std::sqrt(sf.sill);
    p.lambda_f = sf.range;
  }
  if (mode != FitMode::FineOnly) {
    const auto vc = empirical_variogram(data.X_c, data.y_c, n_bins, max_lag);
    const auto sc = summarize_variogram(vc, max_lag);
    p.sigma_c = std::sqrt(sc.sill);
    p.lambda_c = sc.range;
  }
  mirror_params(mode, p);

  if (mode == FitMode::Full) {
    // cross-sill estimate from the pseudo cross-variogram at short lag:
    // rho s_c s_f ~ (s_c^2 + s_f^2)/2 - gamma_cf(0+)
    const auto vcf =
        empirical_cross_variogram(data.X_c, data.y_c, data.X_f, data.y_f, n_bins, max_lag);
    for (int b = 0; b < n_bins; ++b)
      if (vcf.count(b) > 0) {
        cross_sill_cov = 0.5 * (p.sigma_c * p.sigma_c + p.sigma_f * p.sigma_f) - vcf.value(b);
        break;
      }
    p.lambda_cf = std::sqrt(p.lambda_c * p.lambda_f);
    // a-constraint with ~5% margin
    const double avg = 0.5 * (p.a_c() * p.a_c() + p.a_f() * p.a_f());
    p.lambda_cf = std::min(p.lambda_cf, std::sqrt(2.0 * p.nu_cf() / (1.05 * avg)));
    const double bound = std::min(rho_bound(p), 1.0);
    const double rho_est = cross_sill_cov / (p.sigma_c * p.sigma_f);
    p.rho = std::clamp(std::min(0.9 * bound, rho_est), 0.0, 0.9 * bound);
    if (p.rho == 0.0) p.rho = 0.45 * bound;  // noninformative cross estimate
  }
  p.sigma_nc = 1e-2 * p.sigma_c;
  p.sigma_nf = 1e-2 * p.sigma_f;
  p = project_feasible(p);
  if (!check_validity(p, 1e-9).feasible)
    throw numerical_error("init_from_empirical: projection failed to reach feasibility");
  return p;
}

FitResult fit(const MultiscaleDataset& data, Criterion criterion,
              std::optional<BivariateMaternParams> init, const FitOptions& options) {
  const FitMode mode = mode_of(data);
  const BivariateMaternParams p0 = init ? project_feasible(*init) : init_from_empirical(data);
  const Eigen::VectorXd z0_full = transform(p0);
  const std::vector<int> idx = free_indices(mode);
  const auto k = static_cast<Eigen::Index>(idx.size());

  struct StartOutcome {
    MinimizeStats stats;
    int jitter_events = 0;
    bool feasible = false;
    Eigen::VectorXd z_full;
    std::string error;
  };
  std::vector<StartOutcome> outcomes(std::max(1, options.n_starts));

  const int n_starts = std::max(1, options.n_starts);
#pragma omp parallel for schedule(static)
  for (int start = 0; start < n_starts; ++start) {
    StartOutcome& oc = outcomes[start];
    try {
      Eigen::VectorXd z_start_full = z0_full;
      if (start > 0) {
        rng::Stream s(options.seed, kStreamRestarts + static_cast<std::uint64_t>(start));
        for (Eigen::Index i = 0; i < z_start_full.size(); ++i)
          z_start_full(i) += 0.25 * s.normal();
        BivariateMaternParams ps = untransform(z_start_full);
        mirror_params(mode, ps);
        ps = project_feasible(ps);
        z_start_full = transform(ps);
      }
      MaternObjective obj(data, criterion);
      Eigen::VectorXd x0(k);
      for (Eigen::Index i = 0; i < k; ++i) x0(i) = z_start_full(idx[i]);
      auto f = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd z = z_start_full;
        for (Eigen::Index i = 0; i < k; ++i) z(idx[i]) = x(i);
        return eval_masked(obj, mode, z);
      };
      oc.stats = minimize_bfgs(f, x0, options);
      oc.jitter_events = obj.jitter_events;
      oc.z_full = z_start_full;
      for (Eigen::Index i = 0; i < k; ++i) oc.z_full(idx[i]) = oc.stats.x(i);
      BivariateMaternParams pt = untransform(oc.z_full);
      mirror_params(mode, pt);
      oc.feasible = check_validity(pt, 1e-9).feasible && oc.stats.value < kLarge;
    } catch (const std::exception& e) {
      oc.error = e.what();
      oc.feasible = false;
    }
  }

  int best = -1;
  for (int s = 0; s < n_starts; ++s) {
    if (!outcomes[s].feasible) continue;
    if (best < 0 || outcomes[s].stats.value < outcomes[best].stats.value) best = s;
  }
  if (best < 0) {
    std::string diag = "fit: no start reached a feasible terminal point;";
    for (int s = 0; s < n_starts; ++s) {
      diag += " start " + std::to_string(s) + ": ";
      diag += outcomes[s].error.empty() ? "value=" + std::to_string(outcomes[s].stats.value)
                                        : outcomes[s].error;
    }
    throw numerical_error(diag);
  }

  const StartOutcome& oc = outcomes[best];
  FitResult out;
  out.theta = untransform(oc.z_full);
  mirror_params(mode, out.theta);
  out.objective_value = oc.stats.value;
  out.criterion = criterion;
  out.n_evals = oc.stats.evals;
  out.converged = oc.stats.converged;
  out.active_constraints = active_constraints_at(out.theta);
  out.jitter_events = oc.jitter_events;
  out.start_index = best;
  out.iterations = oc.stats.iters;
  return out;
}

BlockAvgFitResult fit_block_avg(const MultiscaleDataset& data, Criterion criterion,
                                const BlockAvgFitConfig& config, const FitOptions& options) {
  data.validate();
  const bool fit_eta = config.fit_eta;
  const int dim = fit_eta ? 6 : 5;

  // parameter vector: (log sigma_f, log lambda_f, log nu_f, [log eta_c],
  //                    log nugget_c, log nugget_f)
  auto build = [&](const Eigen::VectorXd& x) {
    const double eta = fit_eta ? std::exp(x(3)) : config.eta_c;
    return BlockAvgCov(std::exp(x(0)), std::exp(x(1)),
                       std::min(std::exp(x(2)), kernels::kNuCap), eta, config.domain,
                       config.quad_order, std::exp(x(fit_eta ? 4 : 3)),
                       std::exp(x(fit_eta ? 5 : 4)));
  };
  auto f = [&](const Eigen::VectorXd& x) {
    const double box = soft_box_penalty(x(2));
    try {
      const BlockAvgCov cov = build(x);
      const LikelihoodResult lr = likelihood(data, cov, criterion);
      if (!std::isfinite(lr.value)) return kLarge + box;
      return -lr.value + box;
    } catch (const numerical_error&) {
      return kLarge + box;
    } catch (const domain_error&) {
      return kLarge + box;
    }
  };

  // initialize from the fine-scale empirical variogram
  const BivariateMaternParams p0 = init_from_empirical(data);
  Eigen::VectorXd x0(dim);
  x0(0) = std::log(p0.sigma_f);
  x0(1) = std::log(p0.lambda_f);
  x0(2) = std::log(0.5);
  if (fit_eta) x0(3) = std::log(config.eta_c);
  x0(dim - 2) = std::log(1e-2 * p0.sigma_f);
  x0(dim - 1) = std::log(1e-2 * p0.sigma_f);

  const int n_starts = std::max(1, options.n_starts);
  std::vector<MinimizeStats> outcomes(n_starts);
#pragma omp parallel for schedule(static)
  for (int start = 0; start < n_starts; ++start) {
    try {
      Eigen::VectorXd xs = x0;
      if (start > 0) {
        rng::Stream s(options.seed, kStreamRestarts + static_cast<std::uint64_t>(start));
        for (int i = 0; i < dim; ++i) xs(i) += 0.25 * s.normal();
      }
      outcomes[start] = minimize_bfgs(f, xs, options);
    } catch (const std::exception&) {
      outcomes[start].value = std::numeric_limits<double>::infinity();
    }
  }
  int best = 0;
  for (int s = 1; s < n_starts; ++s)
    if (outcomes[s].value < outcomes[best].value) best = s;
  if (!(outcomes[best].value < kLarge))
    throw numerical_error("fit_block_avg: no start reached a usable terminal point");

  const Eigen::VectorXd& x = outcomes[best].x;
  BlockAvgFitResult out;
  out.sigma_f = std::exp(x(0));
  out.lambda_f = std::exp(x(1));
  out.nu_f = std::min(std::exp(x(2)), kernels::kNuCap);
  out.eta_c = fit_eta ? std::exp(x(3)) : config.eta_c;
  out.nugget_c = std::exp(x(fit_eta ? 4 : 3));
  out.nugget_f = std::exp(x(fit_eta ? 5 : 4));
  out.objective_value = outcomes[best].value;
  out.criterion = criterion;
  out.n_evals = outcomes[best].evals;
  out.converged = outcomes[best].converged;
  out.start_index = best;
  return out;
}

} // namespace msgp
