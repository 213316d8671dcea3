#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msgp/errors.hpp"
#include "msgp/kernels.hpp"
#include "msgp/types.hpp"

namespace msgp {

/// The 10-hyperparameter set of the full bivariate Matern multiscale model.
/// The cross smoothness is always the arithmetic mean nu_cf = (nu_c + nu_f)/2.
struct BivariateMaternParams {
  double lambda_c = 0.1, lambda_f = 0.05, lambda_cf = 0.07;
  double nu_c = 1.5, nu_f = 0.5;
  double sigma_c = 1.0, sigma_f = 1.0;
  double rho = 0.0;                       // collocated correlation, in (-1, 1)
  double sigma_nc = 0.0, sigma_nf = 0.0;  // nugget standard deviations

  double nu_cf() const { return 0.5 * (nu_c + nu_f); }
  double a_c() const { return std::sqrt(2.0 * nu_c) / lambda_c; }
  double a_f() const { return std::sqrt(2.0 * nu_f) / lambda_f; }
  double a_cf() const { return std::sqrt(2.0 * nu_cf()) / lambda_cf; }

  /// Positivity/range checks on the raw fields; throws domain_error.
  void check_fields() const;
};

struct ValidityReport {
  bool feasible = false;
  double margin_a = 0.0;    // a_cf^2 - (a_c^2 + a_f^2)/2
  double margin_rho = 0.0;  // rho_bound - |rho|
};

/// Right-hand side of the correlation-coefficient validity bound, evaluated
/// in log space so Gamma factors cannot overflow for nu <= 50.
double rho_bound(const BivariateMaternParams& p);

/// Feasibility of the two sufficient validity conditions. margin_a is
/// accepted down to -tol * a_cf^2 (relative), margin_rho down to -tol.
ValidityReport check_validity(const BivariateMaternParams& p, double tol = 1e-9);

/// Constraint violation carrying the per-constraint margins.
class validity_error : public domain_error {
public:
  validity_error(const std::string& what, const ValidityReport& report)
      : domain_error(what), report_(report) {}
  const ValidityReport& report() const { return report_; }

private:
  ValidityReport report_;
};

/// Common interface of the two multiscale covariance models: pointwise
/// evaluation only; batch assembly lives in the gp module. All evaluations
/// are pure and safe to call concurrently.
class MultiscaleCovariance {
public:
  virtual ~MultiscaleCovariance() = default;

  /// Covariance of the latent (noise-free) field between two tagged points.
  virtual double cov_latent(const Point& x, Scale sx, const Point& y, Scale sy) const = 0;

  virtual double nugget_sd(Scale s) const = 0;

  /// Domain restriction, if the model has one (block-average model only).
  virtual std::optional<Rect> domain() const { return std::nullopt; }

  /// True when cov_latent depends on the points only through their
  /// difference; enables lag-table assembly on aligned grids.
  virtual bool stationary() const { return false; }

  /// Full covariance including the zero-lag nugget on diagonal blocks.
  double cov(const Point& x, Scale sx, const Point& y, Scale sy) const {
    double c = cov_latent(x, sx, y, sy);
    if (sx == sy && x.x == y.x && x.y == y.y) {
      const double n = nugget_sd(sx);
      c += n * n;
    }
    return c;
  }
};

/// Full bivariate Matern model (validated at construction).
class BivariateMaternCov final : public MultiscaleCovariance {
public:
  explicit BivariateMaternCov(const BivariateMaternParams& p, double tol = 1e-9);
  /// Skips the validity check (feasibility already established by the caller).
  static BivariateMaternCov unchecked(const BivariateMaternParams& p);

  double cov_latent(const Point& x, Scale sx, const Point& y, Scale sy) const override;
  double nugget_sd(Scale s) const override;
  bool stationary() const override { return true; }
  const BivariateMaternParams& params() const { return p_; }

private:
  struct Unchecked {};
  BivariateMaternCov(const BivariateMaternParams& p, Unchecked);

  BivariateMaternParams p_;
  kernels::MaternEvaluator mc_, mf_, mcf_;
};

/// Block-averaging model: fine-scale Matern plus the moving-window average
/// relation, with coarse and cross blocks evaluated by tensor-product
/// Gauss-Legendre quadrature over the (boundary-clipped) window.
class BlockAvgCov final : public MultiscaleCovariance {
public:
  BlockAvgCov(double fine_sigma, double fine_lambda, double fine_nu, double eta_c, Rect domain,
              int quadrature_order = 16, double nugget_c = 0.0, double nugget_f = 0.0);

  double cov_latent(const Point& x, Scale sx, const Point& y, Scale sy) const override;
  double nugget_sd(Scale s) const override;
  std::optional<Rect> domain() const override { return domain_; }

  double fine_sigma() const { return sigma_f_; }
  double fine_lambda() const { return lambda_f_; }
  double fine_nu() const { return nu_f_; }
  double eta_c() const { return eta_; }
  int quadrature_order() const { return order_; }

  /// Window H(z), clipped to the domain.
  Rect window(const Point& z) const;

private:
  double fine_corr(const Point& a, const Point& b) const;

  double sigma_f_, lambda_f_, nu_f_, eta_;
  Rect domain_;
  int order_;
  double nugget_c_, nugget_f_;
  kernels::MaternEvaluator mf_;
};

/// Eq.-16-style pointwise evaluation with a per-call validity check.
double cov_full_matern(const Point& x, Scale sx, const Point& y, Scale sy,
                       const BivariateMaternParams& p);

/// Pointwise evaluation of the block-average model.
double cov_block_avg(const Point& x, Scale sx, const Point& y, Scale sy, const BlockAvgCov& m);

/// gamma(r) = C^(ab)(x, x) - C^(ab)(x, x + r e1) per requested r, for models
/// whose coarse block need not be isotropic.
std::vector<double> pseudo_isotropic_variogram(const MultiscaleCovariance& m, Scale sa, Scale sb,
                                               const Point& x, std::span<const double> r_values);

} // namespace msgp
