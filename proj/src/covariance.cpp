#include "msgp/covariance.hpp"

#include <cmath>
#include <sstream>

#include "msgp/quadrature.hpp"

namespace msgp {

void BivariateMaternParams::check_fields() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw domain_error(std::string("bivariate matern: ") + name + " must be positive");
  };
  positive(lambda_c, "lambda_c");
  positive(lambda_f, "lambda_f");
  positive(lambda_cf, "lambda_cf");
  positive(nu_c, "nu_c");
  positive(nu_f, "nu_f");
  positive(sigma_c, "sigma_c");
  positive(sigma_f, "sigma_f");
  if (!(rho > -1.0 && rho < 1.0))
    throw domain_error("bivariate matern: rho must lie in (-1, 1)");
  if (sigma_nc < 0.0 || sigma_nf < 0.0 || !std::isfinite(sigma_nc) || !std::isfinite(sigma_nf))
    throw domain_error("bivariate matern: nuggets must be nonnegative");
}

double rho_bound(const BivariateMaternParams& p) {
  p.check_fields();
  const double ncf = p.nu_cf();
  const double log_bound = p.nu_c * std::log(p.a_c()) + p.nu_f * std::log(p.a_f()) -
                           2.0 * ncf * std::log(p.a_cf()) + std::lgamma(ncf) -
                           0.5 * std::lgamma(p.nu_c) - 0.5 * std::lgamma(p.nu_f);
  return std::exp(log_bound);
}

ValidityReport check_validity(const BivariateMaternParams& p, double tol) {
  p.check_fields();
  ValidityReport r;
  const double acf2 = p.a_cf() * p.a_cf();
  r.margin_a = acf2 - 0.5 * (p.a_c() * p.a_c() + p.a_f() * p.a_f());
  r.margin_rho = rho_bound(p) - std::abs(p.rho);
  r.feasible = r.margin_a >= -tol * acf2 && r.margin_rho >= -tol;
  return r;
}

BivariateMaternCov::BivariateMaternCov(const BivariateMaternParams& p, Unchecked)
    : p_(p), mc_(p.nu_c), mf_(p.nu_f), mcf_(p.nu_cf()) {}

BivariateMaternCov::BivariateMaternCov(const BivariateMaternParams& p, double tol)
    : BivariateMaternCov(p, Unchecked{}) {
  const ValidityReport r = check_validity(p, tol);
  if (!r.feasible) {
    std::ostringstream os;
    os << "bivariate matern parameters violate the validity conditions"
       << " (margin_a=" << r.margin_a << ", margin_rho=" << r.margin_rho << ")";
    throw validity_error(os.str(), r);
  }
}

BivariateMaternCov BivariateMaternCov::unchecked(const BivariateMaternParams& p) {
  p.check_fields();
  return BivariateMaternCov(p, Unchecked{});
}

double BivariateMaternCov::cov_latent(const Point& x, Scale sx, const Point& y, Scale sy) const {
  const double d = distance(x, y);
  if (sx == sy) {
    if (sx == Scale::Coarse) return p_.sigma_c * p_.sigma_c * mc_(d / p_.lambda_c);
    return p_.sigma_f * p_.sigma_f * mf_(d / p_.lambda_f);
  }
  return p_.rho * p_.sigma_c * p_.sigma_f * mcf_(d / p_.lambda_cf);
}

double BivariateMaternCov::nugget_sd(Scale s) const {
  return s == Scale::Coarse ? p_.sigma_nc : p_.sigma_nf;
}

double cov_full_matern(const Point& x, Scale sx, const Point& y, Scale sy,
                       const BivariateMaternParams& p) {
  return BivariateMaternCov(p).cov(x, sx, y, sy);
}

BlockAvgCov::BlockAvgCov(double fine_sigma, double fine_lambda, double fine_nu, double eta_c,
                         Rect domain, int quadrature_order, double nugget_c, double nugget_f)
    : sigma_f_(fine_sigma),
      lambda_f_(fine_lambda),
      nu_f_(fine_nu),
      eta_(eta_c),
      domain_(domain),
      order_(quadrature_order),
      nugget_c_(nugget_c),
      nugget_f_(nugget_f),
      mf_(fine_nu) {
  if (!(fine_sigma > 0.0) || !(fine_lambda > 0.0) || !(fine_nu > 0.0))
    throw domain_error("block-average model: fine-scale parameters must be positive");
  if (!(eta_c > 0.0)) throw domain_error("block-average model: eta_c must be positive");
  if (domain_.width() <= 0.0 || domain_.height() <= 0.0)
    throw domain_error("block-average model: empty domain");
  if (quadrature_order < 2) throw config_error("block-average model: quadrature order must be >= 2");
  if (nugget_c < 0.0 || nugget_f < 0.0)
    throw domain_error("block-average model: nuggets must be nonnegative");
}

Rect BlockAvgCov::window(const Point& z) const {
  const double h = 0.5 * eta_;
  return domain_.clip({z.x - h, z.y - h, z.x + h, z.y + h});
}

double BlockAvgCov::fine_corr(const Point& a, const Point& b) const {
  return mf_(distance(a, b) / lambda_f_);
}

double BlockAvgCov::cov_latent(const Point& x, Scale sx, const Point& y, Scale sy) const {
  if (!domain_.contains(x) || !domain_.contains(y))
    throw domain_error("block-average model: point outside the domain");
  const double s2 = sigma_f_ * sigma_f_;
  if (sx == Scale::Fine && sy == Scale::Fine) return s2 * fine_corr(x, y);

  namespace quad = msgp::quadrature;
  if (sx != sy) {
    // Single integral over the coarse point's window; the fine point is the
    // kink of the integrand, split there when the window contains it.
    const Point& cp = sx == Scale::Coarse ? x : y;
    const Point& fp = sx == Scale::Coarse ? y : x;
    const Rect w = window(cp);
    const double val = quad::integrate_rect_split(
        w, fp, order_, [&](const Point& z) { return fine_corr(z, fp); });
    return s2 * val / w.area();
  }

  // Coarse-coarse double integral; the inner integral is split at the outer
  // quadrature node, the outer integrand is smooth.
  const Rect wx = window(x);
  const Rect wy = window(y);
  const double val = quad::integrate_rect(wx, order_, [&](const Point& z) {
    return quad::integrate_rect_split(wy, z, order_,
                                      [&](const Point& zp) { return fine_corr(z, zp); });
  });
  return s2 * val / (wx.area() * wy.area());
}

double BlockAvgCov::nugget_sd(Scale s) const { return s == Scale::Coarse ? nugget_c_ : nugget_f_; }

double cov_block_avg(const Point& x, Scale sx, const Point& y, Scale sy, const BlockAvgCov& m) {
  return m.cov(x, sx, y, sy);
}

std::vector<double> pseudo_isotropic_variogram(const MultiscaleCovariance& m, Scale sa, Scale sb,
                                               const Point& x, std::span<const double> r_values) {
  if (auto dom = m.domain(); dom && !dom->contains(x))
    throw domain_error("pseudo_isotropic_variogram: base point outside the domain");
  const double c0 = m.cov_latent(x, sa, x, sb);
  std::vector<double> out;
  out.reserve(r_values.size());
  for (double r : r_values) {
    const Point xr{x.x + r, x.y};
    if (auto dom = m.domain(); dom && !dom->contains(xr))
      throw domain_error("pseudo_isotropic_variogram: x + r e1 leaves the domain at r = " +
                         std::to_string(r));
    out.push_back(r == 0.0 ? 0.0 : c0 - m.cov_latent(x, sa, xr, sb));
  }
  return out;
}

} // namespace msgp
