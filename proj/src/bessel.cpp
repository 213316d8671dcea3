#include "msgp/bessel.hpp"

#include <cmath>
#include <limits>

#include "msgp/errors.hpp"

namespace msgp::bessel {
namespace {

constexpr double kEps = 2.2204460492503131e-16;
constexpr int kMaxIter = 2000;

// Coefficients of 1/Gamma(z) = sum c_k z^k (Abramowitz & Stegun 6.1.34).
constexpr double kInvGammaCoef[26] = {
    1.0000000000000000e+00,  5.7721566490153286e-01, -6.5587807152025388e-01,
    -4.2002635034095236e-02, 1.6653861138229149e-01, -4.2197734555544337e-02,
    -9.6219715278769736e-03, 7.2189432466630995e-03, -1.1651675918590651e-03,
    -2.1524167411495097e-04, 1.2805028238811619e-04, -2.0134854780788239e-05,
    -1.2504934821426707e-06, 1.1330272319816959e-06, -2.0563384169776071e-07,
    6.1160951044814158e-09,  5.0020076444692229e-09, -1.1812745704870201e-09,
    1.0434267116911005e-10,  7.7822634399050712e-12, -3.6968056186422057e-12,
    5.1003702874544760e-13,  -2.0583260535665068e-14, -5.3481225394230180e-15,
    1.2267786282382608e-15,  -1.1812593016974588e-16};

// Temme's auxiliary gamma combinations for |mu| <= 1/2:
//   gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu)
//   gam2 = (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2
// computed from the even/odd parts of the 1/Gamma series, which avoids the
// catastrophic cancellation of the naive difference as mu -> 0.
void temme_gamma(double mu, double& gam1, double& gam2, double& one_over_gamma_1_plus,
                 double& one_over_gamma_1_minus) {
  const double mu2 = mu * mu;
  double even = 0.0, odd = 0.0;
  // 1/Gamma(1+mu) = sum_k c_k mu^(k-1); split by parity of the power of mu.
  for (int k = 25; k >= 1; k -= 2) even = even * mu2 + kInvGammaCoef[k];   // c2,c4,...
  for (int k = 24; k >= 0; k -= 2) odd = odd * mu2 + kInvGammaCoef[k];     // c1,c3,...
  gam1 = -even;
  gam2 = odd;
  one_over_gamma_1_plus = gam2 + mu * even;
  one_over_gamma_1_minus = gam2 - mu * even;
}

struct ScaledPair {
  double k_mu;      // K_mu(x) * exp(-ln_scale)
  double k_mu_p1;   // K_{mu+1}(x) * exp(-ln_scale)
  double ln_scale;
};

// Temme series for K_mu, K_{mu+1}, x <= 2, |mu| <= 1/2.
ScaledPair temme_series(double mu, double x) {
  const double pimu = M_PI * mu;
  const double fact = std::abs(pimu) < 1e-30 ? 1.0 : pimu / std::sin(pimu);
  double d = -std::log(x / 2.0);
  double e = mu * d;
  const double fact2 = std::abs(e) < 1e-30 ? 1.0 : std::sinh(e) / e;
  double gam1, gam2, gampl, gammi;
  temme_gamma(mu, gam1, gam2, gampl, gammi);
  double ff = fact * (gam1 * std::cosh(e) + gam2 * fact2 * d);
  double sum = ff;
  e = std::exp(e);
  double p = 0.5 * e / gampl;
  double q = 0.5 / (e * gammi);
  double c = 1.0;
  d = x * x / 4.0;
  double sum1 = p;
  int i = 1;
  for (; i <= kMaxIter; ++i) {
    ff = (i * ff + p + q) / (i * i - mu * mu);
    c *= d / i;
    p /= (i - mu);
    q /= (i + mu);
    const double del = c * ff;
    sum += del;
    const double del1 = c * (p - i * ff);
    sum1 += del1;
    if (std::abs(del) < std::abs(sum) * kEps) break;
  }
  if (i > kMaxIter) throw numerical_error("bessel_k: Temme series did not converge");
  return {sum, sum1 * (2.0 / x), 0.0};
}

// Steed's CF2 evaluation for x > 2, |mu| <= 1/2. Returns e^x-scaled values.
ScaledPair steed_cf2(double mu, double x) {
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d, delh = d;
  double q1 = 0.0, q2 = 1.0;
  const double a1 = 0.25 - mu * mu;
  double q = a1, c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;
  int i = 2;
  for (; i <= kMaxIter; ++i) {
    a -= 2 * (i - 1);
    c = -a * c / i;
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels) < std::abs(s) * kEps) break;
  }
  if (i > kMaxIter) throw numerical_error("bessel_k: CF2 did not converge");
  h = a1 * h;
  const double ke_mu = std::sqrt(M_PI / (2.0 * x)) / s;  // e^x K_mu(x)
  const double ke_mu_p1 = ke_mu * (mu + x + 0.5 - h) / x;
  return {ke_mu, ke_mu_p1, -x};
}

} // namespace

double log_cyl_bessel_k(double nu, double x) {
  if (!(nu >= 0.0) || !(x > 0.0) || !std::isfinite(nu) || !std::isfinite(x))
    throw domain_error("bessel_k: require nu >= 0 and x > 0, got nu=" + std::to_string(nu) +
                       " x=" + std::to_string(x));

  const int n = static_cast<int>(std::lround(nu));
  const double mu = nu - n;  // |mu| <= 1/2

  ScaledPair sp = x <= 2.0 ? temme_series(mu, x) : steed_cf2(mu, x);

  // Upward recurrence K_{m+1} = K_{m-1} + 2m/x K_m, renormalizing so huge
  // orders at small arguments cannot overflow.
  double klo = sp.k_mu, khi = sp.k_mu_p1, ln_scale = sp.ln_scale;
  const double xi = 1.0 / x;
  for (int j = 1; j <= n; ++j) {
    const double knext = klo + 2.0 * (mu + j) * xi * khi;
    klo = khi;
    khi = knext;
    if (klo > 1e250) {
      klo *= 1e-250;
      khi *= 1e-250;
      ln_scale += 250.0 * M_LN10;
    }
  }
  // After n steps klo holds K_{mu+n} = K_nu.
  return std::log(klo) + ln_scale;
}

double cyl_bessel_k(double nu, double x) { return std::exp(log_cyl_bessel_k(nu, x)); }

} // namespace msgp::bessel
