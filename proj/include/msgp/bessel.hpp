#pragma once

namespace msgp::bessel {

/// log K_nu(x) for real order nu >= 0 and x > 0.
///
/// Evaluated in log space so that both the small-argument growth
/// (K_nu(x) ~ Gamma(nu) (2/x)^nu / 2) and the large-argument decay
/// (K_nu(x) ~ sqrt(pi/2x) e^-x) stay representable for nu up to ~50 and
/// x spanning many decades. Temme's series below x = 2, Steed's CF2
/// continued fraction above, scaled upward recurrence in the order.
double log_cyl_bessel_k(double nu, double x);

/// K_nu(x); underflows to 0 and overflows to +inf through the log form.
double cyl_bessel_k(double nu, double x);

} // namespace msgp::bessel
