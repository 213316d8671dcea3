#pragma once

// Arbitrary-precision oracle for K_nu(x) and the Matern correlation, used to
// validate the production Temme/CF2 implementation. Kept independent of it:
// evaluates the integral representation
//   K_nu(x) = integral_0^inf exp(-x cosh t) cosh(nu t) dt
// by the trapezoidal rule in MPFR arithmetic (the integrand is even and
// analytic with double-exponential decay, so the trapezoid converges
// geometrically). Accuracy is itself asserted against frozen 30-digit
// reference constants in the test suite.

namespace msgp_test {

/// K_nu(x) to ~60+ significant digits, returned as log value + double mantissa.
struct OracleK {
  double log_value;   // log K_nu(x)
  double value;       // K_nu(x), may over/underflow double range
};

OracleK oracle_bessel_k(double nu, double x);

/// Matern correlation via the oracle K.
double oracle_matern(double r, double nu);

/// |K_nu(x) - ref| / ref computed in MPFR against a decimal reference string,
/// so agreement can be asserted beyond double precision.
double oracle_rel_diff_vs(double nu, double x, const char* ref_decimal);

} // namespace msgp_test
