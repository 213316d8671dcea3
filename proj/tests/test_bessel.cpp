#include <doctest.h>

#include <cmath>
#include <random>

#include "msgp/bessel.hpp"
#include "msgp/errors.hpp"
#include "oracle_bessel.hpp"

using msgp::bessel::cyl_bessel_k;
using msgp::bessel::log_cyl_bessel_k;
using msgp_test::oracle_bessel_k;

namespace {
double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }
}

// The oracle itself is pinned against 30-digit mpmath references before it is
// trusted to judge the production code.
TEST_CASE("oracle matches frozen high-precision constants to 25+ digits") {
  struct Ref { const char* nu_x_label; double nu, x; const char* value; };
  // References evaluated at the exact double arguments (not their decimal
  // spellings), so agreement can be checked well past double precision.
  const Ref refs[] = {
      {"K_2.3(0.9)", 2.3, 0.9, "3.17934593651787678425795432051888"},
      {"K_0.25(5.5)", 0.25, 5.5, "0.00214995443136335746526082879215039"},
      {"K_7.6(0.02)", 7.6, 0.02, "1802814602801747134.45044736570755"},
      {"K_30(12)", 30.0, 12.0, "5930950.76481256203116356243058333"},
      {"K_5(100)", 5.0, 100.0, "5.27325611329294989461777188449045e-45"},
      {"K_0.75(389)", 0.75, 389.0, "7.28963691393359502725926325380163e-171"},
      {"K_12.5(37.2)", 12.5, 37.2, "1.11698886521535982751794349895943e-16"},
      {"K_49.5(0.001)", 49.5, 0.001, "1.0910728291390356151385282972605e+225"},
  };
  for (const auto& r : refs) {
    INFO(r.nu_x_label);
    CHECK(msgp_test::oracle_rel_diff_vs(r.nu, r.x, r.value) < 1e-25);
  }
}

TEST_CASE("log_cyl_bessel_k matches the oracle over a wide (nu, x) grid") {
  const double nus[] = {0.05, 0.25, 0.5, 0.809, 1.0, 1.5, 1.86, 2.0, 2.5,
                        2.91, 3.0, 5.0, 7.3, 10.0, 12.5, 20.0, 30.0, 49.5};
  const double xs[] = {1e-6, 1e-3, 0.02, 0.1, 0.5, 0.9, 1.99, 2.0, 2.01,
                       3.7, 5.5, 10.0, 37.2, 100.0, 389.0};
  double worst = 0.0;
  for (double nu : nus)
    for (double x : xs) {
      const double got = log_cyl_bessel_k(nu, x);
      const double want = oracle_bessel_k(nu, x).log_value;
      const double err = std::abs(got - want) / std::max(1.0, std::abs(want));
      CAPTURE(nu);
      CAPTURE(x);
      CHECK(err < 1e-13);
      worst = std::max(worst, err);
    }
  MESSAGE("worst log-space relative error: ", worst);
}

TEST_CASE("integer orders go through the mu=0 limit cleanly") {
  for (double nu : {0.0, 1.0, 2.0, 7.0}) {
    for (double x : {0.3, 1.7, 4.2}) {
      const double want = oracle_bessel_k(nu, x).log_value;
      CHECK(std::abs(log_cyl_bessel_k(nu, x) - want) / std::max(1.0, std::abs(want)) < 1e-13);
      // No jump across the integer: neighboring orders bracket it.
      const double lo = log_cyl_bessel_k(std::max(0.0, nu - 1e-9), x);
      const double hi = log_cyl_bessel_k(nu + 1e-9, x);
      CHECK(std::abs(hi - lo) < 1e-6);
    }
  }
}

TEST_CASE("half-integer closed form K_{1/2}") {
  for (double x : {0.01, 0.5, 1.0, 2.5, 30.0}) {
    const double want = std::sqrt(M_PI / (2.0 * x)) * std::exp(-x);
    CHECK(rel_err(cyl_bessel_k(0.5, x), want) < 1e-13);
  }
}

TEST_CASE("domain errors") {
  CHECK_THROWS_AS(log_cyl_bessel_k(-0.5, 1.0), msgp::domain_error);
  CHECK_THROWS_AS(log_cyl_bessel_k(1.0, 0.0), msgp::domain_error);
  CHECK_THROWS_AS(log_cyl_bessel_k(1.0, -2.0), msgp::domain_error);
  CHECK_THROWS_AS(log_cyl_bessel_k(std::nan(""), 1.0), msgp::domain_error);
}
