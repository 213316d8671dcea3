#pragma once

#include <optional>
#include <span>

#include <Eigen/Dense>

namespace msgp::kernels {

/// Orders above this return the Gaussian limit exp(-r^2/2): sqrt(2 nu)^nu
/// overflows and the Matern correlation is numerically indistinguishable
/// from its limit there.
constexpr double kNuCap = 50.0;

/// Shape of a Matern correlation: smoothness nu, correlation length lambda,
/// and an optional anisotropy matrix D (isotropic case is D = lambda^-2 I).
struct MaternShape {
  double nu = 0.5;
  double lambda = 1.0;
  std::optional<Eigen::MatrixXd> D;  // d x d SPD, squared-length units
};

/// sqrt(r^T D^-1 r) for SPD D, d in {1,2,3}.
double mahalanobis(std::span<const double> r, const Eigen::MatrixXd& D);

/// Matern correlation M(r | nu) = 2^(1-nu)/Gamma(nu) (sqrt(2 nu) r)^nu K_nu(sqrt(2 nu) r)
/// of a pre-scaled nonnegative distance r (the Mahalanobis distance, with
/// lambda absorbed). M(0) = 1 exactly; underflows cleanly to 0.
double matern(double r, double nu);

/// Repeated evaluation at fixed order: caches the order-dependent constants
/// and dispatches to the half-integer closed forms where available.
class MaternEvaluator {
public:
  explicit MaternEvaluator(double nu);
  double operator()(double r) const;
  double nu() const { return nu_; }

private:
  enum class Mode { HalfInt12, HalfInt32, HalfInt52, Gaussian, General };
  Mode mode_;
  double nu_ = 0.0;
  double sqrt_2nu_ = 0.0;
  double log_prefactor_ = 0.0;  // (1-nu) ln 2 - lgamma(nu)
};

} // namespace msgp::kernels
