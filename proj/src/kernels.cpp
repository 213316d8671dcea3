#include "msgp/kernels.hpp"

#include <cmath>
#include <sstream>

#include "msgp/bessel.hpp"
#include "msgp/errors.hpp"

namespace msgp::kernels {

double mahalanobis(std::span<const double> r, const Eigen::MatrixXd& D) {
  const auto d = static_cast<Eigen::Index>(r.size());
  if (d < 1 || d > 3) throw domain_error("mahalanobis: dimension must be 1..3");
  if (D.rows() != d || D.cols() != d) throw domain_error("mahalanobis: D shape mismatch");
  if (!D.isApprox(D.transpose(), 1e-12)) {
    std::ostringstream os;
    os << "mahalanobis: D not symmetric:\n" << D;
    throw domain_error(os.str());
  }
  Eigen::LLT<Eigen::MatrixXd> llt(D);
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "mahalanobis: D not positive definite:\n" << D;
    throw domain_error(os.str());
  }
  Eigen::VectorXd rv(d);
  for (Eigen::Index i = 0; i < d; ++i) rv[i] = r[i];
  const double q = rv.dot(llt.solve(rv));
  return q <= 0.0 ? 0.0 : std::sqrt(q);
}

MaternEvaluator::MaternEvaluator(double nu) : nu_(nu) {
  if (!(nu > 0.0) || !std::isfinite(nu)) throw domain_error("matern: nu must be positive");
  if (nu > kNuCap) {
    mode_ = Mode::Gaussian;
    return;
  }
  sqrt_2nu_ = std::sqrt(2.0 * nu);
  if (nu == 0.5) mode_ = Mode::HalfInt12;
  else if (nu == 1.5) mode_ = Mode::HalfInt32;
  else if (nu == 2.5) mode_ = Mode::HalfInt52;
  else {
    mode_ = Mode::General;
    log_prefactor_ = (1.0 - nu) * M_LN2 - std::lgamma(nu);
  }
}

double MaternEvaluator::operator()(double r) const {
  if (!(r >= 0.0) || !std::isfinite(r)) throw domain_error("matern: r must be finite and >= 0");
  if (r == 0.0) return 1.0;
  switch (mode_) {
    case Mode::Gaussian:
      return std::exp(-0.5 * r * r);
    case Mode::HalfInt12:
      return std::exp(-sqrt_2nu_ * r);
    case Mode::HalfInt32: {
      const double z = sqrt_2nu_ * r;
      return (1.0 + z) * std::exp(-z);
    }
    case Mode::HalfInt52: {
      const double z = sqrt_2nu_ * r;
      return (1.0 + z + z * z / 3.0) * std::exp(-z);
    }
    case Mode::General: {
      const double z = sqrt_2nu_ * r;
      const double logm = log_prefactor_ + nu_ * std::log(z) + bessel::log_cyl_bessel_k(nu_, z);
      return std::exp(logm);  // underflows to exactly 0 in the far tail
    }
  }
  return 0.0;
}

double matern(double r, double nu) { return MaternEvaluator(nu)(r); }

} // namespace msgp::kernels
