#include "msgp/gp.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace msgp {

Eigen::VectorXd MultiscaleDataset::stacked_values() const {
  Eigen::VectorXd y(n());
  y.head(n_c()) = y_c;
  y.tail(n_f()) = y_f;
  return y;
}

std::vector<TaggedPoint> MultiscaleDataset::tagged_points() const {
  std::vector<TaggedPoint> pts(n());
  for (int i = 0; i < n(); ++i) pts[i] = obs(i);
  return pts;
}

void MultiscaleDataset::validate() const {
  if (X_c.rows() != y_c.size() || X_f.rows() != y_f.size())
    throw domain_error("dataset: location/value size mismatch");
  if (n() < 1) throw domain_error("dataset: need at least one observation");
  if (noise_c < 0.0 || noise_f < 0.0) throw domain_error("dataset: negative noise");
}

CholFactor CholFactor::compute(Eigen::MatrixXd C) {
  if (C.rows() != C.cols()) throw domain_error("factorize: matrix not square");
  const int n = static_cast<int>(C.rows());
  const double tr = C.trace();
  CholFactor f;
  const double deltas[] = {0.0, 1e-12, 1e-10, 1e-8};
  Eigen::MatrixXd backup;
  double min_diag = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (k == 0) {
      backup = C;
      min_diag = C.diagonal().minCoeff();
    } else {
      C = backup;
      C.diagonal().array() += deltas[k] * tr / n;
    }
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(C);  // factorizes C in place
    f.attempts_ = k + 1;
    if (llt.info() == Eigen::Success) {
      f.jitter_ = deltas[k] * tr / n;
      f.L_ = std::move(C);
      return f;
    }
  }
  std::ostringstream os;
  os << "factorize: not positive definite after max jitter (n=" << n
     << ", min diagonal=" << min_diag << ")";
  throw numerical_error(os.str());
}

double CholFactor::log_det() const { return 2.0 * L_.diagonal().array().log().sum(); }

Eigen::VectorXd CholFactor::solve(const Eigen::VectorXd& b) const {
  Eigen::VectorXd x = L_.triangularView<Eigen::Lower>().solve(b);
  L_.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
  return x;
}

Eigen::MatrixXd CholFactor::solve(const Eigen::MatrixXd& B) const {
  Eigen::MatrixXd X = L_.triangularView<Eigen::Lower>().solve(B);
  L_.triangularView<Eigen::Lower>().transpose().solveInPlace(X);
  return X;
}

Eigen::MatrixXd CholFactor::inverse() const {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(L_.rows(), L_.cols());
  return solve(id);
}

namespace {

bool coincide(const TaggedPoint& a, const TaggedPoint& b) {
  return a.scale == b.scale && a.p.x == b.p.x && a.p.y == b.p.y;
}

} // namespace

Eigen::MatrixXd assemble_cov(std::span<const TaggedPoint> A, std::span<const TaggedPoint> B,
                             const MultiscaleCovariance& model, NuggetPolicy policy) {
  const auto na = static_cast<Eigen::Index>(A.size());
  const auto nb = static_cast<Eigen::Index>(B.size());
  Eigen::MatrixXd C(na, nb);
#pragma omp parallel for schedule(static) if (na * nb > 4096)
  for (Eigen::Index i = 0; i < na; ++i) {
    for (Eigen::Index j = 0; j < nb; ++j) {
      double c = model.cov_latent(A[i].p, A[i].scale, B[j].p, B[j].scale);
      if (policy == NuggetPolicy::AtCoincidence && coincide(A[i], B[j])) {
        const double nug = model.nugget_sd(A[i].scale);
        c += nug * nug;
      }
      C(i, j) = c;
    }
  }
  return C;
}

Eigen::MatrixXd assemble_obs_cov(const MultiscaleDataset& data, const MultiscaleCovariance& model) {
  data.validate();
  const auto pts = data.tagged_points();
  Eigen::MatrixXd C = assemble_cov(pts, pts, model, NuggetPolicy::AtCoincidence);
  for (int i = 0; i < data.n(); ++i) {
    const double ns = data.noise_sd(pts[i].scale);
    C(i, i) += ns * ns;
  }
  // Duplicate observations are only factorizable when noise or nugget > 0.
  for (int i = 0; i < data.n(); ++i)
    for (int j = i + 1; j < data.n(); ++j)
      if (coincide(pts[i], pts[j]) && data.noise_sd(pts[i].scale) == 0.0 &&
          model.nugget_sd(pts[i].scale) == 0.0)
        throw domain_error("dataset: duplicate observation at the same location and scale "
                           "with zero noise");
  return C;
}

PosteriorSummary condition(const MultiscaleDataset& data, const MultiscaleCovariance& model,
                           std::span<const TaggedPoint> targets, bool want_cov) {
  PosteriorSummary out;
  out.targets.assign(targets.begin(), targets.end());
  const auto m = static_cast<Eigen::Index>(targets.size());
  if (m == 0) {
    out.mean.resize(0);
    out.variance.resize(0);
    return out;
  }
  const CholFactor f = CholFactor::compute(assemble_obs_cov(data, model));
  out.jitter = f.jitter();

  const auto obs = data.tagged_points();
  const Eigen::MatrixXd K = assemble_cov(targets, obs, model, NuggetPolicy::None);
  const Eigen::VectorXd alpha = f.solve(data.stacked_values());
  out.mean = K * alpha;

  const Eigen::MatrixXd Kt = K.transpose();
  const Eigen::MatrixXd W = f.solve(Kt);  // N x M
  if (want_cov) {
    Eigen::MatrixXd prior = assemble_cov(targets, targets, model, NuggetPolicy::None);
    Eigen::MatrixXd post = prior - K * W;
    post = 0.5 * (post + post.transpose()).eval();
    out.variance.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      double v = post(i, i);
      if (v < 0.0) {
        ++out.clamped;
        v = 0.0;
      }
      out.variance(i) = v;
      post(i, i) = v;
    }
    out.covariance = std::move(post);
  } else {
    out.variance.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double prior_ii =
          model.cov_latent(targets[i].p, targets[i].scale, targets[i].p, targets[i].scale);
      double v = prior_ii - K.row(i).dot(W.col(i));
      if (v < 0.0) {
        ++out.clamped;
        v = 0.0;
      }
      out.variance(i) = v;
    }
  }
  return out;
}

double log_marginal_likelihood(const MultiscaleDataset& data, const MultiscaleCovariance& model) {
  return likelihood(data, model, Criterion::ML).value;
}

double loo_cv_pseudolikelihood(const MultiscaleDataset& data, const MultiscaleCovariance& model) {
  return likelihood(data, model, Criterion::LOO).value;
}

LikelihoodResult likelihood(const MultiscaleDataset& data, const MultiscaleCovariance& model,
                            Criterion criterion) {
  const CholFactor f = CholFactor::compute(assemble_obs_cov(data, model));
  const Eigen::VectorXd y = data.stacked_values();
  LikelihoodResult out;
  out.jitter = f.jitter();
  if (criterion == Criterion::ML) {
    const Eigen::VectorXd alpha = f.solve(y);
    out.value = -0.5 * y.dot(alpha) - 0.5 * f.log_det() -
                0.5 * data.n() * std::log(2.0 * M_PI);
    return out;
  }
  const Eigen::MatrixXd Cinv = f.inverse();
  const Eigen::VectorXd alpha = f.solve(y);
  double ll = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    const double q = Cinv(i, i);
    if (!(q > 0.0))
      throw numerical_error("loo_cv: nonpositive diagonal of the inverse at index " +
                            std::to_string(i));
    const double resid = alpha(i) / q;
    ll -= 0.5 * (resid * resid * q + std::log(1.0 / q) + std::log(2.0 * M_PI));
  }
  out.value = ll;
  return out;
}

double log_marginal_likelihood(const MultiscaleDataset& data, const BivariateMaternParams& p) {
  if (!check_validity(p).feasible) return -std::numeric_limits<double>::infinity();
  return log_marginal_likelihood(data, BivariateMaternCov::unchecked(p));
}

double loo_cv_pseudolikelihood(const MultiscaleDataset& data, const BivariateMaternParams& p) {
  if (!check_validity(p).feasible) return -std::numeric_limits<double>::infinity();
  return loo_cv_pseudolikelihood(data, BivariateMaternCov::unchecked(p));
}

} // namespace msgp
