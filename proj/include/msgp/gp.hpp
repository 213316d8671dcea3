#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "msgp/covariance.hpp"
#include "msgp/types.hpp"

namespace msgp {

/// Observations at both support scales, stacked [coarse; fine].
struct MultiscaleDataset {
  Eigen::MatrixX2d X_c{0, 2}, X_f{0, 2};
  Eigen::VectorXd y_c, y_f;
  double noise_c = 0.0, noise_f = 0.0;  // known observation noise sd per scale

  int n_c() const { return static_cast<int>(X_c.rows()); }
  int n_f() const { return static_cast<int>(X_f.rows()); }
  int n() const { return n_c() + n_f(); }

  TaggedPoint obs(int i) const {
    if (i < n_c()) return {{X_c(i, 0), X_c(i, 1)}, Scale::Coarse};
    const int j = i - n_c();
    return {{X_f(j, 0), X_f(j, 1)}, Scale::Fine};
  }
  double value(int i) const { return i < n_c() ? y_c(i) : y_f(i - n_c()); }
  double noise_sd(Scale s) const { return s == Scale::Coarse ? noise_c : noise_f; }

  Eigen::VectorXd stacked_values() const;
  std::vector<TaggedPoint> tagged_points() const;

  /// Size coherence and the duplicate rule (no repeated location+scale
  /// unless noise or nugget makes the covariance nonsingular is checked at
  /// assembly time).
  void validate() const;
};

/// Conditional mean/variance at tagged targets.
struct PosteriorSummary {
  std::vector<TaggedPoint> targets;
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  std::optional<Eigen::MatrixXd> covariance;
  int clamped = 0;        // tiny negative variances clamped to 0
  double jitter = 0.0;    // jitter used for the observation factorization
};

/// Cholesky factorization with escalating diagonal jitter
/// (delta * trace/N for delta in {1e-12, 1e-10, 1e-8}).
class CholFactor {
public:
  /// Takes the matrix by value and factorizes in place (one internal backup
  /// is kept while jitter retries are possible).
  static CholFactor compute(Eigen::MatrixXd C);

  /// Lower triangle holds the factor; the strict upper triangle is unspecified.
  const Eigen::MatrixXd& matrixL() const { return L_; }
  double log_det() const;
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;
  Eigen::MatrixXd inverse() const;
  double jitter() const { return jitter_; }
  int attempts() const { return attempts_; }
  int size() const { return static_cast<int>(L_.rows()); }

private:
  Eigen::MatrixXd L_;
  double jitter_ = 0.0;
  int attempts_ = 0;
};

enum class NuggetPolicy { AtCoincidence, None };

/// |A| x |B| covariance matrix. With AtCoincidence, nuggets are added where
/// two points share both location and scale (diagonal blocks only), per the
/// zero-lag indicator of the full model.
Eigen::MatrixXd assemble_cov(std::span<const TaggedPoint> A, std::span<const TaggedPoint> B,
                             const MultiscaleCovariance& model,
                             NuggetPolicy policy = NuggetPolicy::AtCoincidence);

/// Observation covariance C_s: latent + nugget at coincidence + per-observation
/// known noise on the diagonal.
Eigen::MatrixXd assemble_obs_cov(const MultiscaleDataset& data, const MultiscaleCovariance& model);

/// Conditioning on the multiscale data (plug-in posterior for the latent
/// field; nuggets and noise act on observations only).
PosteriorSummary condition(const MultiscaleDataset& data, const MultiscaleCovariance& model,
                           std::span<const TaggedPoint> targets, bool want_cov = false);

enum class Criterion { ML, LOO };
inline const char* to_string(Criterion c) { return c == Criterion::ML ? "ml" : "loo"; }

double log_marginal_likelihood(const MultiscaleDataset& data, const MultiscaleCovariance& model);
double loo_cv_pseudolikelihood(const MultiscaleDataset& data, const MultiscaleCovariance& model);

struct LikelihoodResult {
  double value = 0.0;
  double jitter = 0.0;
};
/// Either pseudo-likelihood plus the jitter the factorization needed.
LikelihoodResult likelihood(const MultiscaleDataset& data, const MultiscaleCovariance& model,
                            Criterion criterion);

/// Parameter overloads: return -inf when the validity conditions fail, so
/// optimizers can reject infeasible iterates without exception control flow.
double log_marginal_likelihood(const MultiscaleDataset& data, const BivariateMaternParams& p);
double loo_cv_pseudolikelihood(const MultiscaleDataset& data, const BivariateMaternParams& p);

} // namespace msgp
