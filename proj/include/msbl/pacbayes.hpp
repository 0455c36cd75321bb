#ifndef MSBL_PACBAYES_HPP_
#define MSBL_PACBAYES_HPP_

#include <cmath>
#include <optional>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "msbl/core.hpp"

namespace msbl {

enum class CovarianceKind { Isotropic, Diagonal, Full };

/// Multivariate normal with an isotropic, diagonal, or dense covariance.
template <typename Scalar>
struct Gaussian {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Vec mean;
  CovarianceKind kind = CovarianceKind::Isotropic;
  Scalar variance = Scalar(1);  // isotropic
  Vec variances;                // diagonal
  Mat covariance;               // full

  static Gaussian isotropic(Vec mean, Scalar variance) {
    Gaussian g;
    g.mean = std::move(mean);
    g.kind = CovarianceKind::Isotropic;
    g.variance = variance;
    g.validate();
    return g;
  }
  static Gaussian diagonal(Vec mean, Vec variances) {
    Gaussian g;
    g.mean = std::move(mean);
    g.kind = CovarianceKind::Diagonal;
    g.variances = std::move(variances);
    g.validate();
    return g;
  }
  static Gaussian full(Vec mean, Mat covariance) {
    Gaussian g;
    g.mean = std::move(mean);
    g.kind = CovarianceKind::Full;
    g.covariance = std::move(covariance);
    g.validate();
    return g;
  }

  Eigen::Index dim() const { return mean.size(); }

  void validate() const {
    if (mean.size() < 1) throw Error("gaussian: empty mean");
    switch (kind) {
      case CovarianceKind::Isotropic:
        if (!(variance > Scalar(0))) throw Error("gaussian: variance must be > 0");
        break;
      case CovarianceKind::Diagonal:
        if (variances.size() != mean.size()) throw Error("gaussian: variance vector length");
        if (!(variances.array() > Scalar(0)).all()) throw Error("gaussian: variances must be > 0");
        break;
      case CovarianceKind::Full: {
        if (covariance.rows() != mean.size() || covariance.cols() != mean.size())
          throw Error("gaussian: covariance shape");
        if (!covariance.isApprox(covariance.transpose())) throw Error("gaussian: covariance is not symmetric");
        Eigen::LLT<Mat> llt(covariance);
        if (llt.info() != Eigen::Success) throw Error("gaussian: covariance is not positive definite");
        break;
      }
    }
  }

  /// Per-coordinate variances; only for non-full covariances.
  Vec diagonal_variances() const {
    if (kind == CovarianceKind::Full) throw Error("gaussian: full covariance has no diagonal form");
    return kind == CovarianceKind::Isotropic ? Vec::Constant(mean.size(), variance) : variances;
  }

  Mat dense_covariance() const {
    if (kind == CovarianceKind::Full) return covariance;
    return diagonal_variances().asDiagonal();
  }
};

/// (a - b)^T cov^{-1} (a - b) for a dense positive-definite `cov`.
template <typename Scalar>
Scalar mahalanobis_sq(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& a,
                      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& b,
                      const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& cov) {
  if (a.size() != b.size() || cov.rows() != a.size() || cov.cols() != a.size())
    throw Error("mahalanobis: dimension mismatch");
  Eigen::LLT<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> llt(cov);
  if (llt.info() != Eigen::Success) throw Error("mahalanobis: covariance is not positive definite");
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> z = llt.matrixL().solve(a - b);
  return z.squaredNorm();
}

/// Same with the covariance of `g`; diagonal forms skip the factorization.
template <typename Scalar>
Scalar mahalanobis_sq(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& a,
                      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& b, const Gaussian<Scalar>& g) {
  if (g.kind == CovarianceKind::Full) return mahalanobis_sq<Scalar>(a, b, g.covariance);
  if (a.size() != b.size() || a.size() != g.dim()) throw Error("mahalanobis: dimension mismatch");
  return ((a - b).array().square() / g.diagonal_variances().array()).sum();
}

/// KL(q || p) between multivariate normals.
template <typename Scalar>
Scalar gaussian_kl(const Gaussian<Scalar>& q, const Gaussian<Scalar>& p) {
  using Vec = typename Gaussian<Scalar>::Vec;
  using Mat = typename Gaussian<Scalar>::Mat;
  if (q.dim() != p.dim()) throw Error("gaussian_kl: dimension mismatch");
  const Vec diff = p.mean - q.mean;
  if (q.kind != CovarianceKind::Full && p.kind != CovarianceKind::Full) {
    const Vec vq = q.diagonal_variances();
    const Vec vp = p.diagonal_variances();
    const auto ratio = (vq.array() / vp.array()).eval();
    return Scalar(0.5) * ((-ratio.log()) - Scalar(1) + ratio + diff.array().square() / vp.array()).sum();
  }
  const Mat sp = p.dense_covariance();
  const Mat sq = q.dense_covariance();
  Eigen::LLT<Mat> lp(sp), lq(sq);
  if (lp.info() != Eigen::Success || lq.info() != Eigen::Success)
    throw Error("gaussian_kl: covariance is not positive definite");
  const Scalar logdet_p = Scalar(2) * lp.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Scalar logdet_q = Scalar(2) * lq.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Scalar trace = lp.solve(sq).trace();
  const Scalar maha = lp.matrixL().solve(diff).squaredNorm();
  return Scalar(0.5) * (logdet_p - logdet_q - static_cast<Scalar>(q.dim()) + trace + maha);
}

template <typename Scalar>
struct SampleSavings {
  Scalar n0{};
  Scalar n_l2{};
  Scalar absolute{};
  Scalar relative{};
  /// c/2 (M(theta_P0) - M(theta_PL1)) with M the squared Mahalanobis distance
  /// to theta_Q; present when both priors share one covariance.
  std::optional<Scalar> mahalanobis_form;
};

template <typename Scalar>
bool same_covariance(const Gaussian<Scalar>& a, const Gaussian<Scalar>& b) {
  if (a.dim() != b.dim()) return false;
  return a.dense_covariance() == b.dense_covariance();
}

/// n0 = c KL(q || p0), n_l2 = c KL(q || p_l1), and the savings between them.
template <typename Scalar>
SampleSavings<Scalar> sample_savings(const Gaussian<Scalar>& q, const Gaussian<Scalar>& p0,
                                     const Gaussian<Scalar>& p_l1, Scalar c) {
  if (!(c > Scalar(0))) throw Error("sample_savings: c must be > 0");
  SampleSavings<Scalar> s;
  s.n0 = c * gaussian_kl(q, p0);
  s.n_l2 = c * gaussian_kl(q, p_l1);
  s.absolute = s.n0 - s.n_l2;
  s.relative = s.n0 > Scalar(0) ? s.absolute / s.n0 : Scalar(0);
  if (same_covariance(p0, p_l1))
    s.mahalanobis_form =
        c * Scalar(0.5) * (mahalanobis_sq(p0.mean, q.mean, p0) - mahalanobis_sq(p_l1.mean, q.mean, p_l1));
  return s;
}

struct NumericalExample {
  int dim = 50;
  int learned = 49;
  double prior_variance = 200.0;
  double target_variance = 1.0;
  double micro_variance = 1.0;
  double c = 5000.0;
  int horizon = 10;

  double kl_uninformed = 0.0;
  double n0 = 0.0;
  double n_l2 = 0.0;
  double n_l1 = 0.0;
  double reduction = 0.0;
  double reduction_with_l1 = 0.0;
};

/// Informed-prior sample arithmetic for a 50-parameter policy of which 49
/// are learned at the micro level.
NumericalExample reproduce_numerical_example(NumericalExample setup = {});

std::string format_report_text(const NumericalExample& r);
std::string format_report_json(const NumericalExample& r);

}  // namespace msbl

#endif  // MSBL_PACBAYES_HPP_
