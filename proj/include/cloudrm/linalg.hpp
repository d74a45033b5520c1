#pragma once

// Dense primitives shared by every solver: singular value thresholding,
// entrywise shrinkage, norms and the [0,1] box projection. Everything here is
// a pure function template over the scalar type and accepts arbitrary Eigen
// expressions.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cloudrm {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Relative threshold for numeric rank: sigma_i is kept iff
/// sigma_i >= kRankTolerance * max(rows, cols) * sigma_1.
inline constexpr double kRankTolerance = 1e-12;

/// Reduced SVD keeping only the numerically nonzero singular triples.
/// `U` is rows x k, `V` is cols x k, `sigma` is non-increasing.
template <typename Scalar>
struct SkinnySvd {
  Mat<Scalar> U;
  Vec<Scalar> sigma;
  Mat<Scalar> V;

  Eigen::Index rank() const { return sigma.size(); }
  Mat<Scalar> reconstruct() const { return U * sigma.asDiagonal() * V.transpose(); }
};

template <typename Scalar>
struct MatrixNorms {
  Scalar nuclear{0};
  Scalar frobenius{0};
  Scalar l1{0};
  Scalar spectral{0};
  Scalar inf{0};
};

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& A, const char* where) {
  if (!A.allFinite())
    throw std::invalid_argument(std::string(where) + ": matrix has non-finite entries");
}

template <typename Scalar>
void require_nonnegative(Scalar tau, const char* where) {
  if (!(tau >= Scalar(0)))
    throw std::invalid_argument(std::string(where) + ": threshold must be nonnegative");
}

template <typename Derived>
auto full_thin_svd(const Eigen::MatrixBase<Derived>& A) {
  using Scalar = typename Derived::Scalar;
  return Eigen::BDCSVD<Mat<Scalar>>(A.derived().eval(), Eigen::ComputeThinU | Eigen::ComputeThinV);
}

}  // namespace detail

/// Entrywise shrinkage sign(a) * max(|a| - tau, 0).
template <typename Derived>
Mat<typename Derived::Scalar> soft_threshold(const Eigen::MatrixBase<Derived>& A,
                                             typename Derived::Scalar tau) {
  detail::require_nonnegative(tau, "soft_threshold");
  using Scalar = typename Derived::Scalar;
  return A.unaryExpr([tau](Scalar a) {
    const Scalar m = std::abs(a) - tau;
    return m > Scalar(0) ? std::copysign(m, a) : Scalar(0);
  });
}

/// Shrinkage with a per-entry threshold matrix (weighted l1 prox).
template <typename DerivedA, typename DerivedT>
Mat<typename DerivedA::Scalar> soft_threshold(const Eigen::MatrixBase<DerivedA>& A,
                                              const Eigen::MatrixBase<DerivedT>& tau) {
  using Scalar = typename DerivedA::Scalar;
  if (A.rows() != tau.rows() || A.cols() != tau.cols())
    throw std::invalid_argument("soft_threshold: threshold shape mismatch");
  if ((tau.array() < Scalar(0)).any())
    throw std::invalid_argument("soft_threshold: threshold must be nonnegative");
  return A.binaryExpr(tau, [](Scalar a, Scalar t) {
    const Scalar m = std::abs(a) - t;
    return m > Scalar(0) ? std::copysign(m, a) : Scalar(0);
  });
}

template <typename Derived>
SkinnySvd<typename Derived::Scalar> skinny_svd(const Eigen::MatrixBase<Derived>& A) {
  using Scalar = typename Derived::Scalar;
  if (A.size() == 0) throw std::invalid_argument("skinny_svd: empty matrix");
  detail::require_finite(A, "skinny_svd");

  const auto svd = detail::full_thin_svd(A);
  const Vec<Scalar>& s = svd.singularValues();
  const Scalar cutoff =
      Scalar(kRankTolerance) * Scalar(std::max(A.rows(), A.cols())) * (s.size() ? s(0) : Scalar(0));
  Eigen::Index k = 0;
  while (k < s.size() && s(k) > Scalar(0) && s(k) >= cutoff) ++k;

  return {svd.matrixU().leftCols(k), s.head(k), svd.matrixV().leftCols(k)};
}

/// Result of singular value thresholding together with the nuclear norm of
/// the thresholded matrix, which the solvers need for their objective.
template <typename Scalar>
struct SvtResult {
  Mat<Scalar> X;
  Scalar nuclear{0};
  Eigen::Index rank{0};
};

template <typename Derived>
SvtResult<typename Derived::Scalar> shrink_singular_values(const Eigen::MatrixBase<Derived>& A,
                                                           typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  detail::require_nonnegative(tau, "svt");
  detail::require_finite(A, "svt");

  SvtResult<Scalar> out;
  if (A.size() == 0) {
    out.X = A;
    return out;
  }
  const auto svd = detail::full_thin_svd(A);
  const Vec<Scalar>& s = svd.singularValues();
  Eigen::Index keep = 0;
  while (keep < s.size() && s(keep) > tau) ++keep;
  if (keep == 0) {
    out.X = Mat<Scalar>::Zero(A.rows(), A.cols());
    return out;
  }
  const Vec<Scalar> shrunk = s.head(keep).array() - tau;
  out.X.noalias() = svd.matrixU().leftCols(keep) * shrunk.asDiagonal() *
                    svd.matrixV().leftCols(keep).transpose();
  out.nuclear = shrunk.sum();
  out.rank = keep;
  return out;
}

/// Proximal operator of tau * nuclear norm. Returns the exact zero matrix when
/// every singular value is <= tau.
template <typename Derived>
Mat<typename Derived::Scalar> svt(const Eigen::MatrixBase<Derived>& A,
                                  typename Derived::Scalar tau) {
  return shrink_singular_values(A, tau).X;
}

template <typename Derived>
typename Derived::Scalar nuclear_norm(const Eigen::MatrixBase<Derived>& A) {
  if (A.size() == 0) return 0;
  return detail::full_thin_svd(A).singularValues().sum();
}

template <typename Derived>
MatrixNorms<typename Derived::Scalar> matrix_norms(const Eigen::MatrixBase<Derived>& A) {
  using Scalar = typename Derived::Scalar;
  if (A.size() == 0) throw std::invalid_argument("matrix_norms: empty matrix");
  detail::require_finite(A, "matrix_norms");
  const auto svd = detail::full_thin_svd(A);
  const Vec<Scalar>& s = svd.singularValues();
  MatrixNorms<Scalar> n;
  n.nuclear = s.sum();
  n.frobenius = A.norm();
  n.l1 = A.cwiseAbs().sum();
  n.spectral = s.size() ? s(0) : Scalar(0);
  n.inf = A.cwiseAbs().maxCoeff();
  return n;
}

/// Largest singular value.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& A) {
  if (A.size() == 0) return 0;
  const auto s = Eigen::BDCSVD<Mat<typename Derived::Scalar>>(A.derived().eval()).singularValues();
  return s.size() ? s(0) : 0;
}

/// Feasibility projection onto the [0,1] box.
template <typename Derived>
Mat<typename Derived::Scalar> clamp01(const Eigen::MatrixBase<Derived>& A) {
  using Scalar = typename Derived::Scalar;
  return A.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
}

}  // namespace cloudrm
