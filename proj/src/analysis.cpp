#include "cloudrm/analysis.hpp"

#include "cloudrm/linalg.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cloudrm::analysis {

LambdaBounds lambda_bounds(Eigen::Index d, Eigen::Index n) {
  if (n < 1 || d <= n) throw std::invalid_argument("lambda_bounds: need d > n >= 1");
  const double dd = static_cast<double>(d);
  const double nn = static_cast<double>(n);
  const double two_sqrt3 = 2.0 * std::sqrt(3.0);

  LambdaBounds b;
  b.lambda_min = 1.0 / std::sqrt(dd * nn);
  b.lambda_max_general = std::sqrt(nn);
  b.lambda_max_asymptotic = two_sqrt3 / (std::sqrt(dd) - std::sqrt(nn));
  b.lambda_max_simplified = two_sqrt3 / std::sqrt(dd);

  // The ordering is a theorem for d > 12 n once n >= 2; for a single image it
  // needs sqrt(d) >= 1 + 2 sqrt(3), so it is not enforced there.
  if (n >= 2 && d > 12 * n &&
      !(b.lambda_min <= b.lambda_max_asymptotic && b.lambda_max_asymptotic <= b.lambda_max_general))
    throw std::logic_error("lambda_bounds: closed-form bounds out of order");
  return b;
}

LambdaBounds lambda_bounds(Eigen::Index d, Eigen::Index n, const Eigen::MatrixXd& D) {
  if (D.rows() != d || D.cols() != n)
    throw std::invalid_argument("lambda_bounds: data matrix does not match d x n");
  LambdaBounds b = lambda_bounds(d, n);
  b.lambda_max_data = polar_inf_norm(D);
  const double sigma_n = smallest_singular_value(D);
  const double cutoff = kRankTolerance * static_cast<double>(d) * spectral_norm(D);
  b.lambda_max_cheap = sigma_n > cutoff && sigma_n > 0.0
                           ? D.cwiseAbs().maxCoeff() / sigma_n
                           : std::numeric_limits<double>::infinity();
  return b;
}

double polar_inf_norm(const Eigen::MatrixXd& A) {
  const auto svd = skinny_svd(A);
  if (svd.rank() == 0) return 0.0;
  return (svd.U * svd.V.transpose()).cwiseAbs().maxCoeff();
}

double smallest_singular_value(const Eigen::MatrixXd& A) {
  if (A.size() == 0) throw std::invalid_argument("smallest_singular_value: empty matrix");
  const Eigen::VectorXd s = Eigen::BDCSVD<Eigen::MatrixXd>(A).singularValues();
  return s(s.size() - 1);
}

double lambda_star(Eigen::Index d, Eigen::Index n, const LambdaStarFit& fit) {
  if (n < 2) throw std::invalid_argument("lambda_star: n must be >= 2");
  if (d < 1) throw std::invalid_argument("lambda_star: d must be >= 1");
  const double dd = static_cast<double>(d);
  const double nn = static_cast<double>(n);
  const double fitted = (fit.slope * std::log(std::log(nn)) + fit.intercept) / std::sqrt(dd);
  return std::max(fitted, 1.0 / std::sqrt(dd * nn));
}

std::string_view to_string(Zone z) {
  switch (z) {
    case Zone::Failure: return "failure";
    case Zone::Goldilock: return "goldilock";
    case Zone::Clamping: return "clamping";
  }
  return "unknown";
}

Zone classify_zone(double lambda, const LambdaBounds& bounds) {
  if (lambda <= bounds.lambda_min) return Zone::Failure;
  const double upper = bounds.lambda_max_data.value_or(bounds.lambda_max_asymptotic);
  if (lambda >= upper) return Zone::Clamping;
  return Zone::Goldilock;
}

}  // namespace cloudrm::analysis
