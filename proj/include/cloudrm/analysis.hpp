#pragma once

// Computable theory for the sparsity weight lambda: the general extrema, the
// data-driven maximum ||U V^T||_inf and its cheap bound ||D||_inf / sigma_n,
// the random-matrix asymptotic maximum, the empirical lambda* estimator and
// zone classification.

#include <Eigen/Dense>

#include <optional>
#include <string_view>

namespace cloudrm::analysis {

struct LambdaBounds {
  double lambda_min = 0;                        // 1 / sqrt(d n)
  double lambda_max_general = 0;                // sqrt(n)
  std::optional<double> lambda_max_data;        // ||U V^T||_inf of D
  std::optional<double> lambda_max_cheap;       // ||D||_inf / sigma_n(D); +inf if rank deficient
  double lambda_max_asymptotic = 0;             // 2 sqrt(3) / (sqrt(d) - sqrt(n))
  double lambda_max_simplified = 0;             // 2 sqrt(3) / sqrt(d)
};

/// Closed-form bounds for a d x n stack (d > n >= 1).
LambdaBounds lambda_bounds(Eigen::Index d, Eigen::Index n);
/// Closed-form bounds plus the data-driven ones computed from D (d x n).
LambdaBounds lambda_bounds(Eigen::Index d, Eigen::Index n, const Eigen::MatrixXd& D);

/// ||U V^T||_inf from the skinny SVD of A.
double polar_inf_norm(const Eigen::MatrixXd& A);

/// n-th (smallest of the first min(d,n)) singular value.
double smallest_singular_value(const Eigen::MatrixXd& A);

struct LambdaStarFit {
  double slope = -0.5682;
  double intercept = 1.0747;
};

/// max{ (slope * ln(ln n) + intercept) / sqrt(d), 1 / sqrt(d n) }, n >= 2.
double lambda_star(Eigen::Index d, Eigen::Index n, const LambdaStarFit& fit = {});

enum class Zone { Failure, Goldilock, Clamping };

std::string_view to_string(Zone z);

/// Failure if lambda <= lambda_min, Clamping if lambda >= lambda_max_data
/// (lambda_max_asymptotic when no data bound), Goldilock otherwise.
Zone classify_zone(double lambda, const LambdaBounds& bounds);

}  // namespace cloudrm::analysis
