#pragma once

// Low-rank + sparse decompositions of an image stack D (d x n, columns are
// vectorised images, entries in [0,1]):
//
//   rpca             D = L + C
//   matrix_complete  D = B + S with a per-entry l1 weight chosen by a mask
//   atm              D = L o (1 - C) + C       (scattering model)
//   aatm             D = L + C + N             (N: Frobenius-penalised haze)
//
// All four are inexact augmented Lagrangian schemes with a geometrically
// growing penalty mu and a [0,1] feasibility projection after every block
// update.

#include "cloudrm/linalg.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace cloudrm {

struct SolverConfig {
  double lambda = 0.0;         // sparsity weight
  double beta = 1.0;           // haze weight (aatm)
  double epsilon = 1e-7;       // relative residual stop
  double rho = 1.5;            // mu growth
  double mu0_scale = 1.25;     // mu0 = mu0_scale / ||D||_2
  double mu_max_factor = 1e7;  // mu_max = mu0 * factor
  int max_outer_iters = 1000;
  int inner_kmax = 100;        // atm inner loop cap
  double inner_ftol = 1e-3;    // atm inner |f - f_prev| stop

  void validate(bool need_lambda = true) const {
    if (need_lambda && !(lambda > 0.0 && std::isfinite(lambda)))
      throw std::invalid_argument("SolverConfig: lambda must be positive");
    if (!(beta > 0.0)) throw std::invalid_argument("SolverConfig: beta must be positive");
    if (!(epsilon > 0.0)) throw std::invalid_argument("SolverConfig: epsilon must be positive");
    if (!(rho > 1.0)) throw std::invalid_argument("SolverConfig: rho must exceed 1");
    if (!(mu0_scale > 0.0)) throw std::invalid_argument("SolverConfig: mu0_scale must be positive");
    if (!(mu_max_factor >= 1.0))
      throw std::invalid_argument("SolverConfig: mu_max_factor must be >= 1");
    if (max_outer_iters < 1) throw std::invalid_argument("SolverConfig: max_outer_iters must be >= 1");
    if (inner_kmax < 1) throw std::invalid_argument("SolverConfig: inner_kmax must be >= 1");
    if (!(inner_ftol > 0.0)) throw std::invalid_argument("SolverConfig: inner_ftol must be positive");
  }
};

template <typename Scalar>
struct Decomposition {
  Mat<Scalar> L;                 // recovered ground
  Mat<Scalar> C;                 // sparse cloud
  std::optional<Mat<Scalar>> N;  // haze layer (aatm only)
  double residual = 0.0;         // final relative equality residual
  int outer_iters = 0;
  double wall_seconds = 0.0;
  bool converged = false;
  std::vector<double> residual_history;
  bool haze_clamped = false;  // the N projection changed at least one entry

  /// Full cloud estimate: C, or C + N for aatm.
  Mat<Scalar> cloud() const { return N ? Mat<Scalar>(C + *N) : C; }
};

/// Binary trust mask for matrix completion: true = trusted entry, false =
/// entry flagged as cloud and masked out.
struct MaskMatrix {
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> omega;

  Eigen::Index rows() const { return omega.rows(); }
  Eigen::Index cols() const { return omega.cols(); }
  Eigen::Index masked_count() const { return omega.size() - omega.count(); }
  /// Cloud indicator (1 = cloud), the convention used by mask_iou.
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> cloud() const {
    return omega.unaryExpr([](bool t) { return !t; });
  }
};

template <typename Scalar>
struct Completion {
  Mat<Scalar> B;  // completed low-rank part
  Mat<Scalar> S;  // sparse part
  double residual = 0.0;
  int outer_iters = 0;
  double wall_seconds = 0.0;
  bool converged = false;
};

/// Snapshot handed to an optional per-iteration observer, after the
/// feasibility projections of that iteration.
template <typename Scalar>
struct IterationView {
  int iteration;
  const Mat<Scalar>& L;
  const Mat<Scalar>& C;
  const Mat<Scalar>* N;
  double residual;
};

template <typename Scalar>
using IterationObserver = std::function<void(const IterationView<Scalar>&)>;

template <typename Scalar>
struct InnerSolve {
  Mat<Scalar> L;
  int iterations = 0;
  std::vector<double> f_history;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename Scalar>
void require_unit_box(const Mat<Scalar>& D, const char* where) {
  if (D.size() == 0) throw std::invalid_argument(std::string(where) + ": empty data matrix");
  require_finite(D, where);
  if ((D.array() < Scalar(0)).any() || (D.array() > Scalar(1)).any())
    throw std::invalid_argument(std::string(where) + ": data entries must lie in [0,1]");
}

/// Dual start Y0 = D / max(||D||_2, max_ij |D_ij| / w_ij); feasible for both
/// the nuclear-norm ball and the weighted l-inf box.
template <typename Scalar>
Mat<Scalar> initial_dual(const Mat<Scalar>& D, Scalar spectral, const Mat<Scalar>& weights) {
  const Scalar box = (D.cwiseAbs().array() / weights.array()).maxCoeff();
  return D / std::max(spectral, box);
}

template <typename Scalar>
struct PenaltySchedule {
  Scalar mu;
  Scalar mu_max;
  Scalar rho;

  PenaltySchedule(const SolverConfig& cfg, Scalar spectral)
      : mu(Scalar(cfg.mu0_scale) / spectral),
        mu_max(mu * Scalar(cfg.mu_max_factor)),
        rho(Scalar(cfg.rho)) {}
  void grow() { mu = std::min(mu * rho, mu_max); }
};

/// Two-block inexact ALM for min ||L||_* + sum_ij w_ij |C_ij| s.t. D = L + C,
/// shared by rpca (uniform weights) and matrix completion (mask weights).
template <typename Scalar>
Decomposition<Scalar> weighted_lowrank_sparse(const Mat<Scalar>& D, const Mat<Scalar>& weights,
                                              const SolverConfig& cfg,
                                              const IterationObserver<Scalar>& observe) {
  const auto t0 = Clock::now();
  Decomposition<Scalar> out;
  out.L = Mat<Scalar>::Zero(D.rows(), D.cols());
  out.C = Mat<Scalar>::Zero(D.rows(), D.cols());

  const Scalar normD = D.norm();
  if (normD == Scalar(0)) {
    out.converged = true;
    out.wall_seconds = seconds_since(t0);
    return out;
  }
  const Scalar spectral = spectral_norm(D);
  PenaltySchedule<Scalar> mu(cfg, spectral);
  Mat<Scalar> Y = initial_dual(D, spectral, weights);

  for (int it = 1; it <= cfg.max_outer_iters; ++it) {
    out.C = clamp01(soft_threshold(D - out.L + Y / mu.mu, weights / mu.mu));
    out.L = clamp01(svt(D - out.C + Y / mu.mu, Scalar(1) / mu.mu));
    const Mat<Scalar> R = D - out.L - out.C;
    out.residual = double(R.norm() / normD);
    out.residual_history.push_back(out.residual);
    out.outer_iters = it;
    Y.noalias() += mu.mu * R;
    mu.grow();
    if (observe) observe({it, out.L, out.C, nullptr, out.residual});
    if (out.residual <= cfg.epsilon) {
      out.converged = true;
      break;
    }
  }
  out.wall_seconds = seconds_since(t0);
  return out;
}

}  // namespace detail

/// Robust PCA: min ||L||_* + lambda ||C||_1 s.t. D = L + C.
template <typename Derived>
Decomposition<typename Derived::Scalar> rpca(
    const Eigen::MatrixBase<Derived>& D_in, const SolverConfig& cfg,
    const IterationObserver<typename Derived::Scalar>& observe = {}) {
  using Scalar = typename Derived::Scalar;
  cfg.validate();
  const Mat<Scalar> D = D_in;
  detail::require_unit_box(D, "rpca");
  const Mat<Scalar> weights = Mat<Scalar>::Constant(D.rows(), D.cols(), Scalar(cfg.lambda));
  return detail::weighted_lowrank_sparse(D, weights, cfg, observe);
}

/// Cloud mask: entry (i,j) is masked out (omega = false) iff
/// C_ij > gamma * std(vec(C)), with the sample standard deviation.
template <typename Derived>
MaskMatrix cloud_mask(const Eigen::MatrixBase<Derived>& C, double gamma = 0.8) {
  using Scalar = typename Derived::Scalar;
  detail::require_finite(C, "cloud_mask");
  MaskMatrix m;
  const auto count = C.size();
  double sigma = 0.0;
  if (count > 1) {
    const double mean = double(C.mean());
    const double ss = (C.array().template cast<double>() - mean).square().sum();
    sigma = std::sqrt(ss / double(count - 1));
  }
  const Scalar threshold = Scalar(gamma * sigma);
  m.omega = C.unaryExpr([threshold](Scalar c) { return !(c > threshold); });
  return m;
}

/// Masked completion D = B + S minimising ||B||_* + alpha ||S on masked||_1 +
/// beta_mc ||S on trusted||_1. Masked (cloud) entries carry the small weight
/// alpha so S may absorb them; trusted entries carry beta_mc.
template <typename Derived>
Completion<typename Derived::Scalar> matrix_complete(const Eigen::MatrixBase<Derived>& D_in,
                                                     const MaskMatrix& omega, double alpha,
                                                     double beta_mc, const SolverConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  cfg.validate(false);
  if (omega.rows() != D_in.rows() || omega.cols() != D_in.cols())
    throw std::invalid_argument("matrix_complete: mask shape does not match data");
  if (!(alpha > 0.0) || !(beta_mc > 0.0))
    throw std::invalid_argument("matrix_complete: alpha and beta_mc must be positive");
  const Mat<Scalar> D = D_in;
  if (D.size() == 0) throw std::invalid_argument("matrix_complete: empty data matrix");
  detail::require_finite(D, "matrix_complete");

  const Mat<Scalar> weights =
      omega.omega.select(Mat<Scalar>::Constant(D.rows(), D.cols(), Scalar(beta_mc)),
                         Mat<Scalar>::Constant(D.rows(), D.cols(), Scalar(alpha)));
  auto dec = detail::weighted_lowrank_sparse<Scalar>(D, weights, cfg, {});
  Completion<Scalar> out;
  out.B = std::move(dec.L);
  out.S = std::move(dec.C);
  out.residual = dec.residual;
  out.outer_iters = dec.outer_iters;
  out.wall_seconds = dec.wall_seconds;
  out.converged = dec.converged;
  return out;
}

/// Closed-form C-step of the scattering model: minimiser of
/// lambda |c| + (mu/2) (d - l (1 - c) - c + y/mu)^2 per entry.
/// Entries with L ~ 1 do not depend on c and are set to 0.
template <typename Scalar>
Mat<Scalar> atm_update_C(const Mat<Scalar>& D, const Mat<Scalar>& L, const Mat<Scalar>& Y,
                         Scalar mu, Scalar lambda) {
  const auto Lm1 = (L.array() - Scalar(1));
  const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> a = mu * Lm1.square();
  const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> b =
      mu * (D - L + Y / mu).array() * Lm1;
  Mat<Scalar> C(D.rows(), D.cols());
  for (Eigen::Index k = 0; k < C.size(); ++k) {
    const Scalar bk = b(k);
    if (a(k) <= Scalar(1e-12) || std::abs(bk) <= lambda) {
      C(k) = Scalar(0);
    } else {
      C(k) = std::copysign((std::abs(bk) - lambda) / a(k), -bk);
    }
  }
  return C;
}

/// Accelerated proximal gradient on
///   g(L) = 1/2 ||D - C - (1-C) o L + Y/mu||_F^2 + (1/mu) ||L||_*
/// with unit step (the smooth part has Lipschitz constant max (1-C)^2 <= 1).
/// Stops after kmax steps or when the monitored objective
///   f = (mu/2) ||D - C - (1-C) o L||_F^2 + ||L||_*
/// changes by at most ftol.
template <typename Scalar>
InnerSolve<Scalar> atm_inner_L(const Mat<Scalar>& D, const Mat<Scalar>& C, const Mat<Scalar>& Y,
                               const Mat<Scalar>& L_init, Scalar mu, int kmax, double ftol) {
  const Mat<Scalar> oneMinusC = (Scalar(1) - C.array()).matrix();
  const Mat<Scalar> target = D - C + Y / mu;
  const Mat<Scalar> fit = D - C;

  InnerSolve<Scalar> out;
  out.L = L_init;
  Mat<Scalar> L_prev = L_init;
  Scalar theta = 1, theta_prev = 1;
  double f_prev = 0.0, f = std::numeric_limits<double>::infinity();
  int k = 0;
  while (k < kmax && std::abs(f - f_prev) > ftol) {
    const Mat<Scalar> W = out.L + (theta / theta_prev - theta) * (out.L - L_prev);
    L_prev = out.L;
    const Mat<Scalar> G =
        W + ((target.array() - oneMinusC.array() * W.array()) * oneMinusC.array()).matrix();
    auto step = shrink_singular_values(G, Scalar(1) / mu);
    out.L = std::move(step.X);

    theta_prev = theta;
    const Scalar t2 = theta * theta;
    theta = (std::sqrt(t2 * t2 + 4 * t2) - t2) / 2;

    f_prev = f;
    const Scalar misfit = (fit.array() - oneMinusC.array() * out.L.array()).matrix().squaredNorm();
    f = double(mu / 2 * misfit + step.nuclear);
    out.f_history.push_back(f);
    ++k;
  }
  out.iterations = k;
  return out;
}

/// Scattering-model decomposition D = L o (1 - C) + C with L, C in [0,1].
template <typename Derived>
Decomposition<typename Derived::Scalar> atm(
    const Eigen::MatrixBase<Derived>& D_in, const SolverConfig& cfg,
    const IterationObserver<typename Derived::Scalar>& observe = {}) {
  using Scalar = typename Derived::Scalar;
  cfg.validate();
  const Mat<Scalar> D = D_in;
  detail::require_unit_box(D, "atm");
  const auto t0 = detail::Clock::now();

  Decomposition<Scalar> out;
  out.L = Mat<Scalar>::Zero(D.rows(), D.cols());
  out.C = Mat<Scalar>::Zero(D.rows(), D.cols());
  const Scalar normD = D.norm();
  if (normD == Scalar(0)) {
    out.converged = true;
    out.wall_seconds = detail::seconds_since(t0);
    return out;
  }
  const Scalar lambda = Scalar(cfg.lambda);
  const Scalar spectral = spectral_norm(D);
  detail::PenaltySchedule<Scalar> mu(cfg, spectral);
  Mat<Scalar> Y = detail::initial_dual(
      D, spectral, Mat<Scalar>::Constant(D.rows(), D.cols(), lambda).eval());

  for (int it = 1; it <= cfg.max_outer_iters; ++it) {
    out.C = clamp01(atm_update_C<Scalar>(D, out.L, Y, mu.mu, lambda));
    out.L = clamp01(
        atm_inner_L<Scalar>(D, out.C, Y, out.L, mu.mu, cfg.inner_kmax, cfg.inner_ftol).L);
    const Mat<Scalar> R =
        D - out.C - ((Scalar(1) - out.C.array()) * out.L.array()).matrix();
    out.residual = double(R.norm() / normD);
    out.residual_history.push_back(out.residual);
    out.outer_iters = it;
    Y.noalias() += mu.mu * R;
    mu.grow();
    if (observe) observe({it, out.L, out.C, nullptr, out.residual});
    if (out.residual <= cfg.epsilon) {
      out.converged = true;
      break;
    }
  }
  out.wall_seconds = detail::seconds_since(t0);
  return out;
}

/// Relaxed scattering model D = L + C + N with min ||L||_* + lambda ||C||_1 +
/// beta ||N||_F^2, solved by three-block ADMM. The recovered cloud is C + N.
template <typename Derived>
Decomposition<typename Derived::Scalar> aatm(
    const Eigen::MatrixBase<Derived>& D_in, const SolverConfig& cfg,
    const IterationObserver<typename Derived::Scalar>& observe = {}) {
  using Scalar = typename Derived::Scalar;
  cfg.validate();
  const Mat<Scalar> D = D_in;
  detail::require_unit_box(D, "aatm");
  const auto t0 = detail::Clock::now();

  Decomposition<Scalar> out;
  out.L = Mat<Scalar>::Zero(D.rows(), D.cols());
  out.C = Mat<Scalar>::Zero(D.rows(), D.cols());
  Mat<Scalar> N = Mat<Scalar>::Zero(D.rows(), D.cols());
  const Scalar normD = D.norm();
  if (normD == Scalar(0)) {
    out.N = std::move(N);
    out.converged = true;
    out.wall_seconds = detail::seconds_since(t0);
    return out;
  }
  const Scalar lambda = Scalar(cfg.lambda);
  const Scalar beta = Scalar(cfg.beta);
  const Scalar spectral = spectral_norm(D);
  detail::PenaltySchedule<Scalar> mu(cfg, spectral);
  Mat<Scalar> Y = detail::initial_dual(
      D, spectral, Mat<Scalar>::Constant(D.rows(), D.cols(), lambda).eval());

  for (int it = 1; it <= cfg.max_outer_iters; ++it) {
    out.C = clamp01(soft_threshold(D - out.L - N + Y / mu.mu, lambda / mu.mu));
    out.L = clamp01(svt(D - out.C - N + Y / mu.mu, Scalar(1) / mu.mu));
    const Mat<Scalar> N_raw = (mu.mu / (beta + mu.mu)) * (D - out.L - out.C + Y / mu.mu);
    N = clamp01(N_raw);
    if (!out.haze_clamped && N != N_raw) out.haze_clamped = true;
    const Mat<Scalar> R = D - out.C - out.L - N;
    out.residual = double(R.norm() / normD);
    out.residual_history.push_back(out.residual);
    out.outer_iters = it;
    Y.noalias() += mu.mu * R;
    mu.grow();
    if (observe) observe({it, out.L, out.C, &N, out.residual});
    if (out.residual <= cfg.epsilon) {
      out.converged = true;
      break;
    }
  }
  out.N = std::move(N);
  out.wall_seconds = detail::seconds_since(t0);
  return out;
}

}  // namespace cloudrm
