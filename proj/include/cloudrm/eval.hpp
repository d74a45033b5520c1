#pragma once

// Benchmark harness: the r metric, mask IoU, seeded lambda sweeps, paired
// one-sided t-tests and CSV report persistence.

#include "cloudrm/sim.hpp"
#include "cloudrm/solvers.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cloudrm::eval {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// ||I_hat - I||_F / ||I||_F. Throws std::invalid_argument on shape mismatch
/// or an all-zero reference.
double recovery_error(const Eigen::MatrixXd& I_hat, const Eigen::MatrixXd& I);

/// Mean of the per-column r of a recovered d x n stack against one ground
/// truth image (height x width, column-major vectorised).
double stack_recovery_error(const Eigen::MatrixXd& recovered, const Eigen::MatrixXd& truth);

/// |A and B| / |A or B| with 1 = cloud; 1 when both masks are empty.
double mask_iou(const BoolMatrix& A, const BoolMatrix& B);

/// `count` log-equispaced values from 0.1/sqrt(d) to 10/sqrt(d); the middle
/// entry is exactly 1/sqrt(d). `count` must be odd and >= 3.
std::vector<double> default_lambda_grid(long long d, int count = 51);

enum class Method { Rpca, Atm, Aatm };

std::string_view to_string(Method m);
/// Parses "rpca", "atm" or "aatm"; std::nullopt otherwise.
std::optional<Method> parse_method(std::string_view name);

struct MethodVariant {
  Method method = Method::Aatm;
  bool with_mc = false;

  friend bool operator==(const MethodVariant&, const MethodVariant&) = default;
};

struct TrialSpec {
  sim::Image ground_truth;  // height x width in [0,1]
  int n = 7;
  sim::CloudSimConfig sim;  // width/height are taken from ground_truth
  std::vector<MethodVariant> methods;
  std::vector<double> lambda_grid;
  int repeats = 1;
  std::uint64_t base_seed = 0;
  SolverConfig solver;  // lambda is overridden by the grid

  void validate() const;
};

/// Seed for the clouds of repeat `index`. Repeats are spaced 2^20 apart so
/// the per-image seeds seed + i of different repeats never overlap.
std::uint64_t repeat_seed(std::uint64_t base_seed, int index);

struct SweepRecord {
  Method method = Method::Aatm;
  bool with_mc = false;
  double lambda = 0;
  int repeat = 0;
  double r = 0;
  double wall_seconds = 0;
  bool converged = false;
};

struct SweepAggregate {
  Method method = Method::Aatm;
  bool with_mc = false;
  double lambda = 0;
  int count = 0;
  double r_mean = 0;
  double r_std = 0;  // sample std, 0 for a single repeat
  double sec_mean = 0;
  double sec_std = 0;
};

struct SweepReport {
  std::vector<SweepRecord> records;
  std::vector<SweepAggregate> aggregates;
};

/// Groups by (method, with_mc, lambda) in first-appearance order.
std::vector<SweepAggregate> aggregate(const std::vector<SweepRecord>& records);

/// One SweepRecord per (repeat, method variant, lambda), ordered in that
/// nesting. Each (method, lambda) is solved once per repeat; the with-MC
/// variant masks the solver's full cloud estimate, completes the observed
/// stack and scores B. Its wall time includes the solve. Solver exceptions
/// are recorded as r = NaN, converged = false. Repeats run on up to
/// `threads` workers.
SweepReport run_sweep(const TrialSpec& spec, int threads = 1);

struct TTestResult {
  double t = 0;
  double mean_diff = 0;
  double p_value = 0;
  double ci_lower = 0;
  bool reject = false;
};

/// Paired one-sided test of H0: mean(x - y) <= 0 against mean(x - y) > 0,
/// n - 1 degrees of freedom. ci_lower is the lower end of the one-sided
/// (1 - alpha) interval for mean(x - y).
TTestResult paired_t_test_onesided(const std::vector<double>& x, const std::vector<double>& y,
                                   double alpha = 1e-5);

inline constexpr std::string_view kRecordHeader = "method,with_mc,lambda,repeat,r,seconds,converged";
inline constexpr std::string_view kAggregateHeader =
    "method,with_mc,lambda,r_mean,r_std,sec_mean,sec_std";

/// Sibling aggregates path: <dir>/<stem>_aggregates.csv.
std::filesystem::path aggregates_path(const std::filesystem::path& records_path);

/// Writes the records CSV at `path` and the aggregates CSV next to it.
/// Floats use 9 significant digits. Throws IoError with path and cause.
void export_report(const SweepReport& report, const std::filesystem::path& path);

/// Reads a records CSV and recomputes its aggregates.
SweepReport read_report(const std::filesystem::path& path);

}  // namespace cloudrm::eval
