#include "cloudrm/eval.hpp"

#include "cloudrm/errors.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace cloudrm::eval {

namespace fs = std::filesystem;

double recovery_error(const Eigen::MatrixXd& I_hat, const Eigen::MatrixXd& I) {
  if (I_hat.rows() != I.rows() || I_hat.cols() != I.cols())
    throw std::invalid_argument("recovery_error: shape mismatch");
  const double denom = I.norm();
  if (!(denom > 0.0)) throw std::invalid_argument("recovery_error: reference image is all zero");
  return (I_hat - I).norm() / denom;
}

double stack_recovery_error(const Eigen::MatrixXd& recovered, const Eigen::MatrixXd& truth) {
  if (recovered.rows() != truth.size() || recovered.cols() == 0)
    throw std::invalid_argument("stack_recovery_error: stack rows do not match truth size");
  const Eigen::VectorXd t = truth.reshaped();
  double sum = 0.0;
  for (Eigen::Index j = 0; j < recovered.cols(); ++j) sum += recovery_error(recovered.col(j), t);
  return sum / static_cast<double>(recovered.cols());
}

double mask_iou(const BoolMatrix& A, const BoolMatrix& B) {
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw std::invalid_argument("mask_iou: shape mismatch");
  const auto inter = (A.array() && B.array()).count();
  const auto uni = (A.array() || B.array()).count();
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> default_lambda_grid(long long d, int count) {
  if (d < 1) throw std::invalid_argument("default_lambda_grid: d must be positive");
  if (count < 3 || count % 2 == 0)
    throw std::invalid_argument("default_lambda_grid: count must be odd and >= 3");
  const double base = 1.0 / std::sqrt(static_cast<double>(d));
  const int half = count / 2;
  std::vector<double> grid(count);
  for (int k = 0; k < count; ++k)
    grid[k] = base * std::pow(10.0, static_cast<double>(k - half) / half);
  grid[half] = base;
  return grid;
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Rpca: return "rpca";
    case Method::Atm: return "atm";
    case Method::Aatm: return "aatm";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
  if (name == "rpca") return Method::Rpca;
  if (name == "atm") return Method::Atm;
  if (name == "aatm") return Method::Aatm;
  return std::nullopt;
}

void TrialSpec::validate() const {
  if (ground_truth.size() == 0) throw std::invalid_argument("TrialSpec: empty ground truth");
  if (n < 1) throw std::invalid_argument("TrialSpec: n must be >= 1");
  if (repeats < 1) throw std::invalid_argument("TrialSpec: repeats must be >= 1");
  if (methods.empty()) throw std::invalid_argument("TrialSpec: no methods");
  if (lambda_grid.empty()) throw std::invalid_argument("TrialSpec: empty lambda grid");
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    if (!(lambda_grid[i] > 0.0) || !std::isfinite(lambda_grid[i]))
      throw std::invalid_argument("TrialSpec: lambda values must be positive and finite");
    if (i > 0 && !(lambda_grid[i] > lambda_grid[i - 1]))
      throw std::invalid_argument("TrialSpec: lambda grid must be strictly increasing");
  }
  for (std::size_t i = 0; i < methods.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (methods[i] == methods[j]) throw std::invalid_argument("TrialSpec: duplicate method variant");
}

std::uint64_t repeat_seed(std::uint64_t base_seed, int index) {
  return base_seed + (static_cast<std::uint64_t>(index) << 20);
}

std::vector<SweepAggregate> aggregate(const std::vector<SweepRecord>& records) {
  using Key = std::tuple<int, bool, double>;
  std::map<Key, std::size_t> index;
  std::vector<std::vector<const SweepRecord*>> groups;
  std::vector<SweepAggregate> out;
  for (const auto& rec : records) {
    const Key key{static_cast<int>(rec.method), rec.with_mc, rec.lambda};
    auto [it, inserted] = index.try_emplace(key, out.size());
    if (inserted) {
      SweepAggregate a;
      a.method = rec.method;
      a.with_mc = rec.with_mc;
      a.lambda = rec.lambda;
      out.push_back(a);
      groups.emplace_back();
    }
    groups[it->second].push_back(&rec);
  }
  const auto mean_std = [](const std::vector<const SweepRecord*>& g, auto field) {
    double mean = 0.0;
    for (const auto* r : g) mean += r->*field;
    mean /= static_cast<double>(g.size());
    double ss = 0.0;
    for (const auto* r : g) ss += (r->*field - mean) * (r->*field - mean);
    const double sd = g.size() > 1 ? std::sqrt(ss / static_cast<double>(g.size() - 1)) : 0.0;
    return std::pair{mean, sd};
  };
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].count = static_cast<int>(groups[i].size());
    std::tie(out[i].r_mean, out[i].r_std) = mean_std(groups[i], &SweepRecord::r);
    std::tie(out[i].sec_mean, out[i].sec_std) = mean_std(groups[i], &SweepRecord::wall_seconds);
  }
  return out;
}

namespace {

Decomposition<double> solve(Method m, const Eigen::MatrixXd& D, const SolverConfig& cfg) {
  switch (m) {
    case Method::Rpca: return rpca(D, cfg);
    case Method::Atm: return atm(D, cfg);
    case Method::Aatm: return aatm(D, cfg);
  }
  throw std::logic_error("unknown method");
}

void run_repeat(const TrialSpec& spec, int repeat, SweepRecord* slots) {
  sim::CloudSimConfig sc = spec.sim;
  sc.width = static_cast<int>(spec.ground_truth.cols());
  sc.height = static_cast<int>(spec.ground_truth.rows());
  sc.seed = repeat_seed(spec.base_seed, repeat);
  const auto stack = sim::simulate_stack(spec.ground_truth, spec.n, sc);
  const double alpha = 0.1 / std::sqrt(static_cast<double>(stack.D.rows()));
  const std::size_t grid = spec.lambda_grid.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<Method> distinct;
  for (const auto& v : spec.methods)
    if (std::find(distinct.begin(), distinct.end(), v.method) == distinct.end())
      distinct.push_back(v.method);

  for (Method m : distinct) {
    for (std::size_t li = 0; li < grid; ++li) {
      SolverConfig cfg = spec.solver;
      cfg.lambda = spec.lambda_grid[li];
      std::optional<Decomposition<double>> dec;
      try {
        dec = solve(m, stack.D, cfg);
      } catch (const std::exception&) {
      }

      for (std::size_t vi = 0; vi < spec.methods.size(); ++vi) {
        const auto& v = spec.methods[vi];
        if (v.method != m) continue;
        SweepRecord& rec = slots[vi * grid + li];
        rec.method = m;
        rec.with_mc = v.with_mc;
        rec.lambda = cfg.lambda;
        rec.repeat = repeat;
        rec.r = nan;
        rec.converged = false;
        if (!dec) continue;
        if (!v.with_mc) {
          rec.r = stack_recovery_error(dec->L, spec.ground_truth);
          rec.wall_seconds = dec->wall_seconds;
          rec.converged = dec->converged;
          continue;
        }
        rec.wall_seconds = dec->wall_seconds;
        try {
          const auto mask = cloud_mask(dec->cloud(), 0.8);
          const auto comp = matrix_complete(stack.D, mask, alpha, 1.0, spec.solver);
          rec.r = stack_recovery_error(comp.B, spec.ground_truth);
          rec.wall_seconds += comp.wall_seconds;
          rec.converged = dec->converged && comp.converged;
        } catch (const std::exception&) {
        }
      }
    }
  }
}

}  // namespace

SweepReport run_sweep(const TrialSpec& spec, int threads) {
  spec.validate();
  const std::size_t per_repeat = spec.methods.size() * spec.lambda_grid.size();
  SweepReport report;
  report.records.resize(per_repeat * static_cast<std::size_t>(spec.repeats));

  const int workers = std::max(1, std::min(threads, spec.repeats));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto work = [&] {
    for (int r = next++; r < spec.repeats; r = next++) {
      try {
        run_repeat(spec, r, report.records.data() + per_repeat * r);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = spec.repeats;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  report.aggregates = aggregate(report.records);
  return report;
}

TTestResult paired_t_test_onesided(const std::vector<double>& x, const std::vector<double>& y,
                                   double alpha) {
  if (x.size() != y.size()) throw std::invalid_argument("paired_t_test: samples differ in length");
  if (x.size() < 2) throw std::invalid_argument("paired_t_test: need at least two pairs");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("paired_t_test: alpha must be in (0,1)");

  const std::size_t n = x.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += x[i] - y[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) ss += (x[i] - y[i] - mean) * (x[i] - y[i] - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult res;
  res.mean_diff = mean;
  if (!std::isfinite(mean) || !std::isfinite(sd))
    throw std::invalid_argument("paired_t_test: non-finite samples");
  if (sd == 0.0) {
    res.t = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    res.p_value = mean == 0.0 ? 0.5 : (mean > 0.0 ? 0.0 : 1.0);
    res.ci_lower = mean;
    res.reject = res.p_value < alpha;
    return res;
  }
  const double se = sd / std::sqrt(static_cast<double>(n));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  res.t = mean / se;
  res.p_value = boost::math::cdf(boost::math::complement(dist, res.t));
  res.ci_lower = mean - boost::math::quantile(boost::math::complement(dist, alpha)) * se;
  res.reject = res.p_value < alpha;
  return res;
}

fs::path aggregates_path(const fs::path& records_path) {
  fs::path p = records_path;
  p.replace_filename(records_path.stem().string() + "_aggregates.csv");
  return p;
}

namespace {

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  errno = 0;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot open '" + path.string() + "' for writing: " +
                  (errno ? std::strerror(errno) : "unknown error"));
  out << text;
  out.flush();
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const fs::path& path, std::size_t line) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0')
    throw FormatError("'" + path.string() + "' line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

bool parse_flag(const std::string& s, const fs::path& path, std::size_t line) {
  if (s == "1") return true;
  if (s == "0") return false;
  throw FormatError("'" + path.string() + "' line " + std::to_string(line) + ": expected 0 or 1, got '" + s + "'");
}

}  // namespace

void export_report(const SweepReport& report, const fs::path& path) {
  std::string rec(kRecordHeader);
  rec += '\n';
  for (const auto& r : report.records) {
    rec += std::string(to_string(r.method)) + ',' + (r.with_mc ? "1" : "0") + ',' + fmt9(r.lambda) + ',' +
           std::to_string(r.repeat) + ',' + fmt9(r.r) + ',' + fmt9(r.wall_seconds) + ',' +
           (r.converged ? "1" : "0") + '\n';
  }
  std::string agg(kAggregateHeader);
  agg += '\n';
  for (const auto& a : report.aggregates) {
    agg += std::string(to_string(a.method)) + ',' + (a.with_mc ? "1" : "0") + ',' + fmt9(a.lambda) + ',' +
           fmt9(a.r_mean) + ',' + fmt9(a.r_std) + ',' + fmt9(a.sec_mean) + ',' + fmt9(a.sec_std) + '\n';
  }
  write_text(path, rec);
  write_text(aggregates_path(path), agg);
}

SweepReport read_report(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string line;
  if (!std::getline(in, line) || line != kRecordHeader)
    throw FormatError("'" + path.string() + "': missing or wrong records header");
  SweepReport report;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7)
      throw FormatError("'" + path.string() + "' line " + std::to_string(lineno) + ": expected 7 fields");
    SweepRecord r;
    const auto m = parse_method(f[0]);
    if (!m) throw FormatError("'" + path.string() + "' line " + std::to_string(lineno) + ": unknown method");
    r.method = *m;
    r.with_mc = parse_flag(f[1], path, lineno);
    r.lambda = parse_double(f[2], path, lineno);
    r.repeat = static_cast<int>(parse_double(f[3], path, lineno));
    r.r = parse_double(f[4], path, lineno);
    r.wall_seconds = parse_double(f[5], path, lineno);
    r.converged = parse_flag(f[6], path, lineno);
    report.records.push_back(r);
  }
  report.aggregates = aggregate(report.records);
  return report;
}

}  // namespace cloudrm::eval
