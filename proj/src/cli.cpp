#include "cloudrm/cli.hpp"

#include "cloudrm/analysis.hpp"
#include "cloudrm/errors.hpp"
#include "cloudrm/eval.hpp"
#include "cloudrm/imageio.hpp"
#include "cloudrm/sim.hpp"
#include "cloudrm/solvers.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace cloudrm::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// 3 significant digits, exponent without zero padding: 3.691e-4.
std::string fmt_sci(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  std::string s(buf);
  const auto e = s.find('e');
  if (e == std::string::npos) return s;
  std::size_t digits = e + 2;  // first exponent digit after the sign
  std::size_t first = digits;
  while (first + 1 < s.size() && s[first] == '0') ++first;
  const char sign = s[e + 1];
  return s.substr(0, e + 1) + (sign == '-' ? "-" : "") + s.substr(first);
}

std::string numbered(const std::string& prefix, std::size_t i, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return prefix + buf + ext;
}

// ------------------------------------------------------------- config file

// Appends `--key value` for every JSON entry whose flag is absent from args,
// so explicit flags always win. Unknown keys surface as CLI11 extras.
std::vector<std::string> merge_config(const std::vector<std::string>& args) {
  std::optional<std::string> cfg_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config requires a path");
      cfg_path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      cfg_path = args[i].substr(9);
    }
  }
  if (!cfg_path) return args;

  std::ifstream in(*cfg_path);
  if (!in) throw IoError("cannot open config '" + *cfg_path + "'");
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("config '" + *cfg_path + "': " + e.what());
  }
  if (!cfg.is_object()) throw FormatError("config '" + *cfg_path + "': top level must be an object");

  std::vector<std::string> out = args;
  for (const auto& [key, value] : cfg.items()) {
    if (key == "config") throw UsageError("config key 'config' is not allowed");
    const std::string flag = "--" + key;
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (given) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back(flag);
      // false is the default for every flag; still reject unknown keys
      else out.push_back(flag + "=false");
    } else if (value.is_string()) {
      out.push_back(flag);
      out.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      out.push_back(flag);
      out.push_back(value.dump());
    } else {
      throw UsageError("config key '" + key + "' must be a scalar");
    }
  }
  return out;
}

// ------------------------------------------------------------- stack input

std::vector<fs::path> image_files(const fs::path& dir, const std::string& preferred_prefix) {
  std::vector<fs::path> all;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".png" || ext == ".PGM" || ext == ".PNG") all.push_back(entry.path());
  }
  std::sort(all.begin(), all.end());
  std::vector<fs::path> preferred;
  for (const auto& p : all)
    if (p.filename().string().rfind(preferred_prefix, 0) == 0) preferred.push_back(p);
  if (!preferred.empty()) return preferred;
  if (all.empty()) throw IoError("no .pgm or .png images in '" + dir.string() + "'");
  return all;
}

struct StackInput {
  Eigen::MatrixXd D;
  int width = 0;
  int height = 0;
};

StackInput load_stack(const fs::path& path, const std::string& prefix, int width, int height) {
  StackInput s;
  if (fs::is_directory(path)) {
    std::vector<io::GrayImage> images;
    for (const auto& p : image_files(path, prefix)) images.push_back(io::load_gray(p));
    try {
      s.D = io::stack_to_matrix(images);
    } catch (const std::invalid_argument& e) {
      throw FormatError("'" + path.string() + "': " + e.what());
    }
    s.width = images.front().width;
    s.height = images.front().height;
    return s;
  }
  s.D = io::read_matrix(path);
  s.width = width;
  s.height = height;
  if (s.width <= 0 || s.height <= 0) {
    const fs::path meta = path.parent_path() / "stack.json";
    if (fs::exists(meta)) {
      std::ifstream in(meta);
      try {
        const auto j = json::parse(in);
        s.width = j.at("width").get<int>();
        s.height = j.at("height").get<int>();
      } catch (const json::exception& e) {
        throw FormatError("'" + meta.string() + "': " + e.what());
      }
    } else {
      const auto side = static_cast<long long>(std::llround(std::sqrt(double(s.D.rows()))));
      if (side * side != s.D.rows())
        throw UsageError("cannot infer image shape of '" + path.string() + "'; pass --width and --height");
      s.width = s.height = static_cast<int>(side);
    }
  }
  if (static_cast<long long>(s.width) * s.height != s.D.rows())
    throw UsageError("width*height does not match the stack's row count");
  return s;
}

void save_stack(const Eigen::MatrixXd& M, int width, int height, const fs::path& dir,
                const std::string& prefix) {
  const auto images = io::matrix_to_stack(M, width, height);
  for (std::size_t i = 0; i < images.size(); ++i) io::save_gray(images[i], dir / numbered(prefix, i, ".pgm"));
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

// ------------------------------------------------------------- options

struct SimFlags {
  std::uint64_t seed = 0;
  int octaves = 4;
  double persistence = 0.5;
  double lacunarity = 2.0;
  double cell = 0.0;
  double coverage = 0.5;
  double gamma = 1.0;
  bool equalize = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Base random seed");
    cmd->add_option("--octaves", octaves, "Noise octaves");
    cmd->add_option("--persistence", persistence, "Amplitude ratio between octaves");
    cmd->add_option("--lacunarity", lacunarity, "Frequency ratio between octaves");
    cmd->add_option("--cell", cell, "Lattice spacing in pixels (0 = width/8)");
    cmd->add_option("--coverage", coverage, "Cloud coverage in (0,1)");
    cmd->add_option("--gamma", gamma, "Tonal gamma of the cloud field");
    cmd->add_flag("--equalize", equalize, "Histogram-equalise the cloud field");
  }

  sim::CloudSimConfig config(int width, int height) const {
    sim::CloudSimConfig c;
    c.width = width;
    c.height = height;
    c.cell = cell;
    c.octaves = octaves;
    c.persistence = persistence;
    c.lacunarity = lacunarity;
    c.coverage = coverage;
    c.gamma = gamma;
    c.equalize = equalize;
    c.seed = seed;
    c.validate();
    return c;
  }
};

struct SolverFlags {
  double beta = 1.0;
  double epsilon = 1e-7;
  int max_iters = 1000;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--beta", beta, "Haze weight (aatm)");
    cmd->add_option("--epsilon", epsilon, "Relative residual tolerance");
    cmd->add_option("--max-iters", max_iters, "Outer iteration cap");
  }

  SolverConfig config() const {
    SolverConfig c;
    c.beta = beta;
    c.epsilon = epsilon;
    c.max_outer_iters = max_iters;
    return c;
  }
};

Decomposition<double> solve(eval::Method m, const Eigen::MatrixXd& D, const SolverConfig& cfg) {
  switch (m) {
    case eval::Method::Rpca: return rpca(D, cfg);
    case eval::Method::Atm: return atm(D, cfg);
    case eval::Method::Aatm: return aatm(D, cfg);
  }
  throw std::logic_error("unknown method");
}

eval::Method require_method(const std::string& name) {
  const auto m = eval::parse_method(name);
  if (!m) throw UsageError("unknown method '" + name + "' (expected rpca, atm or aatm)");
  return *m;
}

// ------------------------------------------------------------- subcommands

struct SimulateCmd {
  std::string input, out_dir;
  int n = 7;
  SimFlags sim;

  int run(std::ostream& out) const {
    const auto ground = io::load_gray(input);
    const auto cfg = sim.config(ground.width, ground.height);
    if (n < 1) throw UsageError("--n must be >= 1");
    const auto stack = sim::simulate_stack(ground.pixels, n, cfg);

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    save_stack(stack.D, ground.width, ground.height, dir, "observed_");
    for (std::size_t i = 0; i < stack.clouds.size(); ++i)
      io::save_gray(io::GrayImage(stack.clouds[i].values), dir / numbered("cloud_", i, ".pgm"));
    io::save_gray(ground, dir / "truth.pgm");
    io::write_matrix(dir / "stack.lrm", stack.D);

    json meta;
    meta["width"] = ground.width;
    meta["height"] = ground.height;
    meta["n"] = n;
    meta["seed"] = cfg.seed;
    meta["octaves"] = cfg.octaves;
    meta["persistence"] = cfg.persistence;
    meta["lacunarity"] = cfg.lacunarity;
    meta["cell"] = cfg.effective_cell();
    meta["coverage"] = cfg.coverage;
    meta["gamma"] = cfg.gamma;
    meta["equalize"] = cfg.equalize;
    write_json(dir / "stack.json", meta);
    out << "wrote " << n << " observations to " << dir.string() << '\n';
    return kOk;
  }
};

struct RemoveCmd {
  std::string stack, method, lambda = "auto", out_dir;
  bool mc = false, split_haze = false, strict = false;
  int width = 0, height = 0;
  std::uint64_t seed = 0;
  SolverFlags solver;

  double resolve_lambda(Eigen::Index d, Eigen::Index n) const {
    if (lambda == "auto") {
      if (n < 2) throw UsageError("--lambda auto needs at least two observations");
      return analysis::lambda_star(d, n);
    }
    if (lambda == "default") return 1.0 / std::sqrt(static_cast<double>(d));
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(lambda, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != lambda.size() || !(v > 0.0) || !std::isfinite(v))
      throw UsageError("--lambda must be 'auto', 'default' or a positive number");
    return v;
  }

  int run(std::ostream& out, std::ostream& err) const {
    const auto m = require_method(method);
    const auto in = load_stack(stack, "observed_", width, height);
    const auto d = in.D.rows();
    const auto n = in.D.cols();

    SolverConfig cfg = solver.config();
    cfg.lambda = resolve_lambda(d, n);
    const auto dec = solve(m, in.D, cfg);

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    io::write_matrix(dir / "L.lrm", dec.L);
    io::write_matrix(dir / "C.lrm", dec.C);
    if (dec.N) io::write_matrix(dir / "N.lrm", *dec.N);

    Eigen::MatrixXd recovered = dec.L;
    std::optional<Completion<double>> comp;
    if (mc) {
      const double alpha = 0.1 / std::sqrt(static_cast<double>(d));
      comp = matrix_complete(in.D, cloud_mask(dec.cloud(), 0.8), alpha, 1.0, cfg);
      io::write_matrix(dir / "B.lrm", comp->B);
      recovered = comp->B;
    }
    save_stack(recovered, in.width, in.height, dir, "recovered_");
    if (split_haze && dec.N) {
      save_stack(dec.C, in.width, in.height, dir, "cloud_");
      save_stack(*dec.N, in.width, in.height, dir, "haze_");
    } else {
      save_stack(dec.cloud(), in.width, in.height, dir, "cloud_");
    }

    json run;
    run["method"] = std::string(eval::to_string(m));
    run["lambda"] = cfg.lambda;
    run["lambda_mode"] = lambda == "auto" || lambda == "default" ? lambda : "explicit";
    run["beta"] = cfg.beta;
    run["epsilon"] = cfg.epsilon;
    run["residual"] = dec.residual;
    run["outer_iters"] = dec.outer_iters;
    run["wall_seconds"] = dec.wall_seconds;
    run["converged"] = dec.converged;
    run["seed"] = seed;
    run["width"] = in.width;
    run["height"] = in.height;
    run["n"] = n;
    if (d > n) {
      const auto bounds = analysis::lambda_bounds(d, n, in.D);
      run["zone"] = std::string(analysis::to_string(analysis::classify_zone(cfg.lambda, bounds)));
    }
    if (comp) {
      run["mc"] = {{"residual", comp->residual},
                   {"outer_iters", comp->outer_iters},
                   {"wall_seconds", comp->wall_seconds},
                   {"converged", comp->converged}};
    }
    write_json(dir / "run.json", run);

    const bool converged = dec.converged && (!comp || comp->converged);
    out << "method=" << eval::to_string(m) << " lambda=" << fmt9(cfg.lambda)
        << " iters=" << dec.outer_iters << " residual=" << fmt9(dec.residual) << '\n';
    if (!converged) {
      err << "warning: solver did not reach epsilon=" << fmt9(cfg.epsilon) << " within "
          << cfg.max_outer_iters << " iterations\n";
      if (strict) return kNotConverged;
    }
    return kOk;
  }
};

struct BoundsCmd {
  long long d = 0, n = 0;
  std::string stack;

  int run(std::ostream& out) const {
    if (n < 1 || d <= n) throw UsageError("bounds needs d > n >= 1");
    analysis::LambdaBounds b;
    if (stack.empty()) {
      b = analysis::lambda_bounds(d, n);
    } else {
      const auto D = io::read_matrix(stack);
      if (D.rows() != d || D.cols() != n) throw UsageError("--stack shape does not match --d/--n");
      b = analysis::lambda_bounds(d, n, D);
    }
    out << "lambda_min=" << fmt_sci(b.lambda_min) << '\n';
    out << "lambda_max_general=" << fmt_sci(b.lambda_max_general) << '\n';
    if (b.lambda_max_data) out << "lambda_max_data=" << fmt_sci(*b.lambda_max_data) << '\n';
    if (b.lambda_max_cheap) out << "lambda_max_cheap=" << fmt_sci(*b.lambda_max_cheap) << '\n';
    out << "lambda_max_asymptotic=" << fmt_sci(b.lambda_max_asymptotic) << '\n';
    out << "lambda_max_simplified=" << fmt_sci(b.lambda_max_simplified) << '\n';
    if (n >= 2) out << "lambda_star=" << fmt_sci(analysis::lambda_star(d, n)) << '\n';
    return kOk;
  }
};

struct SweepCmd {
  std::string input, methods = "aatm", out_path;
  int n = 7, grid_count = 51, repeats = 1, threads = 1;
  bool dry_run = false;
  SimFlags sim;
  SolverFlags solver;

  std::vector<eval::MethodVariant> parse_methods() const {
    std::vector<eval::MethodVariant> out;
    std::stringstream ss(methods);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      eval::MethodVariant v;
      const auto plus = tok.find('+');
      if (plus != std::string::npos) {
        if (tok.substr(plus) != "+mc") throw UsageError("unknown method suffix in '" + tok + "'");
        v.with_mc = true;
        tok = tok.substr(0, plus);
      }
      v.method = require_method(tok);
      out.push_back(v);
    }
    if (out.empty()) throw UsageError("--methods is empty");
    return out;
  }

  int run(std::ostream& out) const {
    const auto variants = parse_methods();
    const auto ground = io::load_gray(input);
    const long long d = static_cast<long long>(ground.width) * ground.height;

    eval::TrialSpec spec;
    spec.ground_truth = ground.pixels;
    spec.n = n;
    spec.sim = sim.config(ground.width, ground.height);
    spec.methods = variants;
    spec.lambda_grid = eval::default_lambda_grid(d, grid_count);
    spec.repeats = repeats;
    spec.base_seed = sim.seed;
    spec.solver = solver.config();
    spec.validate();

    const auto total = variants.size() * spec.lambda_grid.size() * static_cast<std::size_t>(repeats);
    out << "d=" << d << " n=" << n << " lambda=[" << fmt9(spec.lambda_grid.front()) << ", "
        << fmt9(spec.lambda_grid.back()) << "] grid=" << grid_count << " repeats=" << repeats
        << " records=" << total << '\n';

    eval::SweepReport report;
    if (!dry_run) report = eval::run_sweep(spec, threads);
    const fs::path path(out_path);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    eval::export_report(report, path);
    out << "wrote " << report.records.size() << " records to " << path.string() << '\n';
    return kOk;
  }
};

struct EvalCmd {
  std::string recovered, truth, cloud_est, cloud_true;
  double mask_gamma = 0.8;

  int run(std::ostream& out) const {
    const auto t = io::load_gray(truth);
    const auto rec = load_stack(recovered, "recovered_", t.width, t.height);
    if (rec.D.rows() != t.pixels.size()) throw UsageError("recovered stack does not match truth size");
    const Eigen::VectorXd tv = t.pixels.reshaped();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < rec.D.cols(); ++j) {
      const double r = eval::recovery_error(rec.D.col(j), tv);
      sum += r;
      out << "r=" << fmt9(r) << '\n';
    }
    out << "r_mean=" << fmt9(sum / static_cast<double>(rec.D.cols())) << '\n';

    if (cloud_est.empty() != cloud_true.empty())
      throw UsageError("--cloud-est and --cloud-true must be given together");
    if (!cloud_est.empty()) {
      const auto est = load_stack(cloud_est, "cloud_", t.width, t.height);
      const auto tru = load_stack(cloud_true, "cloud_", t.width, t.height);
      if (est.D.rows() != tru.D.rows() || est.D.cols() != tru.D.cols())
        throw UsageError("cloud estimate and reference differ in shape");
      const eval::BoolMatrix a = cloud_mask(est.D, mask_gamma).cloud();
      const eval::BoolMatrix b = cloud_mask(tru.D, mask_gamma).cloud();
      out << "iou=" << fmt9(eval::mask_iou(a, b)) << '\n';
    }
    return kOk;
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app("Cloud removal by low-rank plus sparse decomposition of image stacks", "cloudrm");
  app.require_subcommand(1);
  std::string config_path;

  SimulateCmd simulate;
  auto* sim_cmd = app.add_subcommand("simulate", "Composite seeded synthetic clouds over a ground image");
  sim_cmd->add_option("--input", simulate.input, "Ground image (PGM/PNG)")->required();
  sim_cmd->add_option("--n", simulate.n, "Number of observations")->required();
  sim_cmd->add_option("--out-dir", simulate.out_dir, "Output directory")->required();
  simulate.sim.add_to(sim_cmd);

  RemoveCmd remove;
  auto* rm_cmd = app.add_subcommand("remove", "Decompose a stack into ground and cloud layers");
  rm_cmd->add_option("--stack", remove.stack, "Stack as .lrm or image directory")->required();
  rm_cmd->add_option("--method", remove.method, "rpca, atm or aatm")->required();
  rm_cmd->add_option("--lambda", remove.lambda, "auto, default or a positive value");
  rm_cmd->add_flag("--mc", remove.mc, "Refine with masked matrix completion");
  rm_cmd->add_flag("--split-haze", remove.split_haze, "Write C and N separately (aatm)");
  rm_cmd->add_flag("--strict", remove.strict, "Exit 4 when the solver does not converge");
  rm_cmd->add_option("--width", remove.width, "Image width for .lrm stacks");
  rm_cmd->add_option("--height", remove.height, "Image height for .lrm stacks");
  rm_cmd->add_option("--seed", remove.seed, "Seed recorded in run.json");
  rm_cmd->add_option("--out-dir", remove.out_dir, "Output directory")->required();
  remove.solver.add_to(rm_cmd);

  BoundsCmd bounds;
  auto* b_cmd = app.add_subcommand("bounds", "Print the lambda bounds for a d x n stack");
  b_cmd->add_option("--d", bounds.d, "Pixels per image")->required();
  b_cmd->add_option("--n", bounds.n, "Number of images")->required();
  b_cmd->add_option("--stack", bounds.stack, "Stack (.lrm) for the data-driven bounds");

  SweepCmd sweep;
  auto* sw_cmd = app.add_subcommand("sweep", "Seeded lambda sweep with CSV report");
  sw_cmd->add_option("--input", sweep.input, "Ground image (PGM/PNG)")->required();
  sw_cmd->add_option("--n", sweep.n, "Observations per repeat")->required();
  sw_cmd->add_option("--methods", sweep.methods, "Comma list of rpca|atm|aatm, optional +mc suffix");
  sw_cmd->add_option("--grid-count", sweep.grid_count, "Odd number of lambda values");
  sw_cmd->add_option("--repeats", sweep.repeats, "Randomised repeats");
  sw_cmd->add_option("--threads", sweep.threads, "Worker threads over repeats");
  sw_cmd->add_option("--out", sweep.out_path, "Records CSV path")->required();
  sw_cmd->add_flag("--dry-run", sweep.dry_run, "Validate and write header-only CSVs");
  sweep.sim.add_to(sw_cmd);
  sweep.solver.add_to(sw_cmd);

  EvalCmd evalc;
  auto* ev_cmd = app.add_subcommand("eval", "Score recovered images against the ground truth");
  ev_cmd->add_option("--recovered", evalc.recovered, "Recovered stack (.lrm or directory)")->required();
  ev_cmd->add_option("--truth", evalc.truth, "Ground truth image")->required();
  ev_cmd->add_option("--cloud-est", evalc.cloud_est, "Estimated cloud stack (.lrm or directory)");
  ev_cmd->add_option("--cloud-true", evalc.cloud_true, "Reference cloud directory");
  ev_cmd->add_option("--mask-gamma", evalc.mask_gamma, "Mask threshold in standard deviations");

  for (auto* cmd : {sim_cmd, rm_cmd, b_cmd, sw_cmd, ev_cmd})
    cmd->add_option("--config", config_path, "JSON file of flag defaults");

  try {
    const auto args = merge_config(raw_args);
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);

    if (*sim_cmd) return simulate.run(out);
    if (*rm_cmd) return remove.run(out, err);
    if (*b_cmd) return bounds.run(out);
    if (*sw_cmd) return sweep.run(out);
    if (*ev_cmd) return evalc.run(out);
    return kUsage;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace cloudrm::cli
