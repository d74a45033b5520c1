#include "cloudrm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cloudrm::sim {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// Eight unit gradients at multiples of 45 degrees.
constexpr std::array<std::array<double, 2>, 8> kGradients{{
    {1.0, 0.0},
    {kInvSqrt2, kInvSqrt2},
    {0.0, 1.0},
    {-kInvSqrt2, kInvSqrt2},
    {-1.0, 0.0},
    {-kInvSqrt2, -kInvSqrt2},
    {0.0, -1.0},
    {kInvSqrt2, -kInvSqrt2},
}};

inline double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

inline double lerp(double a, double b, double t) { return a + t * (b - a); }

class GradientNoise {
 public:
  explicit GradientNoise(std::uint64_t seed) : perm_(permutation_table(seed)) {}

  double operator()(double x, double y) const {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const double xf = x - fx;
    const double yf = y - fy;
    const int xi = static_cast<int>(static_cast<std::int64_t>(fx) & 255);
    const int yi = static_cast<int>(static_cast<std::int64_t>(fy) & 255);

    const double n00 = corner(xi, yi, xf, yf);
    const double n10 = corner(xi + 1, yi, xf - 1.0, yf);
    const double n01 = corner(xi, yi + 1, xf, yf - 1.0);
    const double n11 = corner(xi + 1, yi + 1, xf - 1.0, yf - 1.0);
    const double u = fade(xf);
    const double v = fade(yf);
    return lerp(lerp(n00, n10, u), lerp(n01, n11, u), v);
  }

 private:
  double corner(int ix, int iy, double dx, double dy) const {
    const auto& g = kGradients[perm_[perm_[ix] + iy] & 7];
    return g[0] * dx + g[1] * dy;
  }

  std::array<std::uint8_t, 512> perm_;
};

void require_same_shape(const Image& a, const Image& b, const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(where) + ": shape mismatch");
}

}  // namespace

void CloudSimConfig::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("CloudSimConfig: empty image size");
  if (cell > 0.0 && cell < 1.0) throw std::invalid_argument("CloudSimConfig: cell must be >= 1");
  if (octaves < 1) throw std::invalid_argument("CloudSimConfig: octaves must be >= 1");
  if (!(persistence > 0.0 && persistence <= 1.0))
    throw std::invalid_argument("CloudSimConfig: persistence must be in (0,1]");
  if (!(lacunarity > 1.0)) throw std::invalid_argument("CloudSimConfig: lacunarity must exceed 1");
  if (!(coverage >= 0.0 && coverage <= 1.0))
    throw std::invalid_argument("CloudSimConfig: coverage must be in [0,1]");
  if (!(gamma > 0.0)) throw std::invalid_argument("CloudSimConfig: gamma must be positive");
}

std::array<std::uint8_t, 512> permutation_table(std::uint64_t seed) {
  std::array<std::uint8_t, 256> p{};
  std::iota(p.begin(), p.end(), std::uint8_t{0});
  SplitMix64 rng(seed);
  for (int i = 255; i > 0; --i) {
    const auto j = static_cast<int>(rng.next() % static_cast<std::uint64_t>(i + 1));
    std::swap(p[i], p[j]);
  }
  std::array<std::uint8_t, 512> table{};
  for (int i = 0; i < 512; ++i) table[i] = p[i & 255];
  return table;
}

Image perlin2d(int width, int height, double cell, std::uint64_t seed) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("perlin2d: empty image size");
  if (!(cell >= 1.0)) throw std::invalid_argument("perlin2d: cell must be >= 1");
  const GradientNoise noise(seed);
  Image out(height, width);
  for (int x = 0; x < width; ++x)
    for (int y = 0; y < height; ++y) out(y, x) = noise(x / cell, y / cell);
  return out;
}

Image fbm_field(const CloudSimConfig& cfg) {
  cfg.validate();
  Image sum = Image::Zero(cfg.height, cfg.width);
  double amplitude = 1.0;
  double total = 0.0;
  double cell = cfg.effective_cell();
  for (int k = 0; k < cfg.octaves; ++k) {
    sum += amplitude * perlin2d(cfg.width, cfg.height, std::max(cell, 1.0), cfg.seed + k);
    total += amplitude;
    amplitude *= cfg.persistence;
    cell /= cfg.lacunarity;
  }
  return sum / total;
}

CloudField make_cloud(const CloudSimConfig& cfg) {
  Image field = fbm_field(cfg);
  const double lo = field.minCoeff();
  const double hi = field.maxCoeff();
  if (!(hi > lo)) return {Image::Zero(cfg.height, cfg.width)};

  field = (field.array() - lo) / (hi - lo);
  const double exponent = std::exp2(1.0 - 2.0 * cfg.coverage);
  if (exponent != 1.0) field = field.array().pow(exponent);
  if (cfg.gamma != 1.0) field = gamma_correct(field, cfg.gamma);
  if (cfg.equalize) field = hist_equalize(field);
  return {field.cwiseMax(0.0).cwiseMin(1.0)};
}

Image composite(const Image& ground, const CloudField& cloud) {
  require_same_shape(ground, cloud.values, "composite");
  const auto& c = cloud.values.array();
  return (c + (1.0 - c) * ground.array()).matrix();
}

Image gamma_correct(const Image& img, double g) {
  if (!(g > 0.0)) throw std::invalid_argument("gamma_correct: exponent must be positive");
  if (g == 1.0) return img;
  return img.array().pow(g).matrix();
}

Image hist_equalize(const Image& img, int bins) {
  if (bins < 2) throw std::invalid_argument("hist_equalize: need at least 2 bins");
  if (img.size() == 0) return img;
  auto bucket = [bins](double v) {
    const auto b = static_cast<int>(std::floor(std::clamp(v, 0.0, 1.0) * bins));
    return std::min(b, bins - 1);
  };
  std::vector<long> cdf(bins, 0);
  for (Eigen::Index k = 0; k < img.size(); ++k) ++cdf[bucket(img(k))];
  std::partial_sum(cdf.begin(), cdf.end(), cdf.begin());

  const long total = cdf.back();
  const long first = *std::find_if(cdf.begin(), cdf.end(), [](long c) { return c > 0; });
  if (total == first) return img;  // single occupied bucket

  Image out(img.rows(), img.cols());
  const double denom = static_cast<double>(total - first);
  for (Eigen::Index k = 0; k < img.size(); ++k)
    out(k) = static_cast<double>(cdf[bucket(img(k))] - first) / denom;
  return out;
}

SimulatedStack simulate_stack(const Image& ground, int n, const CloudSimConfig& cfg) {
  if (n < 1) throw std::invalid_argument("simulate_stack: n must be >= 1");
  if (ground.rows() != cfg.height || ground.cols() != cfg.width)
    throw std::invalid_argument("simulate_stack: ground image does not match config size");

  SimulatedStack out;
  out.D.resize(ground.size(), n);
  out.clouds.reserve(n);
  for (int i = 1; i <= n; ++i) {
    CloudSimConfig ci = cfg;
    ci.seed = cfg.seed + static_cast<std::uint64_t>(i);
    out.clouds.push_back(make_cloud(ci));
    out.D.col(i - 1) = composite(ground, out.clouds.back()).reshaped();
  }
  return out;
}

}  // namespace cloudrm::sim
