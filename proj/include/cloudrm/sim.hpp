#pragma once

// Procedural cloud cover with known ground truth. Clouds are octave-summed
// gradient noise rescaled to [0,1] and composited over a ground image with
// the scattering rule observed = C + (1 - C) o ground.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <vector>

namespace cloudrm::sim {

/// Images are height x width matrices (row = y, column = x).
using Image = Eigen::MatrixXd;

struct CloudSimConfig {
  int width = 64;
  int height = 64;
  double cell = 0.0;  // lattice spacing in pixels; <= 0 selects width / 8
  int octaves = 4;
  double persistence = 0.5;
  double lacunarity = 2.0;
  double coverage = 0.5;  // 0.5 leaves the rescaled field unchanged
  double gamma = 1.0;     // tonal correction exponent, 1 = off
  bool equalize = false;
  std::uint64_t seed = 0;

  double effective_cell() const { return cell > 0.0 ? cell : width / 8.0; }
  void validate() const;
};

struct CloudField {
  Image values;  // entries in [0,1]
};

struct SimulatedStack {
  Eigen::MatrixXd D;  // d x n, column i = vec(observed image i), column-major vec
  std::vector<CloudField> clouds;
};

/// SplitMix64; pinned so noise fields are reproducible across platforms.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Fisher-Yates shuffle of 0..255 driven by SplitMix64(seed), duplicated to
/// 512 entries for wrap-free hashing.
std::array<std::uint8_t, 512> permutation_table(std::uint64_t seed);

/// Single-octave gradient noise sampled at pixel (x, y) -> (x / cell, y / cell).
/// Values lie in [-1, 1] and vanish on lattice points.
Image perlin2d(int width, int height, double cell, std::uint64_t seed);

/// Octave sum normalised by the total amplitude. Octave k uses lattice
/// spacing cell / lacunarity^k (floored at one pixel) and seed + k.
Image fbm_field(const CloudSimConfig& cfg);

/// fbm -> min-max rescale -> coverage exponent 2^(1 - 2 coverage) ->
/// optional gamma -> optional histogram equalisation. A constant field maps
/// to all zeros.
CloudField make_cloud(const CloudSimConfig& cfg);

Image composite(const Image& ground, const CloudField& cloud);
Image gamma_correct(const Image& img, double g);
Image hist_equalize(const Image& img, int bins = 256);

/// n observed images of the same ground; column j (0-based) uses the cloud
/// seeded with cfg.seed + j + 1.
SimulatedStack simulate_stack(const Image& ground, int n, const CloudSimConfig& cfg);

}  // namespace cloudrm::sim
