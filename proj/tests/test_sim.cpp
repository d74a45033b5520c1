#include "cloudrm/sim.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace cloudrm::sim;

TEST(SplitMix64, KnownSequence) {
  // Reference outputs of the published SplitMix64 for seed 0.
  SplitMix64 g(0);
  EXPECT_EQ(g.next(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(g.next(), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(g.next(), 0x06C45D188009454FULL);
}

TEST(PermutationTable, IsDoubledPermutation) {
  const auto p = permutation_table(42);
  std::array<int, 256> seen{};
  for (int i = 0; i < 256; ++i) {
    ++seen[p[i]];
    EXPECT_EQ(p[i], p[i + 256]);
  }
  for (int c : seen) EXPECT_EQ(c, 1);
  EXPECT_NE(permutation_table(1), permutation_table(2));
}

TEST(Perlin2d, ZeroAtLatticePoints) {
  const Image f = perlin2d(64, 64, 8.0, 7);
  for (int y = 0; y < 64; y += 8)
    for (int x = 0; x < 64; x += 8) EXPECT_EQ(f(y, x), 0.0);
}

TEST(Perlin2d, Deterministic) {
  const Image a = perlin2d(40, 30, 5.5, 99);
  const Image b = perlin2d(40, 30, 5.5, 99);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, perlin2d(40, 30, 5.5, 100));
}

TEST(Perlin2d, Bounded) {
  const Image f = perlin2d(256, 256, 32.0, 3);
  EXPECT_LE(f.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_GT(f.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_EQ(f.rows(), 256);
}

TEST(Perlin2d, RejectsSubPixelCell) { EXPECT_THROW(perlin2d(8, 8, 0.5, 1), std::invalid_argument); }

TEST(FbmField, SingleOctaveEqualsPerlin) {
  CloudSimConfig c;
  c.width = 48;
  c.height = 32;
  c.octaves = 1;
  c.seed = 5;
  EXPECT_EQ(fbm_field(c), perlin2d(48, 32, c.effective_cell(), 5));
}

TEST(FbmField, NormalisedAndDeterministic) {
  CloudSimConfig c;
  c.width = c.height = 128;
  c.octaves = 6;
  c.seed = 8;
  const Image f = fbm_field(c);
  EXPECT_LE(f.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_EQ(f, fbm_field(c));
}

TEST(MakeCloud, RescaledToUnitRange) {
  CloudSimConfig c;
  c.seed = 12;
  const auto cloud = make_cloud(c);
  EXPECT_EQ(cloud.values.minCoeff(), 0.0);
  EXPECT_EQ(cloud.values.maxCoeff(), 1.0);
  EXPECT_EQ(cloud.values, make_cloud(c).values);
}

TEST(MakeCloud, CoverageMonotone) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CloudSimConfig lo, hi;
    lo.seed = hi.seed = seed;
    lo.coverage = 0.1;
    hi.coverage = 0.9;
    EXPECT_GT(make_cloud(hi).values.mean(), make_cloud(lo).values.mean());
  }
}

TEST(MakeCloud, CoverageHalfIsIdentityMap) {
  CloudSimConfig c;
  c.seed = 4;
  const Image f = fbm_field(c);
  const Image expect = (f.array() - f.minCoeff()) / (f.maxCoeff() - f.minCoeff());
  EXPECT_LE((make_cloud(c).values - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MakeCloud, UnitCellGivesEmptySky) {
  CloudSimConfig c;
  c.cell = 1.0;
  const auto cloud = make_cloud(c);
  EXPECT_TRUE(cloud.values.isZero(0));
}

TEST(MakeCloud, OptionalCorrectionsStayInRange) {
  CloudSimConfig c;
  c.seed = 2;
  c.gamma = 2.2;
  c.equalize = true;
  const auto cloud = make_cloud(c);
  EXPECT_GE(cloud.values.minCoeff(), 0.0);
  EXPECT_LE(cloud.values.maxCoeff(), 1.0);
}

TEST(CloudSimConfig, Validation) {
  CloudSimConfig c;
  EXPECT_NO_THROW(c.validate());
  c.persistence = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.lacunarity = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.coverage = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.width = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Composite, Examples) {
  const Image I = Image::Constant(3, 3, 0.5);
  EXPECT_EQ(composite(I, CloudField{Image::Zero(3, 3)}), I);
  EXPECT_EQ(composite(I, CloudField{Image::Ones(3, 3)}), Image::Ones(3, 3));
  EXPECT_EQ(composite(I, CloudField{Image::Constant(3, 3, 0.5)}), Image::Constant(3, 3, 0.75));
  EXPECT_THROW(composite(I, CloudField{Image::Zero(2, 3)}), std::invalid_argument);
}

TEST(Composite, RangeAndBrightening) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 20; ++k) {
    const Image I = cloudrm::testing::random_uniform(16, 16, rng);
    const Image C = cloudrm::testing::random_uniform(16, 16, rng);
    const Image O = composite(I, CloudField{C});
    EXPECT_GE(O.minCoeff(), 0.0);
    EXPECT_LE(O.maxCoeff(), 1.0);
    EXPECT_GE((O - I).minCoeff(), 0.0);
    EXPECT_LE((O - I - (C.array() * (1.0 - I.array())).matrix()).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(GammaCorrect, Examples) {
  Image I(1, 2);
  I << 0.25, 0.8;
  EXPECT_EQ(gamma_correct(I, 1.0), I);
  EXPECT_NEAR(gamma_correct(I, 0.5)(0), 0.5, 1e-15);
  EXPECT_THROW(gamma_correct(I, 0.0), std::invalid_argument);
}

TEST(GammaCorrect, PreservesOrdering) {
  std::mt19937_64 rng(7);
  const Image I = cloudrm::testing::random_uniform(1, 200, rng);
  for (double g : {0.3, 1.7, 4.0}) {
    const Image O = gamma_correct(I, g);
    for (Eigen::Index i = 0; i < I.size(); ++i)
      for (Eigen::Index j = 0; j < I.size(); ++j)
        if (I(i) < I(j)) EXPECT_LE(O(i), O(j));
  }
}

TEST(HistEqualize, ConstantImage) {
  const Image I = Image::Constant(4, 4, 0.3);
  const Image O = hist_equalize(I);
  EXPECT_EQ(O.maxCoeff(), O.minCoeff());
}

TEST(HistEqualize, UniformRampNearlyUnchanged) {
  const int bins = 64;
  Image I(1, bins);
  for (int i = 0; i < bins; ++i) I(i) = (i + 0.5) / bins;
  const Image O = hist_equalize(I, bins);
  EXPECT_LE((O - I).cwiseAbs().maxCoeff(), 1.0 / bins);
}

TEST(HistEqualize, OutputInRange) {
  std::mt19937_64 rng(8);
  const Image I = cloudrm::testing::random_uniform(20, 20, rng).array().square();
  const Image O = hist_equalize(I);
  EXPECT_GE(O.minCoeff(), 0.0);
  EXPECT_LE(O.maxCoeff(), 1.0);
  EXPECT_THROW(hist_equalize(I, 1), std::invalid_argument);
}

TEST(SimulateStack, ShapeAndDeterminism) {
  const Image I = cloudrm::testing::ground_scene(64, 64);
  CloudSimConfig c;
  c.seed = 77;
  const auto a = simulate_stack(I, 7, c);
  EXPECT_EQ(a.D.rows(), 4096);
  EXPECT_EQ(a.D.cols(), 7);
  ASSERT_EQ(a.clouds.size(), 7u);
  EXPECT_EQ(a.D, simulate_stack(I, 7, c).D);
  // Column i is the column-major vectorisation of the composite with cloud i.
  CloudSimConfig ci = c;
  ci.seed = c.seed + 4;
  const Eigen::VectorXd col = composite(I, make_cloud(ci)).reshaped();
  EXPECT_EQ(Eigen::VectorXd(a.D.col(3)), col);
}

TEST(SimulateStack, NoCloudLimit) {
  const Image I = cloudrm::testing::ground_scene(32, 32);
  CloudSimConfig c;
  c.width = c.height = 32;
  c.cell = 1.0;
  const auto s = simulate_stack(I, 4, c);
  const Eigen::VectorXd v = I.reshaped();
  for (int j = 0; j < 4; ++j) EXPECT_EQ(Eigen::VectorXd(s.D.col(j)), v);
}

TEST(SimulateStack, RejectsBadInput) {
  CloudSimConfig c;
  EXPECT_THROW(simulate_stack(Image::Zero(64, 64), 0, c), std::invalid_argument);
  EXPECT_THROW(simulate_stack(Image::Zero(32, 64), 2, c), std::invalid_argument);
}
