#include <gtest/gtest.h>

#include "augseg/autodiff.hpp"
#include "augseg/error.hpp"
#include "augseg/ops.hpp"
#include "augseg/wavelet.hpp"
#include "test_util.hpp"

namespace augseg::wavelet {
namespace {

using augseg::testing::random_tensor;

Tensor map2x2(std::vector<double> v, DType dt = DType::Float64) { return Tensor({1, 1, 2, 2}, std::move(v), dt); }

double energy(const Tensor& t) {
  double e = 0.0;
  for (double v : t.data()) e += v * v;
  return e;
}

MaskSet full_masks(std::array<double, 4> keep, const Shape& band) {
  WtAugConfig cfg;
  cfg.keep_prob = keep;
  return make_masks(band, cfg);
}

TEST(HaarDwt, ConstantBlock) {
  auto s = haar_dwt2(map2x2({1, 1, 1, 1}));
  EXPECT_EQ(s.ll[0], 2.0);
  EXPECT_EQ(s.lh[0], 0.0);
  EXPECT_EQ(s.hl[0], 0.0);
  EXPECT_EQ(s.hh[0], 0.0);
}

TEST(HaarDwt, OrientationConvention) {
  auto s = haar_dwt2(map2x2({1, 2, 3, 4}));
  EXPECT_EQ(s.ll[0], 5.0);
  EXPECT_EQ(s.lh[0], -1.0);  // horizontal difference
  EXPECT_EQ(s.hl[0], -2.0);  // vertical difference
  EXPECT_EQ(s.hh[0], 0.0);
}

TEST(HaarDwt, RejectsBadInput) {
  EXPECT_THROW(haar_dwt2(Tensor({2, 2}, {1, 2, 3, 4})), ContractError);
  EXPECT_THROW(haar_dwt2(Tensor({1, 1, 1, 4})), ContractError);
}

TEST(HaarDwt, ParsevalFloat64) {
  std::mt19937_64 rng(50);
  Tensor f = random_tensor({1, 3, 8, 8}, rng);
  auto s = haar_dwt2(f);
  const double bands = energy(s.ll) + energy(s.lh) + energy(s.hl) + energy(s.hh);
  EXPECT_NEAR(bands, energy(f), 1e-10);
}

TEST(HaarDwt, ParsevalFloat32Relative) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor f = random_tensor({2, 4, 6, 10}, rng, DType::Float32);
    auto s = haar_dwt2(f);
    EXPECT_EQ(s.ll.dtype(), DType::Float32);
    const double bands = energy(s.ll) + energy(s.lh) + energy(s.hl) + energy(s.hh);
    EXPECT_NEAR(bands / energy(f), 1.0, 1e-4);
  }
}

TEST(HaarDwt, Linearity) {
  std::mt19937_64 rng(52);
  Tensor f = random_tensor({2, 2, 6, 6}, rng, DType::Float32);
  Tensor g = random_tensor({2, 2, 6, 6}, rng, DType::Float32);
  const double alpha = 0.7, beta = -1.3;
  auto lhs = haar_dwt2(add(mul_scalar(f, alpha), mul_scalar(g, beta)));
  auto sf = haar_dwt2(f);
  auto sg = haar_dwt2(g);
  auto combine = [&](const Tensor& a, const Tensor& b) { return add(mul_scalar(a, alpha), mul_scalar(b, beta)); };
  EXPECT_LT(max_abs_diff(lhs.ll, combine(sf.ll, sg.ll)), 1e-5);
  EXPECT_LT(max_abs_diff(lhs.lh, combine(sf.lh, sg.lh)), 1e-5);
  EXPECT_LT(max_abs_diff(lhs.hl, combine(sf.hl, sg.hl)), 1e-5);
  EXPECT_LT(max_abs_diff(lhs.hh, combine(sf.hh, sg.hh)), 1e-5);
}

TEST(HaarIdwt, Examples) {
  SubbandSet s;
  s.ll = Tensor({1, 1, 1, 1}, {5}, DType::Float64);
  s.lh = Tensor({1, 1, 1, 1}, {-1}, DType::Float64);
  s.hl = Tensor({1, 1, 1, 1}, {-2}, DType::Float64);
  s.hh = Tensor({1, 1, 1, 1}, {0}, DType::Float64);
  Tensor f = haar_idwt2(s);
  EXPECT_EQ(f.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(f[0], 1.0);
  EXPECT_EQ(f[1], 2.0);
  EXPECT_EQ(f[2], 3.0);
  EXPECT_EQ(f[3], 4.0);

  Tensor z = Tensor::zeros({2, 3, 2, 4});
  Tensor back = haar_idwt2({z, z, z, z, 4, 8});
  EXPECT_EQ(back.shape(), (Shape{2, 3, 4, 8}));
  for (double v : back.data()) EXPECT_EQ(v, 0.0);
}

TEST(HaarIdwt, MismatchedBandsRejected) {
  Tensor a = Tensor::zeros({1, 1, 2, 2});
  Tensor b = Tensor::zeros({1, 1, 2, 3});
  EXPECT_THROW(haar_idwt2({a, a, b, a, 4, 4}), ContractError);
}

TEST(HaarIdwt, PerfectReconstructionIncludingOddExtents) {
  std::mt19937_64 rng(53);
  std::uniform_int_distribution<std::size_t> n(1, 2), c(1, 4), hw(2, 11);
  for (int trial = 0; trial < 50; ++trial) {
    Shape s{n(rng), c(rng), hw(rng), hw(rng)};
    Tensor f32 = random_tensor(s, rng, DType::Float32);
    EXPECT_LT(max_abs_diff(haar_idwt2(haar_dwt2(f32)), f32), 1e-5) << shape_string(s);
    Tensor f64 = random_tensor(s, rng, DType::Float64);
    EXPECT_LT(max_abs_diff(haar_idwt2(haar_dwt2(f64)), f64), 1e-10) << shape_string(s);
  }
  Tensor sample = random_tensor({2, 4, 6, 6}, rng, DType::Float32);
  EXPECT_LT(max_abs_diff(haar_idwt2(haar_dwt2(sample)), sample), 1e-5);
}

TEST(Masks, DegenerateProbabilities) {
  WtAugConfig cfg;
  cfg.keep_prob = {1, 1, 1, 1};
  auto ones = make_masks({2, 3, 4, 5}, cfg);
  EXPECT_EQ(ones.ll.shape(), (Shape{1, 1, 4, 5}));
  for (const Tensor* m : {&ones.ll, &ones.lh, &ones.hl, &ones.hh})
    for (double v : m->data()) EXPECT_EQ(v, 1.0);
  cfg.keep_prob = {0, 0, 0, 0};
  auto zeros = make_masks({2, 3, 4, 5}, cfg);
  for (const Tensor* m : {&zeros.ll, &zeros.lh, &zeros.hl, &zeros.hh})
    for (double v : m->data()) EXPECT_EQ(v, 0.0);
}

TEST(Masks, HalfProbabilityFraction) {
  WtAugConfig cfg;
  cfg.keep_prob = {0.5, 0.5, 0.5, 0.5};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    cfg.seed = seed;
    auto m = make_masks({1, 1, 32, 32}, cfg);
    for (const Tensor* t : {&m.ll, &m.lh, &m.hl, &m.hh}) {
      double ones = 0;
      for (double v : t->data()) {
        EXPECT_TRUE(v == 0.0 || v == 1.0);
        ones += v;
      }
      const double frac = ones / 1024.0;
      EXPECT_GE(frac, 0.40);
      EXPECT_LE(frac, 0.60);
    }
  }
}

TEST(Masks, DeterministicAndConfigurable) {
  WtAugConfig cfg;
  cfg.seed = 77;
  auto a = make_masks({2, 3, 8, 8}, cfg);
  auto b = make_masks({2, 3, 8, 8}, cfg);
  EXPECT_TRUE(bit_equal(a.hh, b.hh));
  cfg.channel_shared = false;
  EXPECT_EQ(make_masks({2, 3, 8, 8}, cfg).lh.shape(), (Shape{2, 3, 8, 8}));
  cfg.keep_prob[2] = 1.5;
  EXPECT_THROW(make_masks({1, 1, 2, 2}, cfg), ContractError);
}

TEST(WtAug, IdentityMasks) {
  std::mt19937_64 rng(54);
  WtAugConfig cfg;
  cfg.keep_prob = {1, 1, 1, 1};
  for (int trial = 0; trial < 20; ++trial) {
    Tensor f = random_tensor({2, 3, 7, 6}, rng, DType::Float32);
    Tensor out = wt_aug(f, cfg, rng);
    EXPECT_EQ(out.shape(), f.shape());
    EXPECT_LT(max_abs_diff(out, f), 1e-5);
  }
}

TEST(WtAug, KeepLowPassOnlyGivesBlockMeans) {
  Tensor f = map2x2({1, 2, 3, 4});
  Tensor out = wt_aug(f, full_masks({1, 0, 0, 0}, {1, 1, 1, 1}));
  for (double v : out.data()) EXPECT_NEAR(v, 2.5, 1e-12);
}

TEST(WtAug, DropEverythingGivesZero) {
  std::mt19937_64 rng(55);
  WtAugConfig cfg;
  cfg.keep_prob = {0, 0, 0, 0};
  Tensor out = wt_aug(random_tensor({1, 2, 6, 6}, rng), cfg, rng);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(WtAug, ShapePreservedForOddExtents) {
  std::mt19937_64 rng(56);
  WtAugConfig cfg;
  Tensor f = random_tensor({1, 2, 5, 9}, rng, DType::Float32);
  EXPECT_EQ(wt_aug(f, cfg, rng).shape(), f.shape());
}

TEST(WtAug, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(57);
  WtAugConfig cfg;
  cfg.keep_prob = {0.9, 0.5, 0.5, 0.3};
  for (Shape s : {Shape{1, 2, 6, 6}, Shape{2, 1, 5, 7}}) {
    Tensor f = random_tensor(s, rng);
    MaskSet masks = make_masks(band_shape(s), cfg, rng);
    EXPECT_LT(finite_diff_check([&](const Tensor& t) { return sum(wt_aug(t, masks)); }, f), 1e-5);
    Tensor w = augseg::testing::random_weights_like(f, rng);
    EXPECT_LT(finite_diff_check([&](const Tensor& t) { return sum(mul(wt_aug(t, masks), w)); }, f), 1e-5);
  }
}

}  // namespace
}  // namespace augseg::wavelet
