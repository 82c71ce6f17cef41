#pragma once

#include <array>
#include <cstdint>
#include <random>

#include "augseg/tensor.hpp"

namespace augseg::wavelet {

/// Single-level 2D Haar decomposition of a [N,C,H,W] map.
///
/// LH is high-pass along the horizontal axis, HL along the vertical axis.
/// Each band is [N,C,ceil(H/2),ceil(W/2)]; `height`/`width` record the source
/// extents so synthesis can undo the reflect padding of odd extents.
struct SubbandSet {
  Tensor ll, lh, hl, hh;
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Binary {0,1} masks, one per sub-band. [1,1,h,w] when shared across batch
/// and channels, otherwise the full sub-band shape.
struct MaskSet {
  Tensor ll, lh, hl, hh;
};

struct WtAugConfig {
  /// Bernoulli keep probability for LL, LH, HL, HH.
  std::array<double, 4> keep_prob{0.8, 0.8, 0.8, 0.8};
  std::uint64_t seed = 0;
  bool channel_shared = true;

  void validate() const;
};

/// Orthonormal Haar analysis. For each 2x2 block [[a,b],[c,d]]:
///   LL=(a+b+c+d)/2  LH=(a-b+c-d)/2  HL=(a+b-c-d)/2  HH=(a-b-c+d)/2
SubbandSet haar_dwt2(const Tensor& feature);

/// Exact inverse of haar_dwt2; crops analysis padding.
Tensor haar_idwt2(const SubbandSet& bands);

MaskSet make_masks(const Shape& band_shape, const WtAugConfig& cfg, std::mt19937_64& rng);
/// Same, drawing from a generator seeded with cfg.seed.
MaskSet make_masks(const Shape& band_shape, const WtAugConfig& cfg);

/// Multiplies each sub-band by its mask.
SubbandSet apply_masks(const SubbandSet& bands, const MaskSet& masks);

/// Wavelet-domain feature augmentation: inverse(analysis(F) * masks).
Tensor wt_aug(const Tensor& feature, const MaskSet& masks);
Tensor wt_aug(const Tensor& feature, const WtAugConfig& cfg, std::mt19937_64& rng);

/// Sub-band shape haar_dwt2 produces for a feature map of this shape.
Shape band_shape(const Shape& feature_shape);

}  // namespace augseg::wavelet
