#include "augseg/wavelet.hpp"

#include "augseg/autodiff.hpp"
#include "augseg/error.hpp"
#include "augseg/ops.hpp"

namespace augseg::wavelet {

namespace {

enum Band { kLL = 0, kLH = 1, kHL = 2, kHH = 3 };

// kSign[band][p] for block positions p = a (top-left), b (top-right),
// c (bottom-left), d (bottom-right). The 4x4 matrix is symmetric and
// orthogonal once scaled by 1/2, so it is its own inverse.
constexpr double kSign[4][4] = {
    {1, 1, 1, 1},
    {1, -1, 1, -1},
    {1, 1, -1, -1},
    {1, -1, -1, 1},
};

// Offset of block position p inside an even-extent plane of width w.
std::size_t block_offset(int p, std::size_t w) {
  return (p >= 2 ? w : 0) + static_cast<std::size_t>(p % 2);
}

Tensor analysis_band(const Tensor& padded, Band band) {
  const auto& s = padded.shape();
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3], bh = h / 2, bw = w / 2;
  auto in = padded.data();
  std::vector<double> out(planes * bh * bw);
  for (std::size_t pl = 0; pl < planes; ++pl)
    for (std::size_t y = 0; y < bh; ++y)
      for (std::size_t x = 0; x < bw; ++x) {
        const std::size_t base = pl * h * w + 2 * y * w + 2 * x;
        double acc = 0.0;
        for (int p = 0; p < 4; ++p) acc += kSign[band][p] * in[base + block_offset(p, w)];
        out[(pl * bh + y) * bw + x] = 0.5 * acc;
      }
  DType dt = padded.dtype() == DType::UInt8 ? DType::Float32 : padded.dtype();
  Tensor result = make_result({s[0], s[1], bh, bw}, std::move(out), dt);
  if (detail::should_record({&padded})) {
    detail::record(result, {padded}, [band, planes, h, w, bh, bw](auto g, auto in_grads) {
      auto gx = in_grads[0];
      for (std::size_t pl = 0; pl < planes; ++pl)
        for (std::size_t y = 0; y < bh; ++y)
          for (std::size_t x = 0; x < bw; ++x) {
            const double v = 0.5 * g[(pl * bh + y) * bw + x];
            const std::size_t base = pl * h * w + 2 * y * w + 2 * x;
            for (int p = 0; p < 4; ++p) gx[base + block_offset(p, w)] += kSign[band][p] * v;
          }
    });
  }
  return result;
}

Tensor synthesis(const SubbandSet& s) {
  const Tensor* bands[4] = {&s.ll, &s.lh, &s.hl, &s.hh};
  const Shape& bs = s.ll.shape();
  if (bs.size() != 4) throw ContractError("sub-bands must be rank 4, got " + shape_string(bs));
  DType dt = DType::Float32;
  for (const Tensor* b : bands) {
    if (b->shape() != bs) {
      throw ContractError("sub-band shapes differ: " + shape_string(bs) + " vs " + shape_string(b->shape()));
    }
    dt = promote(dt, b->dtype() == DType::UInt8 ? DType::Float32 : b->dtype());
  }
  const std::size_t planes = bs[0] * bs[1], bh = bs[2], bw = bs[3], h = 2 * bh, w = 2 * bw;
  std::vector<double> out(planes * h * w);
  for (int k = 0; k < 4; ++k) {
    auto in = bands[k]->data();
    for (std::size_t pl = 0; pl < planes; ++pl)
      for (std::size_t y = 0; y < bh; ++y)
        for (std::size_t x = 0; x < bw; ++x) {
          const double v = 0.5 * in[(pl * bh + y) * bw + x];
          const std::size_t base = pl * h * w + 2 * y * w + 2 * x;
          for (int p = 0; p < 4; ++p) out[base + block_offset(p, w)] += kSign[k][p] * v;
        }
  }
  Tensor result = make_result({bs[0], bs[1], h, w}, std::move(out), dt);
  if (detail::should_record({bands[0], bands[1], bands[2], bands[3]})) {
    detail::record(result, {s.ll, s.lh, s.hl, s.hh}, [planes, h, w, bh, bw](auto g, auto in_grads) {
      for (int k = 0; k < 4; ++k) {
        auto gk = in_grads[static_cast<std::size_t>(k)];
        if (gk.empty()) continue;
        for (std::size_t pl = 0; pl < planes; ++pl)
          for (std::size_t y = 0; y < bh; ++y)
            for (std::size_t x = 0; x < bw; ++x) {
              const std::size_t base = pl * h * w + 2 * y * w + 2 * x;
              double acc = 0.0;
              for (int p = 0; p < 4; ++p) acc += kSign[k][p] * g[base + block_offset(p, w)];
              gk[(pl * bh + y) * bw + x] += 0.5 * acc;
            }
      }
    });
  }
  return result;
}

Tensor bernoulli_mask(const Shape& shape, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(p);
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = keep(rng) ? 1.0 : 0.0;
  return Tensor(shape, std::move(v), DType::Float32);
}

}  // namespace

void WtAugConfig::validate() const {
  for (double p : keep_prob) {
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("keep_prob must lie in [0,1], got " + std::to_string(p));
  }
}

Shape band_shape(const Shape& s) {
  if (s.size() != 4) throw ContractError("Haar transform expects [N,C,H,W], got " + shape_string(s));
  return {s[0], s[1], (s[2] + 1) / 2, (s[3] + 1) / 2};
}

SubbandSet haar_dwt2(const Tensor& feature) {
  if (feature.rank() != 4) {
    throw ContractError("Haar transform expects [N,C,H,W], got " + shape_string(feature.shape()));
  }
  if (feature.dim(2) < 2 || feature.dim(3) < 2) {
    throw ContractError("Haar transform needs H, W >= 2, got " + shape_string(feature.shape()));
  }
  Tensor padded = pad_to_even(feature);
  return SubbandSet{analysis_band(padded, kLL), analysis_band(padded, kLH), analysis_band(padded, kHL),
                    analysis_band(padded, kHH), feature.dim(2), feature.dim(3)};
}

Tensor haar_idwt2(const SubbandSet& bands) {
  Tensor full = synthesis(bands);
  const std::size_t h = bands.height ? bands.height : full.dim(2);
  const std::size_t w = bands.width ? bands.width : full.dim(3);
  if (h > full.dim(2) || w > full.dim(3) || h + 1 < full.dim(2) || w + 1 < full.dim(3)) {
    throw ContractError("recorded source extents do not match the sub-band shape");
  }
  return crop(full, h, w);
}

MaskSet make_masks(const Shape& band_shape, const WtAugConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  if (band_shape.size() != 4) throw ContractError("mask shape must be rank 4");
  const Shape shape = cfg.channel_shared ? Shape{1, 1, band_shape[2], band_shape[3]} : band_shape;
  MaskSet m;
  m.ll = bernoulli_mask(shape, cfg.keep_prob[0], rng);
  m.lh = bernoulli_mask(shape, cfg.keep_prob[1], rng);
  m.hl = bernoulli_mask(shape, cfg.keep_prob[2], rng);
  m.hh = bernoulli_mask(shape, cfg.keep_prob[3], rng);
  return m;
}

MaskSet make_masks(const Shape& band_shape, const WtAugConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  return make_masks(band_shape, cfg, rng);
}

SubbandSet apply_masks(const SubbandSet& b, const MaskSet& m) {
  return SubbandSet{mul(b.ll, m.ll), mul(b.lh, m.lh), mul(b.hl, m.hl), mul(b.hh, m.hh), b.height, b.width};
}

Tensor wt_aug(const Tensor& feature, const MaskSet& masks) {
  return haar_idwt2(apply_masks(haar_dwt2(feature), masks));
}

Tensor wt_aug(const Tensor& feature, const WtAugConfig& cfg, std::mt19937_64& rng) {
  if (feature.rank() != 4) throw ContractError("wt_aug expects [N,C,H,W], got " + shape_string(feature.shape()));
  return wt_aug(feature, make_masks(band_shape(feature.shape()), cfg, rng));
}

}  // namespace augseg::wavelet
