// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Arguments select criteria by number
// (e.g. `acceptance 1 5 10`); no arguments runs all of them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "augseg/autodiff.hpp"
#include "augseg/error.hpp"
#include "augseg/fusion.hpp"
#include "augseg/io.hpp"
#include "augseg/metrics.hpp"
#include "augseg/model.hpp"
#include "augseg/objective.hpp"
#include "augseg/ops.hpp"
#include "augseg/trainer.hpp"
#include "augseg/wavelet.hpp"

using namespace augseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, DType dtype = DType::Float64, double lo = -1.0,
                     double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v), dtype);
}

// Values bounded away from zero, for kinks (relu) and poles (div, log).
Tensor away_from_zero(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  Tensor t = random_tensor(std::move(shape), rng, DType::Float64, lo, hi);
  std::bernoulli_distribution neg(0.5);
  auto d = t.mutable_data();
  for (auto& x : d)
    if (neg(rng)) x = -x;
  return t;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1

Outcome wavelet_round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> n(1, 2), c(1, 8), hw(2, 16);
  double worst32 = 0, worst64 = 0;
  std::size_t odd = 0;
  for (int i = 0; i < 1000; ++i) {
    Shape s{n(rng), c(rng), hw(rng), hw(rng)};
    if (s[2] % 2 || s[3] % 2) ++odd;
    const Tensor f32 = random_tensor(s, rng, DType::Float32);
    worst32 = std::max(worst32, max_abs_diff(wavelet::haar_idwt2(wavelet::haar_dwt2(f32)), f32));
    const Tensor f64 = random_tensor(s, rng, DType::Float64);
    worst64 = std::max(worst64, max_abs_diff(wavelet::haar_idwt2(wavelet::haar_dwt2(f64)), f64));
  }
  const double secs = seconds_since(t0);
  return {worst32 < 1e-5 && worst64 < 1e-10 && secs < 10.0,
          "1000 shapes (" + std::to_string(odd) + " with odd extents), float32 max err " + fmt(worst32) +
              ", float64 " + fmt(worst64) + ", " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------- 2

Outcome wt_aug_identity() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> n(1, 2), c(1, 8), half(1, 8);
  double worst_id = 0;
  wavelet::WtAugConfig keep_all;
  keep_all.keep_prob = {1, 1, 1, 1};
  for (int i = 0; i < 100; ++i) {
    const Tensor f = random_tensor({n(rng), c(rng), 2 * half(rng), 2 * half(rng)}, rng, DType::Float32);
    keep_all.channel_shared = i % 2 == 0;
    worst_id = std::max(worst_id, max_abs_diff(wavelet::wt_aug(f, keep_all, rng), f));
  }
  wavelet::WtAugConfig ll_only;
  ll_only.keep_prob = {1, 0, 0, 0};
  double worst_block = 0;
  for (int i = 0; i < 100; ++i) {
    const Shape s{n(rng), c(rng), 2 * half(rng), 2 * half(rng)};
    const Tensor f = random_tensor(s, rng, DType::Float32);
    const Tensor g = wavelet::wt_aug(f, ll_only, rng);
    const std::size_t h = s[2], w = s[3];
    for (std::size_t p = 0; p < s[0] * s[1]; ++p) {
      for (std::size_t y = 0; y < h; y += 2) {
        for (std::size_t x = 0; x < w; x += 2) {
          const std::size_t i00 = p * h * w + y * w + x;
          const double m = (f[i00] + f[i00 + 1] + f[i00 + w] + f[i00 + w + 1]) / 4.0;
          for (std::size_t o : {i00, i00 + 1, i00 + w, i00 + w + 1}) worst_block = std::max(worst_block, std::abs(g[o] - m));
        }
      }
    }
  }
  return {worst_id < 1e-5 && worst_block < 1e-5,
          "keep 1 max err " + fmt(worst_id) + " over 100 tensors; LL-only block-mean max err " + fmt(worst_block)};
}

// ---------------------------------------------------------------- 3

using Fn = std::function<Tensor(const Tensor&)>;

struct GradCase {
  std::string name;
  Fn f;
  Tensor x;
};

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(303);
  auto R = [&](Shape s, double lo = -1.0, double hi = 1.0) { return random_tensor(std::move(s), rng, DType::Float64, lo, hi); };
  std::vector<GradCase> cases;
  auto add_case = [&](std::string name, Fn f, Tensor x) { cases.push_back({std::move(name), std::move(f), std::move(x)}); };

  const Tensor a = R({2, 3, 4}), b = R({2, 3, 4}), bb = R({3, 1}), pos = R({2, 3, 4}, 0.5, 2.0);
  add_case("add", [=](const Tensor& t) { return add(t, b); }, a);
  add_case("add broadcast rhs", [=](const Tensor& t) { return add(a, t); }, bb);
  add_case("sub lhs", [=](const Tensor& t) { return sub(t, b); }, a);
  add_case("sub rhs", [=](const Tensor& t) { return sub(a, t); }, b);
  add_case("mul lhs", [=](const Tensor& t) { return mul(t, b); }, a);
  add_case("mul broadcast rhs", [=](const Tensor& t) { return mul(a, t); }, bb);
  add_case("div lhs", [=](const Tensor& t) { return div(t, pos); }, a);
  add_case("div rhs", [=](const Tensor& t) { return div(a, t); }, pos);
  add_case("add_scalar", [](const Tensor& t) { return add_scalar(t, 0.7); }, a);
  add_case("mul_scalar", [](const Tensor& t) { return mul_scalar(t, -1.3); }, a);
  add_case("relu", [](const Tensor& t) { return relu(t); }, away_from_zero({2, 3, 4}, rng, 0.05, 1.0));
  add_case("gelu", [](const Tensor& t) { return gelu(t); }, R({2, 3, 4}, -2, 2));
  add_case("exp", [](const Tensor& t) { return exp(t); }, a);
  add_case("log", [](const Tensor& t) { return log(t); }, pos);
  add_case("sqrt", [](const Tensor& t) { return sqrt(t); }, pos);
  const Tensor ma = R({2, 3, 4}), mb = R({2, 4, 5}), ms = R({4, 5});
  add_case("matmul batched lhs", [=](const Tensor& t) { return matmul(t, mb); }, ma);
  add_case("matmul batched rhs", [=](const Tensor& t) { return matmul(ma, t); }, mb);
  add_case("matmul shared rhs", [=](const Tensor& t) { return matmul(ma, t); }, ms);
  add_case("reshape", [](const Tensor& t) { return reshape(t, {4, 6}); }, a);
  add_case("permute", [](const Tensor& t) { return permute(t, {2, 0, 1}); }, a);
  add_case("transpose_last", [](const Tensor& t) { return transpose_last(t); }, a);
  add_case("concat", [=](const Tensor& t) { return concat({t, b, t}, 1); }, a);
  add_case("sum", [](const Tensor& t) { return sum(t); }, a);
  add_case("mean", [](const Tensor& t) { return mean(t); }, a);
  add_case("sum_axis", [](const Tensor& t) { return sum_axis(t, 1); }, a);
  add_case("softmax", [](const Tensor& t) { return softmax(t, 2); }, a);
  add_case("log_softmax", [](const Tensor& t) { return log_softmax(t, 1); }, a);
  add_case("layer_norm", [](const Tensor& t) { return layer_norm(t); }, a);

  const Tensor img = R({2, 3, 5, 6}), k = R({4, 3, 3, 3}), kb = R({4});
  add_case("conv2d input", [=](const Tensor& t) { return conv2d(t, k, kb, {2, 1}); }, img);
  add_case("conv2d kernel", [=](const Tensor& t) { return conv2d(img, t, kb, {1, 1}); }, k);
  add_case("conv2d bias", [=](const Tensor& t) { return conv2d(img, k, t, {1, 0}); }, kb);
  const Tensor kt = R({3, 2, 2, 2}), ktb = R({2});
  add_case("conv_transpose2d input", [=](const Tensor& t) { return conv_transpose2d(t, kt, ktb, {2, 0}); }, img);
  add_case("conv_transpose2d kernel", [=](const Tensor& t) { return conv_transpose2d(img, t, ktb, {2, 0}); }, kt);
  add_case("conv_transpose2d bias", [=](const Tensor& t) { return conv_transpose2d(img, kt, t, {2, 0}); }, ktb);
  add_case("resize_bilinear", [](const Tensor& t) { return resize_bilinear(t, 9, 4); }, img);
  add_case("pad_to_even", [](const Tensor& t) { return pad_to_even(t); }, img);
  add_case("crop", [](const Tensor& t) { return crop(t, 3, 4); }, img);

  const Tensor odd = R({1, 2, 5, 7});
  for (int band = 0; band < 4; ++band) {
    add_case("haar_dwt2 band " + std::to_string(band), [band](const Tensor& t) {
      auto s = wavelet::haar_dwt2(t);
      return band == 0 ? s.ll : band == 1 ? s.lh : band == 2 ? s.hl : s.hh;
    }, odd);
  }
  const auto ref = wavelet::haar_dwt2(odd);
  add_case("haar_idwt2", [ref](const Tensor& t) {
    auto s = ref;
    s.lh = t;
    return wavelet::haar_idwt2(s);
  }, ref.lh);
  wavelet::MaskSet masks;
  std::bernoulli_distribution coin(0.5);
  auto bern = [&](Shape s) {
    std::vector<double> v(numel_of(s));
    for (auto& x : v) x = coin(rng) ? 1 : 0;
    return Tensor(std::move(s), std::move(v), DType::Float64);
  };
  masks = {bern({1, 1, 3, 4}), bern({1, 1, 3, 4}), bern({1, 1, 3, 4}), bern({1, 1, 3, 4})};
  add_case("wt_aug", [masks](const Tensor& t) { return wavelet::wt_aug(t, masks); }, odd);

  const Tensor q = R({2, 3, 4}), kk = R({2, 5, 4}), vv = R({2, 5, 4});
  add_case("cross_attention q", [=](const Tensor& t) { return fusion::cross_attention(t, kk, vv, 2); }, q);
  add_case("cross_attention k", [=](const Tensor& t) { return fusion::cross_attention(q, t, vv, 2); }, kk);
  add_case("cross_attention v", [=](const Tensor& t) { return fusion::cross_attention(q, kk, t, 2); }, vv);

  // cg_fuse with every weight randomized (a fresh block has zero output paths).
  auto fp = fusion::FusionParams::init(4, 3, 4, 2, 2, rng, DType::Float64);
  for (auto& [name, ptr] : fp.named_tensors()) *ptr = R(ptr->shape(), -0.8, 0.8);
  const Tensor dec = R({1, 4, 3, 2}), enc = R({1, 3, 3, 2});
  add_case("cg_fuse decoder", [=](const Tensor& t) { return fusion::cg_fuse(t, enc, fp); }, dec);
  add_case("cg_fuse encoder", [=](const Tensor& t) { return fusion::cg_fuse(dec, t, fp); }, enc);
  {
    auto copy = fp;
    for (auto& [name, ptr] : copy.named_tensors()) {
      const std::string nm = name;
      add_case("cg_fuse " + nm, [=](const Tensor& t) {
        auto p = fp;
        for (auto& [n2, p2] : p.named_tensors())
          if (n2 == nm) *p2 = t;
        return fusion::cg_fuse(dec, enc, p);
      }, *ptr);
    }
  }
  fusion::FusionOptions with_pe;
  with_pe.positional_encoding = true;
  add_case("cg_fuse with positional encoding", [=](const Tensor& t) { return fusion::cg_fuse(t, enc, fp, with_pe); }, dec);

  model::CcuParams cp{R({3, 6, 3, 3}, -0.5, 0.5), R({3}), R({3, 3, 2, 2}, -0.5, 0.5), R({3})};
  const Tensor fused = R({1, 4, 3, 3}), skip = R({1, 2, 3, 3});
  add_case("ccu fused", [=](const Tensor& t) { return model::ccu(t, skip, cp); }, fused);
  add_case("ccu skip", [=](const Tensor& t) { return model::ccu(fused, t, cp); }, skip);
  model::HeadParams hp{R({3, 4, 3, 3}, -0.5, 0.5), R({3}), R({3, 3, 1, 1}), R({3})};
  add_case("seg_head", [=](const Tensor& t) { return model::seg_head(t, hp, 6, 6); }, fused);

  std::uniform_int_distribution<int> cls(0, 2);
  std::vector<double> labels(2 * 4 * 4);
  for (auto& l : labels) l = cls(rng);
  const LabelMask target{Tensor({2, 4, 4}, labels, DType::UInt8), 3};
  const Tensor logits = R({2, 3, 4, 4}, -2, 2);
  add_case("ce_loss", [=](const Tensor& t) { return ce_loss(t, target); }, logits);
  const Tensor oh = one_hot(target, DType::Float64);
  add_case("dice_loss", [=](const Tensor& t) { return dice_loss(softmax(t, 1), oh); }, logits);
  add_case("combined_loss", [=](const Tensor& t) { return combined_loss(t, target); }, logits);

  double worst = 0;
  std::string worst_name;
  std::vector<std::string> failed;
  for (const auto& c : cases) {
    Tensor probe;
    {
      NoGradScope off;
      probe = c.f(c.x);
    }
    const Tensor w = random_tensor(probe.shape(), rng, DType::Float64, 0.5, 1.5);
    const double e = finite_diff_check([&](const Tensor& t) { return sum(mul(c.f(t), w)); }, c.x);
    if (e > worst) {
      worst = e;
      worst_name = c.name;
    }
    if (!(e < 1e-4)) failed.push_back(c.name);
  }
  const double secs = seconds_since(t0);
  std::string detail = std::to_string(cases.size()) + " checks, worst rel err " + fmt(worst) + " (" + worst_name +
                       "), " + fmt(secs) + " s";
  for (const auto& f : failed) detail += "; failed: " + f;
  return {failed.empty() && secs < 60.0, detail};
}

// ---------------------------------------------------------------- 4

Outcome attention_contracts() {
  std::mt19937_64 rng(404);
  double worst_row = 0;
  bool nonneg = true;
  for (int i = 0; i < 20; ++i) {
    const Tensor q = random_tensor({2, 5, 8}, rng, DType::Float64, -3, 3), k = random_tensor({2, 7, 8}, rng, DType::Float64, -3, 3);
    const Tensor a = fusion::attention_weights(q, k, 2);  // [2, 2, 5, 7]
    for (std::size_t r = 0; r < a.numel() / 7; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < 7; ++j) {
        s += a[r * 7 + j];
        nonneg = nonneg && a[r * 7 + j] >= 0;
      }
      worst_row = std::max(worst_row, std::abs(s - 1));
    }
  }
  // one key: every query attends to it with weight 1, so the output is V itself
  const Tensor q = random_tensor({2, 4, 6}, rng), k = random_tensor({2, 1, 6}, rng), v = random_tensor({2, 1, 6}, rng);
  const Tensor out = fusion::cross_attention(q, k, v, 3);
  bool single_exact = true;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t d = 0; d < 6; ++d) single_exact = single_exact && out[(b * 4 + t) * 6 + d] == v[b * 6 + d];

  // joint spatial permutation of the K/V source
  auto fp = fusion::FusionParams::init(6, 5, 8, 4, 4, rng, DType::Float64);
  fp.w_o = random_tensor(fp.w_o.shape(), rng);
  fp.ff_w2 = random_tensor(fp.ff_w2.shape(), rng);
  const Tensor dec = random_tensor({2, 6, 4, 5}, rng), enc = random_tensor({2, 5, 4, 5}, rng);
  std::vector<std::size_t> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> pv(enc.numel());
  for (std::size_t p = 0; p < 10; ++p)
    for (std::size_t i = 0; i < 20; ++i) pv[p * 20 + i] = enc[p * 20 + perm[i]];
  const Tensor enc_perm({2, 5, 4, 5}, std::move(pv), DType::Float64);
  const double perm_err = max_abs_diff(fusion::cg_fuse(dec, enc, fp), fusion::cg_fuse(dec, enc_perm, fp));

  const Tensor a1 = fusion::attention_weights(Tensor({1, 1, 1}, {1.0}, DType::Float64),
                                              Tensor({1, 2, 1}, {1.0, -1.0}, DType::Float64), 1);
  const bool example = std::abs(a1[0] - 0.88080) < 1e-4;
  return {worst_row < 1e-6 && nonneg && single_exact && perm_err < 1e-5 && example,
          "row-sum err " + fmt(worst_row) + ", single key exact " + (single_exact ? "yes" : "no") +
              ", permutation err " + fmt(perm_err) + ", worked example " + fmt(a1[0])};
}

// ---------------------------------------------------------------- 5

// Reference implementations: direct set counting and all-pairs distances.
double dice_oracle(const LabelMask& a, const LabelMask& b, std::size_t cls) {
  double inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.values.numel(); ++i) {
    const bool pa = a.values[i] == double(cls), pb = b.values[i] == double(cls);
    inter += pa && pb;
    na += pa;
    nb += pb;
  }
  return na + nb == 0 ? 1.0 : 2 * inter / (na + nb);
}

double hd95_oracle(const LabelMask& a, const LabelMask& b, std::size_t cls) {
  const long h = long(a.height()), w = long(a.width());
  auto edge = [&](const LabelMask& m) {
    auto at = [&](long y, long x) {
      return y >= 0 && x >= 0 && y < h && x < w && m.values[std::size_t(y * w + x)] == double(cls);
    };
    std::vector<std::pair<long, long>> pts;
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x)
        if (at(y, x) && (!at(y - 1, x) || !at(y + 1, x) || !at(y, x - 1) || !at(y, x + 1))) pts.emplace_back(y, x);
    return pts;
  };
  const auto pa = edge(a), pb = edge(b);
  if (pa.empty() && pb.empty()) return 0.0;
  if (pa.empty() || pb.empty()) return std::hypot(double(h), double(w));
  std::vector<double> all;
  auto directed = [&](const auto& from, const auto& to) {
    for (auto [y, x] : from) {
      double best = 1e300;
      for (auto [v, u] : to) best = std::min(best, std::hypot(double(y - v), double(x - u)));
      all.push_back(best);
    }
  };
  directed(pa, pb);
  directed(pb, pa);
  std::sort(all.begin(), all.end());
  return all[std::size_t(std::ceil(0.95 * double(all.size()))) - 1];
}

double wilcoxon_oracle_p(const std::vector<double>& d) {
  std::vector<double> nz;
  for (double x : d)
    if (x != 0.0) nz.push_back(x);
  const std::size_t n = nz.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double below = 0, same = 0;
    for (std::size_t j = 0; j < n; ++j) {
      below += std::abs(nz[j]) < std::abs(nz[i]);
      same += std::abs(nz[j]) == std::abs(nz[i]);
    }
    rank[i] = below + (same + 1) / 2.0;
  }
  double wp = 0, total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += rank[i];
    if (nz[i] > 0) wp += rank[i];
  }
  const double stat = std::min(wp, total - wp);
  double count = 0;
  for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << n); ++bits) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (bits >> i & 1) s += rank[i];
    if (s <= stat) ++count;
  }
  return std::min(1.0, 2.0 * count / std::ldexp(1.0, int(n)));
}

Outcome metric_oracles() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> density(0.0, 0.6);
  std::uniform_int_distribution<int> cls(0, 2);
  std::size_t dice_mismatch = 0, hd_mismatch = 0;
  for (int t = 0; t < 500; ++t) {
    auto make = [&] {
      // sparse to dense masks over 3 classes, sometimes a class is missing
      const double p = density(rng);
      std::bernoulli_distribution on(p);
      std::vector<double> v(144);
      for (auto& x : v) x = on(rng) ? cls(rng) : 0;
      return LabelMask{Tensor({1, 12, 12}, std::move(v), DType::UInt8), 3};
    };
    const auto a = make(), b = make();
    for (std::size_t c = 1; c < 3; ++c) {
      dice_mismatch += metrics::dice_score(a, b, c) != dice_oracle(a, b, c);
      hd_mismatch += metrics::hd95(a, b, c) != hd95_oracle(a, b, c);
    }
  }
  std::size_t wil_mismatch = 0, wil_cases = 0;
  std::uniform_int_distribution<int> level(-4, 4);
  for (std::size_t n = 1; n <= 12; ++n) {
    for (int t = 0; t < 20; ++t) {
      std::vector<double> d(n);
      // coarse levels force ties and zeros
      for (auto& x : d) x = t % 2 ? level(rng) * 0.25 : std::uniform_real_distribution<double>(-1, 1)(rng);
      bool any = false;
      for (double x : d) any = any || x != 0;
      if (!any) continue;
      ++wil_cases;
      wil_mismatch += std::abs(metrics::wilcoxon_signed_rank(d, metrics::WilcoxonMethod::Exact).p - wilcoxon_oracle_p(d)) > 1e-12;
    }
  }
  const double p5 = metrics::wilcoxon_signed_rank(std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5}).p;
  return {dice_mismatch == 0 && hd_mismatch == 0 && wil_mismatch == 0 && p5 == 0.0625,
          "500 mask pairs x 2 classes: dice mismatches " + std::to_string(dice_mismatch) + ", hd95 mismatches " +
              std::to_string(hd_mismatch) + "; wilcoxon " + std::to_string(wil_mismatch) + "/" +
              std::to_string(wil_cases) + " mismatches; n=5 p = " + fmt(p5)};
}

// ---------------------------------------------------------------- shared data

train::SampleSet synth_set(std::uint64_t first_seed, std::size_t count, const std::string& prefix) {
  train::SampleSet set;
  set.num_classes = 3;
  data::SynthConfig sc;
  for (std::size_t i = 0; i < count; ++i) {
    auto s = data::gen_sample(first_seed + i, sc);
    std::ostringstream id;
    id << prefix << '_' << std::setw(4) << std::setfill('0') << i;
    s.id = id.str();
    set.samples.push_back(std::move(s));
  }
  return set;
}

// ---------------------------------------------------------------- 6

Outcome frozen_encoder() {
  const auto train_set = synth_set(0, 6, "train");
  const auto test_set = synth_set(data::kTestSeedOffset, 2, "test");
  model::NetworkConfig nc;
  bool checksums_ok = true;
  std::string last;
  const std::vector<std::string> arms{"none", "image_level", "feature_spatial", "feature_wavelet", "feature_wavelet/nocg"};
  std::optional<train::TrainResult> keep;
  train::TrainConfig kept_cfg;
  for (const auto& arm : arms) {
    train::TrainConfig cfg;
    const auto spec = train::parse_arm(arm);
    cfg.arm = spec.arm;
    cfg.cg_fuse = spec.cg_fuse;
    cfg.epochs = 4;
    cfg.few_shot = 4;
    cfg.seed = 9;
    auto r = train::train(cfg, nc, train_set);
    const auto fresh = model::Network(train::effective_network(cfg, nc, train_set)).encoder_checksum();
    const bool ok = r.encoder_checksum_before == r.encoder_checksum_after && r.encoder_checksum_after == fresh &&
                    r.net.encoder_checksum() == fresh;
    checksums_ok = checksums_ok && ok;
    if (arm == "feature_wavelet") {
      keep = std::move(r);
      kept_cfg = cfg;
    }
  }
  const fs::path dir = fs::temp_directory_path() / ("augseg_accept_ckpt_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  model::save_checkpoint(dir, keep->checkpoint(kept_cfg));
  const auto reloaded = model::restore(model::load_checkpoint(dir));
  fs::remove_all(dir);
  bool bit_exact = reloaded.encoder_checksum() == keep->net.encoder_checksum();
  std::mt19937_64 r1(1), r2(2);
  for (const auto& s : test_set.samples) {
    const Tensor x = reshape(s.image, {1, 1, s.image.dim(1), s.image.dim(2)});
    const Tensor y0 = keep->net.forward(x, model::Mode::Eval, r1);
    const Tensor y1 = reloaded.forward(x, model::Mode::Eval, r2);
    const Tensor y2 = reloaded.forward(x, model::Mode::Eval, r2);
    bit_exact = bit_exact && bit_equal(y0, y1) && bit_equal(y1, y2);
  }
  return {checksums_ok && bit_exact, std::to_string(arms.size()) + " training runs: encoder checksums " +
                                         (checksums_ok ? "unchanged" : "CHANGED") + "; reloaded eval forward " +
                                         (bit_exact ? "bit-identical" : "differs")};
}

// ---------------------------------------------------------------- 7

Outcome overfit_smoke() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto one = synth_set(0, 1, "train");
  train::TrainConfig cfg;
  cfg.few_shot = 1;
  cfg.epochs = 200;
  cfg.seed = 0;
  const auto r = train::train(cfg, model::NetworkConfig{}, one);
  std::size_t decreases = 0;
  for (std::size_t e = 1; e < 20; ++e) decreases += r.log[e].loss < r.log[e - 1].loss;
  const auto rec = train::evaluate(r.net, one);
  const double eval_dice = rec[0].mean_dice, logged = r.log.back().train_dice;
  const double secs = seconds_since(t0);
  return {logged >= 0.95 && eval_dice >= 0.95 && decreases >= 18 && secs < 300,
          "final train Dice " + fmt(logged) + " (eval mode " + fmt(eval_dice) + "), loss decreased in " +
              std::to_string(decreases) + "/19 of the first epoch transitions, " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------- 8, 9

struct TrendRun {
  std::map<std::string, double> mean_dice;
  double seconds = 0;
};

const TrendRun& trend_run() {
  static std::optional<TrendRun> cached;
  if (cached) return *cached;
  const auto t0 = std::chrono::steady_clock::now();
  const auto train_set = synth_set(0, 20, "train");
  const auto test_set = synth_set(data::kTestSeedOffset, 50, "test");
  train::TrainConfig cfg;
  cfg.few_shot = 2;
  cfg.seeds = {0, 1, 2, 3, 4};
  std::vector<train::ArmSpec> arms;
  for (const char* a : {"feature_wavelet", "image_level", "none", "feature_wavelet/nocg", "none/nocg"})
    arms.push_back(train::parse_arm(a));
  const auto rep = train::ablation_run(arms, cfg, model::NetworkConfig{}, train_set, test_set);
  TrendRun t;
  for (const auto& a : rep.arms) t.mean_dice[a.name] = a.dice_mean;
  t.seconds = seconds_since(t0);
  cached = t;
  return *cached;
}

Outcome augmentation_trend() {
  const auto& t = trend_run();
  const double fw = t.mean_dice.at("feature_wavelet"), il = t.mean_dice.at("image_level"), no = t.mean_dice.at("none");
  return {fw >= il && fw >= no, "2-shot, 5 seeds, 50 test images: feature_wavelet " + fmt(fw) + ", image_level " +
                                    fmt(il) + ", none " + fmt(no) + " (shared run " + fmt(t.seconds) + " s)"};
}

Outcome toggle_trend() {
  const auto& t = trend_run();
  const double both = t.mean_dice.at("feature_wavelet"), cg_only = t.mean_dice.at("none"),
               wt_only = t.mean_dice.at("feature_wavelet/nocg"), neither = t.mean_dice.at("none/nocg");
  return {both >= cg_only && both >= wt_only && both >= neither,
          "+WT+CG " + fmt(both) + ", -WT+CG " + fmt(cg_only) + ", +WT-CG " + fmt(wt_only) + ", -WT-CG " + fmt(neither)};
}

// ---------------------------------------------------------------- 10

template <typename Read>
std::string probe_damaged(const std::string& bytes, Read read, std::mt19937_64& rng, std::size_t& diagnosed) {
  // every truncation, then random byte corruption
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    std::istringstream in(bytes.substr(0, len));
    try {
      read(in);
      return "truncation to " + std::to_string(len) + " bytes was accepted";
    } catch (const FormatError&) {
      ++diagnosed;
    } catch (const std::exception& e) {
      return std::string("truncation raised a non-format error: ") + e.what();
    }
  }
  std::uniform_int_distribution<std::size_t> pos(0, bytes.size() - 1);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int t = 0; t < 200; ++t) {
    std::string bad = bytes;
    bad[pos(rng)] = static_cast<char>(byte(rng));
    std::istringstream in(bad);
    try {
      read(in);  // payload damage can still be a valid file
    } catch (const FormatError&) {
      ++diagnosed;
    } catch (const std::exception& e) {
      return std::string("corruption raised a non-format error: ") + e.what();
    }
  }
  return {};
}

Outcome format_round_trips() {
  std::mt19937_64 rng(1010);
  std::size_t round_trips = 0, diagnosed = 0;
  std::string problem;
  for (DType dt : {DType::Float32, DType::Float64, DType::UInt8}) {
    for (std::size_t rank = 1; rank <= 4; ++rank) {
      Shape s;
      for (std::size_t i = 0; i < rank; ++i) s.push_back(1 + rng() % 4);
      Tensor t = dt == DType::UInt8 ? Tensor(s, [&] {
        std::vector<double> v(numel_of(s));
        for (auto& x : v) x = double(rng() % 256);
        return v;
      }(), dt) : random_tensor(s, rng, dt, -1e3, 1e3);
      std::stringstream buf;
      io::write_daug(buf, t);
      const std::string bytes = buf.str();
      std::istringstream in(bytes);
      if (!bit_equal(io::read_daug(in), t)) problem = "DAUG round trip differs for " + shape_string(s);
      ++round_trips;
      if (problem.empty()) problem = probe_damaged(bytes, [](std::istream& is) { return io::read_daug(is); }, rng, diagnosed);
    }
  }
  for (int t = 0; t < 5; ++t) {
    io::GrayImage g{1 + rng() % 13, 1 + rng() % 9, {}};
    g.pixels.resize(g.width * g.height);
    for (auto& p : g.pixels) p = std::uint8_t(rng());
    io::RgbImage c{1 + rng() % 13, 1 + rng() % 9, {}};
    c.pixels.resize(3 * c.width * c.height);
    for (auto& p : c.pixels) p = std::uint8_t(rng());
    std::stringstream gb, cb;
    io::write_pgm(gb, g);
    io::write_ppm(cb, c);
    std::istringstream gi(gb.str()), ci(cb.str());
    const auto g2 = io::read_pgm(gi);
    const auto c2 = io::read_ppm(ci);
    if (g2.width != g.width || g2.height != g.height || g2.pixels != g.pixels) problem = "PGM round trip differs";
    if (c2.width != c.width || c2.height != c.height || c2.pixels != c.pixels) problem = "PPM round trip differs";
    round_trips += 2;
    if (problem.empty()) problem = probe_damaged(gb.str(), [](std::istream& is) { return io::read_pgm(is); }, rng, diagnosed);
    if (problem.empty()) problem = probe_damaged(cb.str(), [](std::istream& is) { return io::read_ppm(is); }, rng, diagnosed);
  }
  return {problem.empty(), std::to_string(round_trips) + " bit-exact round trips, " + std::to_string(diagnosed) +
                               " damaged files diagnosed" + (problem.empty() ? "" : "; " + problem)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"wavelet round-trip", wavelet_round_trip},
      {"WT-Aug identity", wt_aug_identity},
      {"gradient suite", gradient_suite},
      {"attention contracts", attention_contracts},
      {"metric oracles", metric_oracles},
      {"frozen-encoder contract", frozen_encoder},
      {"overfit smoke", overfit_smoke},
      {"augmentation trend (feature_wavelet vs image_level, none)", augmentation_trend},
      {"toggle trend (WT-Aug x CG-Fuse)", toggle_trend},
      {"format round-trips", format_round_trips},
  };
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));
  std::size_t failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << std::setw(2) << i + 1 << "  " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
