#include "augseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "augseg/autodiff.hpp"
#include "augseg/error.hpp"

namespace augseg {

namespace {

DType float_type(DType d) { return d == DType::UInt8 ? DType::Float32 : d; }

DType float_type(const Tensor& a, const Tensor& b) {
  return promote(float_type(a.dtype()), float_type(b.dtype()));
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                         shape_string(x.shape()));
  }
}

void check_axis(const Tensor& x, std::size_t axis, const char* op) {
  if (axis >= x.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                         shape_string(x.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// For every linear index of `a`, the linear index of `b` under the one-sided
// singleton-expansion rule. Empty when the shapes are equal.
std::vector<std::size_t> broadcast_map(const Shape& a, const Shape& b) {
  if (a == b) return {};
  if (b.size() > a.size()) {
    throw DimensionError("cannot broadcast " + shape_string(b) + " to " + shape_string(a));
  }
  Shape padded(a.size() - b.size(), 1);
  padded.insert(padded.end(), b.begin(), b.end());
  std::vector<std::size_t> stride(a.size(), 0);
  std::size_t acc = 1;
  for (std::size_t i = a.size(); i-- > 0;) {
    if (padded[i] != a[i] && padded[i] != 1) {
      throw DimensionError("cannot broadcast " + shape_string(b) + " to " + shape_string(a));
    }
    stride[i] = padded[i] == 1 ? 0 : acc;
    acc *= padded[i];
  }
  const std::size_t n = numel_of(a);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(a.size(), 0);
  std::size_t bi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    map[i] = bi;
    for (std::size_t ax = a.size(); ax-- > 0;) {
      ++idx[ax];
      bi += stride[ax];
      if (idx[ax] < a[ax]) break;
      bi -= stride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return map;
}

// out[i] = in[map[i]], adjoint scatters back.
Tensor gather(const Tensor& x, Shape out_shape, std::vector<std::size_t> map) {
  auto in = x.data();
  std::vector<double> out(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = in[map[i]];
  Tensor result = make_result(std::move(out_shape), std::move(out), float_type(x.dtype()));
  if (detail::should_record({&x})) {
    detail::record(result, {x}, [map = std::move(map)](auto g, auto in_grads) {
      auto gx = in_grads[0];
      for (std::size_t i = 0; i < map.size(); ++i) gx[map[i]] += g[i];
    });
  }
  return result;
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor ew_binary(BinaryKind kind, const Tensor& a, const Tensor& b) {
  auto map = broadcast_map(a.shape(), b.shape());
  const bool bc = !map.empty();
  auto x = a.data();
  auto y = b.data();
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double bv = y[bc ? map[i] : i];
    switch (kind) {
      case BinaryKind::Add: out[i] = x[i] + bv; break;
      case BinaryKind::Sub: out[i] = x[i] - bv; break;
      case BinaryKind::Mul: out[i] = x[i] * bv; break;
      case BinaryKind::Div: out[i] = x[i] / bv; break;
    }
  }
  Tensor result = make_result(a.shape(), std::move(out), float_type(a, b));
  if (detail::should_record({&a, &b})) {
    detail::record(result, {a, b}, [kind, a, b, map = std::move(map)](auto g, auto in_grads) {
      auto ga = in_grads[0];
      auto gb = in_grads[1];
      auto x = a.data();
      auto y = b.data();
      const bool bc = !map.empty();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const std::size_t j = bc ? map[i] : i;
        switch (kind) {
          case BinaryKind::Add:
            if (!ga.empty()) ga[i] += g[i];
            if (!gb.empty()) gb[j] += g[i];
            break;
          case BinaryKind::Sub:
            if (!ga.empty()) ga[i] += g[i];
            if (!gb.empty()) gb[j] -= g[i];
            break;
          case BinaryKind::Mul:
            if (!ga.empty()) ga[i] += g[i] * y[j];
            if (!gb.empty()) gb[j] += g[i] * x[i];
            break;
          case BinaryKind::Div:
            if (!ga.empty()) ga[i] += g[i] / y[j];
            if (!gb.empty()) gb[j] -= g[i] * x[i] / (y[j] * y[j]);
            break;
        }
      }
    });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) { return ew_binary(BinaryKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return ew_binary(BinaryKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return ew_binary(BinaryKind::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return ew_binary(BinaryKind::Div, a, b); }

Tensor add_scalar(const Tensor& x, double c) {
  auto in = x.data();
  std::vector<double> out(in.begin(), in.end());
  for (auto& v : out) v += c;
  Tensor result = make_result(x.shape(), std::move(out), float_type(x.dtype()));
  if (detail::should_record({&x})) {
    detail::record(result, {x}, [](auto g, auto in_grads) {
      auto gx = in_grads[0];
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return result;
}

Tensor mul_scalar(const Tensor& x, double c) {
  auto in = x.data();
  std::vector<double> out(in.begin(), in.end());
  for (auto& v : out) v *= c;
  Tensor result = make_result(x.shape(), std::move(out), float_type(x.dtype()));
  if (detail::should_record({&x})) {
    detail::record(result, {x}, [c](auto g, auto in_grads) {
      auto gx = in_grads[0];
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
    });
  }
  return result;
}

Tensor unary(UnaryKind kind, const Tensor& x) {
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double v = in[i];
    switch (kind) {
      case UnaryKind::Relu: out[i] = v > 0.0 ? v : 0.0; break;
      case UnaryKind::Gelu: out[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); break;
      case UnaryKind::Exp: out[i] = std::exp(v); break;
      case UnaryKind::Log:
        if (!(v > 0.0)) throw NumericError("log of non-positive value " + std::to_string(v));
        out[i] = std::log(v);
        break;
      case UnaryKind::Sqrt:
        if (!(v >= 0.0)) throw NumericError("sqrt of negative value " + std::to_string(v));
        out[i] = std::sqrt(v);
        break;
    }
  }
  Tensor result = make_result(x.shape(), std::move(out), float_type(x.dtype()));
  if (detail::should_record({&x})) {
    detail::record(result, {x}, [kind, x, result](auto g, auto in_grads) {
      auto gx = in_grads[0];
      auto in = x.data();
      auto out = result.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = in[i];
        double d = 0.0;
        switch (kind) {
          case UnaryKind::Relu: d = v > 0.0 ? 1.0 : 0.0; break;
          case UnaryKind::Gelu:
            d = 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
            break;
          case UnaryKind::Exp: d = out[i]; break;
          case UnaryKind::Log: d = 1.0 / v; break;
          case UnaryKind::Sqrt: d = 0.5 / out[i]; break;
        }
        gx[i] += g[i] * d;
      }
    });
  }
  return result;
}

Tensor relu(const Tensor& x) { return unary(UnaryKind::Relu, x); }
Tensor gelu(const Tensor& x) { return unary(UnaryKind::Gelu, x); }
Tensor exp(const Tensor& x) { return unary(UnaryKind::Exp, x); }
Tensor log(const Tensor& x) { return unary(UnaryKind::Log, x); }
Tensor sqrt(const Tensor& x) { return unary(UnaryKind::Sqrt, x); }

// ---------------------------------------------------------------------------
// Linear algebra and layout

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) throw DimensionError("matmul needs rank >= 2 operands");
  const auto& as = a.shape();
  const auto& bs = b.shape();
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as[as.size() - 1];
  const std::size_t kb = bs[bs.size() - 2];
  const std::size_t n = bs[bs.size() - 1];
  if (k != kb) {
    throw DimensionError("matmul inner extents differ: " + shape_string(as) + " x " + shape_string(bs));
  }
  const bool shared_b = bs.size() == 2;
  if (!shared_b && (bs.size() != as.size() || !std::equal(as.begin(), as.end() - 2, bs.begin()))) {
    throw DimensionError("matmul batch axes differ: " + shape_string(as) + " x " + shape_string(bs));
  }
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < as.size(); ++i) batch *= as[i];

  auto A = a.data();
  auto B = b.data();
  std::vector<double> C(batch * m * n, 0.0);
  for (std::size_t bt = 0; bt < batch; ++bt) {
    const double* Ab = A.data() + bt * m * k;
    const double* Bb = B.data() + (shared_b ? 0 : bt * k * n);
    double* Cb = C.data() + bt * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double av = Ab[i * k + p];
        if (av == 0.0) continue;
        const double* brow = Bb + p * n;
        double* crow = Cb + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
  Shape out_shape(as.begin(), as.end() - 1);
  out_shape.push_back(n);
  Tensor result = make_result(std::move(out_shape), std::move(C), float_type(a, b));
  if (detail::should_record({&a, &b})) {
    detail::record(result, {a, b}, [a, b, batch, m, k, n, shared_b](auto g, auto in_grads) {
      auto ga = in_grads[0];
      auto gb = in_grads[1];
      auto A = a.data();
      auto B = b.data();
      for (std::size_t bt = 0; bt < batch; ++bt) {
        const double* Gb = g.data() + bt * m * n;
        const double* Ab = A.data() + bt * m * k;
        const double* Bb = B.data() + (shared_b ? 0 : bt * k * n);
        if (!ga.empty()) {
          double* dA = ga.data() + bt * m * k;
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < n; ++j) s += Gb[i * n + j] * Bb[p * n + j];
              dA[i * k + p] += s;
            }
          }
        }
        if (!gb.empty()) {
          double* dB = gb.data() + (shared_b ? 0 : bt * k * n);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double av = Ab[i * k + p];
              if (av == 0.0) continue;
              for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += av * Gb[i * n + j];
            }
          }
        }
      }
    });
  }
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw DimensionError("cannot reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  auto in = x.data();
  Tensor result = make_result(std::move(shape), std::vector<double>(in.begin(), in.end()),
                              float_type(x.dtype()));
  if (detail::should_record({&x})) {
    detail::record(result, {x}, [](auto g, auto in_grads) {
      auto gx = in_grads[0];
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return result;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const auto& s = x.shape();
  if (perm.size() != s.size()) throw DimensionError("permute: wrong number of axes");
  std::vector<bool> seen(s.size(), false);
  for (auto p : perm) {
    if (p >= s.size() || seen[p]) throw DimensionError("permute: invalid axis order");
    seen[p] = true;
  }
  std::vector<std::size_t> in_stride(s.size(), 1);
  for (std::size_t i = s.size() - 1; i-- > 0;) in_stride[i] = in_stride[i + 1] * s[i + 1];
  Shape out_shape(s.size());
  std::vector<std::size_t> stride(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    out_shape[i] = s[perm[i]];
    stride[i] = in_stride[perm[i]];
  }
  const std::size_t n = x.numel();
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(s.size(), 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    map[i] = src;
    for (std::size_t ax = s.size(); ax-- > 0;) {
      ++idx[ax];
      src += stride[ax];
      if (idx[ax] < out_shape[ax]) break;
      src -= stride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return gather(x, std::move(out_shape), std::move(map));
}

Tensor transpose_last(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose_last needs rank >= 2");
  std::vector<std::size_t> perm(x.rank());
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return permute(x, perm);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  check_axis(parts.front(), axis, "concat");
  Shape out_shape = first;
  out_shape[axis] = 0;
  DType dtype = float_type(parts.front().dtype());
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw DimensionError("concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw DimensionError("concat extent mismatch: " + shape_string(first) + " vs " + shape_string(s));
      }
    }
    out_shape[axis] += s[axis];
    dtype = promote(dtype, float_type(p.dtype()));
  }
  const auto split = split_at(out_shape, axis);
  std::vector<double> out(numel_of(out_shape));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.dim(axis) * split.inner;
    auto in = p.data();
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * split.extent * split.inner + offset));
    }
    offset += chunk;
  }
  Tensor result = make_result(std::move(out_shape), std::move(out), dtype);
  bool any = std::any_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (any && active_tape()) {
    std::vector<std::size_t> chunks;
    for (const auto& p : parts) chunks.push_back(p.dim(axis) * split.inner);
    detail::record(result, parts, [split, chunks, offsets](auto g, auto in_grads) {
      for (std::size_t k = 0; k < chunks.size(); ++k) {
        auto gk = in_grads[k];
        if (gk.empty()) continue;
        for (std::size_t o = 0; o < split.outer; ++o) {
          const double* src = g.data() + o * split.extent * split.inner + offsets[k];
          double* dst = gk.data() + o * chunks[k];
          for (std::size_t i = 0; i < chunks[k]; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reductions and normalizations

Tensor sum(const Tensor& x) {
  auto in = x.data();
  const double s = std::accumulate(in.begin(), in.end(), 0.0);
  Tensor result = make_result({1}, {s}, float_type(x.dtype()));
  if (detail::should_record({&x})) {
    detail::record(result, {x}, [](auto g, auto in_grads) {
      for (auto& v : in_grads[0]) v += g[0];
    });
  }
  return result;
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  check_axis(x, axis, "sum_axis");
  const auto sp = split_at(x.shape(), axis);
  auto in = x.data();
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t a = 0; a < sp.extent; ++a)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out[o * sp.inner + i] += in[(o * sp.extent + a) * sp.inner + i];
  Shape out_shape = x.shape();
  out_shape[axis] = 1;
  Tensor result = make_result(std::move(out_shape), std::move(out), float_type(x.dtype()));
  if (detail::should_record({&x})) {
    detail::record(result, {x}, [sp](auto g, auto in_grads) {
      auto gx = in_grads[0];
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t a = 0; a < sp.extent; ++a)
          for (std::size_t i = 0; i < sp.inner; ++i)
            gx[(o * sp.extent + a) * sp.inner + i] += g[o * sp.inner + i];
    });
  }
  return result;
}

namespace {

Tensor softmax_impl(const Tensor& x, std::size_t axis, bool log_space) {
  check_axis(x, axis, log_space ? "log_softmax" : "softmax");
  const auto sp = split_at(x.shape(), axis);
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.extent * sp.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < sp.extent; ++a) mx = std::max(mx, in[base + a * sp.inner]);
      double z = 0.0;
      for (std::size_t a = 0; a < sp.extent; ++a) z += std::exp(in[base + a * sp.inner] - mx);
      const double lz = std::log(z);
      for (std::size_t a = 0; a < sp.extent; ++a) {
        const double shifted = in[base + a * sp.inner] - mx;
        out[base + a * sp.inner] = log_space ? shifted - lz : std::exp(shifted) / z;
      }
    }
  }
  Tensor result = make_result(x.shape(), std::move(out), float_type(x.dtype()));
  if (detail::should_record({&x})) {
    detail::record(result, {x}, [sp, log_space, result](auto g, auto in_grads) {
      auto gx = in_grads[0];
      auto y = result.data();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
          const std::size_t base = o * sp.extent * sp.inner + i;
          double acc = 0.0;
          for (std::size_t a = 0; a < sp.extent; ++a) {
            const std::size_t j = base + a * sp.inner;
            acc += log_space ? g[j] : g[j] * y[j];
          }
          for (std::size_t a = 0; a < sp.extent; ++a) {
            const std::size_t j = base + a * sp.inner;
            if (log_space) {
              gx[j] += g[j] - std::exp(y[j]) * acc;
            } else {
              gx[j] += y[j] * (g[j] - acc);
            }
          }
        }
      }
    });
  }
  return result;
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) { return softmax_impl(x, axis, false); }
Tensor log_softmax(const Tensor& x, std::size_t axis) { return softmax_impl(x, axis, true); }

Tensor layer_norm(const Tensor& x, double eps) {
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.numel() / width;
  auto in = x.data();
  std::vector<double> out(in.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * width;
    double mu = 0.0;
    for (std::size_t c = 0; c < width; ++c) mu += row[c];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t c = 0; c < width; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(width);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < width; ++c) out[r * width + c] = (row[c] - mu) * inv_std[r];
  }
  // The adjoint needs the unrounded normalized values.
  std::vector<double> normalized = out;
  Tensor result = make_result(x.shape(), std::move(out), float_type(x.dtype()));
  if (detail::should_record({&x})) {
    detail::record(result, {x}, [width, rows, inv_std = std::move(inv_std),
                                 normalized = std::move(normalized)](auto g, auto in_grads) {
      auto gx = in_grads[0];
      const double n = static_cast<double>(width);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g.data() + r * width;
        const double* yr = normalized.data() + r * width;
        double mean_g = 0.0, mean_gy = 0.0;
        for (std::size_t c = 0; c < width; ++c) {
          mean_g += gr[c];
          mean_gy += gr[c] * yr[c];
        }
        mean_g /= n;
        mean_gy /= n;
        for (std::size_t c = 0; c < width; ++c) {
          gx[r * width + c] += inv_std[r] * (gr[c] - mean_g - yr[c] * mean_gy);
        }
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvGeom {
  std::size_t channels, h, w, kh, kw, stride, pad, out_h, out_w;

  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
};

// col[(c*kh + i)*kw + j][oy*out_w + ox] = img[c][oy*s - p + i][ox*s - p + j], zero outside.
void im2col(const double* img, const ConvGeom& g, double* col) {
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* dst = col + ((c * g.kh + i) * g.kw + j) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long y = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long x = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
            const bool inside = y >= 0 && x >= 0 && y < static_cast<long>(g.h) && x < static_cast<long>(g.w);
            dst[oy * g.out_w + ox] =
                inside ? img[(c * g.h + static_cast<std::size_t>(y)) * g.w + static_cast<std::size_t>(x)] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeom& g, double* img) {
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* src = col + ((c * g.kh + i) * g.kw + j) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long y = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          if (y < 0 || y >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long x = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
            if (x < 0 || x >= static_cast<long>(g.w)) continue;
            img[(c * g.h + static_cast<std::size_t>(y)) * g.w + static_cast<std::size_t>(x)] +=
                src[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

// out[M x Q] (+)= W[M x R] * col[R x Q]
void gemm_nn(const double* w, const double* col, double* out, std::size_t m, std::size_t r, std::size_t q) {
  for (std::size_t a = 0; a < m; ++a) {
    double* orow = out + a * q;
    for (std::size_t b = 0; b < r; ++b) {
      const double wv = w[a * r + b];
      if (wv == 0.0) continue;
      const double* crow = col + b * q;
      for (std::size_t c = 0; c < q; ++c) orow[c] += wv * crow[c];
    }
  }
}

// out[R x Q] (+)= W^T[R x M] * g[M x Q], W is [M x R]
void gemm_tn(const double* w, const double* g, double* out, std::size_t m, std::size_t r, std::size_t q) {
  for (std::size_t a = 0; a < m; ++a) {
    const double* grow = g + a * q;
    for (std::size_t b = 0; b < r; ++b) {
      const double wv = w[a * r + b];
      if (wv == 0.0) continue;
      double* orow = out + b * q;
      for (std::size_t c = 0; c < q; ++c) orow[c] += wv * grow[c];
    }
  }
}

// dW[M x R] += g[M x Q] * col^T[Q x R]
void gemm_nt_acc(const double* g, const double* col, double* dw, std::size_t m, std::size_t r, std::size_t q) {
  for (std::size_t a = 0; a < m; ++a) {
    const double* grow = g + a * q;
    for (std::size_t b = 0; b < r; ++b) {
      const double* crow = col + b * q;
      double s = 0.0;
      for (std::size_t c = 0; c < q; ++c) s += grow[c] * crow[c];
      dw[a * r + b] += s;
    }
  }
}

void check_bias(const Tensor& bias, std::size_t channels, const char* op) {
  if (!bias.defined()) return;
  if (bias.rank() != 1 || bias.dim(0) != channels) {
    throw DimensionError(std::string(op) + ": bias must be [" + std::to_string(channels) + "], got " +
                         shape_string(bias.shape()));
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Conv2dOptions opt) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (opt.stride < 1) throw ContractError("conv2d stride must be >= 1");
  const auto& is = input.shape();
  const auto& ks = kernel.shape();
  if (ks[1] != is[1]) {
    throw DimensionError("conv2d channel mismatch: input " + shape_string(is) + ", kernel " + shape_string(ks));
  }
  const std::size_t ph = is[2] + 2 * opt.padding;
  const std::size_t pw = is[3] + 2 * opt.padding;
  if (ks[2] > ph || ks[3] > pw) {
    throw DimensionError("conv2d kernel " + shape_string(ks) + " larger than padded input " + shape_string(is));
  }
  check_bias(bias, ks[0], "conv2d");
  const ConvGeom geom{is[1], is[2], is[3], ks[2], ks[3], opt.stride, opt.padding,
                      (ph - ks[2]) / opt.stride + 1, (pw - ks[3]) / opt.stride + 1};
  const std::size_t batch = is[0];
  const std::size_t out_c = ks[0];
  const std::size_t R = geom.rows();
  const std::size_t Q = geom.cols();

  auto X = input.data();
  auto K = kernel.data();
  std::vector<double> out(batch * out_c * Q, 0.0);
  std::vector<double> col(R * Q);
  for (std::size_t n = 0; n < batch; ++n) {
    im2col(X.data() + n * geom.channels * geom.h * geom.w, geom, col.data());
    double* o = out.data() + n * out_c * Q;
    if (bias.defined()) {
      auto bv = bias.data();
      for (std::size_t c = 0; c < out_c; ++c) std::fill_n(o + c * Q, Q, bv[c]);
    }
    gemm_nn(K.data(), col.data(), o, out_c, R, Q);
  }
  DType dtype = float_type(input, kernel);
  if (bias.defined()) dtype = promote(dtype, float_type(bias.dtype()));
  Tensor result = make_result({batch, out_c, geom.out_h, geom.out_w}, std::move(out), dtype);
  if (detail::should_record({&input, &kernel, &bias})) {
    detail::record(result, {input, kernel, bias}, [input, kernel, geom, batch, out_c](auto g, auto in_grads) {
      auto gx = in_grads[0];
      auto gk = in_grads[1];
      auto gbias = in_grads.size() > 2 ? in_grads[2] : std::span<double>{};
      auto X = input.data();
      auto K = kernel.data();
      const std::size_t R = geom.rows();
      const std::size_t Q = geom.cols();
      const std::size_t img = geom.channels * geom.h * geom.w;
      std::vector<double> col(R * Q);
      for (std::size_t n = 0; n < batch; ++n) {
        const double* gn = g.data() + n * out_c * Q;
        if (!gk.empty()) {
          im2col(X.data() + n * img, geom, col.data());
          gemm_nt_acc(gn, col.data(), gk.data(), out_c, R, Q);
        }
        if (!gx.empty()) {
          std::fill(col.begin(), col.end(), 0.0);
          gemm_tn(K.data(), gn, col.data(), out_c, R, Q);
          col2im_add(col.data(), geom, gx.data() + n * img);
        }
        if (!gbias.empty()) {
          for (std::size_t c = 0; c < out_c; ++c)
            for (std::size_t q = 0; q < Q; ++q) gbias[c] += gn[c * Q + q];
        }
      }
    });
  }
  return result;
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Conv2dOptions opt) {
  require_rank(input, 4, "conv_transpose2d input");
  require_rank(kernel, 4, "conv_transpose2d kernel");
  if (opt.stride < 1) throw ContractError("conv_transpose2d stride must be >= 1");
  const auto& is = input.shape();
  const auto& ks = kernel.shape();
  if (ks[0] != is[1]) {
    throw DimensionError("conv_transpose2d channel mismatch: input " + shape_string(is) + ", kernel " +
                         shape_string(ks));
  }
  const long oh = static_cast<long>((is[2] - 1) * opt.stride + ks[2]) - 2 * static_cast<long>(opt.padding);
  const long ow = static_cast<long>((is[3] - 1) * opt.stride + ks[3]) - 2 * static_cast<long>(opt.padding);
  if (oh < 1 || ow < 1) {
    throw DimensionError("conv_transpose2d: padding leaves no output for input " + shape_string(is) +
                         " and kernel " + shape_string(ks));
  }
  const std::size_t out_c = ks[1];
  check_bias(bias, out_c, "conv_transpose2d");
  // Geometry of the conv2d whose adjoint this is: it maps the output back to the input.
  const ConvGeom geom{out_c, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), ks[2], ks[3],
                      opt.stride, opt.padding, is[2], is[3]};
  const std::size_t batch = is[0];
  const std::size_t in_c = is[1];
  const std::size_t R = geom.rows();
  const std::size_t Q = geom.cols();
  const std::size_t img = geom.channels * geom.h * geom.w;

  auto X = input.data();
  auto K = kernel.data();
  std::vector<double> out(batch * img, 0.0);
  std::vector<double> col(R * Q);
  for (std::size_t n = 0; n < batch; ++n) {
    std::fill(col.begin(), col.end(), 0.0);
    gemm_tn(K.data(), X.data() + n * in_c * Q, col.data(), in_c, R, Q);
    double* o = out.data() + n * img;
    col2im_add(col.data(), geom, o);
    if (bias.defined()) {
      auto bv = bias.data();
      for (std::size_t c = 0; c < out_c; ++c)
        for (std::size_t p = 0; p < geom.h * geom.w; ++p) o[c * geom.h * geom.w + p] += bv[c];
    }
  }
  DType dtype = float_type(input, kernel);
  if (bias.defined()) dtype = promote(dtype, float_type(bias.dtype()));
  Tensor result = make_result({batch, out_c, geom.h, geom.w}, std::move(out), dtype);
  if (detail::should_record({&input, &kernel, &bias})) {
    detail::record(result, {input, kernel, bias}, [input, kernel, geom, batch, in_c](auto g, auto in_grads) {
      auto gx = in_grads[0];
      auto gk = in_grads[1];
      auto gbias = in_grads.size() > 2 ? in_grads[2] : std::span<double>{};
      auto X = input.data();
      auto K = kernel.data();
      const std::size_t R = geom.rows();
      const std::size_t Q = geom.cols();
      const std::size_t img = geom.channels * geom.h * geom.w;
      std::vector<double> col(R * Q);
      for (std::size_t n = 0; n < batch; ++n) {
        const double* gn = g.data() + n * img;
        im2col(gn, geom, col.data());
        if (!gx.empty()) gemm_nn(K.data(), col.data(), gx.data() + n * in_c * Q, in_c, R, Q);
        if (!gk.empty()) gemm_nt_acc(X.data() + n * in_c * Q, col.data(), gk.data(), in_c, R, Q);
        if (!gbias.empty()) {
          const std::size_t plane = geom.h * geom.w;
          for (std::size_t c = 0; c < geom.channels; ++c)
            for (std::size_t p = 0; p < plane; ++p) gbias[c] += gn[c * plane + p];
        }
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Spatial resampling

Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 4, "resize_bilinear");
  if (out_h == 0 || out_w == 0) throw DimensionError("resize_bilinear to an empty extent");
  const auto& s = x.shape();
  const std::size_t planes = s[0] * s[1];
  const std::size_t h = s[2];
  const std::size_t w = s[3];

  struct Tap {
    std::size_t i0, i1;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      if (src < 0.0) src = 0.0;
      std::size_t i0 = std::min(static_cast<std::size_t>(src), in - 1);
      std::size_t i1 = std::min(i0 + 1, in - 1);
      t[o] = {i0, i1, src - static_cast<double>(i0)};
    }
    return t;
  };
  const auto ty = taps(h, out_h);
  const auto tx = taps(w, out_w);

  auto in = x.data();
  std::vector<double> out(planes * out_h * out_w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = in.data() + p * h * w;
    double* dst = out.data() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[ox];
        const double top = (1.0 - b.frac) * src[a.i0 * w + b.i0] + b.frac * src[a.i0 * w + b.i1];
        const double bot = (1.0 - b.frac) * src[a.i1 * w + b.i0] + b.frac * src[a.i1 * w + b.i1];
        dst[oy * out_w + ox] = (1.0 - a.frac) * top + a.frac * bot;
      }
    }
  }
  Tensor result = make_result({s[0], s[1], out_h, out_w}, std::move(out), float_type(x.dtype()));
  if (detail::should_record({&x})) {
    detail::record(result, {x}, [ty, tx, planes, h, w, out_h, out_w](auto g, auto in_grads) {
      auto gx = in_grads[0];
      for (std::size_t p = 0; p < planes; ++p) {
        const double* gp = g.data() + p * out_h * out_w;
        double* dst = gx.data() + p * h * w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto& a = ty[oy];
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto& b = tx[ox];
            const double v = gp[oy * out_w + ox];
            dst[a.i0 * w + b.i0] += (1.0 - a.frac) * (1.0 - b.frac) * v;
            dst[a.i0 * w + b.i1] += (1.0 - a.frac) * b.frac * v;
            dst[a.i1 * w + b.i0] += a.frac * (1.0 - b.frac) * v;
            dst[a.i1 * w + b.i1] += a.frac * b.frac * v;
          }
        }
      }
    });
  }
  return result;
}

Tensor pad_to_even(const Tensor& x) {
  require_rank(x, 4, "pad_to_even");
  const auto& s = x.shape();
  const std::size_t h = s[2], w = s[3];
  if ((h % 2 == 0) && (w % 2 == 0)) return x;
  if (h < 2 || w < 2) throw DimensionError("reflect padding needs spatial extents >= 2, got " + shape_string(s));
  const std::size_t ph = h + h % 2;
  const std::size_t pw = w + w % 2;
  const std::size_t planes = s[0] * s[1];
  std::vector<std::size_t> map(planes * ph * pw);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < ph; ++y)
      for (std::size_t xx = 0; xx < pw; ++xx) {
        const std::size_t sy = y < h ? y : 2 * (h - 1) - y;
        const std::size_t sx = xx < w ? xx : 2 * (w - 1) - xx;
        map[(p * ph + y) * pw + xx] = (p * h + sy) * w + sx;
      }
  return gather(x, {s[0], s[1], ph, pw}, std::move(map));
}

Tensor crop(const Tensor& x, std::size_t h, std::size_t w) {
  require_rank(x, 4, "crop");
  const auto& s = x.shape();
  if (h > s[2] || w > s[3]) throw DimensionError("crop window larger than " + shape_string(s));
  if (h == s[2] && w == s[3]) return x;
  const std::size_t planes = s[0] * s[1];
  std::vector<std::size_t> map(planes * h * w);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) map[(p * h + y) * w + xx] = (p * s[2] + y) * s[3] + xx;
  return gather(x, {s[0], s[1], h, w}, std::move(map));
}

}  // namespace augseg
