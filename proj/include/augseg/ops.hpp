#pragma once

#include <cstddef>
#include <vector>

#include "augseg/tensor.hpp"

namespace augseg {

// Every operation here is differentiable: when a tape is active and an input
// requires a gradient, the result is recorded with its adjoint.

enum class BinaryKind { Add, Sub, Mul, Div };

/// Elementwise binary op with one-sided broadcasting.
///
/// Broadcast rule: the result always has A's shape. B may have lower rank, in
/// which case its shape is left-padded with 1s; each of B's extents must then
/// equal A's or be 1. Broadcast axes are sum-reduced in B's adjoint. Nothing
/// else is accepted.
Tensor ew_binary(BinaryKind kind, const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);

enum class UnaryKind { Relu, Gelu, Exp, Log, Sqrt };

/// Elementwise nonlinearity. Log and Sqrt reject non-positive inputs.
Tensor unary(UnaryKind kind, const Tensor& x);
Tensor relu(const Tensor& x);
/// Exact (erf) GELU.
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);

/// Batched matrix product over the last two axes.
///
/// A is [..., m, k]. B is either [k, n] (shared across A's batch axes) or
/// [..., k, n] with batch axes identical to A's.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
/// Axis permutation: result axis i is input axis perm[i].
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
/// Swaps the last two axes.
Tensor transpose_last(const Tensor& x);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

/// Sum of all elements as a [1] tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sum along one axis; the axis is kept with extent 1.
Tensor sum_axis(const Tensor& x, std::size_t axis);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

/// Normalizes each slice along the last axis to zero mean and unit variance
/// (biased variance, no affine terms).
Tensor layer_norm(const Tensor& x, double eps = 1e-5);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// 2D cross-correlation (the kernel is not flipped).
///
/// input [N,C,H,W], kernel [O,C,kh,kw], bias [O] or undefined. Zero padding.
/// Output extent is floor((H + 2p - kh) / stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias = {},
              Conv2dOptions opt = {});

/// Transposed convolution, the adjoint of conv2d seen as a forward map.
///
/// input [N,Cin,H,W], kernel [Cin,Cout,kh,kw], bias [Cout] or undefined.
/// Output extent is (H - 1) * stride - 2p + kh.
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, const Tensor& bias = {},
                        Conv2dOptions opt = {});

/// Bilinear resize of [N,C,H,W] using half-pixel centers, edges clamped.
Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

/// Reflect-pads odd spatial extents of [N,C,H,W] by one row/column at the
/// far edge (mirror without repeating the edge). Even extents pass through.
Tensor pad_to_even(const Tensor& x);
/// Keeps the top-left [h, w] window of [N,C,H,W].
Tensor crop(const Tensor& x, std::size_t h, std::size_t w);

}  // namespace augseg
