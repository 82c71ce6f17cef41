#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "augseg/tensor.hpp"

namespace augseg::fusion {

/// Spatial map laid out as a token sequence: [N, H*W, C], row-major scan.
struct TokenMap {
  Tensor tokens;
  std::size_t height = 0;
  std::size_t width = 0;
};

TokenMap flatten_tokens(const Tensor& feature);
Tensor unflatten(const TokenMap& map);

/// Weights of one contextual-guided fusion block.
///
/// Projections are bias-free [in x out] matrices applied on the right of
/// token rows. The feed-forward path is gelu(z W1 + b1) W2 + b2.
struct FusionParams {
  std::size_t model_dim = 0;
  std::size_t heads = 1;
  Tensor w_q;    // [C_dec, D]
  Tensor w_k;    // [C_enc, D]
  Tensor w_v;    // [C_enc, D]
  Tensor w_o;    // [D, C_dec]
  Tensor ff_w1;  // [C_dec, ff_mult * C_dec]
  Tensor ff_b1;  // [ff_mult * C_dec]
  Tensor ff_w2;  // [ff_mult * C_dec, C_dec]
  Tensor ff_b2;  // [C_dec]

  std::size_t key_dim() const { return model_dim / heads; }
  std::size_t decoder_channels() const { return w_q.dim(0); }
  std::size_t encoder_channels() const { return w_k.dim(0); }

  /// Throws ContractError unless shapes agree, D % heads == 0 and every weight is finite.
  void validate() const;

  /// Random projections, zero output projection and zero biases, so a fresh
  /// block is exactly the residual identity.
  static FusionParams init(std::size_t c_dec, std::size_t c_enc, std::size_t model_dim, std::size_t heads,
                           std::size_t ff_mult, std::mt19937_64& rng, DType dtype = DType::Float32);

  std::vector<std::pair<std::string, Tensor*>> named_tensors();
};

struct FusionOptions {
  bool positional_encoding = false;
  double norm_eps = 1e-5;
};

/// Per-head attention probabilities Softmax(Q K^T / sqrt(d_K)) as [N, h, T_q, T_k].
/// `logit_scale` multiplies the already d_K-normalized logits.
Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t heads, double logit_scale = 1.0);

/// Multi-head cross-attention on [N, T, D] token tensors; heads are
/// contiguous slices of width D / h, concatenated back in order.
Tensor cross_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);

/// dec + FF(W_O * MHCA(norm(dec) W_Q, norm(enc) W_K, norm(enc) W_V)).
/// Both maps must share spatial extents; the result has dec's shape.
Tensor cg_fuse(const Tensor& decoder_feat, const Tensor& aug_enc_feat, const FusionParams& params,
               const FusionOptions& opt = {});

}  // namespace augseg::fusion
