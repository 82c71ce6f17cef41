#include "augseg/fusion.hpp"

#include <cmath>

#include "augseg/error.hpp"
#include "augseg/ops.hpp"

namespace augseg::fusion {

namespace {

Tensor normal(Shape shape, double stddev, std::mt19937_64& rng, DType dtype) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), dtype);
}

void require_matrix(const Tensor& t, std::size_t rows, std::size_t cols, const char* name) {
  if (!t.defined() || t.shape() != Shape{rows, cols}) {
    throw ContractError(std::string(name) + " must be [" + std::to_string(rows) + "," + std::to_string(cols) +
                        "], got " + (t.defined() ? shape_string(t.shape()) : "undefined"));
  }
}

void require_finite(const Tensor& t, const char* name) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw ContractError(std::string(name) + " has a non-finite entry");
  }
}

// [N, T, D] -> [N, h, T, D/h]
Tensor split_heads(const Tensor& x, std::size_t heads) {
  const auto& s = x.shape();
  return permute(reshape(x, {s[0], s[1], heads, s[2] / heads}), {0, 2, 1, 3});
}

// Fixed 2D sinusoidal code: the first half of the channels encodes the row,
// the second half the column.
Tensor positional_code(std::size_t h, std::size_t w, std::size_t channels, DType dtype) {
  std::vector<double> v(h * w * channels);
  const std::size_t half = channels / 2;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        const bool row = c < half;
        const std::size_t local = row ? c : c - half;
        const std::size_t span = row ? std::max<std::size_t>(half, 1) : std::max<std::size_t>(channels - half, 1);
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(local / 2) / static_cast<double>(span));
        const double pos = static_cast<double>(row ? y : x);
        v[(y * w + x) * channels + c] = local % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq);
      }
  return Tensor({h * w, channels}, std::move(v), dtype);
}

}  // namespace

TokenMap flatten_tokens(const Tensor& feature) {
  if (feature.rank() != 4) throw ContractError("flatten_tokens expects [N,C,H,W], got " + shape_string(feature.shape()));
  const auto& s = feature.shape();
  Tensor seq = permute(reshape(feature, {s[0], s[1], s[2] * s[3]}), {0, 2, 1});
  return TokenMap{seq, s[2], s[3]};
}

Tensor unflatten(const TokenMap& map) {
  const Tensor& t = map.tokens;
  if (t.rank() != 3) throw ContractError("token tensor must be [N,T,C], got " + shape_string(t.shape()));
  if (t.dim(1) != map.height * map.width) {
    throw ContractError("token count " + std::to_string(t.dim(1)) + " does not match " +
                        std::to_string(map.height) + "x" + std::to_string(map.width));
  }
  return reshape(permute(t, {0, 2, 1}), {t.dim(0), t.dim(2), map.height, map.width});
}

void FusionParams::validate() const {
  if (heads == 0 || model_dim == 0 || model_dim % heads != 0) {
    throw ContractError("model_dim " + std::to_string(model_dim) + " must be a positive multiple of heads " +
                        std::to_string(heads));
  }
  if (!w_q.defined() || w_q.rank() != 2 || !w_k.defined() || w_k.rank() != 2) {
    throw ContractError("fusion projections must be matrices");
  }
  const std::size_t c_dec = w_q.dim(0);
  const std::size_t c_enc = w_k.dim(0);
  require_matrix(w_q, c_dec, model_dim, "W_Q");
  require_matrix(w_k, c_enc, model_dim, "W_K");
  require_matrix(w_v, c_enc, model_dim, "W_V");
  require_matrix(w_o, model_dim, c_dec, "W_O");
  if (!ff_w1.defined() || ff_w1.rank() != 2) throw ContractError("feed-forward W1 must be a matrix");
  const std::size_t hidden = ff_w1.dim(1);
  require_matrix(ff_w1, c_dec, hidden, "FF W1");
  require_matrix(ff_w2, hidden, c_dec, "FF W2");
  if (!ff_b1.defined() || ff_b1.shape() != Shape{hidden}) throw ContractError("FF b1 has the wrong shape");
  if (!ff_b2.defined() || ff_b2.shape() != Shape{c_dec}) throw ContractError("FF b2 has the wrong shape");
  require_finite(w_q, "W_Q");
  require_finite(w_k, "W_K");
  require_finite(w_v, "W_V");
  require_finite(w_o, "W_O");
  require_finite(ff_w1, "FF W1");
  require_finite(ff_b1, "FF b1");
  require_finite(ff_w2, "FF W2");
  require_finite(ff_b2, "FF b2");
}

FusionParams FusionParams::init(std::size_t c_dec, std::size_t c_enc, std::size_t model_dim, std::size_t heads,
                                std::size_t ff_mult, std::mt19937_64& rng, DType dtype) {
  FusionParams p;
  p.model_dim = model_dim;
  p.heads = heads;
  const std::size_t hidden = ff_mult * c_dec;
  p.w_q = normal({c_dec, model_dim}, 1.0 / std::sqrt(static_cast<double>(c_dec)), rng, dtype);
  p.w_k = normal({c_enc, model_dim}, 1.0 / std::sqrt(static_cast<double>(c_enc)), rng, dtype);
  p.w_v = normal({c_enc, model_dim}, 1.0 / std::sqrt(static_cast<double>(c_enc)), rng, dtype);
  p.w_o = Tensor::zeros({model_dim, c_dec}, dtype);
  p.ff_w1 = normal({c_dec, hidden}, std::sqrt(2.0 / static_cast<double>(c_dec)), rng, dtype);
  p.ff_b1 = Tensor::zeros({hidden}, dtype);
  p.ff_w2 = normal({hidden, c_dec}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng, dtype);
  p.ff_b2 = Tensor::zeros({c_dec}, dtype);
  p.validate();
  return p;
}

std::vector<std::pair<std::string, Tensor*>> FusionParams::named_tensors() {
  return {{"w_q", &w_q},     {"w_k", &w_k},     {"w_v", &w_v},     {"w_o", &w_o},
          {"ff_w1", &ff_w1}, {"ff_b1", &ff_b1}, {"ff_w2", &ff_w2}, {"ff_b2", &ff_b2}};
}

Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t heads, double logit_scale) {
  if (q.rank() != 3 || k.rank() != 3) throw ContractError("attention expects [N,T,D] tokens");
  if (q.dim(0) != k.dim(0) || q.dim(2) != k.dim(2)) {
    throw ContractError("query/key shapes disagree: " + shape_string(q.shape()) + " vs " + shape_string(k.shape()));
  }
  if (heads == 0 || q.dim(2) % heads != 0) {
    throw ContractError("model dim " + std::to_string(q.dim(2)) + " not divisible by " + std::to_string(heads) +
                        " heads");
  }
  if (k.dim(1) < 1) throw ContractError("attention needs at least one key");
  const double d_k = static_cast<double>(q.dim(2) / heads);
  Tensor logits = matmul(split_heads(q, heads), transpose_last(split_heads(k, heads)));
  return softmax(mul_scalar(logits, logit_scale / std::sqrt(d_k)), 3);
}

Tensor cross_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  if (v.rank() != 3 || v.shape() != k.shape()) {
    throw ContractError("value shape " + shape_string(v.shape()) + " must equal key shape " +
                        shape_string(k.shape()));
  }
  Tensor attn = attention_weights(q, k, heads);
  Tensor per_head = matmul(attn, split_heads(v, heads));  // [N, h, T_q, d_K]
  const auto& s = q.shape();
  return reshape(permute(per_head, {0, 2, 1, 3}), {s[0], s[1], s[2]});
}

Tensor cg_fuse(const Tensor& decoder_feat, const Tensor& aug_enc_feat, const FusionParams& params,
               const FusionOptions& opt) {
  if (decoder_feat.rank() != 4 || aug_enc_feat.rank() != 4) throw ContractError("cg_fuse expects [N,C,H,W] maps");
  const auto& ds = decoder_feat.shape();
  const auto& es = aug_enc_feat.shape();
  if (ds[0] != es[0] || ds[2] != es[2] || ds[3] != es[3]) {
    throw ContractError("cg_fuse spatial mismatch: decoder " + shape_string(ds) + ", encoder " + shape_string(es));
  }
  if (params.decoder_channels() != ds[1] || params.encoder_channels() != es[1]) {
    throw ContractError("fusion weights do not match channel counts " + std::to_string(ds[1]) + "/" +
                        std::to_string(es[1]));
  }
  TokenMap dec = flatten_tokens(decoder_feat);
  TokenMap enc = flatten_tokens(aug_enc_feat);
  Tensor dec_n = layer_norm(dec.tokens, opt.norm_eps);
  Tensor enc_n = layer_norm(enc.tokens, opt.norm_eps);
  if (opt.positional_encoding) {
    dec_n = add(dec_n, positional_code(ds[2], ds[3], ds[1], dec_n.dtype()));
    enc_n = add(enc_n, positional_code(es[2], es[3], es[1], enc_n.dtype()));
  }
  Tensor attended = cross_attention(matmul(dec_n, params.w_q), matmul(enc_n, params.w_k),
                                    matmul(enc_n, params.w_v), params.heads);
  Tensor z = matmul(attended, params.w_o);
  Tensor ff = add(matmul(gelu(add(matmul(z, params.ff_w1), params.ff_b1)), params.ff_w2), params.ff_b2);
  return unflatten(TokenMap{add(dec.tokens, ff), dec.height, dec.width});
}

}  // namespace augseg::fusion
