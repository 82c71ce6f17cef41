#pragma once

#include "augseg/tensor.hpp"

namespace augseg {

/// Per-pixel class indices, [N,H,W] uint8.
struct LabelMask {
  Tensor values;
  std::size_t num_classes = 2;

  /// Throws ContractError on a wrong rank/dtype or an index >= num_classes.
  void validate() const;
  std::size_t batch() const { return values.dim(0); }
  std::size_t height() const { return values.dim(1); }
  std::size_t width() const { return values.dim(2); }
};

/// [N,K,H,W] indicator tensor of a label mask.
Tensor one_hot(const LabelMask& mask, DType dtype = DType::Float32);

/// Class with the highest logit per pixel (first wins ties).
LabelMask argmax_labels(const Tensor& logits);

/// Mean over pixels of -log softmax(logits)[target].
Tensor ce_loss(const Tensor& logits, const LabelMask& target);

/// 1 - mean over foreground classes k >= 1 of (2 sum p t + eps) / (sum p + sum t + eps),
/// sums pooled over batch and space.
///
/// A class absent from the target contributes eps / (sum p + eps): close to 1
/// only when the prediction is also (nearly) empty for it.
Tensor dice_loss(const Tensor& probs, const Tensor& target_one_hot, double eps = 1e-5);

/// Equal-weight sum of ce_loss and dice_loss(softmax(logits)).
Tensor combined_loss(const Tensor& logits, const LabelMask& target);

}  // namespace augseg
