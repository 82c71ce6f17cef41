#include "augseg/objective.hpp"

#include "augseg/error.hpp"
#include "augseg/ops.hpp"

namespace augseg {

void LabelMask::validate() const {
  if (!values.defined() || values.rank() != 3) {
    throw ContractError("label mask must be [N,H,W], got " +
                        (values.defined() ? shape_string(values.shape()) : std::string("undefined")));
  }
  if (values.dtype() != DType::UInt8) throw ContractError("label mask must be uint8");
  if (num_classes < 2) throw ContractError("label masks need at least two classes");
  for (double v : values.data()) {
    if (v >= static_cast<double>(num_classes)) {
      throw ContractError("class index " + std::to_string(static_cast<int>(v)) + " >= num_classes " +
                          std::to_string(num_classes));
    }
  }
}

Tensor one_hot(const LabelMask& mask, DType dtype) {
  mask.validate();
  const std::size_t n = mask.batch(), k = mask.num_classes, plane = mask.height() * mask.width();
  std::vector<double> v(n * k * plane, 0.0);
  auto labels = mask.values.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t p = 0; p < plane; ++p) {
      const auto c = static_cast<std::size_t>(labels[b * plane + p]);
      v[(b * k + c) * plane + p] = 1.0;
    }
  return Tensor({n, k, mask.height(), mask.width()}, std::move(v), dtype);
}

LabelMask argmax_labels(const Tensor& logits) {
  if (logits.rank() != 4) throw ContractError("logits must be [N,K,H,W], got " + shape_string(logits.shape()));
  const auto& s = logits.shape();
  if (s[1] > 256) throw ContractError("too many classes for a uint8 mask");
  const std::size_t plane = s[2] * s[3];
  auto x = logits.data();
  std::vector<double> out(s[0] * plane);
  for (std::size_t b = 0; b < s[0]; ++b)
    for (std::size_t p = 0; p < plane; ++p) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < s[1]; ++c) {
        if (x[(b * s[1] + c) * plane + p] > x[(b * s[1] + best) * plane + p]) best = c;
      }
      out[b * plane + p] = static_cast<double>(best);
    }
  return LabelMask{Tensor({s[0], s[2], s[3]}, std::move(out), DType::UInt8), s[1]};
}

namespace {

void check_pair(const Tensor& logits, const LabelMask& target) {
  target.validate();
  if (logits.rank() != 4 || logits.dim(0) != target.batch() || logits.dim(1) != target.num_classes ||
      logits.dim(2) != target.height() || logits.dim(3) != target.width()) {
    throw ContractError("logits " + shape_string(logits.shape()) + " do not match target " +
                        shape_string(target.values.shape()) + " with " + std::to_string(target.num_classes) +
                        " classes");
  }
}

}  // namespace

Tensor ce_loss(const Tensor& logits, const LabelMask& target) {
  check_pair(logits, target);
  const double pixels = static_cast<double>(target.values.numel());
  Tensor picked = sum(mul(log_softmax(logits, 1), one_hot(target, logits.dtype())));
  return mul_scalar(picked, -1.0 / pixels);
}

Tensor dice_loss(const Tensor& probs, const Tensor& target_one_hot, double eps) {
  if (probs.rank() != 4 || probs.shape() != target_one_hot.shape()) {
    throw ContractError("dice_loss expects matching [N,K,H,W] tensors, got " + shape_string(probs.shape()) +
                        " and " + shape_string(target_one_hot.shape()));
  }
  const std::size_t k = probs.dim(1);
  if (k < 2) throw ContractError("dice_loss needs at least two classes");
  auto pooled = [](const Tensor& t) { return sum_axis(sum_axis(sum_axis(t, 0), 2), 3); };  // [1,K,1,1]
  Tensor inter = pooled(mul(probs, target_one_hot));
  Tensor denom = add_scalar(add(pooled(probs), pooled(target_one_hot)), eps);
  Tensor ratio = div(add_scalar(mul_scalar(inter, 2.0), eps), denom);
  std::vector<double> fg(k, 1.0);
  fg[0] = 0.0;
  Tensor foreground({1, k, 1, 1}, std::move(fg), probs.dtype());
  Tensor mean_fg = mul_scalar(sum(mul(ratio, foreground)), 1.0 / static_cast<double>(k - 1));
  return add_scalar(mul_scalar(mean_fg, -1.0), 1.0);
}

Tensor combined_loss(const Tensor& logits, const LabelMask& target) {
  Tensor ce = ce_loss(logits, target);
  Tensor dice = dice_loss(softmax(logits, 1), one_hot(target, logits.dtype()));
  return add(ce, dice);
}

}  // namespace augseg
