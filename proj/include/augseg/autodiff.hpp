#pragma once

#include <functional>
#include <span>
#include <vector>

#include "augseg/tensor.hpp"

namespace augseg {

/// Adjoint of one recorded operation. Receives the gradient of the output and
/// accumulates into one buffer per input; buffers of inputs that do not need a
/// gradient are empty spans.
using BackwardFn =
    std::function<void(std::span<const double> out_grad, std::span<const std::span<double>> in_grads)>;

/// Ordered record of differentiable operations.
///
/// A tape belongs to one thread. Operations record onto the tape made active
/// with TapeScope; with no active tape nothing is recorded and results carry no
/// gradient. Entries live until reset(), so backward() may be replayed.
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;
  ~GradTape();

  void reset();
  std::size_t size() const noexcept { return entries_.size(); }

  /// Reverse-mode sweep from a single-element loss. Every requires_grad leaf
  /// reachable from the loss gets d(loss)/d(leaf) added to its grad buffer.
  void backward(const Tensor& loss);

  void record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn fn);

 private:
  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
};

/// Makes a tape the active one for this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(GradTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* previous_;
};

/// Suspends recording for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  GradTape* previous_;
};

GradTape* active_tape() noexcept;

/// Runs backward() on the active tape. Throws ContractError without one.
void backward(const Tensor& loss);

namespace detail {

/// True when an op over these inputs must be recorded.
bool should_record(std::initializer_list<const Tensor*> inputs);

/// Records `output` on the active tape when any input requires a gradient.
void record(Tensor& output, std::vector<Tensor> inputs, BackwardFn fn);

}  // namespace detail

/// Compares the tape gradient of a scalar function with central differences.
///
/// Returns max over coordinates of |a - n| / max(|a|, |n|, 1e-12).
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double eps = 1e-5);

}  // namespace augseg
