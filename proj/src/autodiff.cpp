#include "augseg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "augseg/error.hpp"

namespace augseg {

namespace {
thread_local GradTape* g_active_tape = nullptr;
}  // namespace

GradTape* active_tape() noexcept { return g_active_tape; }

GradTape::~GradTape() { reset(); }

void GradTape::reset() {
  for (auto& e : entries_) {
    for (auto& t : e.inputs) {
      if (t.defined()) --t.impl()->tape_refs;
    }
    --e.output.impl()->tape_refs;
  }
  entries_.clear();
}

void GradTape::record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn fn) {
  for (auto& t : inputs) {
    if (t.defined()) ++t.impl()->tape_refs;
  }
  ++output.impl()->tape_refs;
  entries_.push_back(Entry{std::move(inputs), output, std::move(fn)});
}

void GradTape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a single-element loss");
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() on a loss that does not depend on any tracked tensor");
  }

  std::unordered_map<detail::TensorImpl*, std::vector<double>> adjoint;
  adjoint[loss.impl()] = {1.0};

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    auto found = adjoint.find(it->output.impl());
    if (found == adjoint.end()) continue;
    // unordered_map nodes are stable, so this reference survives the inserts below.
    const std::vector<double>& out_grad = found->second;

    std::vector<std::span<double>> in_grads(it->inputs.size());
    for (std::size_t i = 0; i < it->inputs.size(); ++i) {
      auto* impl = it->inputs[i].impl();
      if (!impl || !impl->requires_grad) continue;
      auto& buf = adjoint[impl];
      if (buf.empty()) buf.assign(impl->data.size(), 0.0);
    }
    for (std::size_t i = 0; i < it->inputs.size(); ++i) {
      auto* impl = it->inputs[i].impl();
      if (impl && impl->requires_grad) in_grads[i] = adjoint[impl];
    }
    it->fn(out_grad, in_grads);
  }

  for (auto& [impl, buf] : adjoint) {
    if (!impl->leaf || !impl->requires_grad) continue;
    if (!impl->grad) impl->grad.emplace(impl->data.size(), 0.0);
    auto& g = *impl->grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = quantize(g[i] + buf[i], impl->dtype);
  }
}

TapeScope::TapeScope(GradTape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  if (!g_active_tape) throw ContractError("backward() without an active tape");
  g_active_tape->backward(loss);
}

namespace detail {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!g_active_tape) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->defined() && t->requires_grad(); });
}

void record(Tensor& output, std::vector<Tensor> inputs, BackwardFn fn) {
  if (!g_active_tape) return;
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!any) return;
  output.impl()->requires_grad = true;
  output.impl()->leaf = false;
  g_active_tape->record(output, std::move(inputs), std::move(fn));
}

}  // namespace detail

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor leaf = x.clone();
  leaf.set_requires_grad(true);
  {
    GradTape tape;
    TapeScope scope(tape);
    Tensor loss = f(leaf);
    tape.backward(loss);
  }
  const auto analytic = leaf.grad();

  NoGradScope no_grad;
  Tensor probe = x.clone();
  auto values = probe.mutable_data();
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + eps;
    const double up = f(probe).item();
    values[i] = orig - eps;
    const double down = f(probe).item();
    values[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace augseg
