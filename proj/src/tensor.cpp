#include "augseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "augseg/error.hpp"

namespace augseg {

std::string to_string(DType dtype) {
  switch (dtype) {
    case DType::Float32: return "float32";
    case DType::Float64: return "float64";
    case DType::UInt8: return "uint8";
  }
  return "unknown";
}

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

double quantize(double value, DType dtype) {
  switch (dtype) {
    case DType::Float32: return static_cast<double>(static_cast<float>(value));
    case DType::Float64: return value;
    case DType::UInt8: return std::clamp(std::nearbyint(value), 0.0, 255.0);
  }
  return value;
}

void quantize_all(std::span<double> values, DType dtype) {
  if (dtype == DType::Float64) return;
  for (auto& v : values) v = quantize(v, dtype);
}

DType promote(DType a, DType b) {
  if (a == DType::Float64 || b == DType::Float64) return DType::Float64;
  return DType::Float32;
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw DimensionError("tensor rank must be 1-4, got shape " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, DType dtype) {
  validate_shape(shape);
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->data.assign(numel_of(shape), 0.0);
  impl_->shape = std::move(shape);
  impl_->dtype = dtype;
}

Tensor::Tensor(Shape shape, std::vector<double> values, DType dtype) {
  validate_shape(shape);
  if (numel_of(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " needs " +
                         std::to_string(numel_of(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  quantize_all(values, dtype);
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->dtype = dtype;
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return Tensor(std::move(shape), dtype); }

Tensor Tensor::ones(Shape shape, DType dtype) { return full(std::move(shape), 1.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  std::vector<double> v(numel_of(shape), value);
  return Tensor(std::move(shape), std::move(v), dtype);
}

Tensor Tensor::scalar(double value, DType dtype) { return Tensor({1}, {value}, dtype); }

void Tensor::check_defined() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
}

const Shape& Tensor::shape() const {
  check_defined();
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  }
  return s[axis];
}

DType Tensor::dtype() const {
  check_defined();
  return impl_->dtype;
}

std::span<const double> Tensor::data() const {
  check_defined();
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  check_defined();
  if (impl_->tape_refs > 0) {
    throw ContractError("in-place mutation of a tensor recorded on a live tape");
  }
  return impl_->data;
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw DimensionError("index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw DimensionError("index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return impl_->data[flat];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on a tensor with " + std::to_string(numel()) + " elements");
  return impl_->data[0];
}

bool Tensor::requires_grad() const {
  check_defined();
  return impl_->requires_grad;
}

Tensor& Tensor::set_requires_grad(bool on) {
  check_defined();
  if (on && impl_->dtype == DType::UInt8) throw ContractError("uint8 tensors cannot carry gradients");
  if (!impl_->leaf) throw ContractError("requires_grad can only be changed on leaf tensors");
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const {
  check_defined();
  return impl_->leaf;
}

bool Tensor::has_grad() const {
  check_defined();
  return impl_->grad.has_value();
}

Tensor Tensor::grad() const {
  check_defined();
  if (!impl_->grad) return Tensor::zeros(impl_->shape, impl_->dtype);
  return Tensor(impl_->shape, *impl_->grad, impl_->dtype);
}

std::span<const double> Tensor::grad_data() const {
  check_defined();
  if (!impl_->grad) return {};
  return *impl_->grad;
}

void Tensor::zero_grad() {
  check_defined();
  impl_->grad.reset();
}

Tensor Tensor::clone() const {
  check_defined();
  return Tensor(impl_->shape, impl_->data, impl_->dtype);
}

Tensor Tensor::to(DType dtype) const {
  check_defined();
  return Tensor(impl_->shape, impl_->data, dtype);
}

Tensor make_result(Shape shape, std::vector<double> values, DType dtype) {
  return Tensor(std::move(shape), std::move(values), dtype);
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.dtype() != b.dtype()) return false;
  auto x = a.data();
  auto y = b.data();
  return std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  double m = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

}  // namespace augseg
