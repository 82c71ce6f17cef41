#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace augseg {

/// Element type of a tensor. Codes match the on-disk DAUG dtype byte.
enum class DType : std::uint8_t { Float32 = 1, Float64 = 2, UInt8 = 3 };

std::string to_string(DType dtype);

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  DType dtype = DType::Float32;
  // Values are held in double regardless of dtype. Float32 tensors only ever
  // hold float-representable values (every producer rounds), uint8 tensors
  // only integers in [0, 255].
  std::vector<double> data;
  bool requires_grad = false;
  bool leaf = true;
  std::optional<std::vector<double>> grad;
  // Number of live tape entries referencing this tensor. Mutation is refused
  // while nonzero.
  int tape_refs = 0;
};

}  // namespace detail

/// Dense row-major tensor of rank 1-4 with optional gradient tracking.
///
/// Tensors are reference types: copies share storage, as do the tape entries
/// that record them. Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, DType dtype = DType::Float32);
  Tensor(Shape shape, std::vector<double> values, DType dtype = DType::Float32);

  static Tensor zeros(Shape shape, DType dtype = DType::Float32);
  static Tensor ones(Shape shape, DType dtype = DType::Float32);
  static Tensor full(Shape shape, double value, DType dtype = DType::Float32);
  static Tensor scalar(double value, DType dtype = DType::Float32);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data().size(); }
  DType dtype() const;
  bool is_floating() const { return dtype() != DType::UInt8; }

  std::span<const double> data() const;
  /// Writable view. Throws ContractError while the tensor is recorded on a
  /// live tape.
  std::span<double> mutable_data();

  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::initializer_list<std::size_t> index) const;
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);
  bool is_leaf() const;

  bool has_grad() const;
  /// Accumulated gradient as a new tensor (zeros when none has accumulated).
  Tensor grad() const;
  std::span<const double> grad_data() const;
  void zero_grad();

  /// Independent copy of values; the copy is a leaf without gradient tracking.
  Tensor clone() const;
  /// Same as clone() but converted to another dtype.
  Tensor to(DType dtype) const;

  bool same_as(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  detail::TensorImpl* impl() const noexcept { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const noexcept { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  void check_defined() const;

  std::shared_ptr<detail::TensorImpl> impl_;

  friend Tensor make_result(Shape shape, std::vector<double> values, DType dtype);
};

/// Rounds a value to what the given dtype can represent.
double quantize(double value, DType dtype);
/// Rounds every element in place.
void quantize_all(std::span<double> values, DType dtype);

/// Result dtype of combining two tensors: float64 wins, otherwise float32.
DType promote(DType a, DType b);

/// Builds a fresh tensor from computed values, rounding to dtype.
Tensor make_result(Shape shape, std::vector<double> values, DType dtype);

/// Bitwise equality of shape, dtype and values.
bool bit_equal(const Tensor& a, const Tensor& b);
/// Max absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace augseg
