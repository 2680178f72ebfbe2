#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hotspot {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

/// Dense row-major tensor. Feature maps are (batch, height, width, channels).
///
/// A default-constructed tensor is "empty" (rank 0, no storage); it stands in
/// for an untracked gradient. Every other tensor has extents >= 1.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  Tensor() = default;

  explicit Tensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    check_extents();
    data_.setConstant(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values) : shape_(std::move(shape)) {
    check_extents();
    if (static_cast<Index>(values.size()) != shape_size(shape_))
      throw std::invalid_argument("tensor " + shape_string(shape_) + " needs " +
                                  std::to_string(shape_size(shape_)) + " values, got " +
                                  std::to_string(values.size()));
    data_.resize(shape_size(shape_));
    Index i = 0;
    for (Scalar v : values) data_[i++] = v;
  }

  Tensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_size(shape_))
      throw std::invalid_argument("tensor " + shape_string(shape_) + " given " +
                                  std::to_string(data_.size()) + " values");
  }

  static Tensor zeros_like(const Tensor& other) {
    Tensor t;
    t.shape_ = other.shape_;
    t.data_.setZero(other.data_.size());
    return t;
  }

  bool empty() const { return shape_.empty(); }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Index size() const { return data_.size(); }
  const Shape& shape() const { return shape_; }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }
  Scalar* raw() { return data_.data(); }
  const Scalar* raw() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar& operator()(Index n, Index h, Index w, Index c) {
    return data_[((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
  }
  Scalar operator()(Index n, Index h, Index w, Index c) const {
    return data_[((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
  }

  /// Rows are all leading indices, columns the last extent.
  MatrixMap matrix() { return MatrixMap(data_.data(), data_.size() / shape_.back(), shape_.back()); }
  ConstMatrixMap matrix() const {
    return ConstMatrixMap(data_.data(), data_.size() / shape_.back(), shape_.back());
  }

  Tensor reshaped(Shape shape) const& { return Tensor(std::move(shape), data_); }
  Tensor reshaped(Shape shape) && { return Tensor(std::move(shape), std::move(data_)); }

  template <typename Other>
  Tensor<Other> cast() const {
    if (empty()) return {};
    return Tensor<Other>(shape_, data_.template cast<Other>().eval());
  }

  void set_zero() { data_.setZero(); }
  bool all_finite() const { return data_.allFinite(); }

  /// Bit-level equality of shape and contents.
  friend bool operator==(const Tensor& a, const Tensor& b) {
    if (a.shape_ != b.shape_) return false;
    return std::equal(a.raw(), a.raw() + a.size(), b.raw());
  }

 private:
  void check_extents() const {
    for (Index e : shape_)
      if (e < 1) throw std::invalid_argument("tensor extents must be >= 1, got " + shape_string(shape_));
  }

  Shape shape_;
  Vector data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

/// A parameter value together with its accumulated gradient. The gradient is
/// empty until tracking is switched on.
template <typename Scalar>
struct GradPair {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;

  GradPair() = default;
  explicit GradPair(Tensor<Scalar> v) : value(std::move(v)) {}

  bool tracked() const { return !grad.empty(); }
  void track() { grad = Tensor<Scalar>::zeros_like(value); }
  void zero_grad() {
    if (tracked()) grad.set_zero();
  }
  void accumulate(const Tensor<Scalar>& g) {
    if (!tracked()) track();
    if (g.shape() != value.shape())
      throw std::invalid_argument("gradient shape " + shape_string(g.shape()) +
                                  " does not match parameter " + shape_string(value.shape()));
    grad.data() += g.data();
  }
};

}  // namespace hotspot
