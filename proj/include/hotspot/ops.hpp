#pragma once

#include "hotspot/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hotspot {

/// Raised when a convolution receives NaN or infinite activations.
class NonFiniteError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Convolution parameters. Standard and pointwise kernels have weight shape
/// (kh, kw, in, out); depthwise kernels (kh, kw, channels).
template <typename Scalar>
struct ConvKernel {
  GradPair<Scalar> weight;
  GradPair<Scalar> bias;
  Index stride = 1;
  Index padding = 0;

  static ConvKernel standard(Index kh, Index kw, Index in, Index out, Index stride, Index padding) {
    ConvKernel k;
    k.weight = GradPair<Scalar>(Tensor<Scalar>({kh, kw, in, out}));
    k.bias = GradPair<Scalar>(Tensor<Scalar>({out}));
    k.stride = stride;
    k.padding = padding;
    k.validate();
    return k;
  }
  static ConvKernel depthwise(Index kh, Index kw, Index channels, Index stride, Index padding) {
    ConvKernel k;
    k.weight = GradPair<Scalar>(Tensor<Scalar>({kh, kw, channels}));
    k.bias = GradPair<Scalar>(Tensor<Scalar>({channels}));
    k.stride = stride;
    k.padding = padding;
    k.validate();
    return k;
  }
  static ConvKernel pointwise(Index in, Index out) { return standard(1, 1, in, out, 1, 0); }

  bool is_depthwise() const { return weight.value.rank() == 3; }
  Index kh() const { return weight.value.dim(0); }
  Index kw() const { return weight.value.dim(1); }
  Index in_channels() const { return weight.value.dim(2); }
  Index out_channels() const { return is_depthwise() ? weight.value.dim(2) : weight.value.dim(3); }
  Index parameter_count() const { return weight.value.size() + bias.value.size(); }

  void validate() const {
    const Index r = weight.value.rank();
    if (r != 3 && r != 4) throw std::invalid_argument("conv weight must be rank 3 or 4");
    if (stride < 1) throw std::invalid_argument("conv stride must be >= 1");
    if (padding < 0) throw std::invalid_argument("conv padding must be >= 0");
    if (bias.value.rank() != 1 || bias.value.dim(0) != out_channels())
      throw std::invalid_argument("conv bias " + shape_string(bias.value.shape()) + " does not match " +
                                  std::to_string(out_channels()) + " output channels");
  }
};

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> weight;
  Tensor<Scalar> bias;
};

namespace detail {

inline void require_rank4(const Shape& s, const char* op) {
  if (s.size() != 4)
    throw std::invalid_argument(std::string(op) + ": expected rank-4 (N,H,W,C) input, got " + shape_string(s));
}

inline Index conv_out_extent(Index in, Index k, Index stride, Index pad) {
  const Index span = in + 2 * pad - k;
  return span < 0 ? 0 : span / stride + 1;
}

template <typename Scalar>
Shape conv_output_shape(const Tensor<Scalar>& x, const ConvKernel<Scalar>& k, const char* op) {
  require_rank4(x.shape(), op);
  k.validate();
  if (x.dim(3) != k.in_channels())
    throw std::invalid_argument(std::string(op) + ": input " + shape_string(x.shape()) +
                                " incompatible with kernel " + shape_string(k.weight.value.shape()));
  const Index oh = conv_out_extent(x.dim(1), k.kh(), k.stride, k.padding);
  const Index ow = conv_out_extent(x.dim(2), k.kw(), k.stride, k.padding);
  if (oh < 1 || ow < 1)
    throw std::invalid_argument(std::string(op) + ": input " + shape_string(x.shape()) + " with kernel " +
                                shape_string(k.weight.value.shape()) + " yields empty output");
  if (!x.all_finite()) throw NonFiniteError(std::string(op) + ": non-finite input");
  return {x.dim(0), oh, ow, k.out_channels()};
}

template <typename Scalar>
void require_same_shape(const Shape& expected, const Tensor<Scalar>& got, const char* what) {
  if (got.shape() != expected)
    throw std::invalid_argument(std::string(what) + ": expected " + shape_string(expected) + ", got " +
                                shape_string(got.shape()));
}

/// Gathers receptive fields of item n into rows of (oh*ow, kh*kw*C).
template <typename Scalar>
void im2col(const Tensor<Scalar>& x, Index n, const ConvKernel<Scalar>& k, Index oh, Index ow,
            typename Tensor<Scalar>::RowMatrix& cols) {
  const Index H = x.dim(1), W = x.dim(2), C = x.dim(3);
  cols.setZero(oh * ow, k.kh() * k.kw() * C);
  for (Index y = 0; y < oh; ++y)
    for (Index xo = 0; xo < ow; ++xo) {
      Scalar* row = cols.data() + (y * ow + xo) * cols.cols();
      for (Index i = 0; i < k.kh(); ++i) {
        const Index iy = y * k.stride - k.padding + i;
        if (iy < 0 || iy >= H) continue;
        for (Index j = 0; j < k.kw(); ++j) {
          const Index ix = xo * k.stride - k.padding + j;
          if (ix < 0 || ix >= W) continue;
          const Scalar* src = x.raw() + ((n * H + iy) * W + ix) * C;
          std::copy(src, src + C, row + (i * k.kw() + j) * C);
        }
      }
    }
}

template <typename Scalar>
void col2im_add(const typename Tensor<Scalar>::RowMatrix& cols, Index n, const ConvKernel<Scalar>& k, Index oh,
                Index ow, Tensor<Scalar>& dx) {
  const Index H = dx.dim(1), W = dx.dim(2), C = dx.dim(3);
  for (Index y = 0; y < oh; ++y)
    for (Index xo = 0; xo < ow; ++xo) {
      const Scalar* row = cols.data() + (y * ow + xo) * cols.cols();
      for (Index i = 0; i < k.kh(); ++i) {
        const Index iy = y * k.stride - k.padding + i;
        if (iy < 0 || iy >= H) continue;
        for (Index j = 0; j < k.kw(); ++j) {
          const Index ix = xo * k.stride - k.padding + j;
          if (ix < 0 || ix >= W) continue;
          Scalar* dst = dx.raw() + ((n * H + iy) * W + ix) * C;
          const Scalar* src = row + (i * k.kw() + j) * C;
          for (Index c = 0; c < C; ++c) dst[c] += src[c];
        }
      }
    }
}

template <typename Scalar>
using ArrayMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
template <typename Scalar>
using ConstArrayMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const ConvKernel<Scalar>& k) {
  if (k.is_depthwise()) throw std::invalid_argument("conv2d: depthwise kernel given");
  const Shape out_shape = detail::conv_output_shape(x, k, "conv2d");
  const Index oh = out_shape[1], ow = out_shape[2], co = out_shape[3];
  Tensor<Scalar> y(out_shape);
  const auto w = k.weight.value.reshaped({k.kh() * k.kw() * k.in_channels(), co});
  typename Tensor<Scalar>::RowMatrix cols;
  for (Index n = 0; n < x.dim(0); ++n) {
    detail::im2col(x, n, k, oh, ow, cols);
    typename Tensor<Scalar>::MatrixMap out(y.raw() + n * oh * ow * co, oh * ow, co);
    out.noalias() = cols * w.matrix();
    out.rowwise() += k.bias.value.data().transpose();
  }
  return y;
}

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& x, const ConvKernel<Scalar>& k, const Tensor<Scalar>& gy) {
  const Shape out_shape = detail::conv_output_shape(x, k, "conv2d_backward");
  detail::require_same_shape(out_shape, gy, "conv2d_backward upstream");
  const Index oh = out_shape[1], ow = out_shape[2], co = out_shape[3];
  const Index rows = k.kh() * k.kw() * k.in_channels();
  const auto w = k.weight.value.reshaped({rows, co});
  ConvGrads<Scalar> g{Tensor<Scalar>::zeros_like(x), Tensor<Scalar>({rows, co}),
                      Tensor<Scalar>::zeros_like(k.bias.value)};
  typename Tensor<Scalar>::RowMatrix cols, dcols;
  for (Index n = 0; n < x.dim(0); ++n) {
    typename Tensor<Scalar>::ConstMatrixMap gn(gy.raw() + n * oh * ow * co, oh * ow, co);
    detail::im2col(x, n, k, oh, ow, cols);
    g.weight.matrix().noalias() += cols.transpose() * gn;
    g.bias.data() += gn.colwise().sum().transpose();
    dcols.noalias() = gn * w.matrix().transpose();
    detail::col2im_add(dcols, n, k, oh, ow, g.input);
  }
  g.weight = std::move(g.weight).reshaped(k.weight.value.shape());
  return g;
}

template <typename Scalar>
Tensor<Scalar> depthwise_conv2d(const Tensor<Scalar>& x, const ConvKernel<Scalar>& k) {
  if (!k.is_depthwise()) throw std::invalid_argument("depthwise_conv2d: kernel has a cross-channel dimension");
  const Shape out_shape = detail::conv_output_shape(x, k, "depthwise_conv2d");
  const Index H = x.dim(1), W = x.dim(2), C = x.dim(3), oh = out_shape[1], ow = out_shape[2];
  Tensor<Scalar> y(out_shape);
  const detail::ConstArrayMap<Scalar> bias(k.bias.value.raw(), C);
  for (Index n = 0; n < x.dim(0); ++n)
    for (Index yo = 0; yo < oh; ++yo)
      for (Index xo = 0; xo < ow; ++xo) {
        detail::ArrayMap<Scalar> out(y.raw() + ((n * oh + yo) * ow + xo) * C, C);
        out = bias;
        for (Index i = 0; i < k.kh(); ++i) {
          const Index iy = yo * k.stride - k.padding + i;
          if (iy < 0 || iy >= H) continue;
          for (Index j = 0; j < k.kw(); ++j) {
            const Index ix = xo * k.stride - k.padding + j;
            if (ix < 0 || ix >= W) continue;
            out += detail::ConstArrayMap<Scalar>(k.weight.value.raw() + (i * k.kw() + j) * C, C) *
                   detail::ConstArrayMap<Scalar>(x.raw() + ((n * H + iy) * W + ix) * C, C);
          }
        }
      }
  return y;
}

template <typename Scalar>
ConvGrads<Scalar> depthwise_conv2d_backward(const Tensor<Scalar>& x, const ConvKernel<Scalar>& k,
                                            const Tensor<Scalar>& gy) {
  const Shape out_shape = detail::conv_output_shape(x, k, "depthwise_conv2d_backward");
  detail::require_same_shape(out_shape, gy, "depthwise_conv2d_backward upstream");
  const Index H = x.dim(1), W = x.dim(2), C = x.dim(3), oh = out_shape[1], ow = out_shape[2];
  ConvGrads<Scalar> g{Tensor<Scalar>::zeros_like(x), Tensor<Scalar>::zeros_like(k.weight.value),
                      Tensor<Scalar>::zeros_like(k.bias.value)};
  detail::ArrayMap<Scalar> db(g.bias.raw(), C);
  for (Index n = 0; n < x.dim(0); ++n)
    for (Index yo = 0; yo < oh; ++yo)
      for (Index xo = 0; xo < ow; ++xo) {
        const detail::ConstArrayMap<Scalar> up(gy.raw() + ((n * oh + yo) * ow + xo) * C, C);
        db += up;
        for (Index i = 0; i < k.kh(); ++i) {
          const Index iy = yo * k.stride - k.padding + i;
          if (iy < 0 || iy >= H) continue;
          for (Index j = 0; j < k.kw(); ++j) {
            const Index ix = xo * k.stride - k.padding + j;
            if (ix < 0 || ix >= W) continue;
            const Index at = ((n * H + iy) * W + ix) * C;
            const Index wat = (i * k.kw() + j) * C;
            detail::ArrayMap<Scalar>(g.input.raw() + at, C) +=
                detail::ConstArrayMap<Scalar>(k.weight.value.raw() + wat, C) * up;
            detail::ArrayMap<Scalar>(g.weight.raw() + wat, C) += detail::ConstArrayMap<Scalar>(x.raw() + at, C) * up;
          }
        }
      }
  return g;
}

template <typename Scalar>
void require_pointwise(const ConvKernel<Scalar>& k, const char* op) {
  if (k.is_depthwise() || k.kh() != 1 || k.kw() != 1 || k.stride != 1 || k.padding != 0)
    throw std::invalid_argument(std::string(op) + ": kernel " + shape_string(k.weight.value.shape()) +
                                " is not a 1x1 stride-1 unpadded kernel");
}

template <typename Scalar>
Tensor<Scalar> pointwise_conv2d(const Tensor<Scalar>& x, const ConvKernel<Scalar>& k) {
  require_pointwise(k, "pointwise_conv2d");
  const Shape out_shape = detail::conv_output_shape(x, k, "pointwise_conv2d");
  Tensor<Scalar> y(out_shape);
  const auto w = k.weight.value.reshaped({k.in_channels(), k.out_channels()});
  y.matrix().noalias() = x.matrix() * w.matrix();
  y.matrix().rowwise() += k.bias.value.data().transpose();
  return y;
}

template <typename Scalar>
ConvGrads<Scalar> pointwise_conv2d_backward(const Tensor<Scalar>& x, const ConvKernel<Scalar>& k,
                                            const Tensor<Scalar>& gy) {
  require_pointwise(k, "pointwise_conv2d_backward");
  const Shape out_shape = detail::conv_output_shape(x, k, "pointwise_conv2d_backward");
  detail::require_same_shape(out_shape, gy, "pointwise_conv2d_backward upstream");
  const auto w = k.weight.value.reshaped({k.in_channels(), k.out_channels()});
  ConvGrads<Scalar> g{Tensor<Scalar>::zeros_like(x), Tensor<Scalar>({k.in_channels(), k.out_channels()}),
                      Tensor<Scalar>::zeros_like(k.bias.value)};
  g.input.matrix().noalias() = gy.matrix() * w.matrix().transpose();
  g.weight.matrix().noalias() = x.matrix().transpose() * gy.matrix();
  g.bias.data() = gy.matrix().colwise().sum().transpose();
  g.weight = std::move(g.weight).reshaped(k.weight.value.shape());
  return g;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  return Tensor<Scalar>(x.shape(), x.data().cwiseMax(Scalar(0)).eval());
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy) {
  detail::require_same_shape(x.shape(), gy, "relu_backward upstream");
  return Tensor<Scalar>(x.shape(), (x.data().array() > Scalar(0)).select(gy.data().array(), Scalar(0)).matrix().eval());
}

template <typename Scalar>
Scalar sigmoid(Scalar v) {
  return Scalar(1) / (Scalar(1) + std::exp(-v));
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  return Tensor<Scalar>(x.shape(), x.data().unaryExpr([](Scalar v) { return sigmoid(v); }).eval());
}

/// Takes the forward output, not the input.
template <typename Scalar>
Tensor<Scalar> sigmoid_backward(const Tensor<Scalar>& y, const Tensor<Scalar>& gy) {
  detail::require_same_shape(y.shape(), gy, "sigmoid_backward upstream");
  const auto s = y.data().array();
  return Tensor<Scalar>(y.shape(), (gy.data().array() * s * (Scalar(1) - s)).matrix().eval());
}

template <typename Scalar>
Tensor<Scalar> elementwise_add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("elementwise_add: shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  return Tensor<Scalar>(a.shape(), (a.data() + b.data()).eval());
}

// ---------------------------------------------------------------------------
// Pooling and dense layers
// ---------------------------------------------------------------------------

/// (N,H,W,C) -> (N,1,1,C), the per-channel spatial mean.
template <typename Scalar>
Tensor<Scalar> global_avg_pool(const Tensor<Scalar>& x) {
  detail::require_rank4(x.shape(), "global_avg_pool");
  const Index N = x.dim(0), HW = x.dim(1) * x.dim(2), C = x.dim(3);
  Tensor<Scalar> y({N, 1, 1, C});
  for (Index n = 0; n < N; ++n) {
    typename Tensor<Scalar>::ConstMatrixMap block(x.raw() + n * HW * C, HW, C);
    y.matrix().row(n) = block.colwise().sum() / Scalar(HW);
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> global_avg_pool_backward(const Shape& input_shape, const Tensor<Scalar>& gy) {
  detail::require_rank4(input_shape, "global_avg_pool_backward");
  const Index N = input_shape[0], HW = input_shape[1] * input_shape[2], C = input_shape[3];
  detail::require_same_shape({N, 1, 1, C}, gy, "global_avg_pool_backward upstream");
  Tensor<Scalar> dx(input_shape);
  for (Index n = 0; n < N; ++n) {
    typename Tensor<Scalar>::MatrixMap block(dx.raw() + n * HW * C, HW, C);
    block.rowwise() = gy.matrix().row(n) / Scalar(HW);
  }
  return dx;
}

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// weights * input + bias.
template <typename Scalar, typename InputDerived, typename WeightDerived, typename BiasDerived>
VectorX<Scalar> fully_connected(const Eigen::MatrixBase<InputDerived>& input,
                                const Eigen::MatrixBase<WeightDerived>& weights,
                                const Eigen::MatrixBase<BiasDerived>& bias) {
  if (weights.cols() != input.size() || weights.rows() != bias.size())
    throw std::invalid_argument("fully_connected: weights " + std::to_string(weights.rows()) + "x" +
                                std::to_string(weights.cols()) + " vs input " + std::to_string(input.size()) +
                                " and bias " + std::to_string(bias.size()));
  return (weights * input + bias).eval();
}

template <typename Scalar>
struct FcGrads {
  VectorX<Scalar> input;
  MatrixX<Scalar> weights;
  VectorX<Scalar> bias;
};

template <typename Scalar, typename InputDerived, typename WeightDerived, typename UpDerived>
FcGrads<Scalar> fully_connected_backward(const Eigen::MatrixBase<InputDerived>& input,
                                         const Eigen::MatrixBase<WeightDerived>& weights,
                                         const Eigen::MatrixBase<UpDerived>& gy) {
  if (weights.cols() != input.size() || weights.rows() != gy.size())
    throw std::invalid_argument("fully_connected_backward: dimension mismatch");
  return {(weights.transpose() * gy).eval(), (gy * input.transpose()).eval(), gy.eval()};
}

// ---------------------------------------------------------------------------
// Bilinear resize with corner alignment
// ---------------------------------------------------------------------------

namespace detail {

struct LerpTap {
  Index lo, hi;
  double frac;
};

inline LerpTap lerp_tap(Index out_pos, Index in_extent, Index out_extent) {
  const double src = out_extent > 1 ? double(out_pos) * double(in_extent - 1) / double(out_extent - 1) : 0.0;
  const Index lo = std::min<Index>(static_cast<Index>(std::floor(src)), in_extent - 1);
  const Index hi = std::min<Index>(lo + 1, in_extent - 1);
  return {lo, hi, src - double(lo)};
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> resize_bilinear(const Tensor<Scalar>& x, Index out_h, Index out_w) {
  detail::require_rank4(x.shape(), "resize_bilinear");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: output extents must be >= 1");
  const Index N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  Tensor<Scalar> y({N, out_h, out_w, C});
  using Row = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  Row top(C), bottom(C);
  for (Index n = 0; n < N; ++n)
    for (Index oy = 0; oy < out_h; ++oy) {
      const auto ty = detail::lerp_tap(oy, H, out_h);
      for (Index ox = 0; ox < out_w; ++ox) {
        const auto tx = detail::lerp_tap(ox, W, out_w);
        const Scalar fx = Scalar(tx.frac), fy = Scalar(ty.frac);
        auto at = [&](Index yy, Index xx) { return detail::ConstArrayMap<Scalar>(x.raw() + ((n * H + yy) * W + xx) * C, C); };
        // Lerp form keeps constant fields and aligned samples exact.
        top = at(ty.lo, tx.lo) + fx * (at(ty.lo, tx.hi) - at(ty.lo, tx.lo));
        bottom = at(ty.hi, tx.lo) + fx * (at(ty.hi, tx.hi) - at(ty.hi, tx.lo));
        detail::ArrayMap<Scalar>(y.raw() + ((n * out_h + oy) * out_w + ox) * C, C) = top + fy * (bottom - top);
      }
    }
  return y;
}

template <typename Scalar>
Tensor<Scalar> resize_bilinear_backward(const Shape& input_shape, const Tensor<Scalar>& gy) {
  detail::require_rank4(input_shape, "resize_bilinear_backward");
  detail::require_rank4(gy.shape(), "resize_bilinear_backward upstream");
  const Index N = input_shape[0], H = input_shape[1], W = input_shape[2], C = input_shape[3];
  const Index out_h = gy.dim(1), out_w = gy.dim(2);
  detail::require_same_shape({N, out_h, out_w, C}, gy, "resize_bilinear_backward upstream");
  Tensor<Scalar> dx(input_shape);
  for (Index n = 0; n < N; ++n)
    for (Index oy = 0; oy < out_h; ++oy) {
      const auto ty = detail::lerp_tap(oy, H, out_h);
      for (Index ox = 0; ox < out_w; ++ox) {
        const auto tx = detail::lerp_tap(ox, W, out_w);
        const Scalar fx = Scalar(tx.frac), fy = Scalar(ty.frac);
        const detail::ConstArrayMap<Scalar> g(gy.raw() + ((n * out_h + oy) * out_w + ox) * C, C);
        auto at = [&](Index yy, Index xx) { return detail::ArrayMap<Scalar>(dx.raw() + ((n * H + yy) * W + xx) * C, C); };
        at(ty.lo, tx.lo) += (Scalar(1) - fy) * (Scalar(1) - fx) * g;
        at(ty.lo, tx.hi) += (Scalar(1) - fy) * fx * g;
        at(ty.hi, tx.lo) += fy * (Scalar(1) - fx) * g;
        at(ty.hi, tx.hi) += fy * fx * g;
      }
    }
  return dx;
}

// ---------------------------------------------------------------------------
// Recording op instances
// ---------------------------------------------------------------------------

/// A convolution that remembers its forward input so backward can be asked
/// for later. Dispatches on kernel kind (standard, depthwise, 1x1).
template <typename Scalar>
class ConvNode {
 public:
  enum class Kind { Standard, Depthwise, Pointwise };

  explicit ConvNode(Kind kind = Kind::Standard) : kind_(kind) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& x, const ConvKernel<Scalar>& k) {
    Tensor<Scalar> y = run(x, k);
    input_ = x;
    kernel_ = &k;
    output_shape_ = y.shape();
    return y;
  }

  ConvGrads<Scalar> backward(const Tensor<Scalar>& gy) const {
    if (!kernel_) throw std::logic_error("ConvNode::backward called without a recorded forward");
    detail::require_same_shape(output_shape_, gy, "ConvNode::backward upstream");
    switch (kind_) {
      case Kind::Depthwise: return depthwise_conv2d_backward(input_, *kernel_, gy);
      case Kind::Pointwise: return pointwise_conv2d_backward(input_, *kernel_, gy);
      default: return conv2d_backward(input_, *kernel_, gy);
    }
  }

  bool recorded() const { return kernel_ != nullptr; }
  const Tensor<Scalar>& input() const { return input_; }

 private:
  Tensor<Scalar> run(const Tensor<Scalar>& x, const ConvKernel<Scalar>& k) const {
    switch (kind_) {
      case Kind::Depthwise: return depthwise_conv2d(x, k);
      case Kind::Pointwise: return pointwise_conv2d(x, k);
      default: return conv2d(x, k);
    }
  }

  Kind kind_;
  Tensor<Scalar> input_;
  const ConvKernel<Scalar>* kernel_ = nullptr;
  Shape output_shape_;
};

template <typename Scalar>
class ReluNode {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    input_ = x;
    recorded_ = true;
    return relu(x);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& gy) const {
    if (!recorded_) throw std::logic_error("ReluNode::backward called without a recorded forward");
    return relu_backward(input_, gy);
  }
  const Tensor<Scalar>& input() const { return input_; }

 private:
  Tensor<Scalar> input_;
  bool recorded_ = false;
};

template <typename Scalar>
class SigmoidNode {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    output_ = sigmoid(x);
    recorded_ = true;
    return output_;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& gy) const {
    if (!recorded_) throw std::logic_error("SigmoidNode::backward called without a recorded forward");
    return sigmoid_backward(output_, gy);
  }

 private:
  Tensor<Scalar> output_;
  bool recorded_ = false;
};

template <typename Scalar>
class GlobalAvgPoolNode {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    Tensor<Scalar> y = global_avg_pool(x);
    input_shape_ = x.shape();
    return y;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& gy) const {
    if (input_shape_.empty()) throw std::logic_error("GlobalAvgPoolNode::backward called without a recorded forward");
    return global_avg_pool_backward(input_shape_, gy);
  }

 private:
  Shape input_shape_;
};

template <typename Scalar>
class ResizeNode {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x, Index out_h, Index out_w) {
    Tensor<Scalar> y = resize_bilinear(x, out_h, out_w);
    input_shape_ = x.shape();
    return y;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& gy) const {
    if (input_shape_.empty()) throw std::logic_error("ResizeNode::backward called without a recorded forward");
    return resize_bilinear_backward(input_shape_, gy);
  }

 private:
  Shape input_shape_;
};

}  // namespace hotspot
