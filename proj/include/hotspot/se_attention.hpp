#pragma once

#include "hotspot/ops.hpp"

namespace hotspot {

/// Squeeze-and-excitation parameters: a C -> C/r -> C bottleneck with biases.
template <typename Scalar>
struct SEBlock {
  Index channels = 0;
  Index reduction = 1;
  GradPair<Scalar> w1;  // (C/r, C)
  GradPair<Scalar> b1;  // (C/r)
  GradPair<Scalar> w2;  // (C, C/r)
  GradPair<Scalar> b2;  // (C)

  static SEBlock make(Index channels, Index reduction) {
    if (reduction < 1 || channels < 1 || channels % reduction != 0)
      throw std::invalid_argument("SE block: channels " + std::to_string(channels) +
                                  " not divisible by reduction " + std::to_string(reduction));
    SEBlock b;
    b.channels = channels;
    b.reduction = reduction;
    const Index hidden = channels / reduction;
    b.w1 = GradPair<Scalar>(Tensor<Scalar>({hidden, channels}));
    b.b1 = GradPair<Scalar>(Tensor<Scalar>({hidden}));
    b.w2 = GradPair<Scalar>(Tensor<Scalar>({channels, hidden}));
    b.b2 = GradPair<Scalar>(Tensor<Scalar>({channels}));
    return b;
  }

  Index hidden() const { return channels / reduction; }
  Index parameter_count() const { return w1.value.size() + b1.value.size() + w2.value.size() + b2.value.size(); }
};

template <typename Scalar>
struct SEGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> w1, b1, w2, b2;
};

namespace detail {

template <typename Scalar>
void require_se_input(const Tensor<Scalar>& f, const SEBlock<Scalar>& block) {
  require_rank4(f.shape(), "se_forward");
  if (f.dim(3) != block.channels)
    throw std::invalid_argument("se_forward: input " + shape_string(f.shape()) + " has " + std::to_string(f.dim(3)) +
                                " channels, block expects " + std::to_string(block.channels));
}

/// Multiplies every (n, h, w, :) row by gates.row(n).
template <typename Scalar, typename Gates>
Tensor<Scalar> scale_channels(const Tensor<Scalar>& f, const Gates& gates) {
  Tensor<Scalar> out(f.shape());
  const Index HW = f.dim(1) * f.dim(2), C = f.dim(3);
  for (Index n = 0; n < f.dim(0); ++n) {
    typename Tensor<Scalar>::ConstMatrixMap in(f.raw() + n * HW * C, HW, C);
    typename Tensor<Scalar>::MatrixMap dst(out.raw() + n * HW * C, HW, C);
    dst = in.array().rowwise() * gates.row(n).array();
  }
  return out;
}

}  // namespace detail

/// Channel gates sigmoid(W2 relu(W1 s + b1) + b2) for each batch item, (N, C).
template <typename Scalar>
typename Tensor<Scalar>::RowMatrix se_gates(const Tensor<Scalar>& f, const SEBlock<Scalar>& block) {
  detail::require_se_input(f, block);
  const auto squeezed = global_avg_pool(f);
  typename Tensor<Scalar>::RowMatrix hidden =
      ((squeezed.matrix() * block.w1.value.matrix().transpose()).rowwise() + block.b1.value.data().transpose())
          .cwiseMax(Scalar(0));
  typename Tensor<Scalar>::RowMatrix z =
      (hidden * block.w2.value.matrix().transpose()).rowwise() + block.b2.value.data().transpose();
  return z.unaryExpr([](Scalar v) { return sigmoid(v); });
}

template <typename Scalar>
Tensor<Scalar> se_forward(const Tensor<Scalar>& f, const SEBlock<Scalar>& block) {
  return detail::scale_channels(f, se_gates(f, block));
}

/// Recording SE application; backward yields gradients for F and all four
/// excitation parameters.
template <typename Scalar>
class SENode {
 public:
  using RowMatrix = typename Tensor<Scalar>::RowMatrix;

  Tensor<Scalar> forward(const Tensor<Scalar>& f, const SEBlock<Scalar>& block) {
    detail::require_se_input(f, block);
    squeezed_ = global_avg_pool(f).matrix();
    hidden_pre_ = (squeezed_ * block.w1.value.matrix().transpose()).rowwise() + block.b1.value.data().transpose();
    hidden_ = hidden_pre_.cwiseMax(Scalar(0));
    RowMatrix z = (hidden_ * block.w2.value.matrix().transpose()).rowwise() + block.b2.value.data().transpose();
    gates_ = z.unaryExpr([](Scalar v) { return sigmoid(v); });
    input_ = f;
    block_ = &block;
    return detail::scale_channels(f, gates_);
  }

  SEGrads<Scalar> backward(const Tensor<Scalar>& gy) const {
    if (!block_) throw std::logic_error("SENode::backward called without a recorded forward");
    detail::require_same_shape(input_.shape(), gy, "SENode::backward upstream");
    const Index N = input_.dim(0), HW = input_.dim(1) * input_.dim(2), C = input_.dim(3);

    RowMatrix dgate(N, C);
    for (Index n = 0; n < N; ++n) {
      typename Tensor<Scalar>::ConstMatrixMap f(input_.raw() + n * HW * C, HW, C);
      typename Tensor<Scalar>::ConstMatrixMap g(gy.raw() + n * HW * C, HW, C);
      dgate.row(n) = f.cwiseProduct(g).colwise().sum();
    }
    const RowMatrix dz = dgate.cwiseProduct(gates_.cwiseProduct((RowMatrix::Ones(N, C) - gates_)));
    const RowMatrix dhidden =
        (dz * block_->w2.value.matrix()).cwiseProduct((hidden_pre_.array() > Scalar(0)).template cast<Scalar>().matrix());

    SEGrads<Scalar> out;
    out.w2 = Tensor<Scalar>(block_->w2.value.shape());
    out.w2.matrix() = dz.transpose() * hidden_;
    out.b2 = Tensor<Scalar>(block_->b2.value.shape());
    out.b2.data() = dz.colwise().sum().transpose();
    out.w1 = Tensor<Scalar>(block_->w1.value.shape());
    out.w1.matrix() = dhidden.transpose() * squeezed_;
    out.b1 = Tensor<Scalar>(block_->b1.value.shape());
    out.b1.data() = dhidden.colwise().sum().transpose();

    const RowMatrix dsqueezed = dhidden * block_->w1.value.matrix();
    Tensor<Scalar> dpool({N, 1, 1, C});
    dpool.matrix() = dsqueezed;
    out.input = detail::scale_channels(gy, gates_);
    out.input.data() += global_avg_pool_backward(input_.shape(), dpool).data();
    return out;
  }

  const RowMatrix& gates() const { return gates_; }

 private:
  Tensor<Scalar> input_;
  const SEBlock<Scalar>* block_ = nullptr;
  RowMatrix squeezed_, hidden_pre_, hidden_, gates_;
};

}  // namespace hotspot
