#pragma once

#include "hotspot/backbone.hpp"

namespace hotspot {

/// Multi-scale fusion: each backbone tap is resized to the unified grid and
/// projected to a common width, the three are summed, then a 1x1 fuse conv.
template <typename Scalar>
struct AggregationBlock {
  std::array<ConvKernel<Scalar>, 3> lateral;  // low, mid, high
  ConvKernel<Scalar> fuse;
  Index unified_h = 28;
  Index unified_w = 28;

  Index channels() const { return fuse.out_channels(); }
};

template <typename Scalar>
AggregationBlock<Scalar> build_aggregation(const std::array<Index, 3>& in_channels, Index channels, Index unified_h,
                                           Index unified_w, std::uint64_t seed) {
  if (channels < 1 || unified_h < 1 || unified_w < 1)
    throw std::invalid_argument("aggregation: channels and unified resolution must be positive");
  std::mt19937_64 rng(seed);
  AggregationBlock<Scalar> block;
  for (std::size_t i = 0; i < 3; ++i) {
    block.lateral[i] = ConvKernel<Scalar>::pointwise(in_channels[i], channels);
    init_fan_in(block.lateral[i].weight.value, in_channels[i], rng);
  }
  block.fuse = ConvKernel<Scalar>::pointwise(channels, channels);
  init_fan_in(block.fuse.weight.value, channels, rng);
  block.unified_h = unified_h;
  block.unified_w = unified_w;
  return block;
}

template <typename Scalar>
struct AggregationTrace {
  std::array<ResizeNode<Scalar>, 3> resize;
  std::array<bool, 3> resized{false, false, false};
  std::array<ConvNode<Scalar>, 3> lateral{ConvNode<Scalar>(ConvNode<Scalar>::Kind::Pointwise),
                                          ConvNode<Scalar>(ConvNode<Scalar>::Kind::Pointwise),
                                          ConvNode<Scalar>(ConvNode<Scalar>::Kind::Pointwise)};
  ConvNode<Scalar> fuse{ConvNode<Scalar>::Kind::Pointwise};
  bool recorded = false;
};

template <typename Scalar>
Tensor<Scalar> aggregate(const BackboneFeatures<Scalar>& features, const AggregationBlock<Scalar>& block,
                         AggregationTrace<Scalar>* trace = nullptr) {
  const std::array<const Tensor<Scalar>*, 3> taps{&features.shallow, &features.intermediate, &features.deep};
  Tensor<Scalar> sum;
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor<Scalar>& f = *taps[i];
    detail::require_rank4(f.shape(), "aggregate");
    if (f.dim(3) != block.lateral[i].in_channels())
      throw std::invalid_argument("aggregate: feature " + std::to_string(i) + " " + shape_string(f.shape()) +
                                  " expected " + std::to_string(block.lateral[i].in_channels()) + " channels");
    const bool resize = f.dim(1) != block.unified_h || f.dim(2) != block.unified_w;
    Tensor<Scalar> projected;
    if (resize) {
      Tensor<Scalar> r = trace ? trace->resize[i].forward(f, block.unified_h, block.unified_w)
                               : resize_bilinear(f, block.unified_h, block.unified_w);
      projected = trace ? trace->lateral[i].forward(r, block.lateral[i]) : pointwise_conv2d(r, block.lateral[i]);
    } else {
      projected = trace ? trace->lateral[i].forward(f, block.lateral[i]) : pointwise_conv2d(f, block.lateral[i]);
    }
    if (trace) trace->resized[i] = resize;
    if (sum.empty()) sum = std::move(projected);
    else sum = elementwise_add(sum, projected);
  }
  Tensor<Scalar> out = trace ? trace->fuse.forward(sum, block.fuse) : pointwise_conv2d(sum, block.fuse);
  if (trace) trace->recorded = true;
  return out;
}

/// Accumulates parameter gradients into block and returns feature gradients.
template <typename Scalar>
BackboneFeatures<Scalar> aggregate_backward(AggregationBlock<Scalar>& block, const AggregationTrace<Scalar>& trace,
                                            const Tensor<Scalar>& upstream) {
  if (!trace.recorded) throw std::logic_error("aggregate_backward called without a recorded forward");
  auto fuse = trace.fuse.backward(upstream);
  block.fuse.weight.accumulate(fuse.weight);
  block.fuse.bias.accumulate(fuse.bias);
  std::array<Tensor<Scalar>, 3> out;
  for (std::size_t i = 0; i < 3; ++i) {
    auto lat = trace.lateral[i].backward(fuse.input);
    block.lateral[i].weight.accumulate(lat.weight);
    block.lateral[i].bias.accumulate(lat.bias);
    out[i] = trace.resized[i] ? trace.resize[i].backward(lat.input) : std::move(lat.input);
  }
  return {std::move(out[0]), std::move(out[1]), std::move(out[2])};
}

}  // namespace hotspot
