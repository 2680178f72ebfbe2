#pragma once

#include "hotspot/aggregation.hpp"
#include "hotspot/detection_head.hpp"

#include <functional>

namespace hotspot {

struct ModelConfig {
  BackboneConfig backbone;
  Index aggregation_channels = 256;
  Index unified_h = 0;  // 0: the deep tap's resolution
  Index unified_w = 0;
  int num_classes = 1;
  SizeRanges ranges;

  Index grid_h() const { return unified_h > 0 ? unified_h : backbone.input_h / backbone.total_stride(); }
  Index grid_w() const { return unified_w > 0 ? unified_w : backbone.input_w / backbone.total_stride(); }

  void validate() const {
    backbone.validate();
    ranges.validate();
    if (aggregation_channels < 1 || num_classes < 1 || unified_h < 0 || unified_w < 0)
      throw std::invalid_argument("model config: non-positive aggregation width, class count or unified size");
  }
};

/// Backbone, multi-scale aggregation and three prediction heads.
template <typename Scalar>
struct Model {
  ModelConfig config;
  Backbone<Scalar> backbone;
  AggregationBlock<Scalar> aggregation;
  HeadSet<Scalar> heads;
};

template <typename Scalar>
Model<Scalar> build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model<Scalar> m;
  m.config = config;
  m.backbone = build_backbone<Scalar>(config.backbone, seed);
  const auto& w = config.backbone.widths;
  m.aggregation = build_aggregation<Scalar>({w[1], w[2], w[3]}, config.aggregation_channels, config.grid_h(),
                                            config.grid_w(), seed + 1);
  m.heads = build_heads<Scalar>(config.aggregation_channels, config.num_classes, config.ranges, seed + 2);
  return m;
}

template <typename Scalar>
struct ModelTrace {
  BackboneTrace<Scalar> backbone;
  AggregationTrace<Scalar> aggregation;
  HeadTrace<Scalar> heads;
};

template <typename Scalar>
HeadGrids<Scalar> model_forward(const Model<Scalar>& m, const Tensor<Scalar>& image, ModelTrace<Scalar>* trace = nullptr) {
  auto features = backbone_forward(m.backbone, image, trace ? &trace->backbone : nullptr);
  auto fused = aggregate(features, m.aggregation, trace ? &trace->aggregation : nullptr);
  return head_forward(fused, m.heads, trace ? &trace->heads : nullptr);
}

template <typename Scalar>
void model_backward(Model<Scalar>& m, const ModelTrace<Scalar>& trace, const HeadGrids<Scalar>& grads) {
  auto dfused = head_backward(m.heads, trace.heads, grads);
  auto dfeatures = aggregate_backward(m.aggregation, trace.aggregation, dfused);
  backbone_backward(m.backbone, trace.backbone, dfeatures);
}

/// Visits every learnable tensor in a fixed declaration order. This order is
/// the checkpoint order.
template <typename ModelT, typename Fn>
void for_each_parameter(ModelT& m, Fn&& fn) {
  auto conv = [&](const std::string& name, auto& k) {
    fn(name + ".weight", k.weight);
    fn(name + ".bias", k.bias);
  };
  conv("backbone.conv1", m.backbone.stem);
  for (std::size_t b = 0; b < 3; ++b) {
    auto& blk = m.backbone.blocks[b];
    const std::string p = "backbone.block" + std::to_string(b + 1);
    conv(p + ".depthwise", blk.depthwise);
    conv(p + ".pointwise", blk.pointwise);
    fn(p + ".affine.scale", blk.scale);
    fn(p + ".affine.shift", blk.shift);
    fn(p + ".se.w1", blk.se.w1);
    fn(p + ".se.b1", blk.se.b1);
    fn(p + ".se.w2", blk.se.w2);
    fn(p + ".se.b2", blk.se.b2);
  }
  static constexpr std::array<const char*, 3> lateral{"low", "mid", "high"};
  for (std::size_t i = 0; i < 3; ++i) conv(std::string("aggregation.lateral_") + lateral[i], m.aggregation.lateral[i]);
  conv("aggregation.fuse", m.aggregation.fuse);
  for (std::size_t k = 0; k < 3; ++k) conv(std::string("heads.") + kHeadNames[k], m.heads.heads[k]);
}

template <typename Scalar>
Index parameter_count(const Model<Scalar>& m) {
  Index n = 0;
  for_each_parameter(m, [&](const std::string&, const GradPair<Scalar>& p) { n += p.value.size(); });
  return n;
}

template <typename Scalar>
void zero_grad(Model<Scalar>& m) {
  for_each_parameter(m, [](const std::string&, GradPair<Scalar>& p) {
    if (p.tracked()) p.grad.set_zero();
    else p.track();
  });
}

/// Backbone rows followed by aggregation and head rows.
template <typename Scalar>
std::vector<LayerSummary> model_summary(const Model<Scalar>& m) {
  auto rows = summarize(m.backbone);
  const Index gh = m.config.grid_h(), gw = m.config.grid_w(), ca = m.config.aggregation_channels;
  static constexpr std::array<const char*, 3> lateral{"low", "mid", "high"};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& k = m.aggregation.lateral[i];
    rows.push_back({std::string("aggregation.lateral_") + lateral[i], {1, gh, gw, ca}, k.parameter_count(),
                    conv_flops(1, 1, k.in_channels(), ca, gh, gw)});
  }
  rows.push_back({"aggregation.fuse", {1, gh, gw, ca}, m.aggregation.fuse.parameter_count(),
                  conv_flops(1, 1, ca, ca, gh, gw) + 2.0 * double(ca) * double(gh) * double(gw)});
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& h = m.heads.heads[k];
    rows.push_back({std::string("heads.") + kHeadNames[k], {1, gh, gw, h.out_channels()}, h.parameter_count(),
                    conv_flops(3, 3, ca, h.out_channels(), gh, gw)});
  }
  return rows;
}

}  // namespace hotspot
