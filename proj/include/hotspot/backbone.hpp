#pragma once

#include "hotspot/ops.hpp"
#include "hotspot/se_attention.hpp"

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace hotspot {

/// Stem plus three depthwise-separable blocks. widths[0] is the stem width,
/// widths[i] the output width of block i; strides likewise.
struct BackboneConfig {
  Index input_h = 224;
  Index input_w = 224;
  std::vector<Index> widths{32, 64, 128, 256};
  std::vector<Index> strides{2, 1, 2, 2};
  Index se_reduction = 4;

  Index total_stride() const {
    Index s = 1;
    for (Index v : strides) s *= v;
    return s;
  }

  void validate() const {
    if (widths.size() != 4 || strides.size() != 4)
      throw std::invalid_argument("backbone config: need 4 widths and 4 strides (stem + 3 blocks)");
    for (std::size_t i = 0; i < widths.size(); ++i)
      if (widths[i] < 1 || strides[i] < 1) throw std::invalid_argument("backbone config: widths/strides must be positive");
    if (se_reduction < 1) throw std::invalid_argument("backbone config: se_reduction must be positive");
    for (std::size_t i = 1; i < widths.size(); ++i)
      if (widths[i] % se_reduction != 0)
        throw std::invalid_argument("backbone config: width " + std::to_string(widths[i]) +
                                    " not divisible by se_reduction " + std::to_string(se_reduction));
    const Index s = total_stride();
    if (input_h < 1 || input_w < 1 || input_h % s != 0 || input_w % s != 0)
      throw std::invalid_argument("backbone config: input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                                  " not divisible by cumulative stride " + std::to_string(s));
  }
};

template <typename Scalar>
struct BackboneBlock {
  ConvKernel<Scalar> depthwise;
  ConvKernel<Scalar> pointwise;
  GradPair<Scalar> scale;  // per-channel affine after the pointwise conv
  GradPair<Scalar> shift;
  SEBlock<Scalar> se;
};

template <typename Scalar>
struct Backbone {
  BackboneConfig config;
  ConvKernel<Scalar> stem;
  std::array<BackboneBlock<Scalar>, 3> blocks;
};

template <typename Scalar>
struct BackboneFeatures {
  Tensor<Scalar> shallow;
  Tensor<Scalar> intermediate;
  Tensor<Scalar> deep;
};

/// Uniform(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <typename Scalar, typename Rng>
void init_fan_in(Tensor<Scalar>& t, Index fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / double(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < t.size(); ++i) t[i] = Scalar(dist(rng));
}

template <typename Scalar>
Backbone<Scalar> build_backbone(const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  Backbone<Scalar> bb;
  bb.config = config;
  const auto& w = config.widths;
  const auto& s = config.strides;
  bb.stem = ConvKernel<Scalar>::standard(3, 3, 3, w[0], s[0], 1);
  init_fan_in(bb.stem.weight.value, 27, rng);
  for (std::size_t b = 0; b < 3; ++b) {
    auto& blk = bb.blocks[b];
    const Index cin = w[b], cout = w[b + 1];
    blk.depthwise = ConvKernel<Scalar>::depthwise(3, 3, cin, s[b + 1], 1);
    init_fan_in(blk.depthwise.weight.value, 9, rng);
    blk.pointwise = ConvKernel<Scalar>::pointwise(cin, cout);
    init_fan_in(blk.pointwise.weight.value, cin, rng);
    blk.scale = GradPair<Scalar>(Tensor<Scalar>({cout}, Scalar(1)));
    blk.shift = GradPair<Scalar>(Tensor<Scalar>({cout}));
    blk.se = SEBlock<Scalar>::make(cout, config.se_reduction);
    init_fan_in(blk.se.w1.value, cout, rng);
    init_fan_in(blk.se.w2.value, blk.se.hidden(), rng);
  }
  return bb;
}

/// Forward intermediates for one backbone pass. Confined to one thread.
template <typename Scalar>
struct BackboneTrace {
  ConvNode<Scalar> stem{ConvNode<Scalar>::Kind::Standard};
  ReluNode<Scalar> stem_act;
  struct Block {
    ConvNode<Scalar> depthwise{ConvNode<Scalar>::Kind::Depthwise};
    ConvNode<Scalar> pointwise{ConvNode<Scalar>::Kind::Pointwise};
    Tensor<Scalar> pointwise_out;
    SENode<Scalar> se;
    ReluNode<Scalar> act;
  };
  std::array<Block, 3> blocks;
  /// (layer name, output shape) in execution order.
  std::vector<std::pair<std::string, Shape>> shapes;
  bool recorded = false;
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> channel_affine(const Tensor<Scalar>& x, const Tensor<Scalar>& scale, const Tensor<Scalar>& shift) {
  Tensor<Scalar> y(x.shape());
  y.matrix() = (x.matrix().array().rowwise() * scale.data().transpose().array()).rowwise() +
               shift.data().transpose().array();
  return y;
}

}  // namespace detail

template <typename Scalar>
BackboneFeatures<Scalar> backbone_forward(const Backbone<Scalar>& bb, const Tensor<Scalar>& image,
                                          BackboneTrace<Scalar>* trace = nullptr) {
  const auto& cfg = bb.config;
  if (image.rank() != 4 || image.dim(1) != cfg.input_h || image.dim(2) != cfg.input_w || image.dim(3) != 3)
    throw std::invalid_argument("backbone_forward: image " + shape_string(image.shape()) + " does not match (N," +
                                std::to_string(cfg.input_h) + "," + std::to_string(cfg.input_w) + ",3)");
  if (trace) trace->shapes.clear();
  auto note = [&](const std::string& name, const Tensor<Scalar>& t) {
    if (trace) trace->shapes.emplace_back(name, t.shape());
  };

  Tensor<Scalar> x = trace ? trace->stem.forward(image, bb.stem) : conv2d(image, bb.stem);
  x = trace ? trace->stem_act.forward(x) : relu(x);
  note("conv1", x);

  std::array<Tensor<Scalar>, 3> taps;
  for (std::size_t b = 0; b < 3; ++b) {
    const auto& blk = bb.blocks[b];
    const std::string prefix = "block" + std::to_string(b + 1);
    Tensor<Scalar> d = trace ? trace->blocks[b].depthwise.forward(x, blk.depthwise) : depthwise_conv2d(x, blk.depthwise);
    note(prefix + ".depthwise", d);
    Tensor<Scalar> p = trace ? trace->blocks[b].pointwise.forward(d, blk.pointwise) : pointwise_conv2d(d, blk.pointwise);
    note(prefix + ".pointwise", p);
    Tensor<Scalar> q = detail::channel_affine(p, blk.scale.value, blk.shift.value);
    if (trace) trace->blocks[b].pointwise_out = std::move(p);
    Tensor<Scalar> s = trace ? trace->blocks[b].se.forward(q, blk.se) : se_forward(q, blk.se);
    note(prefix + ".se", s);
    x = trace ? trace->blocks[b].act.forward(s) : relu(s);
    taps[b] = x;
  }
  if (trace) trace->recorded = true;
  return {std::move(taps[0]), std::move(taps[1]), std::move(taps[2])};
}

/// Accumulates parameter gradients into bb and returns the image gradient.
/// Feature gradients may be empty tensors (treated as zero).
template <typename Scalar>
Tensor<Scalar> backbone_backward(Backbone<Scalar>& bb, const BackboneTrace<Scalar>& trace,
                                 const BackboneFeatures<Scalar>& grads) {
  if (!trace.recorded) throw std::logic_error("backbone_backward called without a recorded forward");
  const std::array<const Tensor<Scalar>*, 3> taps{&grads.shallow, &grads.intermediate, &grads.deep};
  Tensor<Scalar> g;
  for (int b = 2; b >= 0; --b) {
    const auto& tb = trace.blocks[b];
    auto& blk = bb.blocks[b];
    if (!taps[b]->empty()) {
      if (g.empty()) g = *taps[b];
      else g.data() += taps[b]->data();
    }
    if (g.empty()) g = Tensor<Scalar>::zeros_like(tb.act.input());
    g = tb.act.backward(g);
    auto se = tb.se.backward(g);
    blk.se.w1.accumulate(se.w1);
    blk.se.b1.accumulate(se.b1);
    blk.se.w2.accumulate(se.w2);
    blk.se.b2.accumulate(se.b2);
    // affine: q = p * scale + shift
    const auto& p = tb.pointwise_out;
    Tensor<Scalar> dscale(blk.scale.value.shape()), dshift(blk.shift.value.shape());
    dscale.data() = p.matrix().cwiseProduct(se.input.matrix()).colwise().sum().transpose();
    dshift.data() = se.input.matrix().colwise().sum().transpose();
    blk.scale.accumulate(dscale);
    blk.shift.accumulate(dshift);
    Tensor<Scalar> dp(se.input.shape());
    dp.matrix() = se.input.matrix().array().rowwise() * blk.scale.value.data().transpose().array();
    auto pw = tb.pointwise.backward(dp);
    blk.pointwise.weight.accumulate(pw.weight);
    blk.pointwise.bias.accumulate(pw.bias);
    auto dw = tb.depthwise.backward(pw.input);
    blk.depthwise.weight.accumulate(dw.weight);
    blk.depthwise.bias.accumulate(dw.bias);
    g = std::move(dw.input);
  }
  g = trace.stem_act.backward(g);
  auto stem = trace.stem.backward(g);
  bb.stem.weight.accumulate(stem.weight);
  bb.stem.bias.accumulate(stem.bias);
  return std::move(stem.input);
}

/// One row of an analytic model summary.
struct LayerSummary {
  std::string name;
  Shape output;
  Index parameters = 0;
  double flops = 0.0;
};

inline double conv_flops(Index kh, Index kw, Index cin, Index cout, Index oh, Index ow) {
  return 2.0 * double(kh) * double(kw) * double(cin) * double(cout) * double(oh) * double(ow);
}

/// Per-layer analytic parameter and FLOP counts for a single image.
/// conv FLOPs = 2*kh*kw*Cin*Cout*Hout*Wout; depthwise drops the Cout factor.
template <typename Scalar>
std::vector<LayerSummary> summarize(const Backbone<Scalar>& bb) {
  const auto& cfg = bb.config;
  std::vector<LayerSummary> rows;
  Index h = detail::conv_out_extent(cfg.input_h, 3, cfg.strides[0], 1);
  Index w = detail::conv_out_extent(cfg.input_w, 3, cfg.strides[0], 1);
  rows.push_back({"conv1", {1, h, w, cfg.widths[0]}, bb.stem.parameter_count(), conv_flops(3, 3, 3, cfg.widths[0], h, w)});
  for (std::size_t b = 0; b < 3; ++b) {
    const auto& blk = bb.blocks[b];
    const std::string prefix = "block" + std::to_string(b + 1);
    const Index cin = cfg.widths[b], cout = cfg.widths[b + 1];
    h = detail::conv_out_extent(h, 3, cfg.strides[b + 1], 1);
    w = detail::conv_out_extent(w, 3, cfg.strides[b + 1], 1);
    rows.push_back({prefix + ".depthwise", {1, h, w, cin}, blk.depthwise.parameter_count(),
                    2.0 * 9.0 * double(cin) * double(h) * double(w)});
    rows.push_back({prefix + ".pointwise", {1, h, w, cout}, blk.pointwise.parameter_count(), conv_flops(1, 1, cin, cout, h, w)});
    rows.push_back({prefix + ".affine", {1, h, w, cout}, blk.scale.value.size() + blk.shift.value.size(),
                    2.0 * double(cout) * double(h) * double(w)});
    const double hw = double(h) * double(w);
    rows.push_back({prefix + ".se", {1, h, w, cout}, blk.se.parameter_count(),
                    2.0 * hw * double(cout) + 4.0 * double(cout) * double(blk.se.hidden())});
  }
  return rows;
}

}  // namespace hotspot
