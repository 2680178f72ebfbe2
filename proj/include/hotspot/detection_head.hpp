#pragma once

#include "hotspot/backbone.hpp"
#include "hotspot/postprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace hotspot {

/// Box-size routing: a ground truth goes to the first head whose upper bound
/// is >= its larger normalized side. Ranges are (0,b0], (b0,b1], (b1,1].
struct SizeRanges {
  std::array<double, 3> upper{0.1, 0.3, 1.0};

  void validate() const {
    if (!(upper[0] > 0 && upper[0] < upper[1] && upper[1] < upper[2] && upper[2] == 1.0))
      throw std::invalid_argument("size ranges must partition (0,1]: need 0 < b0 < b1 < 1");
  }
  int head_for(double max_side) const {
    for (int k = 0; k < 3; ++k)
      if (max_side <= upper[k]) return k;
    return 2;
  }
};

struct LossWeights {
  double box = 1.0;
  double cls = 1.0;
  double conf = 1.0;
  double negative = 0.1;  // confidence BCE weight on unassigned cells
};

/// Three 3x3 prediction convs (small / medium / large) over the unified map.
/// Channel layout per cell: [tx, ty, tw, th, t_conf, t_class...].
template <typename Scalar>
struct HeadSet {
  std::array<ConvKernel<Scalar>, 3> heads;
  int num_classes = 1;
  SizeRanges ranges;

  Index outputs() const { return 5 + num_classes; }
};

inline constexpr std::array<const char*, 3> kHeadNames{"small", "medium", "large"};

template <typename Scalar>
HeadSet<Scalar> build_heads(Index in_channels, int num_classes, const SizeRanges& ranges, std::uint64_t seed) {
  if (num_classes < 1) throw std::invalid_argument("heads: num_classes must be >= 1");
  ranges.validate();
  std::mt19937_64 rng(seed);
  HeadSet<Scalar> hs;
  hs.num_classes = num_classes;
  hs.ranges = ranges;
  for (auto& k : hs.heads) {
    k = ConvKernel<Scalar>::standard(3, 3, in_channels, 5 + num_classes, 1, 1);
    init_fan_in(k.weight.value, 9 * in_channels, rng);
  }
  return hs;
}

template <typename Scalar>
using HeadGrids = std::array<Tensor<Scalar>, 3>;

template <typename Scalar>
struct HeadTrace {
  std::array<ConvNode<Scalar>, 3> heads;
  bool recorded = false;
};

template <typename Scalar>
HeadGrids<Scalar> head_forward(const Tensor<Scalar>& fused, const HeadSet<Scalar>& hs, HeadTrace<Scalar>* trace = nullptr) {
  detail::require_rank4(fused.shape(), "head_forward");
  HeadGrids<Scalar> out;
  for (std::size_t k = 0; k < 3; ++k) {
    if (hs.heads[k].out_channels() != hs.outputs())
      throw std::invalid_argument("head_forward: head emits " + std::to_string(hs.heads[k].out_channels()) +
                                  " channels, expected " + std::to_string(hs.outputs()));
    out[k] = trace ? trace->heads[k].forward(fused, hs.heads[k]) : conv2d(fused, hs.heads[k]);
  }
  if (trace) trace->recorded = true;
  return out;
}

/// Accumulates head gradients and returns the gradient w.r.t. the fused map.
template <typename Scalar>
Tensor<Scalar> head_backward(HeadSet<Scalar>& hs, const HeadTrace<Scalar>& trace, const HeadGrids<Scalar>& grads) {
  if (!trace.recorded) throw std::logic_error("head_backward called without a recorded forward");
  Tensor<Scalar> dx;
  for (std::size_t k = 0; k < 3; ++k) {
    auto g = trace.heads[k].backward(grads[k]);
    hs.heads[k].weight.accumulate(g.weight);
    hs.heads[k].bias.accumulate(g.bias);
    if (dx.empty()) dx = std::move(g.input);
    else dx.data() += g.input.data();
  }
  return dx;
}

/// Anchor-free decode. Per cell (i, j) of a GhxGw grid:
///   x = (j + s(tx)) / Gw, y = (i + s(ty)) / Gh, w = s(tw), h = s(th),
///   p = s(t_conf) * s(t_class) for the best class.
/// Returns one list per batch item, cells with p < conf_threshold dropped.
template <typename Scalar>
std::vector<std::vector<Detection>> decode(const HeadGrids<Scalar>& grids, const HeadSet<Scalar>& hs,
                                           double conf_threshold) {
  const Index N = grids[0].dim(0);
  std::vector<std::vector<Detection>> out(static_cast<std::size_t>(N));
  for (const auto& g : grids) {
    const Index gh = g.dim(1), gw = g.dim(2), ch = g.dim(3);
    if (ch != hs.outputs()) throw std::invalid_argument("decode: grid has " + std::to_string(ch) + " channels");
    for (Index n = 0; n < N; ++n)
      for (Index i = 0; i < gh; ++i)
        for (Index j = 0; j < gw; ++j) {
          const Scalar* t = g.raw() + ((n * gh + i) * gw + j) * ch;
          int best = 0;
          for (int c = 1; c < hs.num_classes; ++c)
            if (t[5 + c] > t[5 + best]) best = c;
          const double p = double(sigmoid(t[4])) * double(sigmoid(t[5 + best]));
          if (p < conf_threshold) continue;
          Detection d;
          d.box = {(double(j) + double(sigmoid(t[0]))) / double(gw), (double(i) + double(sigmoid(t[1]))) / double(gh),
                   double(sigmoid(t[2])), double(sigmoid(t[3]))};
          d.class_id = best;
          d.confidence = p;
          out[static_cast<std::size_t>(n)].push_back(d);
        }
  }
  return out;
}

/// Positive-cell assignment. cell[head][(n*Gh + i)*Gw + j] indexes into
/// boxes, -1 for negatives.
struct Targets {
  Index batch = 0, grid_h = 0, grid_w = 0;
  std::array<std::vector<int>, 3> cell;
  std::vector<Detection> boxes;

  Index positives() const {
    Index p = 0;
    for (const auto& c : cell) p += std::count_if(c.begin(), c.end(), [](int v) { return v >= 0; });
    return p;
  }
};

inline Targets assign_targets(const std::vector<std::vector<Detection>>& gt, const SizeRanges& ranges, Index grid_h,
                              Index grid_w) {
  ranges.validate();
  Targets t;
  t.batch = static_cast<Index>(gt.size());
  t.grid_h = grid_h;
  t.grid_w = grid_w;
  for (auto& c : t.cell) c.assign(static_cast<std::size_t>(t.batch * grid_h * grid_w), -1);
  for (std::size_t n = 0; n < gt.size(); ++n)
    for (const Detection& d : gt[n]) {
      if (!(d.box.w > 0 && d.box.h > 0)) throw std::invalid_argument("assign_targets: degenerate ground-truth box");
      const int head = ranges.head_for(std::max(d.box.w, d.box.h));
      const Index i = std::clamp<Index>(static_cast<Index>(std::floor(d.box.y * double(grid_h))), 0, grid_h - 1);
      const Index j = std::clamp<Index>(static_cast<Index>(std::floor(d.box.x * double(grid_w))), 0, grid_w - 1);
      int& slot = t.cell[head][static_cast<std::size_t>((Index(n) * grid_h + i) * grid_w + j)];
      if (slot >= 0 && t.boxes[static_cast<std::size_t>(slot)].box.area() >= d.box.area()) continue;
      t.boxes.push_back(d);
      slot = static_cast<int>(t.boxes.size() - 1);
    }
  return t;
}

struct LossBreakdown {
  double total = 0, box = 0, cls = 0, conf = 0;
  Index positives = 0;
};

template <typename Scalar>
struct LossResult {
  LossBreakdown loss;
  HeadGrids<Scalar> grads;  // d total / d raw grids
};

/// IoU of a predicted box against a fixed target, with d IoU / d (x, y, w, h)
/// of the prediction.
template <typename Scalar>
Scalar iou_with_grad(const std::array<Scalar, 4>& p, const Box& gt, std::array<Scalar, 4>& grad) {
  grad = {Scalar(0), Scalar(0), Scalar(0), Scalar(0)};
  const Scalar ax1 = p[0] - p[2] / 2, ax2 = p[0] + p[2] / 2, ay1 = p[1] - p[3] / 2, ay2 = p[1] + p[3] / 2;
  const Scalar bx1 = Scalar(gt.x1()), bx2 = Scalar(gt.x2()), by1 = Scalar(gt.y1()), by2 = Scalar(gt.y2());
  const Scalar iw = std::min(ax2, bx2) - std::max(ax1, bx1);
  const Scalar ih = std::min(ay2, by2) - std::max(ay1, by1);
  if (iw <= 0 || ih <= 0) return Scalar(0);
  const Scalar inter = iw * ih;
  const Scalar uni = p[2] * p[3] + Scalar(gt.area()) - inter;
  const Scalar d_inter = (uni + inter) / (uni * uni);
  const Scalar d_area = -inter / (uni * uni);
  const Scalar dix2 = ax2 < bx2 ? ih : Scalar(0), dix1 = ax1 > bx1 ? -ih : Scalar(0);
  const Scalar diy2 = ay2 < by2 ? iw : Scalar(0), diy1 = ay1 > by1 ? -iw : Scalar(0);
  grad[0] = d_inter * (dix2 + dix1);
  grad[1] = d_inter * (diy2 + diy1);
  grad[2] = d_inter * Scalar(0.5) * (dix2 - dix1) + d_area * p[3];
  grad[3] = d_inter * Scalar(0.5) * (diy2 - diy1) + d_area * p[2];
  return inter / uni;
}

namespace detail {

/// Binary cross-entropy on a logit, numerically stable.
template <typename Scalar>
Scalar bce_logit(Scalar t, Scalar target) {
  return std::max(t, Scalar(0)) - target * t + std::log1p(std::exp(-std::abs(t)));
}

}  // namespace detail

/// Composite loss L = L_box + L_class + L_conf (each scaled by its weight):
///   L_box   mean over positives of (1 - IoU(decoded, gt))
///   L_class mean BCE over positives x class channels
///   L_conf  sum over all cells of w * BCE(t_conf, positive) / cell count,
///           w = 1 on positives and weights.negative elsewhere.
template <typename Scalar>
LossResult<Scalar> detection_loss(const HeadGrids<Scalar>& grids, const Targets& targets, int num_classes,
                                  const LossWeights& weights = {}, bool want_grads = true) {
  LossResult<Scalar> r;
  const Index ch = 5 + num_classes;
  Index cells = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& g = grids[k];
    if (g.rank() != 4 || g.dim(0) != targets.batch || g.dim(1) != targets.grid_h || g.dim(2) != targets.grid_w ||
        g.dim(3) != ch)
      throw std::invalid_argument("detection_loss: grid " + shape_string(g.shape()) + " does not match targets");
    cells += g.dim(0) * g.dim(1) * g.dim(2);
    if (want_grads) r.grads[k] = Tensor<Scalar>::zeros_like(g);
  }
  const Index positives = targets.positives();
  r.loss.positives = positives;
  const double pos_norm = positives > 0 ? 1.0 / double(positives) : 0.0;
  const double cls_norm = pos_norm / double(num_classes);
  const double conf_norm = 1.0 / double(cells);
  double l_box = 0, l_cls = 0, l_conf = 0;

  for (std::size_t k = 0; k < 3; ++k) {
    const auto& g = grids[k];
    const Index gh = g.dim(1), gw = g.dim(2);
    for (Index n = 0; n < g.dim(0); ++n)
      for (Index i = 0; i < gh; ++i)
        for (Index j = 0; j < gw; ++j) {
          const Index cell = (n * gh + i) * gw + j;
          const Scalar* t = g.raw() + cell * ch;
          Scalar* dt = want_grads ? r.grads[k].raw() + cell * ch : nullptr;
          const int assigned = targets.cell[k][static_cast<std::size_t>(cell)];
          const bool positive = assigned >= 0;

          const Scalar conf_target = positive ? Scalar(1) : Scalar(0);
          const double cw = (positive ? 1.0 : weights.negative) * conf_norm;
          l_conf += cw * double(detail::bce_logit(t[4], conf_target));
          if (dt) dt[4] = Scalar(weights.conf * cw) * (sigmoid(t[4]) - conf_target);
          if (!positive) continue;

          const Detection& gt = targets.boxes[static_cast<std::size_t>(assigned)];
          const std::array<Scalar, 4> s{sigmoid(t[0]), sigmoid(t[1]), sigmoid(t[2]), sigmoid(t[3])};
          const std::array<Scalar, 4> pred{(Scalar(j) + s[0]) / Scalar(gw), (Scalar(i) + s[1]) / Scalar(gh), s[2], s[3]};
          std::array<Scalar, 4> d_iou;
          const Scalar overlap = iou_with_grad(pred, gt.box, d_iou);
          l_box += pos_norm * (1.0 - double(overlap));
          if (dt) {
            const std::array<Scalar, 4> chain{Scalar(1) / Scalar(gw), Scalar(1) / Scalar(gh), Scalar(1), Scalar(1)};
            for (int q = 0; q < 4; ++q)
              dt[q] = Scalar(-weights.box * pos_norm) * d_iou[q] * chain[q] * s[q] * (Scalar(1) - s[q]);
          }
          for (int c = 0; c < num_classes; ++c) {
            const Scalar y = c == gt.class_id ? Scalar(1) : Scalar(0);
            l_cls += cls_norm * double(detail::bce_logit(t[5 + c], y));
            if (dt) dt[5 + c] = Scalar(weights.cls * cls_norm) * (sigmoid(t[5 + c]) - y);
          }
        }
  }
  r.loss.box = weights.box * l_box;
  r.loss.cls = weights.cls * l_cls;
  r.loss.conf = weights.conf * l_conf;
  r.loss.total = r.loss.box + r.loss.cls + r.loss.conf;
  return r;
}

}  // namespace hotspot
