#include "hotspot/model.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace hotspot;
using hotspot::testing::random_tensor;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

BackboneFeatures<float> default_features(std::mt19937_64& rng) {
  return {random_tensor<float>({1, 112, 112, 64}, rng), random_tensor<float>({1, 56, 56, 128}, rng),
          random_tensor<float>({1, 28, 28, 256}, rng)};
}

}  // namespace

TEST(Aggregation, UnifiedMapShape) {
  std::mt19937_64 rng(1);
  const auto block = build_aggregation<float>({64, 128, 256}, 256, 28, 28, 0);
  AggregationTrace<float> trace;
  const auto out = aggregate(default_features(rng), block, &trace);
  EXPECT_EQ(out.shape(), (Shape{1, 28, 28, 256}));
  EXPECT_TRUE(trace.resized[0]);
  EXPECT_TRUE(trace.resized[1]);
  EXPECT_FALSE(trace.resized[2]);
  const auto wide = build_aggregation<float>({64, 128, 256}, 256, 56, 56, 0);
  EXPECT_EQ(aggregate(default_features(rng), wide).shape(), (Shape{1, 56, 56, 256}));
}

TEST(Aggregation, ZeroFeaturesGiveZeroMap) {
  const auto block = build_aggregation<float>({4, 8, 16}, 8, 4, 4, 0);
  const auto out = aggregate<float>({Tensorf({1, 16, 16, 4}), Tensorf({1, 8, 8, 8}), Tensorf({1, 4, 4, 16})}, block);
  EXPECT_EQ(out, Tensorf({1, 4, 4, 8}));
}

TEST(Aggregation, ConstantPropagatesThroughResizeAndProjection) {
  auto block = build_aggregation<float>({4, 8, 16}, 4, 4, 4, 0);
  for (auto* k : {&block.lateral[0], &block.lateral[1], &block.lateral[2], &block.fuse}) k->weight.value.set_zero();
  for (Index c = 0; c < 4; ++c) block.lateral[0].weight.value[c * 4 + c] = 1.0f;  // identity on the low tap
  block.fuse.weight.value[0] = 1.0f;                                              // one-hot: output 0 <- channel 0
  const float v = 0.625f;
  const auto out = aggregate<float>({Tensorf({1, 16, 16, 4}, v), Tensorf({1, 8, 8, 8}), Tensorf({1, 4, 4, 16})}, block);
  for (Index i = 0; i < 16; ++i) {
    EXPECT_EQ(out[i * 4], v);
    EXPECT_EQ(out[i * 4 + 1], 0.0f);
  }
}

TEST(Aggregation, ScalesAddLinearly) {
  std::mt19937_64 rng(2);
  auto block = build_aggregation<float>({4, 8, 16}, 8, 4, 4, 3);
  const auto a = random_tensor<float>({1, 16, 16, 4}, rng), b = random_tensor<float>({1, 8, 8, 8}, rng),
             c = random_tensor<float>({1, 4, 4, 16}, rng);
  const Tensorf za({1, 16, 16, 4}), zb({1, 8, 8, 8}), zc({1, 4, 4, 16});
  const auto all = aggregate<float>({a, b, c}, block);
  Tensorf sum(all.shape());
  sum.data() = aggregate<float>({a, zb, zc}, block).data() + aggregate<float>({za, b, zc}, block).data() +
               aggregate<float>({za, zb, c}, block).data();
  EXPECT_LT((sum.data() - all.data()).cwiseAbs().maxCoeff(), 1e-5f);
}

TEST(Aggregation, ChannelMismatchRejected) {
  const auto block = build_aggregation<float>({4, 8, 16}, 8, 4, 4, 0);
  EXPECT_THROW(aggregate<float>({Tensorf({1, 16, 16, 5}), Tensorf({1, 8, 8, 8}), Tensorf({1, 4, 4, 16})}, block),
               std::invalid_argument);
}

// ---------------------------------------------------------------------------

TEST(Heads, OutputChannelsAndZeroWeights) {
  auto hs = build_heads<float>(8, 1, SizeRanges{}, 0);
  EXPECT_EQ(hs.outputs(), 6);
  std::mt19937_64 rng(3);
  const auto fused = random_tensor<float>({2, 5, 5, 8}, rng);
  for (const auto& g : head_forward(fused, hs)) EXPECT_EQ(g.shape(), (Shape{2, 5, 5, 6}));
  for (auto& k : hs.heads) k.weight.value.set_zero();
  for (const auto& g : head_forward(fused, hs)) EXPECT_EQ(g, Tensorf(g.shape()));
  EXPECT_THROW(head_forward(Tensorf({1, 5, 5, 7}), hs), std::invalid_argument);
}

TEST(Decode, ZeroCellClosedForm) {
  const auto hs = build_heads<double>(4, 1, SizeRanges{}, 0);
  HeadGrids<double> grids;
  for (auto& g : grids) g = Tensord({1, 28, 28, 6}, -40.0);
  for (Index c = 0; c < 6; ++c) grids[0](0, 14, 14, c) = 0.0;
  const auto dets = decode(grids, hs, 0.1);
  ASSERT_EQ(dets.size(), 1u);
  ASSERT_EQ(dets[0].size(), 1u);
  const auto& d = dets[0][0];
  EXPECT_NEAR(d.box.x, 14.5 / 28.0, 1e-15);
  EXPECT_NEAR(d.box.y, 0.5179, 1e-4);
  EXPECT_DOUBLE_EQ(d.box.w, 0.5);
  EXPECT_DOUBLE_EQ(d.box.h, 0.5);
  EXPECT_DOUBLE_EQ(d.confidence, 0.25);
  EXPECT_TRUE(decode(grids, hs, 0.3)[0].empty());
}

TEST(Decode, SaturatedConfidenceEmitsNothing) {
  const auto hs = build_heads<double>(4, 1, SizeRanges{}, 0);
  HeadGrids<double> grids;
  for (auto& g : grids) g = Tensord({1, 4, 4, 6}, 0.0);
  for (auto& g : grids)
    for (Index i = 0; i < 16; ++i) g[i * 6 + 4] = -40.0;
  EXPECT_TRUE(decode(grids, hs, 1e-12)[0].empty());
}

TEST(Decode, HighConfidenceRetainedAndBestClassChosen) {
  const auto hs = build_heads<double>(4, 3, SizeRanges{}, 0);
  HeadGrids<double> grids;
  for (auto& g : grids) g = Tensord({1, 4, 4, 8}, -40.0);
  double* t = grids[1].raw() + (1 * 4 + 2) * 8;
  t[0] = t[1] = t[2] = t[3] = 0.0;
  t[4] = 40.0;
  t[5] = logit(0.3);
  t[6] = logit(0.87);
  t[7] = logit(0.5);
  const auto dets = decode(grids, hs, 0.5)[0];
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(dets[0].class_id, 1);
  EXPECT_NEAR(dets[0].confidence, 0.87, 1e-12);
}

TEST(Decode, OutputsStayInRange) {
  std::mt19937_64 rng(4);
  const auto hs = build_heads<float>(4, 2, SizeRanges{}, 0);
  for (int t = 0; t < 20; ++t) {
    HeadGrids<float> grids;
    for (auto& g : grids) g = random_tensor<float>({1, 6, 6, 7}, rng, -30, 30);
    const auto dets = decode(grids, hs, 0.0);
    for (const auto& d : dets[0]) {
      EXPECT_GE(d.box.x, 0.0);
      EXPECT_LE(d.box.x, 1.0);
      EXPECT_GE(d.box.y, 0.0);
      EXPECT_LE(d.box.y, 1.0);
      EXPECT_GT(d.box.w, 0.0);
      EXPECT_LE(d.box.w, 1.0);
      EXPECT_GE(d.confidence, 0.0);
      EXPECT_LE(d.confidence, 1.0);
    }
  }
}

TEST(Decode, InvertsEncodedBox) {
  const auto hs = build_heads<double>(4, 1, SizeRanges{}, 0);
  const Box gt{0.4321, 0.6789, 0.15, 0.22};
  HeadGrids<double> grids;
  for (auto& g : grids) g = Tensord({1, 28, 28, 6}, -40.0);
  const Index i = Index(std::floor(gt.y * 28)), j = Index(std::floor(gt.x * 28));
  double* t = grids[1].raw() + (i * 28 + j) * 6;
  t[0] = logit(gt.x * 28 - double(j));
  t[1] = logit(gt.y * 28 - double(i));
  t[2] = logit(gt.w);
  t[3] = logit(gt.h);
  t[4] = t[5] = 40.0;
  const auto dets = decode(grids, hs, 0.5)[0];
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_NEAR(dets[0].box.x, gt.x, 1e-12);
  EXPECT_NEAR(dets[0].box.y, gt.y, 1e-12);
  EXPECT_NEAR(dets[0].box.w, gt.w, 1e-12);
  EXPECT_NEAR(dets[0].box.h, gt.h, 1e-12);
}

// ---------------------------------------------------------------------------

TEST(Assign, CellAndHeadExamples) {
  const SizeRanges ranges;
  EXPECT_EQ(ranges.head_for(0.05), 0);
  EXPECT_EQ(ranges.head_for(0.1), 0);
  EXPECT_EQ(ranges.head_for(0.2), 1);
  EXPECT_EQ(ranges.head_for(0.3), 1);
  EXPECT_EQ(ranges.head_for(0.31), 2);
  EXPECT_EQ(ranges.head_for(1.0), 2);
  const auto t = assign_targets({{{{0.5, 0.5, 0.05, 0.04}, 0, 1}}}, ranges, 28, 28);
  EXPECT_EQ(t.cell[0][14 * 28 + 14], 0);
  EXPECT_EQ(t.positives(), 1);
  const auto edge = assign_targets({{{{1.0, 1.0, 0.5, 0.5}, 0, 1}}}, ranges, 28, 28);
  EXPECT_EQ(edge.cell[2][27 * 28 + 27], 0);
}

TEST(Assign, CollisionKeepsLargerArea) {
  const Detection small{{0.51, 0.51, 0.05, 0.05}, 0, 1}, larger{{0.52, 0.52, 0.08, 0.06}, 0, 1};
  for (const auto& order : {std::vector<Detection>{small, larger}, std::vector<Detection>{larger, small}}) {
    const auto t = assign_targets({order}, SizeRanges{}, 28, 28);
    EXPECT_EQ(t.positives(), 1);
    EXPECT_EQ(t.boxes[std::size_t(t.cell[0][14 * 28 + 14])], larger);
  }
  // Equal areas: the first stays.
  const Detection twin{{0.515, 0.515, 0.05, 0.05}, 0, 1};
  const auto t = assign_targets({{small, twin}}, SizeRanges{}, 28, 28);
  EXPECT_EQ(t.boxes[std::size_t(t.cell[0][14 * 28 + 14])], small);
}

TEST(Assign, EachGtAtMostOnePositive) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(0, 1), side(0.01, 0.9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Detection> gts;
    for (int k = 0; k < 10; ++k) gts.push_back({{pos(rng), pos(rng), side(rng), side(rng)}, 0, 1});
    const auto t = assign_targets({gts}, SizeRanges{}, 7, 7);
    std::vector<int> hits(t.boxes.size(), 0);
    for (const auto& c : t.cell)
      for (int v : c)
        if (v >= 0) ++hits[std::size_t(v)];
    for (int h : hits) EXPECT_LE(h, 1);
    EXPECT_LE(t.positives(), 10);
  }
}

TEST(Assign, DegenerateRejected) {
  EXPECT_THROW(assign_targets({{{{0.5, 0.5, 0.0, 0.1}, 0, 1}}}, SizeRanges{}, 4, 4), std::invalid_argument);
  SizeRanges bad;
  bad.upper = {0.3, 0.1, 1.0};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

// ---------------------------------------------------------------------------

TEST(Loss, EmptyImageClosedForm) {
  HeadGrids<double> grids;
  for (auto& g : grids) g = Tensord({1, 28, 28, 6});
  const auto t = assign_targets({{}}, SizeRanges{}, 28, 28);
  const auto r = detection_loss(grids, t, 1);
  EXPECT_EQ(r.loss.positives, 0);
  EXPECT_EQ(r.loss.box, 0.0);
  EXPECT_EQ(r.loss.cls, 0.0);
  EXPECT_NEAR(r.loss.conf, 0.1 * std::log(2.0), 1e-12);
  EXPECT_EQ(r.loss.total, r.loss.conf);
}

TEST(Loss, PerfectBoxContributesNothing) {
  const Box gt{0.3, 0.7, 0.2, 0.25};
  HeadGrids<double> grids;
  for (auto& g : grids) g = Tensord({1, 4, 4, 6});
  const Index i = 2, j = 1;
  double* t = grids[1].raw() + (i * 4 + j) * 6;
  t[0] = logit(gt.x * 4 - j);
  t[1] = logit(gt.y * 4 - i);
  t[2] = logit(gt.w);
  t[3] = logit(gt.h);
  const auto tg = assign_targets({{{gt, 0, 1}}}, SizeRanges{}, 4, 4);
  ASSERT_EQ(tg.cell[1][i * 4 + j], 0);
  const auto r = detection_loss(grids, tg, 1);
  EXPECT_NEAR(r.loss.box, 0.0, 1e-12);
  EXPECT_NEAR(r.loss.cls, std::log(2.0), 1e-12);
}

TEST(Loss, TotalIsSumOfNonNegativeParts) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> pos(0.05, 0.95), side(0.02, 0.8);
  for (int trial = 0; trial < 50; ++trial) {
    HeadGrids<float> grids;
    for (auto& g : grids) g = random_tensor<float>({2, 5, 5, 7}, rng, -4, 4);
    std::vector<std::vector<Detection>> gts(2);
    for (auto& img : gts)
      for (int k = 0; k < int(rng() % 4); ++k) img.push_back({{pos(rng), pos(rng), side(rng), side(rng)}, int(rng() % 2), 1});
    LossWeights w{0.5 + double(rng() % 3), 1.0, 2.0, 0.1};
    const auto r = detection_loss(grids, assign_targets(gts, SizeRanges{}, 5, 5), 2, w);
    EXPECT_NEAR(r.loss.total, r.loss.box + r.loss.cls + r.loss.conf, 1e-6);
    EXPECT_GE(r.loss.box, 0.0);
    EXPECT_GE(r.loss.cls, 0.0);
    EXPECT_GE(r.loss.conf, 0.0);
  }
}

TEST(Loss, BoxTermFallsAlongPathTowardGt) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.05, 0.95), side(0.05, 0.5);
  for (int path = 0; path < 200; ++path) {
    const Box gt{0.25 + 0.5 * u(rng) / 4, 0.25 + 0.5 * u(rng) / 4, side(rng), side(rng)};
    const auto tg = assign_targets({{{gt, 0, 1}}}, SizeRanges{}, 4, 4);
    Index k = 0, cell = -1;
    for (; k < 3; ++k) {
      const auto it = std::find(tg.cell[k].begin(), tg.cell[k].end(), 0);
      if (it != tg.cell[k].end()) {
        cell = it - tg.cell[k].begin();
        break;
      }
    }
    ASSERT_GE(cell, 0);
    const Index i = cell / 4, j = cell % 4;
    // Start: a random decoded box in the same cell; move linearly to the gt.
    const std::array<double, 4> target{gt.x * 4 - j, gt.y * 4 - i, gt.w, gt.h};
    const std::array<double, 4> start{u(rng), u(rng), side(rng), side(rng)};
    double prev = 2.0;
    for (int s = 0; s <= 20; ++s) {
      const double a = s / 20.0;
      HeadGrids<double> grids;
      for (auto& g : grids) g = Tensord({1, 4, 4, 6});
      double* t = grids[std::size_t(k)].raw() + cell * 6;
      for (int q = 0; q < 4; ++q) t[q] = logit(start[q] + a * (target[q] - start[q]));
      const double lbox = detection_loss(grids, tg, 1, {}, false).loss.box;
      EXPECT_LE(lbox, prev + 1e-12) << "path " << path << " step " << s;
      prev = lbox;
    }
    EXPECT_NEAR(prev, 0.0, 1e-9);
  }
}
