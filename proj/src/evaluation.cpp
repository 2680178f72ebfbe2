#include "hotspot/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hotspot {

MatchResult match_detections(const std::vector<std::vector<Detection>>& preds,
                             const std::vector<std::vector<Detection>>& gts, double iou_threshold) {
  if (preds.size() != gts.size()) throw std::invalid_argument("match_detections: prediction/gt image counts differ");
  MatchResult result;
  for (std::size_t img = 0; img < preds.size(); ++img) {
    std::set<int> classes;
    for (const auto& g : gts[img]) {
      classes.insert(g.class_id);
      ++result.gt_per_class[g.class_id];
    }
    for (const auto& p : preds[img]) classes.insert(p.class_id);
    for (int cls : classes) {
      std::vector<std::size_t> order;
      for (std::size_t i = 0; i < preds[img].size(); ++i)
        if (preds[img][i].class_id == cls) order.push_back(i);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return preds[img][a].confidence > preds[img][b].confidence;
      });
      std::vector<std::size_t> gt_idx;
      for (std::size_t i = 0; i < gts[img].size(); ++i)
        if (gts[img][i].class_id == cls) gt_idx.push_back(i);
      std::vector<bool> claimed(gt_idx.size(), false);
      for (std::size_t pi : order) {
        const Detection& p = preds[img][pi];
        double best = -1;
        std::size_t best_g = 0;
        for (std::size_t g = 0; g < gt_idx.size(); ++g) {
          if (claimed[g]) continue;
          const double o = iou(p.box, gts[img][gt_idx[g]].box);
          if (o > best) {
            best = o;
            best_g = g;
          }
        }
        const bool tp = best >= iou_threshold;
        if (tp) claimed[best_g] = true;
        result.predictions.push_back({img, cls, p.confidence, tp});
      }
      result.false_negatives += static_cast<std::size_t>(std::count(claimed.begin(), claimed.end(), false));
    }
  }
  return result;
}

namespace {

void rank(std::vector<LabeledPrediction>& p) {
  std::stable_sort(p.begin(), p.end(), [](const auto& a, const auto& b) { return a.confidence > b.confidence; });
}

}  // namespace

std::vector<std::pair<double, double>> pr_curve(std::vector<LabeledPrediction> predictions, std::size_t total_gt) {
  rank(predictions);
  std::vector<std::pair<double, double>> pts;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    tp += predictions[i].true_positive;
    const double recall = total_gt ? double(tp) / double(total_gt) : 0.0;
    pts.emplace_back(recall, double(tp) / double(i + 1));
  }
  return pts;
}

double average_precision(std::vector<LabeledPrediction> predictions, std::size_t total_gt) {
  if (total_gt == 0) return predictions.empty() ? 1.0 : 0.0;
  auto pts = pr_curve(std::move(predictions), total_gt);
  // Envelope: precision made non-increasing from the right.
  for (std::size_t i = pts.size(); i-- > 1;) pts[i - 1].second = std::max(pts[i - 1].second, pts[i].second);
  double ap = 0, prev_recall = 0;
  for (const auto& [recall, precision] : pts) {
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

double mean_average_precision(const std::vector<double>& per_class_ap) {
  if (per_class_ap.empty()) throw std::invalid_argument("mean_average_precision: no classes");
  return std::accumulate(per_class_ap.begin(), per_class_ap.end(), 0.0) / double(per_class_ap.size());
}

EvalReport evaluate(const std::vector<std::vector<Detection>>& preds, const std::vector<std::vector<Detection>>& gts,
                    int num_classes, double iou_threshold, double operating_threshold) {
  if (num_classes < 1) throw std::invalid_argument("evaluate: num_classes must be >= 1");
  EvalReport r;
  r.iou_threshold = iou_threshold;
  r.operating_threshold = operating_threshold;
  const MatchResult m = match_detections(preds, gts, iou_threshold);
  std::vector<double> aps;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<LabeledPrediction> mine;
    for (const auto& p : m.predictions)
      if (p.class_id == c) mine.push_back(p);
    const auto it = m.gt_per_class.find(c);
    const std::size_t n_gt = it == m.gt_per_class.end() ? 0 : it->second;
    r.per_class_ap[c] = average_precision(std::move(mine), n_gt);
    aps.push_back(r.per_class_ap[c]);
  }
  r.map_value = mean_average_precision(aps);
  std::size_t total_gt = 0;
  for (const auto& [c, n] : m.gt_per_class) total_gt += n;
  r.pr_points = pr_curve(m.predictions, total_gt);

  // Operating-point counts come from a separate match of the thresholded set.
  std::vector<std::vector<Detection>> kept(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (const auto& p : preds[i])
      if (p.confidence >= operating_threshold) kept[i].push_back(p);
  const MatchResult op = match_detections(kept, gts, iou_threshold);
  for (const auto& p : op.predictions) (p.true_positive ? r.counts.tp : r.counts.fp)++;
  r.counts.fn = op.false_negatives;
  return r;
}

std::string summary_line(const EvalReport& report) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "map@%.2f %.6f classes %zu tp %zu fp %zu fn %zu", report.iou_threshold,
                report.map_value, report.per_class_ap.size(), report.counts.tp, report.counts.fp, report.counts.fn);
  return buf;
}

void write_report(const EvalReport& report, std::ostream& os) {
  os << std::fixed << std::setprecision(4);
  os << "iou threshold     " << report.iou_threshold << '\n';
  os << "operating conf    " << report.operating_threshold << '\n';
  for (const auto& [c, ap] : report.per_class_ap) os << "AP class " << c << "        " << ap << '\n';
  os << "mAP               " << report.map_value << " (" << std::setprecision(1) << report.map_value * 100.0 << "%)\n";
  os << "TP " << report.counts.tp << "  FP " << report.counts.fp << "  FN " << report.counts.fn << '\n';
}

std::vector<std::pair<int, double>> read_epoch_curve(const std::filesystem::path& path) {
  std::vector<std::pair<int, double>> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    int e;
    double v;
    if (ls >> e >> v) rows.emplace_back(e, v);
  }
  return rows;
}

void epoch_curve_append(const std::filesystem::path& path, int epoch, double map_value) {
  if (epoch < 1) throw std::invalid_argument("epoch_curve_append: epoch must be >= 1");
  auto rows = read_epoch_curve(path);
  auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.first == epoch; });
  if (it != rows.end()) it->second = map_value;
  else rows.emplace_back(epoch, map_value);
  std::sort(rows.begin(), rows.end());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot write epoch curve");
  out << std::setprecision(17);
  for (const auto& [e, v] : rows) out << e << ' ' << v << '\n';
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace hotspot
