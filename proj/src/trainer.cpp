#include "hotspot/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hotspot {

double cosine_lr(int epoch, int epochs, double lr0, double lr_min) {
  if (epochs < 1 || epoch < 0 || epoch >= epochs)
    throw std::invalid_argument("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                                std::to_string(epochs) + ")");
  if (epochs == 1) return lr0;
  const double t = double(epoch) / double(epochs - 1);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

std::vector<GradPair<float>*> parameter_list(Model<float>& m) {
  std::vector<GradPair<float>*> out;
  for_each_parameter(m, [&](const std::string&, GradPair<float>& p) { out.push_back(&p); });
  return out;
}

AdamState make_adam_state(const std::vector<GradPair<float>*>& params) {
  AdamState s;
  for (const auto* p : params) {
    s.m.push_back(Tensorf::zeros_like(p->value));
    s.v.push_back(Tensorf::zeros_like(p->value));
  }
  return s;
}

bool adam_step(std::vector<GradPair<float>*>& params, AdamState& state, double lr, const AdamConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adam_step: state holds " + std::to_string(state.m.size()) + " moments for " +
                                std::to_string(params.size()) + " parameters");
  for (const auto* p : params) {
    if (!p->tracked()) throw std::invalid_argument("adam_step: parameter has no gradient");
    if (!p->grad.all_finite()) return false;
  }
  ++state.step;
  const double t = double(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t), c2 = 1.0 - std::pow(cfg.beta2, t);
  const float b1 = float(cfg.beta1), b2 = float(cfg.beta2);
  const float a1 = float(1.0 - cfg.beta1), a2 = float(1.0 - cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto g = p.grad.data().array();
    auto m = state.m[i].data().array();
    auto v = state.v[i].data().array();
    m = b1 * m + a1 * g;
    v = b2 * v + a2 * g.square();
    auto w = p.value.data().array();
    const float decay = float(lr * cfg.weight_decay);
    w -= decay * w;
    w -= float(lr) * (m / float(c1)) / ((v / float(c2)).sqrt() + float(cfg.epsilon));
  }
  return true;
}

void TrainConfig::validate() const {
  if (!(lr0 > 0) || lr_min < 0 || lr_min > lr0) throw std::invalid_argument("train: need 0 <= lr_min <= lr0, lr0 > 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch size must be positive");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be positive");
  if (eval_every < 1) throw std::invalid_argument("train: eval_every must be positive");
  if (!(eval_conf >= 0 && eval_conf < 1)) throw std::invalid_argument("train: eval_conf must be in [0, 1)");
}

LossBreakdown train_step(Model<float>& model, AdamState& state, const Tensorf& batch,
                         const std::vector<std::vector<Detection>>& gts, double lr, const TrainConfig& cfg,
                         bool* applied) {
  if (!batch.all_finite()) throw std::invalid_argument("train_step: batch contains non-finite pixels");
  ModelTrace<float> trace;
  HeadGrids<float> grids;
  try {
    grids = model_forward(model, batch, &trace);
  } catch (const NonFiniteError&) {
    // Activations overflowed inside the network.
    if (applied) *applied = false;
    LossBreakdown diverged;
    diverged.total = std::numeric_limits<double>::quiet_NaN();
    return diverged;
  }
  auto targets = assign_targets(gts, model.config.ranges, model.config.grid_h(), model.config.grid_w());
  auto result = detection_loss(grids, targets, model.config.num_classes, cfg.loss);
  if (!std::isfinite(result.loss.total)) {
    if (applied) *applied = false;
    return result.loss;
  }
  zero_grad(model);
  model_backward(model, trace, result.grads);
  auto params = parameter_list(model);
  const bool ok = adam_step(params, state, lr, cfg.adam);
  if (applied) *applied = ok;
  return result.loss;
}

TrainResult train(Model<float>& model, const DatasetSplit& train_split, const DatasetSplit& eval_split,
                  const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  train_split.validate();
  if (train_split.items.empty()) throw std::invalid_argument("train: training split '" + train_split.name + "' is empty");
  for (const auto& item : train_split.items)
    for (const auto& b : item.boxes)
      if (b.class_id >= model.config.num_classes)
        throw std::invalid_argument("train: " + item.id + " has class " + std::to_string(b.class_id) +
                                    " but the model has " + std::to_string(model.config.num_classes));
  const Index H = model.config.backbone.input_h, W = model.config.backbone.input_w;
  const bool augment = cfg.flip || cfg.crop;

  std::vector<Tensorf> cache;
  if (!augment)
    for (const auto& item : train_split.items) cache.push_back(preprocess(item.pixels, H, W));

  auto params = parameter_list(model);
  AdamState state = make_adam_state(params);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_split.items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  InferenceConfig icfg;
  icfg.conf_threshold = cfg.eval_conf;
  icfg.nms.iou_threshold = cfg.nms_iou;

  const bool write = !cfg.out_dir.empty();
  if (write) std::filesystem::create_directories(cfg.out_dir);

  TrainResult res;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr0, cfg.lr_min);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(cfg.batch_size));
      std::vector<Tensorf> owned;
      std::vector<const Tensorf*> ptrs;
      std::vector<std::vector<Detection>> gts;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        if (!augment) {
          ptrs.push_back(&cache[idx]);
          gts.push_back(train_split.items[idx].boxes);
          continue;
        }
        AnnotatedImage img = train_split.items[idx];
        if (cfg.flip) img = augment_flip(img, std::bernoulli_distribution(0.5)(rng));
        if (cfg.crop) img = augment_random_crop(img, rng);
        owned.push_back(preprocess(img.pixels, H, W));
        gts.push_back(std::move(img.boxes));
      }
      for (const auto& t : owned) ptrs.push_back(&t);
      const Tensorf batch = stack_batch(ptrs);
      bool applied = false;
      const LossBreakdown loss = train_step(model, state, batch, gts, lr, cfg, &applied);
      if (!std::isfinite(loss.total))
        throw TrainingDiverged("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                               std::to_string(res.steps));
      if (!applied) ++res.skipped_steps;
      ++res.steps;
      res.step_losses.push_back(loss.total);
      epoch_loss += loss.total;
      ++batches;
    }
    res.epochs_run = epoch + 1;
    const bool last = epoch + 1 == cfg.epochs;
    const bool do_eval = !eval_split.items.empty() && ((epoch + 1) % cfg.eval_every == 0 || last);
    std::string map_text = "-";
    if (do_eval) {
      res.last_report = evaluate_model(model, eval_split, icfg);
      res.curve.emplace_back(epoch + 1, res.last_report.map_value);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", res.last_report.map_value);
      map_text = buf;
      if (write) {
        epoch_curve_append(cfg.out_dir / "curve.txt", epoch + 1, res.last_report.map_value);
        if (res.last_report.map_value > res.best_map) save_checkpoint(cfg.out_dir / "best.ckpt", model, &state);
      }
      res.best_map = std::max(res.best_map, res.last_report.map_value);
    }
    if (write) save_checkpoint(cfg.out_dir / "latest.ckpt", model, &state);
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %d lr %.6g loss %.6f map %s\n", epoch + 1, lr,
                    epoch_loss / double(std::max<std::size_t>(batches, 1)), map_text.c_str());
      *log << buf << std::flush;
    }
  }
  return res;
}

}  // namespace hotspot
