#pragma once

#include "hotspot/model.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace hotspot {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0005;  // decoupled
};

/// First/second moments per parameter, in for_each_parameter order.
struct AdamState {
  std::vector<Tensorf> m;
  std::vector<Tensorf> v;
  std::uint64_t step = 0;
};

/// lr_min + (lr0 - lr_min)(1 + cos(pi * epoch / (epochs - 1))) / 2. A single
/// epoch run stays at lr0.
double cosine_lr(int epoch, int epochs, double lr0, double lr_min = 0.0);

/// Bias-corrected Adam with decoupled weight decay on a list of parameters.
/// Returns false, leaving everything untouched, when any gradient is
/// non-finite.
bool adam_step(std::vector<GradPair<float>*>& params, AdamState& state, double lr, const AdamConfig& cfg);

/// Pointers to every model parameter in checkpoint order.
std::vector<GradPair<float>*> parameter_list(Model<float>& m);

AdamState make_adam_state(const std::vector<GradPair<float>*>& params);

}  // namespace hotspot
