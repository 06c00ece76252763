#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "prouter/numerics/tensor.hpp"

namespace prouter {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;

  // Zeroed moments shaped like params.
  static AdamState like(std::span<const Tensor> params);
};

// One bias-corrected Adam update over all parameter tensors.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               double lr, const AdamHyper& hyper = {});

struct ScheduleConfig {
  double initial_lr = 1e-3;
  int total_epochs = 400;
};

// Linear decay from initial_lr at epoch 0 to 0 at total_epochs.
[[nodiscard]] double lr_at(int epoch, const ScheduleConfig& schedule);

}  // namespace prouter
