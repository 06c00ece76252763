#include "prouter/numerics/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace prouter {

AdamState AdamState::like(std::span<const Tensor> params) {
  AdamState s;
  for (const Tensor& p : params) {
    s.m.emplace_back(p.rows(), p.cols());
    s.v.emplace_back(p.rows(), p.cols());
  }
  return s;
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               double lr, const AdamHyper& hyper) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], grads[i], "adam_step");
    require_same_shape(params[i], state.m[i], "adam_step");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * g[k];
      v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + hyper.eps);
    }
  }
}

double lr_at(int epoch, const ScheduleConfig& schedule) {
  if (schedule.initial_lr <= 0.0 || schedule.total_epochs <= 0) {
    throw std::invalid_argument("lr_at: schedule needs initial_lr > 0 and total_epochs > 0");
  }
  if (epoch < 0 || epoch > schedule.total_epochs) {
    throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(schedule.total_epochs) + "]");
  }
  return schedule.initial_lr *
         (1.0 - static_cast<double>(epoch) / static_cast<double>(schedule.total_epochs));
}

}  // namespace prouter
