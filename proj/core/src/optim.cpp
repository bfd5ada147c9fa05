#include "dynaware/optim.hpp"

#include <cmath>
#include <numbers>

namespace dynaware {

template <typename T>
void adam_step(ad::Parameter<T>& param, AdamState<T>& state, double lr, const AdamConfig& config) {
  const std::size_t n = param.value.size();
  if (param.grad.size() != n) throw ad::ShapeError("adam: gradient shape differs from parameter '" + param.name + "'");
  if (state.m.size() != n || state.v.size() != n) {
    if (state.step != 0) throw ad::ShapeError("adam: optimizer state shape differs from parameter '" + param.name + "'");
    state.m = ad::Tensor<T>(param.value.shape);
    state.v = ad::Tensor<T>(param.value.shape);
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = param.grad[i];
    const double m = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    const double v = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    state.m[i] = static_cast<T>(m);
    state.v[i] = static_cast<T>(v);
    param.value[i] = static_cast<T>(param.value[i] - lr * (m / c1) / (std::sqrt(v / c2) + config.eps));
  }
}

template <typename T>
Adam<T>::Adam(std::vector<ad::Parameter<T>*> params, AdamConfig config)
    : params_(std::move(params)), state_(params_.size()), config_(config) {}

template <typename T>
void Adam<T>::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) adam_step(*params_[i], state_[i], lr, config_);
  ++steps_;
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

double cosine_lr(std::int64_t step, std::int64_t total, double lr0) {
  if (total < 1) throw ScheduleError("cosine_lr: total steps must be >= 1");
  if (step < 0 || step > total) {
    throw ScheduleError("cosine_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total) + "]");
  }
  if (2 * step == total) return lr0 / 2.0;
  if (step == total) return 0.0;
  return lr0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total))) / 2.0;
}

template void adam_step<float>(ad::Parameter<float>&, AdamState<float>&, double, const AdamConfig&);
template void adam_step<double>(ad::Parameter<double>&, AdamState<double>&, double, const AdamConfig&);
template class Adam<float>;
template class Adam<double>;

}  // namespace dynaware
