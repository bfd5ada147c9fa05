#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dynaware/autodiff.hpp"

namespace dynaware {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  ad::Tensor<T> m;
  ad::Tensor<T> v;
  std::int64_t step = 0;
};

// One Adam update with bias correction:
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   w <- w - lr * m_hat / (sqrt(v_hat) + eps)
// Arithmetic is done in double and stored back in T.
template <typename T>
void adam_step(ad::Parameter<T>& param, AdamState<T>& state, double lr, const AdamConfig& config = {});

template <typename T>
class Adam {
 public:
  Adam(std::vector<ad::Parameter<T>*> params, AdamConfig config = {});
  void step(double lr);
  void zero_grad();
  std::int64_t steps() const { return steps_; }
  const std::vector<AdamState<T>>& state() const { return state_; }

 private:
  std::vector<ad::Parameter<T>*> params_;
  std::vector<AdamState<T>> state_;
  AdamConfig config_;
  std::int64_t steps_ = 0;
};

class ScheduleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// lr0 * (1 + cos(pi * step / total)) / 2 for 0 <= step <= total.
double cosine_lr(std::int64_t step, std::int64_t total, double lr0);

}  // namespace dynaware
