#pragma once

#include <string>
#include <vector>

#include "lesa/tensor.hpp"

namespace lesa {

// Named trainable tensor. Names are unique within one model and double as
// checkpoint keys.
struct Parameter {
  std::string name;
  Tensor value;
};

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
  int warmup_steps = 0;
};

// Standard Adam with bias correction and linear lr warmup: the effective
// rate at step t is lr * min(1, t / warmup_steps).
class Adam {
 public:
  Adam(std::vector<Parameter> params, AdamConfig config);

  void step();
  void zero_grad();

  // Rate the next step() call will use.
  float next_lr() const;
  long long steps_taken() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Parameter>& params() const { return params_; }

 private:
  std::vector<Parameter> params_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  AdamConfig cfg_;
  long long step_ = 0;
};

}  // namespace lesa
