#include "lesa/adam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "lesa/kernels.hpp"

namespace lesa {

Adam::Adam(std::vector<Parameter> params, AdamConfig config)
    : params_(std::move(params)), cfg_(config) {
  if (!(cfg_.lr > 0.0f) && cfg_.lr != 0.0f)
    throw std::invalid_argument("adam: lr must be >= 0");
  if (cfg_.beta1 < 0.0f || cfg_.beta1 >= 1.0f || cfg_.beta2 < 0.0f ||
      cfg_.beta2 >= 1.0f)
    throw std::invalid_argument("adam: betas must be in [0, 1)");
  if (cfg_.warmup_steps < 0)
    throw std::invalid_argument("adam: warmup_steps must be >= 0");
  std::unordered_set<std::string> names;
  for (const Parameter& p : params_) {
    if (!p.value.defined() || !p.value.requires_grad)
      throw std::invalid_argument("adam: parameter '" + p.name +
                                  "' is not a tracked tensor");
    if (!names.insert(p.name).second)
      throw std::invalid_argument("adam: duplicate parameter name '" + p.name +
                                  "'");
    m_.emplace_back(p.value.numel(), 0.0f);
    v_.emplace_back(p.value.numel(), 0.0f);
  }
}

float Adam::next_lr() const {
  const long long t = step_ + 1;
  if (cfg_.warmup_steps <= 0 || t >= cfg_.warmup_steps) return cfg_.lr;
  return cfg_.lr * static_cast<float>(t) /
         static_cast<float>(cfg_.warmup_steps);
}

void Adam::step() {
  const float lr_eff = next_lr();
  ++step_;
  const float bc1_inv =
      1.0f / (1.0f - std::pow(cfg_.beta1, static_cast<float>(step_)));
  const float bc2_inv =
      1.0f / (1.0f - std::pow(cfg_.beta2, static_cast<float>(step_)));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = params_[i];
    if (!p.value.grad)
      throw std::runtime_error("adam: parameter '" + p.name +
                               "' has no gradient buffer");
    kernels::active().adam_update(
        p.value.data->data(), p.value.grad->data(), m_[i].data(), v_[i].data(),
        static_cast<int>(p.value.numel()), lr_eff, cfg_.beta1, cfg_.beta2,
        cfg_.epsilon, bc1_inv, bc2_inv);
  }
}

void Adam::zero_grad() {
  for (Parameter& p : params_)
    if (p.value.grad) std::fill(p.value.grad->begin(), p.value.grad->end(), 0.0f);
}

}  // namespace lesa
