// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cds/numerics/tensor.hpp"

namespace cds {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// A parameter tensor paired with its gradient for one optimizer step.
template <typename T>
struct ParamGrad {
  std::string name;
  Tensor<T>* param;
  const Tensor<T>* grad;
};

// Bias-corrected Adam. Moments are created on the first step and must keep
// their shapes afterwards; the parameter list order is part of the state.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Validates every gradient before touching any parameter, so a failed step
  // leaves parameters and moments unchanged.
  void step(const std::vector<ParamGrad<T>>& params);

  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

  // Restores state saved from first_moments()/second_moments()/steps().
  void restore(std::vector<Tensor<T>> m, std::vector<Tensor<T>> v, std::uint64_t steps);

 private:
  AdamConfig config_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::uint64_t steps_ = 0;
};

}  // namespace cds
