// SPDX-License-Identifier: Apache-2.0
#include "cds/numerics/adam.hpp"

#include <cmath>

namespace cds {

template <typename T>
void Adam<T>::step(const std::vector<ParamGrad<T>>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.param->shape(), T(0));
      v_.emplace_back(p.param->shape(), T(0));
    }
  }
  if (m_.size() != params.size()) {
    throw ShapeError("adam: state holds " + std::to_string(m_.size()) + " tensors, step got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.param->shape() != m_[i].shape() || p.grad->shape() != p.param->shape()) {
      throw ShapeError("adam: shape mismatch for parameter '" + p.name + "': param " +
                       shape_str(p.param->shape()) + ", grad " + shape_str(p.grad->shape()) +
                       ", moment " + shape_str(m_[i].shape()));
    }
    if (!p.grad->all_finite()) {
      throw NumericError("adam: non-finite gradient for parameter '" + p.name + "'");
    }
  }

  ++steps_;
  const double t = static_cast<double>(steps_);
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(config_.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(config_.beta2, t));
  const T lr = static_cast<T>(config_.lr);
  const T eps = static_cast<T>(config_.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& x = *params[i].param;
    const auto& g = *params[i].grad;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < x.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const T mhat = m[j] / c1;
      const T vhat = v[j] / c2;
      x[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename T>
void Adam<T>::restore(std::vector<Tensor<T>> m, std::vector<Tensor<T>> v,
                      std::uint64_t steps) {
  if (m.size() != v.size()) {
    throw ShapeError("adam: restore with " + std::to_string(m.size()) + " first and " +
                     std::to_string(v.size()) + " second moments");
  }
  m_ = std::move(m);
  v_ = std::move(v);
  steps_ = steps;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace cds
