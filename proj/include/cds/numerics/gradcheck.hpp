// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cds/numerics/autodiff.hpp"

namespace cds {

struct NamedTensor {
  std::string name;
  Tensor<double> value;
};

// Builds a scalar loss on `tape` from parameter leaves (same order as the
// NamedTensor list handed to finite_difference_check).
using LossBuilder = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

// Optional tape hook applied before backward (e.g. fault injection).
using TapeHook = std::function<void(Tape<double>&)>;

struct GradCheckOptions {
  double eps = 1e-6;
  // Denominator floor of the relative error (times max(1, |loss|)), so
  // analytically-zero gradients compare on an absolute scale.
  double floor = 1e-6;
  // Tensors larger than this are checked on a random subsample of coordinates.
  std::size_t max_coords = 64;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t coords_checked = 0;
  double max_rel_err = 0.0;
  double max_abs_analytic = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  bool passed(double tol) const { return max_rel_err < tol; }
  std::vector<std::string> failing(double tol) const;
};

// Compares backward() gradients with central differences
// (f(x + eps) - f(x - eps)) / 2 eps, coordinate by coordinate.
GradCheckReport finite_difference_check(const LossBuilder& build,
                                        const std::vector<NamedTensor>& params,
                                        const GradCheckOptions& options = {},
                                        const TapeHook& hook = {});

}  // namespace cds
