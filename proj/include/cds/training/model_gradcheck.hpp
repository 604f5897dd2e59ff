// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cds/numerics/gradcheck.hpp"

namespace cds::train {

struct ModelGradCheckOptions {
  GradCheckOptions fd;
  double tol = 1e-4;
  std::uint64_t seed = 11;
  // Fault injection: scale the upstream gradient of this op (empty = none).
  std::string fault_op;
  double fault_factor = 1.0;
};

struct LossCheck {
  std::string loss;  // L_base, L_prim, L_den, L_refine, L_div
  GradCheckReport report;
  bool passed = false;
};

// Central-difference check of every loss with respect to every parameter of a
// tiny random model in double precision. Detached quantities are evaluated at
// the unperturbed parameters.
std::vector<LossCheck> gradcheck_losses(const ModelGradCheckOptions& options = {});

}  // namespace cds::train
