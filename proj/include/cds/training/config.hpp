// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "cds/model/model.hpp"

namespace cds::train {

// full: every loss and the penalty. no_specificity: three branches without
// the penalty or L_div. composition_only: L_base alone.
enum class Ablation { Full, NoSpecificity, CompositionOnly };

std::string ablation_name(Ablation a);   // "full", "no_specificity", "composition_only"
std::string ablation_label(Ablation a);  // "CDS", "3branch", "SPM"
std::optional<Ablation> parse_ablation(std::string_view name);

struct LossWeights {
  double base = 1.0;
  double prim = 1.0;
  double den = 1.0;
  double refine = 1.0;
  double div = 1.0;
  bool operator==(const LossWeights&) const = default;
};

struct TrainConfig {
  int epochs = 15;
  std::size_t batch_size = 64;
  double lr_repr = 5e-3;
  double lr_spec = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights weights;
  std::uint64_t shuffle_seed = 3;
  std::uint64_t cluster_seed = 4;
  Ablation ablation = Ablation::Full;
  model::ModelConfig model;

  // Throws ConfigError.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

}  // namespace cds::train
