// SPDX-License-Identifier: Apache-2.0
#include "cds/training/config.hpp"

#include <cmath>

#include "cds/common/error.hpp"

namespace cds::train {

std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::NoSpecificity: return "no_specificity";
    case Ablation::CompositionOnly: return "composition_only";
  }
  return "full";
}

std::string ablation_label(Ablation a) {
  switch (a) {
    case Ablation::Full: return "CDS";
    case Ablation::NoSpecificity: return "3branch";
    case Ablation::CompositionOnly: return "SPM";
  }
  return "CDS";
}

std::optional<Ablation> parse_ablation(std::string_view name) {
  for (auto a : {Ablation::Full, Ablation::NoSpecificity, Ablation::CompositionOnly}) {
    if (name == ablation_name(a)) return a;
  }
  return std::nullopt;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (epochs < 2) fail("epochs must be >= 2 (the first epoch trains representations only)");
  if (batch_size < 2) fail("batch_size must be >= 2");
  for (double lr : {lr_repr, lr_spec}) {
    if (!(lr > 0.0) || !std::isfinite(lr)) fail("learning rates must be positive and finite");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  for (double w : {weights.base, weights.prim, weights.den, weights.refine, weights.div}) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail("loss weights must be finite and non-negative");
  }
  model.validate();
}

}  // namespace cds::train
