// SPDX-License-Identifier: Apache-2.0
//
// JSON run configuration. Every section is optional; unknown keys and
// mistyped values are rejected with ConfigError naming the key path.
//
//   {"run_id": "...",
//    "synthetic": {SyntheticSpec fields},
//    "model": {"tau", "alpha", "gamma", "prob_floor", "penalty_mode": "probability"|"logit",
//              "d_emb", "d_joint", "tokens", "heads", "spec_hidden": [h1, h2, h3],
//              "init_std", "init_seed", "encoder_seed"},
//    "train": {"epochs", "batch_size", "lr_repr", "lr_spec", "beta1", "beta2", "adam_eps",
//              "loss_weights": {"base", "prim", "den", "refine", "div"},
//              "shuffle_seed", "cluster_seed", "ablation"},
//    "filter": {"t_low", "t_high", "keep_seen", "grid_levels"},
//    "gradcheck": {"eps", "floor", "max_coords", "seed", "tol"}}
#pragma once

#include <filesystem>
#include <string>

#include "cds/data/synthetic.hpp"
#include "cds/evaluation/evaluation.hpp"
#include "cds/training/config.hpp"
#include "cds/training/model_gradcheck.hpp"
#include "json.hpp"

namespace cds::config {

struct RunConfig {
  std::string run_id = "run";
  data::SyntheticSpec synthetic;
  train::TrainConfig train;  // includes the model config
  eval::FilterConfig filter;
  std::size_t grid_levels = 21;  // threshold grid over [0, 1]
  train::ModelGradCheckOptions gradcheck;

  // Validates every section; throws ConfigError.
  void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace cds::config
