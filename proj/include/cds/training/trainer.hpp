// SPDX-License-Identifier: Apache-2.0
//
// Two-phase schedule: one epoch of representation learning with the penalty
// off, K-Means over every training v_o, then per batch a representation step,
// a mini-batch centroid update, and a specificity step on L_div.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cds/clustering/kmeans.hpp"
#include "cds/data/dataset.hpp"
#include "cds/model/model.hpp"
#include "cds/numerics/adam.hpp"
#include "cds/training/config.hpp"
#include "json.hpp"

namespace cds::train {

struct TrainState {
  TrainConfig config;
  model::Model<float> model;
  Adam<float> adam_repr;
  Adam<float> adam_spec;
  cluster::ClusterState clusters;
  std::size_t d_raw = 0;
  int epoch = 0;  // completed epochs
};

TrainState init_state(const TrainConfig& config, const data::Dataset& ds);

struct EpochRecord {
  int epoch = 0;
  Ablation ablation = Ablation::Full;
  bool penalty = false;  // penalty active in this epoch
  // Batch means; nullopt for losses the run does not compute.
  double loss_base = 0.0;
  std::optional<double> loss_prim, loss_den, loss_refine, loss_div;
  int batches = 0;
  int div_steps = 0;
  int targets = 0;
  int target_ones = 0;
  std::optional<double> cluster_sse;  // over all training v_o at epoch end
  double grad_norm_repr = 0.0;        // mean L2 norm per step
  std::optional<double> grad_norm_spec;
  std::map<std::string, double> metrics;  // filled by the epoch callback
};

nlohmann::json to_json(const EpochRecord& r);

struct TrainHooks {
  // Runs after each epoch; may add metrics to the record.
  std::function<void(const TrainState&, EpochRecord&)> on_epoch;
  // Stop once this many epochs are complete (for interruption tests).
  std::optional<int> stop_after;
  // Appends one JSON line per epoch when set.
  std::optional<std::filesystem::path> log_path;
};

// Trains from state.epoch + 1 to config.epochs. Throws NumericError on a
// non-finite loss.
std::vector<EpochRecord> train(TrainState& state, const data::Dataset& ds, const TrainHooks& hooks = {});

// l2-normalized v_o for dataset rows, computed without gradients.
Tensor<float> object_embeddings(const model::Model<float>& m, const Tensor<float>& features,
                                std::span<const std::size_t> rows);

// Image tokens of every sample under the model's frozen image encoder.
Tensor<float> encode_features(const model::Model<float>& m, const data::Dataset& ds);

}  // namespace cds::train
