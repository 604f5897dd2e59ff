// SPDX-License-Identifier: Apache-2.0
//
// Synthetic compositional dataset with planted specificity.
//
// Objects belong to `clusters` true clusters. A "specific" attribute has a home
// cluster and is only ever composed with that cluster's objects; a "general"
// attribute is composed with objects of every cluster. Raw features are
//   cluster center + object offset + attribute direction + noise,
// with every scale expressed as a fraction of the cluster separation
// sqrt(2 * d_raw) (the expected distance between two unit-variance centers).
#pragma once

#include <cstdint>
#include <vector>

#include "cds/data/dataset.hpp"

namespace cds::data {

struct SyntheticSpec {
  int clusters = 4;
  int objects_per_cluster = 3;
  int specific_attrs = 4;
  int general_attrs = 4;
  int train_samples_per_pair = 30;
  int eval_samples_per_pair = 10;
  // Fraction of the planted-feasible pairs that are seen in training.
  double seen_fraction = 0.6;
  double noise = 0.05;
  double object_spread = 0.04;
  double attribute_spread = 0.05;
  int d_raw = 32;
  std::uint64_t seed = 7;

  int num_objects() const { return clusters * objects_per_cluster; }
  int num_attributes() const { return specific_attrs + general_attrs; }
  bool operator==(const SyntheticSpec&) const = default;
};

// Ground truth the generator planted, for audits and acceptance checks.
struct PlantedTruth {
  std::vector<int> object_cluster;   // per object id
  std::vector<int> attribute_home;   // home cluster per attribute id, -1 if general
  std::vector<Pair> feasible;        // every plantable composition, sorted
  std::vector<float> cluster_centers;  // G x d_raw
  std::vector<float> object_features;  // noise-free object features, |O| x d_raw

  bool is_specific(int attr) const { return attribute_home[static_cast<std::size_t>(attr)] >= 0; }
};

struct SyntheticData {
  Dataset dataset;
  PlantedTruth truth;
};

// Pure function of the spec. Throws ConfigError when the spec is infeasible.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

void validate(const SyntheticSpec& spec);

}  // namespace cds::data
