// SPDX-License-Identifier: Apache-2.0
//
// K-Means over object representations: k-means++ seeding, Lloyd refinement
// with single-point Hartigan moves at each Lloyd fixed point, count-weighted
// incremental updates, and co-cluster targets.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cds/numerics/tensor.hpp"

namespace cds::cluster {

// ceil(log2(num_objects)); throws ConfigError below 2.
int cluster_count(int num_objects);

struct ClusterState {
  Tensor<float> centroids;           // K x d
  std::vector<std::int64_t> counts;  // points absorbed per centroid

  std::size_t k() const { return counts.size(); }
  std::size_t dim() const { return centroids.cols(); }
  bool initialized() const { return !counts.empty(); }
  bool operator==(const ClusterState&) const = default;
};

struct KMeansOptions {
  int max_iter = 100;
  int restarts = 10;  // independent seedings; the lowest final SSE wins
};

struct KMeansReport {
  // SSE after seeding and after every Lloyd update, one list per restart.
  std::vector<std::vector<double>> sse_history;
  std::size_t best_run = 0;
  double best_sse = 0.0;
  bool converged = false;  // for the winning run
};

// Throws ConfigError when N < K or K < 2.
ClusterState kmeans_init(const Tensor<float>& points, std::size_t k, std::uint64_t seed,
                         const KMeansOptions& options = {}, KMeansReport* report = nullptr);

// Nearest centroid, ties to the lowest id. Throws ProtocolError when the state
// is uninitialized and ShapeError on a dimension mismatch.
int assign(const ClusterState& state, std::span<const float> v);
std::vector<int> assign_all(const ClusterState& state, const Tensor<float>& points);

// For each point in order: assign, bump the count, move the centroid by
// (point - centroid) / count.
void minibatch_update(ClusterState& state, const Tensor<float>& points);

// 1 when both vectors fall in the same cluster.
int specificity_target(const ClusterState& state, std::span<const float> v,
                       std::span<const float> v_hat);

// Sum of squared distances to the nearest centroid.
double sse(const ClusterState& state, const Tensor<float>& points);

}  // namespace cds::cluster
