// SPDX-License-Identifier: Apache-2.0
#include "cds/clustering/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "cds/common/error.hpp"
#include "cds/common/rng.hpp"
#include "cds/numerics/kernels.hpp"

namespace cds::cluster {

int cluster_count(int num_objects) {
  if (num_objects < 2) {
    throw ConfigError("cluster_count: need at least 2 objects, got " + std::to_string(num_objects));
  }
  int k = 0;
  while ((std::int64_t{1} << k) < num_objects) ++k;
  return k;
}

namespace {

struct Lloyd {
  std::vector<double> centroids;
  std::vector<int> assignment;
  std::vector<std::int64_t> sizes;
  std::vector<double> history;
  bool converged = false;
};

double assign_step(const std::vector<double>& pts, const std::vector<double>& cents, std::size_t n,
                   std::size_t k, std::size_t d, std::vector<int>& assignment,
                   std::vector<double>& dist) {
  kernels::nearest_centroid<double>(pts, cents, n, k, d, assignment, dist);
  double total = 0.0;
  for (double v : dist) total += v;
  return total;
}

double sse_of(const std::vector<double>& pts, const std::vector<double>& cents,
              const std::vector<int>& assignment, std::size_t d) {
  double total = 0.0;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const auto c = static_cast<std::size_t>(assignment[i]);
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = pts[i * d + j] - cents[c * d + j];
      total += diff * diff;
    }
  }
  return total;
}

std::vector<double> plus_plus(const std::vector<double>& pts, std::size_t n, std::size_t k,
                              std::size_t d, std::mt19937_64& rng) {
  std::vector<double> cents;
  cents.reserve(k * d);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  const std::size_t f = first(rng);
  cents.insert(cents.end(), pts.begin() + static_cast<std::ptrdiff_t>(f * d),
               pts.begin() + static_cast<std::ptrdiff_t>((f + 1) * d));
  std::vector<int> assignment(n);
  std::vector<double> dist(n);
  for (std::size_t c = 1; c < k; ++c) {
    assign_step(pts, cents, n, c, d, assignment, dist);
    double total = 0.0;
    for (double v : dist) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      std::discrete_distribution<std::size_t> choose(dist.begin(), dist.end());
      pick = choose(rng);
    } else {
      pick = first(rng);
    }
    cents.insert(cents.end(), pts.begin() + static_cast<std::ptrdiff_t>(pick * d),
                 pts.begin() + static_cast<std::ptrdiff_t>((pick + 1) * d));
  }
  return cents;
}

// Single-point moves that lower the SSE once centroids follow their members.
// Returns true if any point moved; centroids are left as exact member means.
bool hartigan_pass(const std::vector<double>& pts, std::vector<double>& cents,
                   std::vector<int>& assignment, std::size_t k, std::size_t d) {
  const std::size_t n = assignment.size();
  std::vector<double> sums(k * d, 0.0);
  std::vector<std::int64_t> sizes(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(assignment[i]);
    ++sizes[c];
    for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += pts[i * d + j];
  }
  auto dist_to_mean = [&](std::size_t i, std::size_t c) {
    double dd = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = pts[i * d + j] - sums[c * d + j] / static_cast<double>(sizes[c]);
      dd += diff * diff;
    }
    return dd;
  };
  bool moved = false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = static_cast<std::size_t>(assignment[i]);
    if (sizes[a] <= 1) continue;
    const double na = static_cast<double>(sizes[a]);
    const double leave = na / (na - 1.0) * dist_to_mean(i, a);
    std::size_t best = a;
    double best_gain = 1e-12 * std::max(1.0, leave);
    for (std::size_t b = 0; b < k; ++b) {
      if (b == a || sizes[b] == 0) continue;
      const double nb = static_cast<double>(sizes[b]);
      const double gain = leave - nb / (nb + 1.0) * dist_to_mean(i, b);
      if (gain > best_gain) {
        best_gain = gain;
        best = b;
      }
    }
    if (best == a) continue;
    for (std::size_t j = 0; j < d; ++j) {
      sums[a * d + j] -= pts[i * d + j];
      sums[best * d + j] += pts[i * d + j];
    }
    --sizes[a];
    ++sizes[best];
    assignment[i] = static_cast<int>(best);
    moved = true;
  }
  if (moved) {
    // Recompute means from scratch to avoid drift in the running sums.
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(assignment[i]);
      for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += pts[i * d + j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;
      for (std::size_t j = 0; j < d; ++j) cents[c * d + j] = sums[c * d + j] / static_cast<double>(sizes[c]);
    }
  }
  return moved;
}

Lloyd run_lloyd(const std::vector<double>& pts, std::vector<double> cents, std::size_t n,
                std::size_t k, std::size_t d, int max_iter) {
  Lloyd r;
  std::vector<int> prev;
  std::vector<double> dist(n);
  r.assignment.assign(n, 0);
  r.history.push_back(assign_step(pts, cents, n, k, d, r.assignment, dist));
  for (int it = 0; it < max_iter; ++it) {
    if (it > 0) {
      assign_step(pts, cents, n, k, d, r.assignment, dist);
      if (r.assignment == prev) {
        if (!hartigan_pass(pts, cents, r.assignment, k, d)) {
          r.converged = true;
          break;
        }
        r.history.push_back(sse_of(pts, cents, r.assignment, d));
        prev = r.assignment;
        continue;
      }
    }
    prev = r.assignment;
    std::vector<double> sums(k * d, 0.0);
    std::vector<std::int64_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(r.assignment[i]);
      ++sizes[c];
      for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += pts[i * d + j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;
      for (std::size_t j = 0; j < d; ++j) cents[c * d + j] = sums[c * d + j] / static_cast<double>(sizes[c]);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      // Reseed an empty cluster at the point farthest from its centroid.
      std::size_t far = 0;
      double best = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto a = static_cast<std::size_t>(r.assignment[i]);
        if (sizes[a] <= 1) continue;
        double dd = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = pts[i * d + j] - cents[a * d + j];
          dd += diff * diff;
        }
        if (dd > best) {
          best = dd;
          far = i;
        }
      }
      if (best < 0.0) continue;
      const auto old = static_cast<std::size_t>(r.assignment[far]);
      --sizes[old];
      ++sizes[c];
      r.assignment[far] = static_cast<int>(c);
      for (std::size_t j = 0; j < d; ++j) {
        cents[c * d + j] = pts[far * d + j];
        cents[old * d + j] = (cents[old * d + j] * static_cast<double>(sizes[old] + 1) - pts[far * d + j]) /
                             static_cast<double>(sizes[old]);
      }
      prev = r.assignment;
    }
    r.history.push_back(sse_of(pts, cents, r.assignment, d));
  }
  r.centroids = std::move(cents);
  r.sizes.assign(k, 0);
  for (int a : r.assignment) ++r.sizes[static_cast<std::size_t>(a)];
  return r;
}

void check_ready(const ClusterState& state, std::size_t dim, const char* what) {
  if (!state.initialized()) throw ProtocolError(std::string(what) + ": cluster state is uninitialized");
  if (dim != state.dim()) {
    throw ShapeError(std::string(what) + ": vector dimension " + std::to_string(dim) +
                     ", centroids have " + std::to_string(state.dim()));
  }
}

}  // namespace

ClusterState kmeans_init(const Tensor<float>& points, std::size_t k, std::uint64_t seed,
                         const KMeansOptions& options, KMeansReport* report) {
  const std::size_t n = points.rows(), d = points.cols();
  if (k < 2) throw ConfigError("kmeans_init: K must be >= 2");
  if (n < k) {
    throw ConfigError("kmeans_init: " + std::to_string(n) + " points cannot fill " +
                      std::to_string(k) + " clusters");
  }
  if (options.restarts < 1 || options.max_iter < 1) throw ConfigError("kmeans_init: bad options");
  if (!points.all_finite()) throw NumericError("kmeans_init: non-finite points");
  std::vector<double> pts(points.data().begin(), points.data().end());

  Lloyd best;
  double best_sse = std::numeric_limits<double>::infinity();
  std::size_t best_run = 0;
  KMeansReport rep;
  for (int r = 0; r < options.restarts; ++r) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    auto run = run_lloyd(pts, plus_plus(pts, n, k, d, rng), n, k, d, options.max_iter);
    rep.sse_history.push_back(run.history);
    if (run.history.back() < best_sse) {
      best_sse = run.history.back();
      best_run = static_cast<std::size_t>(r);
      best = std::move(run);
    }
  }
  rep.best_run = best_run;
  rep.best_sse = best_sse;
  rep.converged = best.converged;
  if (report) *report = std::move(rep);

  ClusterState state;
  state.centroids = Tensor<float>::matrix(k, d);
  for (std::size_t i = 0; i < k * d; ++i) state.centroids[i] = static_cast<float>(best.centroids[i]);
  state.counts = best.sizes;
  for (auto& c : state.counts) c = std::max<std::int64_t>(c, 1);
  return state;
}

int assign(const ClusterState& state, std::span<const float> v) {
  check_ready(state, v.size(), "assign");
  int id = 0;
  float dist = 0;
  kernels::nearest_centroid<float>(v, state.centroids.data(), 1, state.k(), state.dim(),
                                   std::span<int>(&id, 1), std::span<float>(&dist, 1));
  return id;
}

std::vector<int> assign_all(const ClusterState& state, const Tensor<float>& points) {
  check_ready(state, points.cols(), "assign");
  std::vector<int> ids(points.rows());
  std::vector<float> dist(points.rows());
  kernels::nearest_centroid<float>(points.data(), state.centroids.data(), points.rows(), state.k(),
                                   state.dim(), ids, dist);
  return ids;
}

void minibatch_update(ClusterState& state, const Tensor<float>& points) {
  check_ready(state, points.cols(), "minibatch_update");
  const std::size_t d = state.dim();
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const auto x = points.row(i);
    const auto c = static_cast<std::size_t>(assign(state, x));
    const auto count = ++state.counts[c];
    auto cent = state.centroids.row(c);
    for (std::size_t j = 0; j < d; ++j) cent[j] += (x[j] - cent[j]) / static_cast<float>(count);
  }
}

int specificity_target(const ClusterState& state, std::span<const float> v,
                       std::span<const float> v_hat) {
  return assign(state, v) == assign(state, v_hat) ? 1 : 0;
}

double sse(const ClusterState& state, const Tensor<float>& points) {
  check_ready(state, points.cols(), "sse");
  std::vector<int> ids(points.rows());
  std::vector<float> dist(points.rows());
  kernels::nearest_centroid<float>(points.data(), state.centroids.data(), points.rows(), state.k(),
                                   state.dim(), ids, dist);
  double total = 0.0;
  for (float v : dist) total += v;
  return total;
}

}  // namespace cds::cluster
