// SPDX-License-Identifier: Apache-2.0
#include "cds/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include "cds/common/error.hpp"

namespace cds::data {

void validate(const SyntheticSpec& spec) {
  auto fail = [](const std::string& msg) { throw ConfigError("synthetic spec: " + msg); };
  if (spec.clusters < 2) fail("clusters must be >= 2");
  if (spec.objects_per_cluster < 1) fail("objects_per_cluster must be >= 1");
  if (spec.specific_attrs < 1) fail("need at least one specific attribute");
  if (spec.general_attrs < 1) fail("need at least one general attribute");
  if (spec.train_samples_per_pair < 1 || spec.eval_samples_per_pair < 1) {
    fail("samples per pair must be >= 1");
  }
  if (!(spec.seen_fraction > 0.0 && spec.seen_fraction < 1.0)) fail("seen_fraction must be in (0,1)");
  if (spec.d_raw < 1 || spec.d_raw > 65535) fail("d_raw must be in [1, 65535]");
  for (double v : {spec.noise, spec.object_spread, spec.attribute_spread}) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail("scales must be finite and non-negative");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const int n_obj = spec.num_objects();
  const int n_attr = spec.num_attributes();
  const auto d = static_cast<std::size_t>(spec.d_raw);
  const double separation = std::sqrt(2.0 * static_cast<double>(d));

  PlantedTruth truth;
  std::vector<std::string> obj_names, attr_names;
  for (int o = 0; o < n_obj; ++o) {
    const int g = o / spec.objects_per_cluster;
    truth.object_cluster.push_back(g);
    obj_names.push_back("object" + std::to_string(o) + "_c" + std::to_string(g));
  }
  for (int a = 0; a < n_attr; ++a) {
    if (a < spec.specific_attrs) {
      const int home = a % spec.clusters;
      truth.attribute_home.push_back(home);
      attr_names.push_back("specific" + std::to_string(a) + "_c" + std::to_string(home));
    } else {
      truth.attribute_home.push_back(-1);
      attr_names.push_back("general" + std::to_string(a - spec.specific_attrs));
    }
  }
  for (int a = 0; a < n_attr; ++a) {
    for (int o = 0; o < n_obj; ++o) {
      const int home = truth.attribute_home[static_cast<std::size_t>(a)];
      if (home < 0 || home == truth.object_cluster[static_cast<std::size_t>(o)]) {
        truth.feasible.push_back({a, o});
      }
    }
  }

  // Seen pairs: one per attribute and per object first (coverage), then fill
  // to the requested fraction in shuffled order.
  std::vector<Pair> order = truth.feasible;
  std::shuffle(order.begin(), order.end(), rng);
  std::set<Pair> seen;
  for (int a = 0; a < n_attr; ++a) {
    auto it = std::find_if(order.begin(), order.end(), [a](Pair p) { return p.attr == a; });
    seen.insert(*it);
  }
  for (int o = 0; o < n_obj; ++o) {
    if (std::any_of(seen.begin(), seen.end(), [o](Pair p) { return p.obj == o; })) continue;
    auto it = std::find_if(order.begin(), order.end(), [o](Pair p) { return p.obj == o; });
    if (it == order.end()) {
      throw ConfigError("synthetic spec: object " + std::to_string(o) + " has no feasible pair");
    }
    seen.insert(*it);
  }
  const auto target = static_cast<std::size_t>(
      std::lround(spec.seen_fraction * static_cast<double>(order.size())));
  for (Pair p : order) {
    if (seen.size() >= target) break;
    seen.insert(p);
  }
  std::vector<Pair> unseen;
  for (Pair p : order) {
    if (!seen.count(p)) unseen.push_back(p);
  }
  if (unseen.size() < 2) {
    throw ConfigError("synthetic spec: only " + std::to_string(unseen.size()) +
                      " unseen pair(s) remain; need at least 2 (lower seen_fraction)");
  }
  // `unseen` is in shuffled order: first half to validation, rest to test.
  const std::size_t half = unseen.size() / 2;
  std::vector<Pair> val_unseen(unseen.begin(), unseen.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<Pair> test_unseen(unseen.begin() + static_cast<std::ptrdiff_t>(half), unseen.end());
  std::sort(unseen.begin(), unseen.end());
  std::sort(val_unseen.begin(), val_unseen.end());
  std::sort(test_unseen.begin(), test_unseen.end());

  PairSpace pairs;
  pairs.seen.assign(seen.begin(), seen.end());
  pairs.unseen = unseen;
  pairs.val_pairs = pair_union(pairs.seen, val_unseen);
  pairs.test_pairs = pair_union(pairs.seen, test_unseen);

  auto draw = [&](double stddev) {
    std::vector<double> v(d);
    for (auto& x : v) x = stddev * normal(rng);
    return v;
  };
  std::vector<std::vector<double>> centers, offsets, directions;
  for (int g = 0; g < spec.clusters; ++g) centers.push_back(draw(1.0));
  for (int o = 0; o < n_obj; ++o) offsets.push_back(draw(spec.object_spread * separation));
  for (int a = 0; a < n_attr; ++a) directions.push_back(draw(spec.attribute_spread * separation));

  for (const auto& c : centers) {
    for (double v : c) truth.cluster_centers.push_back(static_cast<float>(v));
  }
  truth.object_features.resize(static_cast<std::size_t>(n_obj) * d);
  for (int o = 0; o < n_obj; ++o) {
    const auto& c = centers[static_cast<std::size_t>(truth.object_cluster[static_cast<std::size_t>(o)])];
    for (std::size_t e = 0; e < d; ++e) {
      truth.object_features[static_cast<std::size_t>(o) * d + e] =
          static_cast<float>(c[e] + offsets[static_cast<std::size_t>(o)][e]);
    }
  }

  Dataset ds;
  ds.vocab = Vocab(attr_names, obj_names);
  ds.pairs = pairs;
  ds.d_raw = d;
  const double noise = spec.noise * separation;
  auto emit = [&](Pair p, Split split, int count) {
    for (int i = 0; i < count; ++i) {
      Sample s;
      s.attr = p.attr;
      s.obj = p.obj;
      s.split = split;
      s.raw.resize(d);
      const auto& dir = directions[static_cast<std::size_t>(p.attr)];
      for (std::size_t e = 0; e < d; ++e) {
        const double base = truth.object_features[static_cast<std::size_t>(p.obj) * d + e];
        s.raw[e] = static_cast<float>(base + dir[e] + noise * normal(rng));
      }
      ds.samples.push_back(std::move(s));
    }
  };
  for (Pair p : pairs.seen) emit(p, Split::Train, spec.train_samples_per_pair);
  for (Pair p : pairs.val_pairs) emit(p, Split::Val, spec.eval_samples_per_pair);
  for (Pair p : pairs.test_pairs) emit(p, Split::Test, spec.eval_samples_per_pair);

  ds.validate();
  return {std::move(ds), std::move(truth)};
}

}  // namespace cds::data
