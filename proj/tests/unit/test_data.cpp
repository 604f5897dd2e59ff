// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "cds/data/batching.hpp"
#include "cds/data/dataset_io.hpp"
#include "cds/data/synthetic.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cds;
using namespace cds::data;
using cds::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

DatasetFormatError::Kind load_error_kind(const std::filesystem::path& dir, std::string* msg = nullptr) {
  try {
    load_dataset(dir);
  } catch (const DatasetFormatError& e) {
    if (msg) *msg = e.what();
    return e.kind();
  }
  FAIL("load_dataset did not throw");
  return DatasetFormatError::Kind::BadJson;
}

}  // namespace

TEST_CASE("default synthetic spec has the expected scale and valid pair space") {
  const auto gen = generate_synthetic(SyntheticSpec{});
  const auto& ds = gen.dataset;
  CHECK(ds.vocab.num_objs() == 12);
  CHECK(ds.vocab.num_attrs() == 8);
  CHECK_NOTHROW(ds.validate());
  std::vector<Pair> both;
  std::set_intersection(ds.pairs.seen.begin(), ds.pairs.seen.end(), ds.pairs.unseen.begin(),
                        ds.pairs.unseen.end(), std::back_inserter(both));
  CHECK(both.empty());
  std::set<int> attrs, objs;
  for (Pair p : ds.pairs.seen) {
    attrs.insert(p.attr);
    objs.insert(p.obj);
  }
  CHECK(attrs.size() == 8);
  CHECK(objs.size() == 12);
  CHECK(!ds.indices(Split::Val).empty());
  CHECK(!ds.indices(Split::Test).empty());
}

TEST_CASE("each specific attribute co-occurs with exactly one planted cluster") {
  const auto gen = generate_synthetic(SyntheticSpec{});
  std::map<int, std::set<int>> clusters_of;
  for (const auto& s : gen.dataset.samples) {
    clusters_of[s.attr].insert(gen.truth.object_cluster[static_cast<std::size_t>(s.obj)]);
  }
  for (int a = 0; a < gen.dataset.vocab.num_attrs(); ++a) {
    if (gen.truth.is_specific(a)) {
      CHECK(clusters_of[a].size() == 1);
      CHECK(*clusters_of[a].begin() == gen.truth.attribute_home[static_cast<std::size_t>(a)]);
    } else {
      CHECK(clusters_of[a].size() > 1);
    }
  }
}

TEST_CASE("val and test contain both seen and unseen pairs") {
  const auto gen = generate_synthetic(SyntheticSpec{});
  const auto& ds = gen.dataset;
  for (Split split : {Split::Val, Split::Test}) {
    bool seen = false, unseen = false;
    for (std::size_t i : ds.indices(split)) {
      (ds.pairs.is_seen({ds.samples[i].attr, ds.samples[i].obj}) ? seen : unseen) = true;
    }
    CHECK(seen);
    CHECK(unseen);
  }
}

TEST_CASE("generation is a pure function of the spec") {
  SyntheticSpec spec;
  CHECK(generate_synthetic(spec).dataset == generate_synthetic(spec).dataset);
  spec.seed = 8;
  CHECK(!(generate_synthetic(spec).dataset == generate_synthetic(SyntheticSpec{}).dataset));
}

TEST_CASE("infeasible synthetic specs are rejected") {
  SyntheticSpec spec;
  spec.clusters = 1;
  CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
  spec = {};
  spec.general_attrs = 0;
  CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
  spec = {};
  spec.seen_fraction = 0.99;
  CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
}

TEST_CASE("save then load reproduces the dataset bit-exactly") {
  TempDir dir("data_rt");
  const auto ds = generate_synthetic(SyntheticSpec{}).dataset;
  save_dataset(ds, dir.path());
  for (const char* f : {"vocab.json", "pairs.json", "features.bin", "labels.csv"}) {
    CHECK(std::filesystem::exists(dir.path() / f));
  }
  const auto back = load_dataset(dir.path());
  CHECK(back == ds);
  const auto bytes = slurp(dir.path() / "features.bin");
  CHECK(bytes.size() == 8 + 4 * ds.samples.size() * ds.d_raw);
  CHECK(bytes.substr(0, 4) == "CDSF");
}

TEST_CASE("load errors are distinct") {
  TempDir dir("data_err");
  const auto ds = generate_synthetic(SyntheticSpec{}).dataset;
  save_dataset(ds, dir.path());
  const auto labels = slurp(dir.path() / "labels.csv");
  const auto features = slurp(dir.path() / "features.bin");
  const auto pairs = slurp(dir.path() / "pairs.json");

  SUBCASE("missing file") {
    std::filesystem::remove(dir.path() / "pairs.json");
    CHECK(load_error_kind(dir.path()) == DatasetFormatError::Kind::MissingFile);
  }
  SUBCASE("unknown attribute names the row") {
    auto edited = labels;
    // Corrupt the third data row's attribute.
    std::size_t line_start = 0;
    for (int i = 0; i < 3; ++i) line_start = edited.find('\n', line_start) + 1;
    const auto c1 = edited.find(',', line_start) + 1;
    const auto c2 = edited.find(',', c1);
    edited.replace(c1, c2 - c1, "no_such_attr");
    spit(dir.path() / "labels.csv", edited);
    std::string msg;
    CHECK(load_error_kind(dir.path(), &msg) == DatasetFormatError::Kind::UnknownPrimitive);
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("no_such_attr") != std::string::npos);
  }
  SUBCASE("feature payload not a multiple of 4*d_raw") {
    spit(dir.path() / "features.bin", features.substr(0, features.size() - 6));
    CHECK(load_error_kind(dir.path()) == DatasetFormatError::Kind::BadFeatureFile);
  }
  SUBCASE("feature count differs from label count") {
    spit(dir.path() / "features.bin", features.substr(0, features.size() - 4 * ds.d_raw));
    CHECK(load_error_kind(dir.path()) == DatasetFormatError::Kind::CountMismatch);
  }
  SUBCASE("pair referencing an unknown primitive") {
    auto edited = pairs;
    const auto obj = ds.vocab.objects()[0];
    edited.replace(edited.find("\"" + obj + "\""), obj.size() + 2, "\"mystery\"");
    spit(dir.path() / "pairs.json", edited);
    CHECK(load_error_kind(dir.path()) == DatasetFormatError::Kind::UnknownPrimitive);
  }
  SUBCASE("bad magic") {
    auto edited = features;
    edited[0] = 'X';
    spit(dir.path() / "features.bin", edited);
    CHECK(load_error_kind(dir.path()) == DatasetFormatError::Kind::BadFeatureFile);
  }
}

TEST_CASE("batch_iter partitions with a kept short batch") {
  std::vector<std::size_t> idx(10);
  for (std::size_t i = 0; i < 10; ++i) idx[i] = i;
  const auto batches = batch_iter(idx, 4, 11);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 4);
  CHECK(batches[1].size() == 4);
  CHECK(batches[2].size() == 2);
  std::vector<std::size_t> all;
  for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  CHECK(all == idx);
  CHECK(batch_iter(idx, 4, 11) == batches);
  CHECK(batch_iter(idx, 4, 12) != batches);
  CHECK_THROWS_AS(batch_iter(idx, 1, 0), ConfigError);
}

namespace {

Dataset toy_dataset(const std::vector<Pair>& labels) {
  Dataset ds;
  ds.vocab = Vocab({"a0", "a1", "a2"}, {"o0", "o1", "o2", "o3"});
  std::set<Pair> seen(labels.begin(), labels.end());
  ds.pairs.seen.assign(seen.begin(), seen.end());
  ds.d_raw = 1;
  for (Pair p : labels) ds.samples.push_back({{0.0f}, p.attr, p.obj, Split::Train});
  return ds;
}

}  // namespace

TEST_CASE("partner sampling contract and fallback") {
  // a2 only ever appears with o3, so it has no partner.
  const auto ds = toy_dataset({{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1}, {2, 3}, {0, 0}, {1, 3}});
  PartnerSampler sampler(ds, ds.indices(Split::Train));
  std::mt19937_64 rng(5);
  const std::vector<std::size_t> all = ds.indices(Split::Train);
  CHECK(!sampler.sample(5, all, rng).has_value());

  for (std::size_t x = 0; x < ds.samples.size(); ++x) {
    for (int t = 0; t < 20; ++t) {
      const auto p = sampler.sample(x, all, rng);
      if (!p) continue;
      CHECK(ds.samples[*p].attr == ds.samples[x].attr);
      CHECK(ds.samples[*p].obj != ds.samples[x].obj);
    }
  }
  // Batch {0, 6} has no eligible partner for sample 0 (same object); fall back to the pool.
  const std::vector<std::size_t> batch = {0, 6};
  const auto cands = sampler.candidates(0, batch);
  CHECK(cands == std::vector<std::size_t>{1, 2});
  // Within-batch candidates take precedence.
  const std::vector<std::size_t> batch2 = {0, 2, 3};
  CHECK(sampler.candidates(0, batch2) == std::vector<std::size_t>{2});
}

TEST_CASE("partner draws are uniform over eligible candidates") {
  // Sample 0 = (a0, o0); eligible: five samples of a0 with other objects.
  const auto ds = toy_dataset({{0, 0}, {0, 1}, {0, 2}, {0, 3}, {0, 1}, {0, 2}, {0, 0}, {1, 0}});
  PartnerSampler sampler(ds, ds.indices(Split::Train));
  std::mt19937_64 rng(2024);
  std::map<std::size_t, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++counts[*sampler.sample(0, {}, rng)];
  REQUIRE(counts.size() == 5);
  double chi2 = 0.0;
  const double expected = draws / 5.0;
  for (const auto& [idx, c] : counts) {
    CHECK(ds.samples[idx].obj != 0);
    chi2 += (c - expected) * (c - expected) / expected;
  }
  // Upper 1% point of chi-square with 4 degrees of freedom.
  CHECK(chi2 < 13.2767);
}
