// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <fstream>
#include <iterator>

#include "cds/data/synthetic.hpp"
#include "cds/numerics/ops.hpp"
#include "cds/training/checkpoint.hpp"
#include "cds/training/model_gradcheck.hpp"
#include "cds/training/trainer.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cds;
using namespace cds::train;

namespace {

const data::SyntheticData& planted() {
  static const auto sd = data::generate_synthetic({});
  return sd;
}

TrainConfig short_config(int epochs = 3) {
  TrainConfig c;
  c.epochs = epochs;
  return c;
}

template <typename F>
std::vector<Tensor<float>> tensors(const model::Params<float>& p, F&& keep) {
  std::vector<Tensor<float>> out;
  p.visit([&](const char* name, const Tensor<float>& t) {
    if (keep(std::string(name))) out.push_back(t);
  });
  return out;
}

bool same(const std::vector<Tensor<float>>& a, const std::vector<Tensor<float>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!bitwise_equal(a[i], b[i])) return false;
  }
  return true;
}

bool is_spec(const std::string& n) { return n.rfind("spec.", 0) == 0; }
bool is_repr(const std::string& n) { return !is_spec(n); }
bool is_composition(const std::string& n) { return n.rfind("repr.comp_", 0) == 0; }

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> dumps(const std::vector<EpochRecord>& log) {
  std::vector<std::string> out;
  for (const auto& r : log) out.push_back(to_json(r).dump());
  return out;
}

}  // namespace

TEST_CASE("config validation rejects a single epoch and bad learning rates") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.epochs = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.lr_spec = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_ablation("composition_only") == Ablation::CompositionOnly);
  CHECK_FALSE(parse_ablation("cbs").has_value());
}

TEST_CASE("the first epoch leaves the specificity network at initialization") {
  const auto& ds = planted().dataset;
  auto s = init_state(short_config(), ds);
  const auto spec0 = tensors(s.model.params, is_spec);
  const auto repr0 = tensors(s.model.params, is_repr);
  TrainHooks h;
  h.stop_after = 1;
  const auto log = train::train(s, ds, h);
  REQUIRE(log.size() == 1);
  CHECK(same(tensors(s.model.params, is_spec), spec0));
  CHECK_FALSE(same(tensors(s.model.params, is_repr), repr0));
  CHECK_FALSE(log[0].penalty);
  CHECK_FALSE(log[0].loss_div.has_value());
  CHECK(s.clusters.initialized());
  CHECK(s.clusters.k() == 4);
  CHECK(s.adam_spec.steps() == 0);
}

TEST_CASE("composition-only training touches only the composition prompt") {
  const auto& ds = planted().dataset;
  auto c = short_config();
  c.ablation = Ablation::CompositionOnly;
  auto s = init_state(c, ds);
  auto other = [](const std::string& n) { return !is_composition(n); };
  const auto fixed0 = tensors(s.model.params, other);
  const auto comp0 = tensors(s.model.params, is_composition);
  const auto log = train::train(s, ds);
  CHECK(same(tensors(s.model.params, other), fixed0));
  CHECK_FALSE(same(tensors(s.model.params, is_composition), comp0));
  CHECK_FALSE(s.clusters.initialized());
  for (const auto& r : log) {
    const auto j = to_json(r);
    CHECK(j["label"] == "SPM");
    CHECK(j["loss_prim"].is_null());
    CHECK(j["loss_den"].is_null());
    CHECK(j["loss_refine"].is_null());
    CHECK(j["loss_div"].is_null());
  }
}

TEST_CASE("no_specificity equals a full run with zero penalty on every representation tensor") {
  const auto& ds = planted().dataset;
  auto c = short_config();
  c.ablation = Ablation::NoSpecificity;
  auto a = init_state(c, ds);
  train::train(a, ds);
  c.ablation = Ablation::Full;
  c.model.gamma = 0.0;
  auto b = init_state(c, ds);
  train::train(b, ds);
  CHECK(same(tensors(a.model.params, is_repr), tensors(b.model.params, is_repr)));
  CHECK(same(tensors(a.model.params, is_spec), tensors(init_state(c, ds).model.params, is_spec)));
  CHECK(b.adam_spec.steps() > 0);
}

TEST_CASE("phase separation: each optimizer step moves only its own parameter group") {
  const auto& ds = planted().dataset;
  auto s = init_state(short_config(), ds);
  TrainHooks h;
  h.stop_after = 1;
  train::train(s, ds, h);
  const auto features = encode_features(s.model, ds);
  const std::vector<std::size_t> rows = {0, 40, 80, 120, 160, 200};
  model::BatchInput<float> in;
  in.tokens = model::gather_images<float>(features, rows, s.model.seq());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& smp = ds.samples[rows[i]];
    in.attr.push_back(smp.attr);
    in.obj.push_back(smp.obj);
    const auto it = std::lower_bound(ds.pairs.seen.begin(), ds.pairs.seen.end(), model::Pair{smp.attr, smp.obj});
    in.comp_label.push_back(static_cast<int>(it - ds.pairs.seen.begin()));
    in.targets.push_back({i, static_cast<int>(i % 2)});
  }
  auto step = [&](bool repr, bool spec) {
    Tape<float> tape;
    const auto pv = model::bind(tape, s.model.params, true, true);
    model::Graph<float> g(s.model, tape, pv);
    model::LossOptions opt;
    opt.gamma = 0.125;
    const auto L = model::losses(g, in, ds.pairs.seen, opt);
    tape.backward(repr ? L.representation : L.div);
    std::vector<Var<float>> vars = {pv.comp_prefix, pv.comp_attr, pv.comp_obj, pv.prim_attr, pv.prim_obj};
    vars.insert(vars.end(), pv.adapter_a.begin(), pv.adapter_a.end());
    vars.insert(vars.end(), pv.adapter_o.begin(), pv.adapter_o.end());
    for (std::size_t l = 0; l < 4; ++l) {
      vars.push_back(pv.spec_w[l]);
      vars.push_back(pv.spec_b[l]);
    }
    std::vector<ParamGrad<float>> pg;
    std::size_t i = 0;
    s.model.params.visit([&](const char* n, Tensor<float>& t) {
      if (is_spec(n) ? spec : repr) pg.push_back({n, &t, &vars[i].grad()});
      ++i;
    });
    Adam<float>(AdamConfig{1e-2}).step(pg);
  };
  // Every tensor steps; the other group's gradient must be exactly zero.
  const auto spec0 = tensors(s.model.params, is_spec);
  step(true, true);
  CHECK(same(tensors(s.model.params, is_spec), spec0));
  const auto repr0 = tensors(s.model.params, is_repr);
  {
    // L_div alone.
    Tape<float> tape;
    const auto pv = model::bind(tape, s.model.params, true, true);
    model::Graph<float> g(s.model, tape, pv);
    auto div = model::specificity_loss(g, in.attr, in.obj, in.targets);
    REQUIRE(div.has_value());
    tape.backward(*div);
    for (auto v : {pv.comp_prefix, pv.comp_attr, pv.comp_obj, pv.prim_attr, pv.prim_obj}) {
      for (float x : v.grad().data()) REQUIRE(x == 0.0f);
    }
    for (const auto& arr : {pv.adapter_a, pv.adapter_o}) {
      for (auto v : arr) {
        for (float x : v.grad().data()) REQUIRE(x == 0.0f);
      }
    }
  }
  step(false, true);
  CHECK(same(tensors(s.model.params, is_repr), repr0));
  CHECK_FALSE(same(tensors(s.model.params, is_spec), spec0));
}

TEST_CASE("epoch records carry every key with finite losses") {
  const auto& ds = planted().dataset;
  auto s = init_state(short_config(), ds);
  const auto log = train::train(s, ds);
  REQUIRE(log.size() == 3);
  for (const auto& r : log) {
    const auto j = to_json(r);
    for (const char* key : {"epoch", "mode", "label", "penalty", "loss_base", "loss_prim", "loss_den",
                            "loss_refine", "loss_div", "batches", "div_steps", "targets", "target_ones",
                            "target_ones_fraction", "cluster_sse", "grad_norm_repr", "grad_norm_spec",
                            "metrics"}) {
      CHECK_MESSAGE(j.contains(key), key);
    }
    for (const char* key : {"loss_base", "loss_prim", "loss_den", "loss_refine", "cluster_sse"}) {
      CHECK(std::isfinite(j[key].get<double>()));
    }
  }
  CHECK(log[1].penalty);
  CHECK(log[1].div_steps == log[1].batches);
  CHECK(log[1].targets > 0);
  CHECK(std::isfinite(*log[1].loss_div));
}

TEST_CASE("the default run lowers the mean denoising loss after epoch 2") {
  const auto& ds = planted().dataset;
  auto s = init_state(TrainConfig{}, ds);
  const auto log = train::train(s, ds);
  REQUIRE(log.size() == 15);
  CHECK(*log.back().loss_den < *log[1].loss_den);
}

TEST_CASE("identical seeds give identical logs and byte-identical checkpoints") {
  const auto& ds = planted().dataset;
  testing::TempDir dir("train_det");
  auto a = init_state(short_config(), ds);
  auto b = init_state(short_config(), ds);
  const auto la = train::train(a, ds);
  const auto lb = train::train(b, ds);
  CHECK(dumps(la) == dumps(lb));
  save_checkpoint(a, dir.path() / "a.ckpt");
  save_checkpoint(b, dir.path() / "b.ckpt");
  CHECK(read_bytes(dir.path() / "a.ckpt") == read_bytes(dir.path() / "b.ckpt"));

  auto c = short_config();
  c.shuffle_seed = 99;
  auto d = init_state(c, ds);
  CHECK(dumps(train::train(d, ds)) != dumps(la));
}

TEST_CASE("checkpoint round-trip reproduces the state bit for bit") {
  const auto& ds = planted().dataset;
  testing::TempDir dir("train_rt");
  auto c = short_config();
  c.model.gamma = 0.3;
  c.shuffle_seed = (1ull << 60) + 5;
  c.lr_repr = 0.1 + 1e-12;
  auto s = init_state(c, ds);
  train::train(s, ds);
  save_checkpoint(s, dir.path() / "s.ckpt");
  const auto r = load_checkpoint(dir.path() / "s.ckpt");
  CHECK(r.config == s.config);
  CHECK(r.epoch == s.epoch);
  CHECK(r.d_raw == s.d_raw);
  CHECK(model::bitwise_equal(r.model.params, s.model.params));
  CHECK(r.clusters == s.clusters);
  for (const auto* pair : {&r.adam_repr, &r.adam_spec}) {
    const auto& orig = pair == &r.adam_repr ? s.adam_repr : s.adam_spec;
    CHECK(pair->steps() == orig.steps());
    REQUIRE(pair->first_moments().size() == orig.first_moments().size());
    for (std::size_t i = 0; i < orig.first_moments().size(); ++i) {
      CHECK(bitwise_equal(pair->first_moments()[i], orig.first_moments()[i]));
      CHECK(bitwise_equal(pair->second_moments()[i], orig.second_moments()[i]));
    }
  }
  save_checkpoint(r, dir.path() / "r.ckpt");
  CHECK(read_bytes(dir.path() / "r.ckpt") == read_bytes(dir.path() / "s.ckpt"));
}

TEST_CASE("resuming from a checkpoint reproduces the uninterrupted run") {
  const auto& ds = planted().dataset;
  testing::TempDir dir("train_resume");
  auto full = init_state(short_config(4), ds);
  const auto uninterrupted = train::train(full, ds);

  for (int cut : {1, 2}) {
    auto part = init_state(short_config(4), ds);
    TrainHooks h;
    h.stop_after = cut;
    auto head = train::train(part, ds, h);
    REQUIRE(static_cast<int>(head.size()) == cut);
    save_checkpoint(part, dir.path() / "mid.ckpt");
    auto resumed = load_checkpoint(dir.path() / "mid.ckpt");
    auto tail = train::train(resumed, ds);
    head.insert(head.end(), tail.begin(), tail.end());
    CHECK(dumps(head) == dumps(uninterrupted));
    save_checkpoint(resumed, dir.path() / "end_resumed.ckpt");
    save_checkpoint(full, dir.path() / "end_full.ckpt");
    CHECK(read_bytes(dir.path() / "end_resumed.ckpt") == read_bytes(dir.path() / "end_full.ckpt"));
  }
}

TEST_CASE("corrupt checkpoints raise distinct errors") {
  const auto& ds = planted().dataset;
  testing::TempDir dir("train_bad");
  auto s = init_state(short_config(), ds);
  const auto good = dir.path() / "good.ckpt";
  save_checkpoint(s, good);
  const auto bytes = read_bytes(good);
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir.path() / name, std::ios::binary) << content;
    return dir.path() / name;
  };
  auto kind_of = [](const std::filesystem::path& p) {
    try {
      load_checkpoint(p);
    } catch (const CheckpointError& e) {
      return static_cast<int>(e.kind());
    }
    return -1;
  };
  std::string bad_magic = bytes;
  bad_magic[3] = 'X';
  CHECK(kind_of(write("magic.ckpt", bad_magic)) == static_cast<int>(CheckpointError::Kind::NotACheckpoint));
  try {
    load_checkpoint(dir.path() / "magic.ckpt");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("not a checkpoint") != std::string::npos);
  }
  std::string bad_version = bytes;
  bad_version[4] = 2;
  CHECK(kind_of(write("version.ckpt", bad_version)) == static_cast<int>(CheckpointError::Kind::VersionMismatch));
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{10}}) {
    CHECK(kind_of(write("cut.ckpt", bytes.substr(0, cut))) == static_cast<int>(CheckpointError::Kind::Truncated));
  }
  CHECK(kind_of(write("short.ckpt", "CD")) == static_cast<int>(CheckpointError::Kind::NotACheckpoint));
}

TEST_CASE("a diverging run stops with a numeric error") {
  const auto& ds = planted().dataset;
  auto c = short_config();
  c.lr_repr = 1e30;
  auto s = init_state(c, ds);
  CHECK_THROWS_AS(train::train(s, ds), NumericError);
}

TEST_CASE("the model gradient check passes every loss and catches a wrong rule") {
  const auto checks = gradcheck_losses();
  REQUIRE(checks.size() == 5);
  const std::vector<std::string> names = {"L_base", "L_prim", "L_den", "L_refine", "L_div"};
  for (std::size_t i = 0; i < checks.size(); ++i) {
    CHECK(checks[i].loss == names[i]);
    CHECK_MESSAGE(checks[i].passed, checks[i].loss << " " << checks[i].report.max_rel_err);
  }
  ModelGradCheckOptions bad;
  bad.fault_op = "tanh";
  bad.fault_factor = 1.5;
  const auto faulty = gradcheck_losses(bad);
  bool any_failed = false;
  for (const auto& c : faulty) any_failed = any_failed || !c.passed;
  CHECK(any_failed);
}
