// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>
#include <random>

#include "cds/model/model.hpp"
#include "cds/numerics/adam.hpp"
#include "cds/numerics/ops.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cds;
using namespace cds::model;
using cds::testing::random_tensor;

namespace {

constexpr int kA = 3;
constexpr int kO = 4;
constexpr std::size_t kRaw = 5;

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.dims = {6, 8, 2};
  cfg.heads = 2;
  cfg.spec_hidden = {5, 4, 3};
  cfg.tau = 0.5;
  cfg.init_std = 0.5;
  cfg.init_seed = 21;
  cfg.encoder_seed = 22;
  return cfg;
}

Model<double> tiny_model(ModelConfig cfg = tiny_config()) {
  return init_model(cfg, kA, kO, kRaw).cast<double>();
}

Tensor<double> tiny_tokens(const Model<double>& m, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_tensor(rng, n * m.seq(), m.config.dims.d_joint);
}

std::vector<double> row_of(const Tensor<double>& t, std::size_t r) {
  return {t.row(r).begin(), t.row(r).end()};
}

// Plain-loop reimplementation of the forward pass.
struct Oracle {
  const Model<double>& m;

  static std::vector<double> normalize(std::vector<double> v) {
    double n = 0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
  }
  static double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }
  static std::vector<double> softmax(const std::vector<double>& z, double tau) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    std::vector<double> e(z.size());
    double s = 0;
    for (std::size_t i = 0; i < z.size(); ++i) s += e[i] = std::exp((z[i] - mx) / tau);
    for (double& v : e) v /= s;
    return e;
  }

  std::vector<double> text(enc::Layout l, const std::vector<std::vector<double>>& toks) const {
    std::vector<double> x;
    for (const auto& t : toks) x.insert(x.end(), t.begin(), t.end());
    const auto& w = m.frozen->text.weight(l);
    const auto& b = m.frozen->text.bias(l);
    std::vector<double> out(w.cols());
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double s = b[j];
      for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w(i, j);
      out[j] = std::tanh(s);
    }
    return out;
  }
  std::vector<double> prefix(std::size_t k) const { return row_of(m.frozen->prefix.table(), k); }

  std::vector<double> comp_text(Pair p) const {
    const auto& r = m.params.repr;
    return text(enc::Layout::Composition,
                {row_of(r.comp_prefix, 0), row_of(r.comp_prefix, 1), row_of(r.comp_prefix, 2),
                 row_of(r.comp_attr, static_cast<std::size_t>(p.attr)),
                 row_of(r.comp_obj, static_cast<std::size_t>(p.obj))});
  }
  std::vector<double> attr_text(int a) const {
    return text(enc::Layout::Attribute, {prefix(0), prefix(1), prefix(2),
                                         row_of(m.params.repr.prim_attr, static_cast<std::size_t>(a)),
                                         prefix(3)});
  }
  std::vector<double> obj_text(int o) const {
    return text(enc::Layout::Object, {prefix(0), prefix(1), prefix(2),
                                      row_of(m.params.repr.prim_obj, static_cast<std::size_t>(o))});
  }

  // Attention adapter output at the pooled position for image n.
  std::vector<double> adapter(const Tensor<double>& tokens, std::size_t n,
                              const std::array<Tensor<double>, 4>& w) const {
    const std::size_t s = m.seq(), d = m.config.dims.d_joint, h = m.config.heads, dh = d / h;
    auto proj = [&](const Tensor<double>& wm) {
      std::vector<std::vector<double>> out(s, std::vector<double>(d, 0.0));
      for (std::size_t t = 0; t < s; ++t)
        for (std::size_t j = 0; j < d; ++j)
          for (std::size_t i = 0; i < d; ++i) out[t][j] += tokens(n * s + t, i) * wm(i, j);
      return out;
    };
    const auto q = proj(w[0]), k = proj(w[1]), v = proj(w[2]);
    std::vector<double> ctx(d, 0.0);
    for (std::size_t hh = 0; hh < h; ++hh) {
      std::vector<double> sc(s);
      for (std::size_t t = 0; t < s; ++t) {
        double acc = 0;
        for (std::size_t j = 0; j < dh; ++j) acc += q[0][hh * dh + j] * k[t][hh * dh + j];
        sc[t] = acc / std::sqrt(static_cast<double>(dh));
      }
      const auto p = softmax(sc, 1.0);
      for (std::size_t t = 0; t < s; ++t)
        for (std::size_t j = 0; j < dh; ++j) ctx[hh * dh + j] += p[t] * v[t][hh * dh + j];
    }
    std::vector<double> out(d);
    for (std::size_t j = 0; j < d; ++j) {
      out[j] = tokens(n * s, j);
      for (std::size_t i = 0; i < d; ++i) out[j] += ctx[i] * w[3](i, j);
    }
    return out;
  }

  std::vector<double> pooled(const Tensor<double>& tokens, std::size_t n) const {
    return row_of(tokens, n * m.seq());
  }

  std::vector<double> comp_probs(const Tensor<double>& tokens, std::size_t n,
                                 const std::vector<Pair>& cands) const {
    const auto v = normalize(pooled(tokens, n));
    std::vector<double> z;
    for (Pair p : cands) z.push_back(dot(v, normalize(comp_text(p))));
    return softmax(z, m.config.tau);
  }
  std::vector<double> attr_probs(const Tensor<double>& tokens, std::size_t n) const {
    const auto v = normalize(adapter(tokens, n, m.params.repr.adapter_a));
    std::vector<double> z;
    for (int a = 0; a < m.num_attrs; ++a) z.push_back(dot(v, normalize(attr_text(a))));
    return softmax(z, m.config.tau);
  }
  std::vector<double> obj_probs(const Tensor<double>& tokens, std::size_t n) const {
    const auto v = normalize(adapter(tokens, n, m.params.repr.adapter_o));
    std::vector<double> z;
    for (int o = 0; o < m.num_objs; ++o) z.push_back(dot(v, normalize(obj_text(o))));
    return softmax(z, m.config.tau);
  }
  std::vector<double> den_probs(const Tensor<double>& tokens, std::size_t n) const {
    const auto v = normalize(adapter(tokens, n, m.params.repr.adapter_o));
    std::vector<double> z;
    for (int a = 0; a < m.num_attrs; ++a) z.push_back(dot(v, normalize(attr_text(a))));
    return softmax(z, m.config.tau);
  }
  double spec(int a, int o) const {
    auto x = row_of(m.params.repr.prim_attr, static_cast<std::size_t>(a));
    const auto wo = row_of(m.params.repr.prim_obj, static_cast<std::size_t>(o));
    x.insert(x.end(), wo.begin(), wo.end());
    for (std::size_t l = 0; l < 4; ++l) {
      const auto& w = m.params.spec.w[l];
      const auto& b = m.params.spec.b[l];
      std::vector<double> y(w.cols());
      for (std::size_t j = 0; j < w.cols(); ++j) {
        double s = b[j];
        for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w(i, j);
        y[j] = l < 3 ? std::tanh(s) : 1.0 / (1.0 + std::exp(-s));
      }
      x = y;
    }
    return x[0];
  }
};

BatchInput<double> tiny_batch(const Model<double>& m, std::uint64_t seed) {
  BatchInput<double> b;
  b.tokens = tiny_tokens(m, 4, seed);
  b.attr = {0, 1, 2, 1};
  b.obj = {1, 0, 3, 2};
  b.comp_label = {0, 1, 2, 3};
  b.targets = {{0, 1}, {2, 0}, {3, 1}};
  return b;
}

const std::vector<Pair> kTrainPairs = {{0, 1}, {1, 0}, {2, 3}, {1, 2}, {0, 0}};

LossOptions full_options(const Model<double>& m) {
  LossOptions o;
  o.gamma = m.config.gamma_eff(m.num_attrs);
  return o;
}

}  // namespace

TEST_CASE("composition probabilities: single candidate, symmetry, oracle") {
  auto m = tiny_model();
  const auto x = tiny_tokens(m, 3, 1);
  const std::vector<Pair> one = {{1, 2}};
  const auto p1 = composition_probs(m, x, one);
  for (std::size_t r = 0; r < 3; ++r) CHECK(p1(r, 0) == doctest::Approx(1.0).epsilon(1e-15));

  auto sym = m;
  sym.params.repr.comp_attr = Tensor<double>(sym.params.repr.comp_attr.shape(), 0.1);
  const std::vector<Pair> two = {{0, 1}, {2, 1}};
  const auto p2 = composition_probs(sym, x, two);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(p2(r, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p2(r, 1) == doctest::Approx(0.5).epsilon(1e-12));
  }

  const Oracle oracle{m};
  const auto cands = data::all_pairs(data::Vocab({"a", "b", "c"}, {"o", "p", "q", "r"}));
  const auto p = composition_probs(m, x, cands);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto want = oracle.comp_probs(x, r, cands);
    double total = 0;
    for (std::size_t j = 0; j < cands.size(); ++j) {
      CHECK(std::abs(p(r, j) - want[j]) < 1e-9);
      total += p(r, j);
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(composition_probs(m, x, std::vector<Pair>{}), ConfigError);
}

TEST_CASE("primitive probabilities: normalization, symmetry, oracle") {
  auto m = tiny_model();
  const auto x = tiny_tokens(m, 3, 2);
  const auto [pa, po] = primitive_probs(m, x);
  const Oracle oracle{m};
  for (std::size_t r = 0; r < 3; ++r) {
    const auto wa = oracle.attr_probs(x, r);
    const auto wo = oracle.obj_probs(x, r);
    double sa = 0, so = 0;
    for (std::size_t a = 0; a < kA; ++a) {
      CHECK(std::abs(pa(r, a) - wa[a]) < 1e-9);
      sa += pa(r, a);
    }
    for (std::size_t o = 0; o < kO; ++o) {
      CHECK(std::abs(po(r, o) - wo[o]) < 1e-9);
      so += po(r, o);
    }
    CHECK(std::abs(sa - 1) < 1e-6);
    CHECK(std::abs(so - 1) < 1e-6);
  }
  auto sym = m;
  sym.params.repr.prim_attr = Tensor<double>(sym.params.repr.prim_attr.shape(), -0.3);
  const auto pu = primitive_probs(sym, x).first;
  for (double v : pu.data()) CHECK(v == doctest::Approx(1.0 / kA).epsilon(1e-12));
}

TEST_CASE("uniformity loss arithmetic") {
  Tape<double> tape;
  auto onehot = tape.constant(Tensor<double>({1, 4}, {1, 0, 0, 0}));
  CHECK(uniformity_loss(onehot).value().item() == doctest::Approx(0.1875).epsilon(1e-15));
  auto uniform = tape.constant(Tensor<double>({2, 4}, 0.25));
  CHECK(uniformity_loss(uniform).value().item() == 0.0);
}

TEST_CASE("denoising loss is zero at uniform and detaches the attribute text") {
  auto m = tiny_model();
  const auto x = tiny_tokens(m, 3, 3);
  {
    auto sym = m;
    sym.params.repr.prim_attr = Tensor<double>(sym.params.repr.prim_attr.shape(), 0.2);
    Tape<double> tape;
    Graph<double> g(sym, tape, bind(tape, sym.params, true, false));
    CHECK(denoising_loss(g, g.obj_image(tape.constant(x))).value().item() < 1e-30);
  }
  Tape<double> tape;
  const auto pv = bind(tape, m.params, true, false);
  Graph<double> g(m, tape, pv);
  const auto loss = denoising_loss(g, g.obj_image(tape.constant(x)));
  const Oracle oracle{m};
  double want = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    for (double p : oracle.den_probs(x, r)) want += (1.0 / kA - p) * (1.0 / kA - p);
  }
  CHECK(std::abs(loss.value().item() - want / (3 * kA)) < 1e-12);
  tape.backward(loss);
  for (double v : pv.prim_attr.grad().data()) CHECK(v == 0.0);
  for (double v : pv.adapter_a[0].grad().data()) CHECK(v == 0.0);
  double reach = 0;
  for (double v : pv.adapter_o[2].grad().data()) reach += std::abs(v);
  CHECK(reach > 0.0);
}

TEST_CASE("penalty arithmetic and clamp") {
  Tape<double> tape;
  const int num_attrs = 10;
  const double gamma = 1.0 / num_attrs;
  auto p = tape.constant(Tensor<double>({1, 2}, {0.5, 0.001}));
  auto s = tape.constant(Tensor<double>({1, 2}, {0.5, 1.0}));
  const auto out = apply_penalty(p, s, gamma, 1e-7).value();
  CHECK(out[0] == doctest::Approx(0.45).epsilon(1e-14));
  CHECK(out[1] == 1e-7);
  auto z = tape.constant(Tensor<double>({1, 2}, 0.0));
  const auto same = apply_penalty(p, z, gamma, 1e-7).value();
  CHECK(same[0] == 0.5);
  CHECK(same[1] == 0.001);
}

TEST_CASE("refined attribute probabilities match the oracle") {
  auto m = tiny_model();
  const auto x = tiny_tokens(m, 2, 4);
  const std::vector<int> objs = {3, 0};
  const auto pr = refined_attribute_probs(m, x, objs);
  const Oracle oracle{m};
  const double gamma = 1.0 / kA;
  for (std::size_t r = 0; r < 2; ++r) {
    const auto pa = oracle.attr_probs(x, r);
    for (int a = 0; a < kA; ++a) {
      const double want = std::clamp(pa[static_cast<std::size_t>(a)] - gamma * oracle.spec(a, objs[r]), 1e-7, 1.0);
      CHECK(std::abs(pr(r, static_cast<std::size_t>(a)) - want) < 1e-12);
    }
  }
  CHECK(specificity_score(m, 1, 2) == doctest::Approx(oracle.spec(1, 2)).epsilon(1e-12));
  CHECK(specificity_score(m, 1, 2) == specificity_score(m, 1, 2));
  const auto table = specificity_table(m);
  for (int a = 0; a < kA; ++a) {
    for (int o = 0; o < kO; ++o) {
      const double v = table(static_cast<std::size_t>(a), static_cast<std::size_t>(o));
      CHECK(v > 0.0);
      CHECK(v < 1.0);
      CHECK(std::abs(v - oracle.spec(a, o)) < 1e-12);
    }
  }
}

TEST_CASE("all five losses match a per-sample oracle") {
  auto m = tiny_model();
  const auto batch = tiny_batch(m, 5);
  Tape<double> tape;
  Graph<double> g(m, tape, bind(tape, m.params, true, true));
  const auto ls = losses(g, batch, kTrainPairs, full_options(m));
  CHECK(!ls.div_skipped);

  const Oracle o{m};
  const double eps = 1e-7, alpha = m.config.alpha, gamma = 1.0 / kA;
  double base = 0, prim = 0, den = 0, refine = 0, div = 0;
  const std::size_t n = batch.attr.size();
  for (std::size_t r = 0; r < n; ++r) {
    const auto pc = o.comp_probs(batch.tokens, r, kTrainPairs)[static_cast<std::size_t>(batch.comp_label[r])];
    const auto pa = o.attr_probs(batch.tokens, r);
    const auto po = o.obj_probs(batch.tokens, r)[static_cast<std::size_t>(batch.obj[r])];
    const double pa_ref = std::clamp(pa[static_cast<std::size_t>(batch.attr[r])] -
                                         gamma * o.spec(batch.attr[r], batch.obj[r]),
                                     eps, 1.0);
    base += -std::log(pc);
    prim += -std::log(pa_ref) - std::log(po);
    refine += -std::log(alpha * pc + (1 - alpha) * pa_ref * po);
    for (double p : o.den_probs(batch.tokens, r)) den += (1.0 / kA - p) * (1.0 / kA - p);
  }
  for (const auto& t : batch.targets) {
    const double f = o.spec(batch.attr[t.row], batch.obj[t.row]);
    div += -(t.s * std::log(f) + (1 - t.s) * std::log(1 - f));
  }
  CHECK(std::abs(ls.base.value().item() - base / n) < 1e-8);
  CHECK(std::abs(ls.prim.value().item() - prim / n) < 1e-8);
  CHECK(std::abs(ls.den.value().item() - den / (n * kA)) < 1e-8);
  CHECK(std::abs(ls.refine.value().item() - refine / n) < 1e-8);
  CHECK(std::abs(ls.div.value().item() - div / batch.targets.size()) < 1e-8);
  CHECK(std::abs(ls.representation.value().item() -
                 (base / n + prim / n + den / (n * kA) + refine / n)) < 1e-8);
}

TEST_CASE("specificity BCE at 0.5 is ln 2 and an empty target set is flagged") {
  auto m = tiny_model();
  m.params.spec.w[3].fill(0.0);
  m.params.spec.b[3].fill(0.0);
  auto batch = tiny_batch(m, 6);
  batch.targets = {{1, 1}};
  Tape<double> tape;
  Graph<double> g(m, tape, bind(tape, m.params, false, true));
  CHECK(losses(g, batch, kTrainPairs, full_options(m)).div.value().item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));
  batch.targets.clear();
  const auto skipped = losses(g, batch, kTrainPairs, full_options(m));
  CHECK(skipped.div_skipped);
  CHECK(skipped.div.value().item() == 0.0);
}

TEST_CASE("stop-grad contracts between representation and specificity losses") {
  auto m = tiny_model();
  const auto batch = tiny_batch(m, 7);
  auto all_zero = [](const Var<double>& v) {
    for (double x : v.grad().data()) {
      if (x != 0.0) return false;
    }
    return true;
  };
  for (int which = 0; which < 3; ++which) {
    Tape<double> tape;
    const auto pv = bind(tape, m.params, true, true);
    Graph<double> g(m, tape, pv);
    const auto ls = losses(g, batch, kTrainPairs, full_options(m));
    tape.backward(which == 0 ? ls.prim : which == 1 ? ls.refine : ls.div);
    bool spec_zero = true, repr_zero = true;
    for (std::size_t l = 0; l < 4; ++l) spec_zero = spec_zero && all_zero(pv.spec_w[l]) && all_zero(pv.spec_b[l]);
    for (const auto* v : {&pv.comp_prefix, &pv.comp_attr, &pv.comp_obj, &pv.prim_attr, &pv.prim_obj}) {
      repr_zero = repr_zero && all_zero(*v);
    }
    for (std::size_t i = 0; i < 4; ++i) repr_zero = repr_zero && all_zero(pv.adapter_a[i]) && all_zero(pv.adapter_o[i]);
    if (which < 2) {
      CHECK(spec_zero);
      CHECK(!repr_zero);
    } else {
      CHECK(!spec_zero);
      CHECK(repr_zero);
    }
  }
}

TEST_CASE("composition-only losses leave the primitive branch untouched") {
  auto m = tiny_model();
  const auto batch = tiny_batch(m, 8);
  Tape<double> tape;
  const auto pv = bind(tape, m.params, true, true);
  Graph<double> g(m, tape, pv);
  LossOptions opt = full_options(m);
  opt.composition_only = true;
  const auto ls = losses(g, batch, kTrainPairs, opt);
  CHECK(ls.div_skipped);
  tape.backward(ls.representation);
  for (double v : pv.prim_attr.grad().data()) CHECK(v == 0.0);
  for (double v : pv.adapter_o[1].grad().data()) CHECK(v == 0.0);
}

TEST_CASE("parameter disjointness under optimizer steps") {
  auto m = init_model(tiny_config(), kA, kO, kRaw);
  const auto before = m.params;
  BatchInput<float> batch;
  const auto bd = tiny_batch(m.cast<double>(), 9);
  batch.tokens = bd.tokens.cast<float>();
  batch.attr = bd.attr;
  batch.obj = bd.obj;
  batch.comp_label = bd.comp_label;

  auto step = [&](Params<float>& params, bool primitive_only) {
    Tape<float> tape;
    const auto pv = bind(tape, params, true, false);
    Model<float> view{m.config, m.num_attrs, m.num_objs, m.frozen, params};
    Graph<float> g(view, tape, pv);
    LossOptions opt;
    opt.penalty = false;
    const auto ls = losses(g, batch, kTrainPairs, opt);
    tape.backward(primitive_only ? ls.prim : ls.base);
    Adam<float> adam(AdamConfig{0.01});
    std::vector<Var<float>> vars = {pv.comp_prefix, pv.comp_attr, pv.comp_obj, pv.prim_attr, pv.prim_obj};
    std::vector<Tensor<float>*> targets = {&params.repr.comp_prefix, &params.repr.comp_attr,
                                           &params.repr.comp_obj, &params.repr.prim_attr,
                                           &params.repr.prim_obj};
    std::vector<ParamGrad<float>> pg;
    for (std::size_t i = 0; i < vars.size(); ++i) pg.push_back({"p" + std::to_string(i), targets[i], &vars[i].grad()});
    adam.step(pg);
  };
  auto p1 = before;
  step(p1, true);
  CHECK(bitwise_equal(p1.repr.comp_attr, before.repr.comp_attr));
  CHECK(bitwise_equal(p1.repr.comp_obj, before.repr.comp_obj));
  CHECK(bitwise_equal(p1.repr.comp_prefix, before.repr.comp_prefix));
  CHECK(!bitwise_equal(p1.repr.prim_attr, before.repr.prim_attr));
  auto p2 = before;
  step(p2, false);
  CHECK(bitwise_equal(p2.repr.prim_attr, before.repr.prim_attr));
  CHECK(bitwise_equal(p2.repr.prim_obj, before.repr.prim_obj));
  CHECK(!bitwise_equal(p2.repr.comp_attr, before.repr.comp_attr));
}

TEST_CASE("fused scores: boundaries and a hand computation") {
  auto m = tiny_model();
  const auto x = tiny_tokens(m, 2, 10);
  const std::vector<Pair> cands = {{0, 0}, {1, 3}, {2, 1}, {2, 2}};
  const auto pc = composition_probs(m, x, cands);
  const auto f1 = fused_scores(m, x, cands, 1.0);
  CHECK(bitwise_equal(f1, pc));
  const auto [pa, po] = primitive_probs(m, x);
  const auto f0 = fused_scores(m, x, cands, 0.0);
  const auto fh = fused_scores(m, x, cands, 0.5);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t j = 0; j < cands.size(); ++j) {
      const auto a = static_cast<std::size_t>(cands[j].attr), o = static_cast<std::size_t>(cands[j].obj);
      CHECK(std::abs(f0(r, j) - pa(r, a) * po(r, o)) < 1e-15);
      CHECK(std::abs(fh(r, j) - (0.5 * pc(r, j) + 0.5 * pa(r, a) * po(r, o))) < 1e-9);
    }
  }
  const std::vector<int> objs = {1, 2};
  const auto pr = refined_attribute_probs(m, x, objs);
  const auto ft = fused_scores(m, x, cands, 0.0, true, objs);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t j = 0; j < cands.size(); ++j) {
      const auto a = static_cast<std::size_t>(cands[j].attr), o = static_cast<std::size_t>(cands[j].obj);
      CHECK(std::abs(ft(r, j) - pr(r, a) * po(r, o)) < 1e-15);
    }
  }
  // Normalizing over a superset changes only the composition term's denominator.
  const auto all = data::all_pairs(data::Vocab({"a", "b", "c"}, {"o", "p", "q", "r"}));
  const auto fa = fused_scores(m, x, cands, 1.0, false, {}, all);
  const auto pall = composition_probs(m, x, all);
  CHECK(fa(1, 1) == doctest::Approx(pall(1, 1 * kO + 3)).epsilon(1e-14));
  CHECK_THROWS_AS(fused_scores(m, x, std::vector<Pair>{}, 0.5), ConfigError);
}

TEST_CASE("inference scores ignore the specificity network") {
  auto m = tiny_model();
  const auto x = tiny_tokens(m, 3, 11);
  const auto cands = data::all_pairs(data::Vocab({"a", "b", "c"}, {"o", "p", "q", "r"}));
  const auto ref = fused_scores(m, x, cands, 0.5);
  auto perturbed = m;
  std::mt19937_64 rng(3);
  for (auto& w : perturbed.params.spec.w) w = random_tensor(rng, w.rows(), w.cols(), 3.0);
  CHECK(bitwise_equal(fused_scores(perturbed, x, cands, 0.5), ref));
}

TEST_CASE("a larger specificity score pushes the trained probability higher") {
  // Two attributes, logits z trained by gradient descent on -log p'(a0).
  auto train = [](double s_bar) {
    const double gamma = 0.5;
    Tensor<double> z({1, 2}, {0.0, 0.0});
    for (int it = 0; it < 50; ++it) {
      Tape<double> tape;
      auto zv = tape.parameter(z);
      auto p = ops::softmax(zv, 1.0);
      auto pen = tape.constant(Tensor<double>({1, 2}, {s_bar, 0.0}));
      auto pr = apply_penalty(p, pen, gamma, 1e-7);
      const int col = 0;
      auto loss = ops::scale(ops::log(ops::pick(pr, std::span<const int>(&col, 1)), 1e-7), -1.0);
      tape.backward(loss);
      for (std::size_t i = 0; i < 2; ++i) z[i] -= 0.1 * zv.grad()[i];
    }
    return std::exp(z[0]) / (std::exp(z[0]) + std::exp(z[1]));
  };
  const double low = train(0.1), mid = train(0.5), high = train(0.9);
  CHECK(low < mid);
  CHECK(mid < high);
}

TEST_CASE("gradient steps on the denoising loss alone decrease it") {
  auto m = tiny_model();
  const auto x = tiny_tokens(m, 4, 12);
  double prev = 1e300;
  for (int it = 0; it < 20; ++it) {
    Tape<double> tape;
    const auto pv = bind(tape, m.params, true, false);
    Graph<double> g(m, tape, pv);
    const auto loss = denoising_loss(g, g.obj_image(tape.constant(x)));
    const double v = loss.value().item();
    CHECK(v < prev);
    prev = v;
    tape.backward(loss);
    for (std::size_t i = 0; i < 4; ++i) {
      auto& w = m.params.repr.adapter_o[i];
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= 0.05 * pv.adapter_o[i].grad()[k];
    }
  }
}

TEST_CASE("model config validation") {
  auto cfg = tiny_config();
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.tau = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(tiny_config().gamma_eff(8) == 0.125);
}
