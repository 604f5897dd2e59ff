// SPDX-License-Identifier: Apache-2.0
#include "cds/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "cds/common/error.hpp"
#include "cds/common/rng.hpp"
#include "cds/numerics/ops.hpp"

namespace cds::model {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (!(tau > 0.0) || !std::isfinite(tau)) fail("tau must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in [0, 1]");
  if (gamma && !(*gamma >= 0.0 && std::isfinite(*gamma))) fail("gamma must be non-negative");
  if (!(prob_floor > 0.0 && prob_floor < 0.5)) fail("prob_floor must lie in (0, 0.5)");
  if (dims.d_emb == 0 || dims.d_joint == 0 || dims.tokens == 0) fail("dimensions must be positive");
  if (heads == 0 || dims.d_joint % heads != 0) {
    fail("d_joint " + std::to_string(dims.d_joint) + " not divisible by " + std::to_string(heads) +
         " heads");
  }
  for (std::size_t h : spec_hidden) {
    if (h == 0) fail("specificity hidden widths must be positive");
  }
  if (!(init_std > 0.0)) fail("init_std must be positive");
}

FrozenEncoders::FrozenEncoders(const enc::EncoderDims& dims, std::size_t d_raw, std::uint64_t seed)
    : text(dims, derive_seed(seed, 1)),
      prefix(dims.d_emb, derive_seed(seed, 2)),
      image(dims, d_raw, derive_seed(seed, 3)) {}

namespace {

Tensor<float> gaussian(std::size_t rows, std::size_t cols, double stddev, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor<float> t = Tensor<float>::matrix(rows, cols);
  for (auto& v : t.data()) v = static_cast<float>(stddev * dist(rng));
  return t;
}

}  // namespace

Params<float> init_params(const ModelConfig& cfg, int num_attrs, int num_objs) {
  cfg.validate();
  if (num_attrs < 1 || num_objs < 1) throw ConfigError("model: empty vocabulary");
  const std::size_t de = cfg.dims.d_emb, dj = cfg.dims.d_joint;
  const auto na = static_cast<std::size_t>(num_attrs), no = static_cast<std::size_t>(num_objs);
  Params<float> p;
  std::uint64_t stream = 0;
  auto next = [&] { return derive_seed(cfg.init_seed, stream++); };
  p.repr.comp_prefix = gaussian(3, de, cfg.init_std, next());
  p.repr.comp_attr = gaussian(na, de, cfg.init_std, next());
  p.repr.comp_obj = gaussian(no, de, cfg.init_std, next());
  p.repr.prim_attr = gaussian(na, de, cfg.init_std, next());
  p.repr.prim_obj = gaussian(no, de, cfg.init_std, next());
  const double adapter_std = 1.0 / std::sqrt(static_cast<double>(dj));
  for (auto& w : p.repr.adapter_a) w = gaussian(dj, dj, adapter_std, next());
  for (auto& w : p.repr.adapter_o) w = gaussian(dj, dj, adapter_std, next());
  const std::array<std::size_t, 5> widths = {2 * de, cfg.spec_hidden[0], cfg.spec_hidden[1],
                                             cfg.spec_hidden[2], 1};
  for (std::size_t l = 0; l < 4; ++l) {
    p.spec.w[l] = gaussian(widths[l], widths[l + 1],
                           1.0 / std::sqrt(static_cast<double>(widths[l])), next());
    p.spec.b[l] = Tensor<float>::matrix(1, widths[l + 1]);
  }
  return p;
}

Model<float> init_model(const ModelConfig& cfg, int num_attrs, int num_objs, std::size_t d_raw) {
  Model<float> m;
  m.config = cfg;
  m.num_attrs = num_attrs;
  m.num_objs = num_objs;
  m.params = init_params(cfg, num_attrs, num_objs);
  m.frozen = std::make_shared<const FrozenEncoders>(cfg.dims, d_raw, cfg.encoder_seed);
  return m;
}

template <typename T>
ParamVars<T> bind(Tape<T>& tape, const Params<T>& p, bool repr_trainable, bool spec_trainable) {
  std::vector<Var<T>> vars;
  p.repr.visit([&](const char*, const Tensor<T>& t) {
    vars.push_back(repr_trainable ? tape.parameter(t) : tape.constant(t));
  });
  p.spec.visit([&](const char*, const Tensor<T>& t) {
    vars.push_back(spec_trainable ? tape.parameter(t) : tape.constant(t));
  });
  return from_list(vars);
}

template <typename T>
ParamVars<T> from_list(const std::vector<Var<T>>& v) {
  if (v.size() != 21) throw ShapeError("model: expected 21 parameter handles, got " + std::to_string(v.size()));
  ParamVars<T> p;
  std::size_t i = 0;
  p.comp_prefix = v[i++];
  p.comp_attr = v[i++];
  p.comp_obj = v[i++];
  p.prim_attr = v[i++];
  p.prim_obj = v[i++];
  for (auto& w : p.adapter_a) w = v[i++];
  for (auto& w : p.adapter_o) w = v[i++];
  for (std::size_t l = 0; l < 4; ++l) {
    p.spec_w[l] = v[i++];
    p.spec_b[l] = v[i++];
  }
  return p;
}

template <typename T>
Tensor<T> gather_images(const Tensor<float>& features, std::span<const std::size_t> rows,
                        std::size_t seq) {
  const std::size_t width = features.cols();
  if (width % seq != 0) throw ShapeError("gather_images: feature width not divisible by seq");
  Tensor<T> out = Tensor<T>::matrix(rows.size() * seq, width / seq);
  auto dst = out.data();
  for (std::size_t n = 0; n < rows.size(); ++n) {
    const auto src = features.row(rows[n]);
    for (std::size_t k = 0; k < width; ++k) dst[n * width + k] = static_cast<T>(src[k]);
  }
  return out;
}

namespace {

template <typename T>
Tensor<T> repeat_row(const Tensor<T>& row, std::size_t n) {
  Tensor<T> out = Tensor<T>::matrix(n, row.cols());
  for (std::size_t r = 0; r < n; ++r) std::copy(row.data().begin(), row.data().end(), out.row(r).begin());
  return out;
}

std::vector<int> pooled_rows(std::size_t n, std::size_t seq) {
  std::vector<int> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i * seq);
  return idx;
}

}  // namespace

template <typename T>
Var<T> Graph<T>::pooled(Var<T> tokens) const {
  const auto idx = pooled_rows(tokens.rows() / m_.seq(), m_.seq());
  return ops::gather_rows(tokens, std::span<const int>(idx));
}

template <typename T>
Var<T> Graph<T>::attr_image(Var<T> tokens) const {
  const auto& w = p_.adapter_a;
  return pooled(ops::mhsa(tokens, w[0], w[1], w[2], w[3], m_.seq(), m_.config.heads));
}

template <typename T>
Var<T> Graph<T>::obj_image(Var<T> tokens) const {
  const auto& w = p_.adapter_o;
  return pooled(ops::mhsa(tokens, w[0], w[1], w[2], w[3], m_.seq(), m_.config.heads));
}

template <typename T>
Var<T> Graph<T>::comp_text(std::span<const Pair> pairs) const {
  const std::size_t c = pairs.size();
  std::vector<int> a(c), o(c);
  for (std::size_t i = 0; i < c; ++i) {
    a[i] = pairs[i].attr;
    o[i] = pairs[i].obj;
  }
  std::vector<Var<T>> tokens;
  for (int k = 0; k < 3; ++k) {
    const std::vector<int> idx(c, k);
    tokens.push_back(ops::gather_rows(p_.comp_prefix, std::span<const int>(idx)));
  }
  tokens.push_back(ops::gather_rows(p_.comp_attr, std::span<const int>(a)));
  tokens.push_back(ops::gather_rows(p_.comp_obj, std::span<const int>(o)));
  return m_.frozen->text.encode(enc::Layout::Composition, tokens);
}

template <typename T>
Var<T> Graph<T>::det(Var<T> ParamVars<T>::*field) const {
  return snap_ ? (*snap_).*field : tape_.stop_grad(p_.*field);
}

template <typename T>
Var<T> Graph<T>::det_spec(std::size_t layer, bool bias) const {
  const auto& src = snap_ ? *snap_ : p_;
  const Var<T> v = bias ? src.spec_b[layer] : src.spec_w[layer];
  return snap_ ? v : tape_.stop_grad(v);
}

template <typename T>
Var<T> Graph<T>::attr_text(bool detached) const {
  const std::size_t n = p_.prim_attr.rows();
  const auto& pre = m_.frozen->prefix;
  std::vector<Var<T>> tokens;
  for (std::size_t k = 0; k < 3; ++k) tokens.push_back(tape_.constant(repeat_row(pre.template word<T>(k), n)));
  tokens.push_back(detached ? det(&ParamVars<T>::prim_attr) : p_.prim_attr);
  tokens.push_back(tape_.constant(repeat_row(pre.template word<T>(3), n)));
  return m_.frozen->text.encode(enc::Layout::Attribute, tokens);
}

template <typename T>
Var<T> Graph<T>::obj_text() const {
  const std::size_t n = p_.prim_obj.rows();
  const auto& pre = m_.frozen->prefix;
  std::vector<Var<T>> tokens;
  for (std::size_t k = 0; k < 3; ++k) tokens.push_back(tape_.constant(repeat_row(pre.template word<T>(k), n)));
  tokens.push_back(p_.prim_obj);
  return m_.frozen->text.encode(enc::Layout::Object, tokens);
}

template <typename T>
Var<T> Graph<T>::cosine(Var<T> v, Var<T> t) const {
  return ops::matmul(ops::l2_normalize(v), ops::transpose(ops::l2_normalize(t)));
}

template <typename T>
Var<T> Graph<T>::spec_net(Var<T> input, bool detached) const {
  Var<T> h = input;
  for (std::size_t l = 0; l < 4; ++l) {
    const auto w = detached ? det_spec(l, false) : p_.spec_w[l];
    const auto b = detached ? det_spec(l, true) : p_.spec_b[l];
    h = ops::add(ops::matmul(h, w), b);
    h = l < 3 ? ops::tanh(h) : ops::sigmoid(h);
  }
  return h;
}

template <typename T>
Var<T> Graph<T>::spec_inputs(std::span<const Pair> pairs) const {
  std::vector<int> a(pairs.size()), o(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    a[i] = pairs[i].attr;
    o[i] = pairs[i].obj;
  }
  auto wa = ops::gather_rows(det(&ParamVars<T>::prim_attr), std::span<const int>(a));
  auto wo = ops::gather_rows(det(&ParamVars<T>::prim_obj), std::span<const int>(o));
  return ops::concat(std::vector<Var<T>>{wa, wo});
}

namespace {

void check_pairs(std::span<const Pair> pairs, int na, int no, const char* what) {
  if (pairs.empty()) throw ConfigError(std::string(what) + ": empty candidate set");
  for (Pair p : pairs) {
    if (p.attr < 0 || p.attr >= na || p.obj < 0 || p.obj >= no) {
      throw ConfigError(std::string(what) + ": candidate (" + std::to_string(p.attr) + "," +
                        std::to_string(p.obj) + ") outside the vocabulary");
    }
  }
}

template <typename T>
struct Frozen {
  Tape<T> tape;
  std::unique_ptr<Graph<T>> g;
  Var<T> tokens;
  Frozen(const Model<T>& m, const Tensor<T>& x) {
    g = std::make_unique<Graph<T>>(m, tape, bind(tape, m.params, false, false));
    tokens = tape.constant(x);
  }
};

// Penalty matrix N x |A|: entry (n, a) is f_s(w_a[a], w_o[obj[n]]), detached.
template <typename T>
Var<T> penalty_matrix(const Graph<T>& g, std::span<const int> obj, int num_attrs) {
  std::vector<int> objs(obj.begin(), obj.end());
  std::sort(objs.begin(), objs.end());
  objs.erase(std::unique(objs.begin(), objs.end()), objs.end());
  std::vector<Pair> pairs;
  for (int o : objs) {
    for (int a = 0; a < num_attrs; ++a) pairs.push_back({a, o});
  }
  const auto scores = g.tape().stop_grad(g.spec_net(g.spec_inputs(pairs), true));
  const auto na = static_cast<std::size_t>(num_attrs);
  Tensor<T> out = Tensor<T>::matrix(obj.size(), na);
  for (std::size_t n = 0; n < obj.size(); ++n) {
    const auto u = static_cast<std::size_t>(std::lower_bound(objs.begin(), objs.end(), obj[n]) - objs.begin());
    for (std::size_t a = 0; a < na; ++a) out(n, a) = scores.value()[u * na + a];
  }
  return g.tape().constant(std::move(out));
}

}  // namespace

template <typename T>
Var<T> apply_penalty(Var<T> p, Var<T> scores, T gamma, T floor) {
  return ops::clamp(ops::sub(p, ops::scale(scores, gamma)), floor, T(1));
}

template <typename T>
Var<T> uniformity_loss(Var<T> p) {
  const auto uniform = p.tape().constant(Tensor<T>(p.shape(), T(1) / static_cast<T>(p.cols())));
  return ops::mse(p, uniform);
}

namespace {

// p'(a|x) from attribute cosines and probabilities.
template <typename T>
Var<T> refine(const Graph<T>& g, const ModelConfig& cfg, Var<T> cos_a, Var<T> p_a,
              std::span<const int> obj, int num_attrs, bool penalty, double gamma) {
  const T floor = static_cast<T>(cfg.prob_floor);
  if (!penalty || gamma == 0.0) {
    return cfg.penalty_mode == PenaltyMode::Probability ? ops::clamp(p_a, floor, T(1)) : p_a;
  }
  const auto scores = penalty_matrix(g, obj, num_attrs);
  if (cfg.penalty_mode == PenaltyMode::Probability) {
    return apply_penalty(p_a, scores, static_cast<T>(gamma), floor);
  }
  return ops::softmax(ops::sub(cos_a, ops::scale(scores, static_cast<T>(gamma))),
                      static_cast<T>(cfg.tau));
}

template <typename T>
Var<T> neg_mean_log(Var<T> x, T floor) {
  return ops::scale(ops::mean(ops::log(x, floor)), T(-1));
}

}  // namespace

template <typename T>
Tensor<T> composition_probs(const Model<T>& m, const Tensor<T>& tokens,
                            std::span<const Pair> candidates) {
  check_pairs(candidates, m.num_attrs, m.num_objs, "composition_probs");
  Frozen<T> f(m, tokens);
  const auto& g = *f.g;
  return ops::softmax(g.cosine(g.pooled(f.tokens), g.comp_text(candidates)),
                      static_cast<T>(m.config.tau))
      .value();
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> primitive_probs(const Model<T>& m, const Tensor<T>& tokens) {
  Frozen<T> f(m, tokens);
  const auto& g = *f.g;
  const T tau = static_cast<T>(m.config.tau);
  auto pa = ops::softmax(g.cosine(g.attr_image(f.tokens), g.attr_text()), tau);
  auto po = ops::softmax(g.cosine(g.obj_image(f.tokens), g.obj_text()), tau);
  return {pa.value(), po.value()};
}

template <typename T>
Var<T> denoising_loss(const Graph<T>& g, Var<T> v_o) {
  auto& tape = g.tape();
  const auto& m = g.model();
  const auto t_a = tape.stop_grad(g.attr_text(true));
  return uniformity_loss(ops::softmax(g.cosine(v_o, t_a), static_cast<T>(m.config.tau)));
}

template <typename T>
Tensor<T> specificity_table(const Model<T>& m) {
  Tensor<T> dummy = Tensor<T>::matrix(m.seq(), m.config.dims.d_joint);
  Frozen<T> f(m, dummy);
  const auto& g = *f.g;
  std::vector<Pair> pairs;
  for (int a = 0; a < m.num_attrs; ++a) {
    for (int o = 0; o < m.num_objs; ++o) pairs.push_back({a, o});
  }
  auto s = g.spec_net(g.spec_inputs(pairs)).value();
  return s.reshaped({static_cast<std::size_t>(m.num_attrs), static_cast<std::size_t>(m.num_objs)});
}

template <typename T>
T specificity_score(const Model<T>& m, int attr, int obj) {
  const Pair p{attr, obj};
  check_pairs(std::span<const Pair>(&p, 1), m.num_attrs, m.num_objs, "specificity_score");
  Tensor<T> dummy = Tensor<T>::matrix(m.seq(), m.config.dims.d_joint);
  Frozen<T> f(m, dummy);
  const auto& g = *f.g;
  return g.spec_net(g.spec_inputs(std::span<const Pair>(&p, 1))).value().item();
}

template <typename T>
Tensor<T> refined_attribute_probs(const Model<T>& m, const Tensor<T>& tokens,
                                  std::span<const int> obj_labels) {
  Frozen<T> f(m, tokens);
  const auto& g = *f.g;
  if (obj_labels.size() * m.seq() != tokens.rows()) {
    throw ShapeError("refined_attribute_probs: one object label per image required");
  }
  const auto cos_a = g.cosine(g.attr_image(f.tokens), g.attr_text());
  const auto p_a = ops::softmax(cos_a, static_cast<T>(m.config.tau));
  return refine(g, m.config, cos_a, p_a, obj_labels, m.num_attrs, true,
                m.config.gamma_eff(m.num_attrs))
      .value();
}

template <typename T>
std::optional<Var<T>> specificity_loss(const Graph<T>& g, std::span<const int> attr,
                                       std::span<const int> obj, const std::vector<SpecTarget>& targets) {
  if (targets.empty()) return std::nullopt;
  auto& tape = g.tape();
  const T floor = static_cast<T>(g.model().config.prob_floor);
  std::vector<Pair> pairs;
  Tensor<T> s = Tensor<T>::matrix(targets.size(), 1);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    if (t.row >= attr.size() || t.row >= obj.size() || (t.s != 0 && t.s != 1)) {
      throw ShapeError("specificity_loss: malformed target at position " + std::to_string(i));
    }
    pairs.push_back({attr[t.row], obj[t.row]});
    s[i] = static_cast<T>(t.s);
  }
  const auto f = g.spec_net(g.spec_inputs(pairs));
  const auto target = tape.constant(s);
  const auto ones = tape.constant(Tensor<T>(s.shape(), T(1)));
  // -[s log f + (1 - s) log(1 - f)]
  const auto pos = ops::mul(target, ops::log(f, floor));
  const auto neg = ops::mul(ops::sub(ones, target), ops::log(ops::affine(f, T(-1), T(1)), floor));
  return ops::scale(ops::mean(ops::add(pos, neg)), T(-1));
}

template <typename T>
LossSet<T> losses(const Graph<T>& g, const BatchInput<T>& batch, std::span<const Pair> train_pairs,
                  const LossOptions& opt) {
  const auto& m = g.model();
  const auto& cfg = m.config;
  auto& tape = g.tape();
  const std::size_t n = batch.attr.size();
  if (n == 0 || batch.obj.size() != n || batch.comp_label.size() != n ||
      batch.tokens.rows() != n * m.seq()) {
    throw ShapeError("losses: inconsistent batch of " + std::to_string(n) + " labels and " +
                     std::to_string(batch.tokens.rows()) + " token rows");
  }
  const T tau = static_cast<T>(cfg.tau);
  const T floor = static_cast<T>(cfg.prob_floor);
  const T alpha = static_cast<T>(cfg.alpha);
  const auto zero = [&] { return tape.constant(Tensor<T>::matrix(1, 1)); };

  LossSet<T> out;
  const auto tokens = tape.constant(batch.tokens);
  const auto p_c = ops::softmax(g.cosine(g.pooled(tokens), g.comp_text(train_pairs)), tau);
  const auto pc_true = ops::pick(p_c, std::span<const int>(batch.comp_label));
  out.base = neg_mean_log(pc_true, floor);

  if (opt.composition_only) {
    out.prim = out.den = out.refine = out.div = zero();
    out.representation = out.base;
    return out;
  }

  const auto v_a = g.attr_image(tokens);
  const auto v_o = g.obj_image(tokens);
  const auto cos_a = g.cosine(v_a, g.attr_text());
  const auto p_a = ops::softmax(cos_a, tau);
  const auto p_o = ops::softmax(g.cosine(v_o, g.obj_text()), tau);
  out.den = denoising_loss(g, v_o);

  const auto p_ref = refine(g, cfg, cos_a, p_a, batch.obj, m.num_attrs, opt.penalty, opt.gamma);
  const auto pa_true = ops::pick(p_ref, std::span<const int>(batch.attr));
  const auto po_true = ops::pick(p_o, std::span<const int>(batch.obj));
  out.prim = ops::add(neg_mean_log(pa_true, floor), neg_mean_log(po_true, floor));
  const auto fused = ops::add(ops::scale(pc_true, alpha), ops::scale(ops::mul(pa_true, po_true), T(1) - alpha));
  out.refine = neg_mean_log(fused, floor);

  if (opt.need_div) {
    if (auto div = specificity_loss(g, batch.attr, batch.obj, batch.targets)) {
      out.div = *div;
      out.div_skipped = false;
    }
  }
  if (out.div_skipped) out.div = zero();
  out.representation = ops::add(ops::add(out.base, out.prim), ops::add(out.den, out.refine));
  return out;
}

template <typename T>
Tensor<T> fused_scores(const Model<T>& m, const Tensor<T>& tokens, std::span<const Pair> candidates,
                       double alpha, bool use_penalty, std::span<const int> obj_labels,
                       std::span<const Pair> normalizer) {
  check_pairs(candidates, m.num_attrs, m.num_objs, "fused_scores");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("fused_scores: alpha must lie in [0, 1]");
  const std::span<const Pair> norm = normalizer.empty() ? candidates : normalizer;
  check_pairs(norm, m.num_attrs, m.num_objs, "fused_scores");
  std::unordered_map<long long, std::size_t> column;
  for (std::size_t j = 0; j < norm.size(); ++j) {
    column.emplace(static_cast<long long>(norm[j].attr) * m.num_objs + norm[j].obj, j);
  }
  std::vector<std::size_t> cidx(candidates.size());
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    auto it = column.find(static_cast<long long>(candidates[j].attr) * m.num_objs + candidates[j].obj);
    if (it == column.end()) throw ConfigError("fused_scores: candidate outside the normalizing set");
    cidx[j] = it->second;
  }

  Frozen<T> f(m, tokens);
  const auto& g = *f.g;
  const T tau = static_cast<T>(m.config.tau);
  const std::size_t n = tokens.rows() / m.seq();
  const auto p_c = ops::softmax(g.cosine(g.pooled(f.tokens), g.comp_text(norm)), tau).value();
  Tensor<T> out = Tensor<T>::matrix(n, candidates.size());
  if (alpha == 1.0) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < candidates.size(); ++j) out(r, j) = p_c(r, cidx[j]);
    }
    return out;
  }
  const auto cos_a = g.cosine(g.attr_image(f.tokens), g.attr_text());
  auto p_a = ops::softmax(cos_a, tau);
  if (use_penalty) {
    if (obj_labels.size() != n) throw ShapeError("fused_scores: penalty needs one object label per image");
    p_a = refine(g, m.config, cos_a, p_a, obj_labels, m.num_attrs, true, m.config.gamma_eff(m.num_attrs));
  }
  const auto p_o = ops::softmax(g.cosine(g.obj_image(f.tokens), g.obj_text()), tau).value();
  const T a = static_cast<T>(alpha);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      const auto ca = static_cast<std::size_t>(candidates[j].attr);
      const auto co = static_cast<std::size_t>(candidates[j].obj);
      out(r, j) = a * p_c(r, cidx[j]) + (T(1) - a) * p_a.value()(r, ca) * p_o(r, co);
    }
  }
  return out;
}

#define CDS_INSTANTIATE_MODEL(T)                                                                 \
  template ParamVars<T> bind<T>(Tape<T>&, const Params<T>&, bool, bool);                         \
  template ParamVars<T> from_list<T>(const std::vector<Var<T>>&);                                \
  template Tensor<T> gather_images<T>(const Tensor<float>&, std::span<const std::size_t>,        \
                                      std::size_t);                                              \
  template class Graph<T>;                                                                       \
  template Tensor<T> composition_probs<T>(const Model<T>&, const Tensor<T>&,                     \
                                          std::span<const Pair>);                                \
  template std::pair<Tensor<T>, Tensor<T>> primitive_probs<T>(const Model<T>&, const Tensor<T>&); \
  template Var<T> denoising_loss<T>(const Graph<T>&, Var<T>);                                    \
  template Var<T> uniformity_loss<T>(Var<T>);                                                    \
  template Var<T> apply_penalty<T>(Var<T>, Var<T>, T, T);                                        \
  template T specificity_score<T>(const Model<T>&, int, int);                                    \
  template Tensor<T> specificity_table<T>(const Model<T>&);                                      \
  template Tensor<T> refined_attribute_probs<T>(const Model<T>&, const Tensor<T>&,               \
                                                std::span<const int>);                           \
  template std::optional<Var<T>> specificity_loss<T>(const Graph<T>&, std::span<const int>,     \
                                                     std::span<const int>,                       \
                                                     const std::vector<SpecTarget>&);            \
  template LossSet<T> losses<T>(const Graph<T>&, const BatchInput<T>&, std::span<const Pair>,    \
                                const LossOptions&);                                             \
  template Tensor<T> fused_scores<T>(const Model<T>&, const Tensor<T>&, std::span<const Pair>,   \
                                     double, bool, std::span<const int>, std::span<const Pair>);

CDS_INSTANTIATE_MODEL(float)
CDS_INSTANTIATE_MODEL(double)

#undef CDS_INSTANTIATE_MODEL

}  // namespace cds::model
