// SPDX-License-Identifier: Apache-2.0
//
// Three-branch compositional model: a fully soft composition prompt, attribute
// and object prompts with attention adapters on the image tokens, and a small
// specificity network scoring (attribute, object) embedding pairs.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cds/data/dataset.hpp"
#include "cds/encoders/encoders.hpp"
#include "cds/numerics/autodiff.hpp"
#include "cds/numerics/tensor.hpp"

namespace cds::model {

using data::Pair;

enum class PenaltyMode { Probability, Logit };

struct ModelConfig {
  double tau = 0.01;
  double alpha = 0.5;
  // Penalty scale; unset means 1 / |A|.
  std::optional<double> gamma;
  double prob_floor = 1e-7;
  PenaltyMode penalty_mode = PenaltyMode::Probability;
  enc::EncoderDims dims;
  std::size_t heads = 4;
  std::array<std::size_t, 3> spec_hidden = {64, 32, 16};
  double init_std = 0.02;
  std::uint64_t init_seed = 1;
  std::uint64_t encoder_seed = 2;

  double gamma_eff(int num_attrs) const { return gamma ? *gamma : 1.0 / num_attrs; }
  // Throws ConfigError on an invalid combination.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct ReprParams {
  Tensor<T> comp_prefix;  // w0, w1, w2 as 3 x d_emb
  Tensor<T> comp_attr;    // |A| x d_emb
  Tensor<T> comp_obj;     // |O| x d_emb
  Tensor<T> prim_attr;    // |A| x d_emb
  Tensor<T> prim_obj;     // |O| x d_emb
  std::array<Tensor<T>, 4> adapter_a;  // wq, wk, wv, wo
  std::array<Tensor<T>, 4> adapter_o;

  template <typename F>
  void visit(F&& f) {
    f("repr.comp_prefix", comp_prefix);
    f("repr.comp_attr", comp_attr);
    f("repr.comp_obj", comp_obj);
    f("repr.prim_attr", prim_attr);
    f("repr.prim_obj", prim_obj);
    static constexpr const char* kA[] = {"repr.adapter_a.wq", "repr.adapter_a.wk",
                                         "repr.adapter_a.wv", "repr.adapter_a.wo"};
    static constexpr const char* kO[] = {"repr.adapter_o.wq", "repr.adapter_o.wk",
                                         "repr.adapter_o.wv", "repr.adapter_o.wo"};
    for (int i = 0; i < 4; ++i) f(kA[i], adapter_a[static_cast<std::size_t>(i)]);
    for (int i = 0; i < 4; ++i) f(kO[i], adapter_o[static_cast<std::size_t>(i)]);
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<ReprParams*>(this)->visit([&](const char* n, Tensor<T>& t) { f(n, static_cast<const Tensor<T>&>(t)); });
  }
};

template <typename T>
struct SpecParams {
  std::array<Tensor<T>, 4> w;  // fan_in x fan_out
  std::array<Tensor<T>, 4> b;  // 1 x fan_out

  template <typename F>
  void visit(F&& f) {
    static constexpr const char* kW[] = {"spec.w0", "spec.w1", "spec.w2", "spec.w3"};
    static constexpr const char* kB[] = {"spec.b0", "spec.b1", "spec.b2", "spec.b3"};
    for (int i = 0; i < 4; ++i) {
      f(kW[i], w[static_cast<std::size_t>(i)]);
      f(kB[i], b[static_cast<std::size_t>(i)]);
    }
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<SpecParams*>(this)->visit([&](const char* n, Tensor<T>& t) { f(n, static_cast<const Tensor<T>&>(t)); });
  }
};

template <typename T>
struct Params {
  ReprParams<T> repr;
  SpecParams<T> spec;

  template <typename F>
  void visit(F&& f) {
    repr.visit(f);
    spec.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    repr.visit(f);
    spec.visit(f);
  }
  template <typename U>
  Params<U> cast() const {
    Params<U> out;
    auto src = std::vector<const Tensor<T>*>();
    visit([&](const char*, const Tensor<T>& t) { src.push_back(&t); });
    std::size_t i = 0;
    out.visit([&](const char*, Tensor<U>& t) { t = src[i++]->template cast<U>(); });
    return out;
  }
};

template <typename T>
bool bitwise_equal(const Params<T>& a, const Params<T>& b) {
  std::vector<const Tensor<T>*> ta, tb;
  a.visit([&](const char*, const Tensor<T>& t) { ta.push_back(&t); });
  b.visit([&](const char*, const Tensor<T>& t) { tb.push_back(&t); });
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (!cds::bitwise_equal(*ta[i], *tb[i])) return false;
  }
  return true;
}

struct FrozenEncoders {
  FrozenEncoders(const enc::EncoderDims& dims, std::size_t d_raw, std::uint64_t seed);
  enc::FrozenTextEncoder text;
  enc::FrozenPrefixTable prefix;
  enc::FrozenImageEncoder image;
};

template <typename T>
struct Model {
  ModelConfig config;
  int num_attrs = 0;
  int num_objs = 0;
  std::shared_ptr<const FrozenEncoders> frozen;
  Params<T> params;

  std::size_t seq() const { return config.dims.tokens + 1; }
  template <typename U>
  Model<U> cast() const {
    return Model<U>{config, num_attrs, num_objs, frozen, params.template cast<U>()};
  }
};

// Seeded initialization: embedding tables N(0, init_std), adapter and
// specificity weights N(0, 1 / fan_in), zero biases.
Model<float> init_model(const ModelConfig& cfg, int num_attrs, int num_objs, std::size_t d_raw);
Params<float> init_params(const ModelConfig& cfg, int num_attrs, int num_objs);

// Tape handles for every parameter.
template <typename T>
struct ParamVars {
  Var<T> comp_prefix, comp_attr, comp_obj, prim_attr, prim_obj;
  std::array<Var<T>, 4> adapter_a, adapter_o, spec_w, spec_b;
};

// Parameters enter the tape as trainable leaves or constants per group.
template <typename T>
ParamVars<T> bind(Tape<T>& tape, const Params<T>& p, bool repr_trainable, bool spec_trainable);
// Handles in Params::visit order.
template <typename T>
ParamVars<T> from_list(const std::vector<Var<T>>& vars);

// Image tokens of the given dataset rows, stacked as (N * (T + 1)) x d_joint.
template <typename T>
Tensor<T> gather_images(const Tensor<float>& features, std::span<const std::size_t> rows,
                        std::size_t seq);

// Forward graph pieces on one tape. Detached paths (the penalty's specificity
// scores and its embedding inputs, the denoiser's attribute text) read
// `snapshot` when given, otherwise stop-grad copies of the live handles.
template <typename T>
class Graph {
 public:
  Graph(const Model<T>& m, Tape<T>& tape, ParamVars<T> p,
        std::optional<ParamVars<T>> snapshot = std::nullopt)
      : m_(m), tape_(tape), p_(p), snap_(snapshot) {}

  Tape<T>& tape() const { return tape_; }
  const ParamVars<T>& vars() const { return p_; }
  const Model<T>& model() const { return m_; }

  Var<T> pooled(Var<T> tokens) const;     // v_c, N x d_joint
  Var<T> attr_image(Var<T> tokens) const;  // v_a
  Var<T> obj_image(Var<T> tokens) const;   // v_o
  Var<T> comp_text(std::span<const Pair> pairs) const;  // C x d_joint
  Var<T> attr_text(bool detached = false) const;  // |A| x d_joint
  Var<T> obj_text() const;                        // |O| x d_joint
  // Cosine similarities between rows of v and rows of t.
  Var<T> cosine(Var<T> v, Var<T> t) const;
  // Specificity network on rows of concatenated (w_a, w_o) pairs: M x 1.
  Var<T> spec_net(Var<T> input, bool detached = false) const;
  // Specificity inputs for pairs with embeddings detached.
  Var<T> spec_inputs(std::span<const Pair> pairs) const;

 private:
  Var<T> det(Var<T> ParamVars<T>::*field) const;
  Var<T> det_spec(std::size_t layer, bool bias) const;

  const Model<T>& m_;
  Tape<T>& tape_;
  ParamVars<T> p_;
  std::optional<ParamVars<T>> snap_;
};

// Probability of each candidate pair, softmax over the candidate list; N x C.
template <typename T>
Tensor<T> composition_probs(const Model<T>& m, const Tensor<T>& tokens,
                            std::span<const Pair> candidates);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> primitive_probs(const Model<T>& m, const Tensor<T>& tokens);

// Mean over rows and attributes of (1/|A| - p(a|v_o))^2, text side detached.
template <typename T>
Var<T> denoising_loss(const Graph<T>& g, Var<T> v_o);
// The same penalty on given attribute probabilities.
template <typename T>
Var<T> uniformity_loss(Var<T> p);

// clamp(p - gamma * scores, floor, 1).
template <typename T>
Var<T> apply_penalty(Var<T> p, Var<T> scores, T gamma, T floor);

template <typename T>
T specificity_score(const Model<T>& m, int attr, int obj);
// All pairs at once: |A| x |O|.
template <typename T>
Tensor<T> specificity_table(const Model<T>& m);

// Penalized attribute probabilities p'(a|x) with every attribute row paired
// with the sample's object `obj_labels[n]`; N x |A|.
template <typename T>
Tensor<T> refined_attribute_probs(const Model<T>& m, const Tensor<T>& tokens,
                                  std::span<const int> obj_labels);

struct SpecTarget {
  std::size_t row = 0;  // batch row
  int s = 0;
};

template <typename T>
struct BatchInput {
  Tensor<T> tokens;  // (N * (T + 1)) x d_joint
  std::vector<int> attr, obj;
  std::vector<int> comp_label;   // index of the true pair in the training pair list
  std::vector<SpecTarget> targets;
};

struct LossOptions {
  bool composition_only = false;
  bool penalty = true;    // subtract the specificity penalty in L_prim / L_refine
  double gamma = 0.125;   // effective penalty scale
  bool need_div = true;
};

template <typename T>
struct LossSet {
  Var<T> base, prim, den, refine, div;
  bool div_skipped = true;
  // L_base + L_prim + L_den + L_refine (only L_base when composition-only).
  Var<T> representation;
};

// Binary cross-entropy of f_s on the targeted rows; nullopt without targets.
template <typename T>
std::optional<Var<T>> specificity_loss(const Graph<T>& g, std::span<const int> attr,
                                       std::span<const int> obj, const std::vector<SpecTarget>& targets);

template <typename T>
LossSet<T> losses(const Graph<T>& g, const BatchInput<T>& batch, std::span<const Pair> train_pairs,
                  const LossOptions& opt);

// alpha * p(y|x) + (1 - alpha) * p(a|x) p(o|x) at each candidate. The
// composition softmax runs over `normalizer` (the candidates when empty).
// With use_penalty, p(a|x) becomes p'(a|x) and obj_labels give the context.
template <typename T>
Tensor<T> fused_scores(const Model<T>& m, const Tensor<T>& tokens, std::span<const Pair> candidates,
                       double alpha, bool use_penalty = false, std::span<const int> obj_labels = {},
                       std::span<const Pair> normalizer = {});

}  // namespace cds::model
