// SPDX-License-Identifier: Apache-2.0
#include "cds/training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "cds/common/error.hpp"
#include "cds/common/rng.hpp"
#include "cds/data/batching.hpp"
#include "cds/encoders/encoders.hpp"
#include "cds/numerics/ops.hpp"

namespace cds::train {

using model::Pair;
using model::ParamVars;
using Vars = std::vector<Var<float>>;

namespace {

constexpr std::size_t kReprTensors = 13;
constexpr std::size_t kCompositionTensors = 3;
constexpr std::uint64_t kPartnerStream = 1ull << 32;

AdamConfig adam_config(const TrainConfig& c, double lr) { return {lr, c.beta1, c.beta2, c.adam_eps}; }

Vars var_list(const ParamVars<float>& p) {
  Vars v{p.comp_prefix, p.comp_attr, p.comp_obj, p.prim_attr, p.prim_obj};
  v.insert(v.end(), p.adapter_a.begin(), p.adapter_a.end());
  v.insert(v.end(), p.adapter_o.begin(), p.adapter_o.end());
  for (std::size_t l = 0; l < 4; ++l) {
    v.push_back(p.spec_w[l]);
    v.push_back(p.spec_b[l]);
  }
  return v;
}

// Adam inputs for the tensors [begin, end) of the visit order; returns the
// gradient L2 norm.
double collect(model::Params<float>& params, const ParamVars<float>& pv, std::size_t begin,
               std::size_t end, std::vector<ParamGrad<float>>& out) {
  const auto vars = var_list(pv);
  std::size_t i = 0;
  double sq = 0.0;
  params.visit([&](const char* name, Tensor<float>& t) {
    if (i >= begin && i < end) {
      const auto& g = vars[i].grad();
      for (float x : g.data()) sq += static_cast<double>(x) * x;
      out.push_back({name, &t, &g});
    }
    ++i;
  });
  return std::sqrt(sq);
}

void check_finite(double v, const char* what, int epoch, std::size_t batch) {
  if (!std::isfinite(v)) {
    throw NumericError("train: non-finite " + std::string(what) + " (" + std::to_string(v) + ") at epoch " +
                       std::to_string(epoch) + ", batch " + std::to_string(batch));
  }
}

int pair_index(std::span<const Pair> pairs, Pair p) {
  const auto it = std::lower_bound(pairs.begin(), pairs.end(), p);
  if (it == pairs.end() || *it != p) throw ProtocolError("train: training sample outside the seen pairs");
  return static_cast<int>(it - pairs.begin());
}

struct Sums {
  double base = 0, prim = 0, den = 0, refine = 0, div = 0, gr = 0, gs = 0;
};

}  // namespace

TrainState init_state(const TrainConfig& config, const data::Dataset& ds) {
  config.validate();
  ds.validate();
  TrainState s{config,
               model::init_model(config.model, ds.vocab.num_attrs(),
                                 ds.vocab.num_objs(), ds.d_raw),
               Adam<float>(adam_config(config, config.lr_repr)),
               Adam<float>(adam_config(config, config.lr_spec)),
               {},
               ds.d_raw,
               0};
  return s;
}

nlohmann::json to_json(const EpochRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j{{"epoch", r.epoch},
                   {"mode", ablation_name(r.ablation)},
                   {"label", ablation_label(r.ablation)},
                   {"penalty", r.penalty},
                   {"loss_base", r.loss_base},
                   {"loss_prim", opt(r.loss_prim)},
                   {"loss_den", opt(r.loss_den)},
                   {"loss_refine", opt(r.loss_refine)},
                   {"loss_div", opt(r.loss_div)},
                   {"batches", r.batches},
                   {"div_steps", r.div_steps},
                   {"targets", r.targets},
                   {"target_ones", r.target_ones},
                   {"target_ones_fraction", r.targets ? nlohmann::json(double(r.target_ones) / r.targets)
                                                      : nlohmann::json(nullptr)},
                   {"cluster_sse", opt(r.cluster_sse)},
                   {"grad_norm_repr", r.grad_norm_repr},
                   {"grad_norm_spec", opt(r.grad_norm_spec)},
                   {"metrics", r.metrics}};
  return j;
}

Tensor<float> encode_features(const model::Model<float>& m, const data::Dataset& ds) {
  return enc::encode_dataset(m.frozen->image, ds);
}

Tensor<float> object_embeddings(const model::Model<float>& m, const Tensor<float>& features,
                                std::span<const std::size_t> rows) {
  const std::size_t d = m.config.dims.d_joint;
  Tensor<float> out = Tensor<float>::matrix(rows.size(), d);
  constexpr std::size_t kChunk = 256;
  for (std::size_t begin = 0; begin < rows.size(); begin += kChunk) {
    const auto chunk = rows.subspan(begin, std::min(kChunk, rows.size() - begin));
    Tape<float> tape;
    model::Graph<float> g(m, tape, model::bind(tape, m.params, false, false));
    const auto tokens = tape.constant(model::gather_images<float>(features, chunk, m.seq()));
    const auto v = ops::l2_normalize(g.obj_image(tokens)).value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(begin * d));
  }
  return out;
}

std::vector<EpochRecord> train(TrainState& state, const data::Dataset& ds, const TrainHooks& hooks) {
  const auto& cfg = state.config;
  cfg.validate();
  const auto& m = state.model;
  if (m.num_attrs != ds.vocab.num_attrs() ||
      m.num_objs != ds.vocab.num_objs() || state.d_raw != ds.d_raw) {
    throw ConfigError("train: state does not match the dataset vocabulary or feature size");
  }
  const bool comp_only = cfg.ablation == Ablation::CompositionOnly;
  const bool specificity = cfg.ablation == Ablation::Full;
  const double gamma = cfg.model.gamma_eff(m.num_attrs);
  const std::size_t repr_end = comp_only ? kCompositionTensors : kReprTensors;

  const Tensor<float> features = encode_features(m, ds);
  const auto train_rows = ds.indices(data::Split::Train);
  const std::span<const Pair> seen(ds.pairs.seen);
  const data::PartnerSampler sampler(ds, train_rows);

  std::vector<EpochRecord> log;
  std::ofstream log_out;
  if (hooks.log_path) {
    log_out.open(*hooks.log_path, std::ios::app);
    if (!log_out) throw FormatError("train: cannot open log " + hooks.log_path->string());
  }

  while (state.epoch < cfg.epochs) {
    if (hooks.stop_after && state.epoch >= *hooks.stop_after) break;
    const int epoch = state.epoch + 1;
    const bool joint = specificity && epoch >= 2;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.ablation = cfg.ablation;
    rec.penalty = joint;
    Sums sum;

    const auto batches = data::batch_iter(train_rows, cfg.batch_size, derive_seed(cfg.shuffle_seed, epoch));
    std::mt19937_64 partner_rng(derive_seed(cfg.shuffle_seed, kPartnerStream + epoch));

    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& rows = batches[bi];
      model::BatchInput<float> in;
      in.tokens = model::gather_images<float>(features, rows, m.seq());
      for (std::size_t r : rows) {
        const auto& s = ds.samples[r];
        in.attr.push_back(s.attr);
        in.obj.push_back(s.obj);
        in.comp_label.push_back(pair_index(seen, {s.attr, s.obj}));
      }

      // Specificity targets from pre-step representations and centroids.
      Tensor<float> v_batch;
      if (joint) {
        std::vector<std::optional<std::size_t>> partner(rows.size());
        std::vector<std::size_t> need(rows.begin(), rows.end());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          partner[i] = sampler.sample(rows[i], rows, partner_rng);
          if (partner[i] && std::find(rows.begin(), rows.end(), *partner[i]) == rows.end()) {
            need.push_back(*partner[i]);
          }
        }
        const auto v = object_embeddings(m, features, need);
        auto row_of = [&](std::size_t sample) {
          return static_cast<std::size_t>(std::find(need.begin(), need.end(), sample) - need.begin());
        };
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (!partner[i]) continue;
          const int s = cluster::specificity_target(state.clusters, v.row(i), v.row(row_of(*partner[i])));
          in.targets.push_back({i, s});
          rec.target_ones += s;
        }
        rec.targets += static_cast<int>(in.targets.size());
        v_batch = Tensor<float>::matrix(rows.size(), v.cols());
        std::copy(v.data().begin(), v.data().begin() + static_cast<std::ptrdiff_t>(v_batch.size()),
                  v_batch.data().begin());
      }

      // Representation step.
      {
        Tape<float> tape;
        const auto pv = model::bind(tape, m.params, true, false);
        model::Graph<float> g(m, tape, pv);
        model::LossOptions opt;
        opt.composition_only = comp_only;
        opt.penalty = joint;
        opt.gamma = joint ? gamma : 0.0;
        opt.need_div = false;
        const auto L = model::losses(g, in, seen, opt);
        const auto& w = cfg.weights;
        auto total = ops::scale(L.base, static_cast<float>(w.base));
        if (!comp_only) {
          total = ops::add(total, ops::scale(L.prim, static_cast<float>(w.prim)));
          total = ops::add(total, ops::scale(L.den, static_cast<float>(w.den)));
          total = ops::add(total, ops::scale(L.refine, static_cast<float>(w.refine)));
        }
        const double base = L.base.value().item();
        check_finite(base, "L_base", epoch, bi);
        sum.base += base;
        if (!comp_only) {
          const double prim = L.prim.value().item(), den = L.den.value().item(), ref = L.refine.value().item();
          check_finite(prim, "L_prim", epoch, bi);
          check_finite(den, "L_den", epoch, bi);
          check_finite(ref, "L_refine", epoch, bi);
          sum.prim += prim;
          sum.den += den;
          sum.refine += ref;
        }
        tape.backward(total);
        std::vector<ParamGrad<float>> pg;
        sum.gr += collect(state.model.params, pv, 0, repr_end, pg);
        state.adam_repr.step(pg);
      }

      if (joint) {
        cluster::minibatch_update(state.clusters, v_batch);
        Tape<float> tape;
        const auto pv = model::bind(tape, m.params, false, true);
        model::Graph<float> g(m, tape, pv);
        if (auto div = model::specificity_loss(g, in.attr, in.obj, in.targets)) {
          const double v = div->value().item();
          check_finite(v, "L_div", epoch, bi);
          sum.div += v;
          tape.backward(ops::scale(*div, static_cast<float>(cfg.weights.div)));
          std::vector<ParamGrad<float>> pg;
          sum.gs += collect(state.model.params, pv, kReprTensors, kReprTensors + 8, pg);
          state.adam_spec.step(pg);
          ++rec.div_steps;
        }
      }
      ++rec.batches;
    }

    const double nb = std::max(1, rec.batches);
    rec.loss_base = sum.base / nb;
    rec.grad_norm_repr = sum.gr / nb;
    if (!comp_only) {
      rec.loss_prim = sum.prim / nb;
      rec.loss_den = sum.den / nb;
      rec.loss_refine = sum.refine / nb;
    }
    if (joint) {
      rec.loss_div = rec.div_steps ? sum.div / rec.div_steps : 0.0;
      rec.grad_norm_spec = rec.div_steps ? sum.gs / rec.div_steps : 0.0;
    }
    if (specificity) {
      const auto v_all = object_embeddings(m, features, train_rows);
      if (epoch == 1) {
        state.clusters = cluster::kmeans_init(v_all, static_cast<std::size_t>(cluster::cluster_count(m.num_objs)),
                                              cfg.cluster_seed);
      }
      rec.cluster_sse = cluster::sse(state.clusters, v_all);
    }
    state.epoch = epoch;
    if (hooks.on_epoch) hooks.on_epoch(state, rec);
    if (log_out.is_open()) log_out << to_json(rec).dump() << '\n' << std::flush;
    log.push_back(std::move(rec));
  }
  return log;
}

}  // namespace cds::train
