// SPDX-License-Identifier: Apache-2.0
#include "cds/training/model_gradcheck.hpp"

#include <algorithm>
#include <random>

#include "cds/model/model.hpp"

namespace cds::train {

namespace {

model::ModelConfig tiny_config(std::uint64_t seed) {
  model::ModelConfig c;
  c.dims = {6, 8, 2};
  c.heads = 2;
  c.spec_hidden = {5, 4, 3};
  c.tau = 0.5;
  c.init_std = 0.5;
  c.init_seed = seed;
  c.encoder_seed = seed + 1;
  return c;
}

}  // namespace

std::vector<LossCheck> gradcheck_losses(const ModelGradCheckOptions& options) {
  constexpr int kAttrs = 3, kObjs = 4;
  constexpr std::size_t kRaw = 5;
  const auto m = model::init_model(tiny_config(options.seed), kAttrs, kObjs, kRaw).cast<double>();

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  model::BatchInput<double> batch;
  const std::vector<model::Pair> labels = {{0, 1}, {1, 2}, {2, 0}, {0, 3}};
  batch.tokens = Tensor<double>::matrix(labels.size() * m.seq(), m.config.dims.d_joint);
  for (auto& v : batch.tokens.data()) v = normal(rng);
  const std::vector<model::Pair> train_pairs = {{0, 1}, {0, 2}, {0, 3}, {1, 0}, {1, 2}, {2, 0}, {2, 3}};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    batch.attr.push_back(labels[i].attr);
    batch.obj.push_back(labels[i].obj);
    const auto it = std::lower_bound(train_pairs.begin(), train_pairs.end(), labels[i]);
    batch.comp_label.push_back(static_cast<int>(it - train_pairs.begin()));
    batch.targets.push_back({i, static_cast<int>(i % 2 == 0)});
  }

  std::vector<NamedTensor> params;
  m.params.visit([&](const char* name, const Tensor<double>& t) { params.push_back({name, t}); });

  model::LossOptions opt;
  opt.penalty = true;
  opt.gamma = m.config.gamma_eff(kAttrs);
  opt.need_div = true;

  const std::vector<std::string> names = {"L_base", "L_prim", "L_den", "L_refine", "L_div"};
  std::vector<LossCheck> out;
  for (std::size_t which = 0; which < names.size(); ++which) {
    const LossBuilder build = [&](Tape<double>& tape, const std::vector<Var<double>>& vars) {
      const auto snapshot = model::bind(tape, m.params, false, false);
      model::Graph<double> g(m, tape, model::from_list(vars), snapshot);
      const auto L = model::losses(g, batch, train_pairs, opt);
      const Var<double> pick[] = {L.base, L.prim, L.den, L.refine, L.div};
      return pick[which];
    };
    TapeHook hook;
    if (!options.fault_op.empty()) {
      hook = [&](Tape<double>& tape) { tape.inject_fault(options.fault_op, options.fault_factor); };
    }
    LossCheck c{names[which], finite_difference_check(build, params, options.fd, hook), false};
    c.passed = c.report.passed(options.tol);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace cds::train
