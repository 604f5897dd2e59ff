// SPDX-License-Identifier: Apache-2.0
#include "cds/cli/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "cds/common/error.hpp"
#include "cds/common/rng.hpp"
#include "cds/config/run_config.hpp"
#include "cds/data/dataset_io.hpp"
#include "cds/data/synthetic.hpp"
#include "cds/evaluation/evaluation.hpp"
#include "cds/training/checkpoint.hpp"
#include "cds/training/model_gradcheck.hpp"
#include "cds/training/trainer.hpp"

namespace cds::cli {

namespace fs = std::filesystem;

namespace {

// A bad combination of flags detected after parsing.
class UsageError : public Error {
 public:
  using Error::Error;
};

config::RunConfig load_config(const std::string& path) {
  return path.empty() ? config::RunConfig{} : config::load_run_config(path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw FormatError("cannot write " + path.string());
}

// Write to a sibling file and rename, so a crash never leaves half a checkpoint.
void save_checkpoint_atomic(const train::TrainState& state, const fs::path& path) {
  fs::path tmp = path;
  tmp += ".tmp";
  train::save_checkpoint(state, tmp);
  fs::rename(tmp, path);
}

// Keeps the log lines of epochs the checkpoint already covers.
void trim_log(const fs::path& path, int epochs_done) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.contains("epoch")) continue;
    if (rec["epoch"].get<int>() <= epochs_done) kept += line + '\n';
  }
  in.close();
  write_text(path, kept);
}

void check_compatible(const train::TrainState& state, const data::Dataset& ds) {
  if (state.model.num_attrs != ds.vocab.num_attrs() || state.model.num_objs != ds.vocab.num_objs() ||
      state.d_raw != ds.d_raw) {
    throw ProtocolError("checkpoint does not match the dataset: vocabulary or feature width differ");
  }
}

double eval_alpha(const train::TrainConfig& cfg) {
  return cfg.ablation == train::Ablation::CompositionOnly ? 1.0 : cfg.model.alpha;
}

std::size_t retained(const data::Dataset& ds, std::span<const std::size_t> rows, std::span<const data::Pair> keep) {
  const std::set<data::Pair> k(keep.begin(), keep.end());
  std::size_t n = 0;
  for (const auto r : rows) n += k.count({ds.samples[r].attr, ds.samples[r].obj});
  return n;
}

struct GenDataArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  auto cfg = load_config(a.config);
  if (a.seed) cfg.synthetic.seed = *a.seed;
  data::validate(cfg.synthetic);
  const auto sd = data::generate_synthetic(cfg.synthetic);
  data::save_dataset(sd.dataset, a.out);
  out << format_summary(summarize(sd.dataset), cfg.run_id);
  out << "wrote " << a.out << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string config, data, out, ablation;
  bool resume = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> stop_after;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const fs::path dir(a.out);
  const fs::path ckpt = dir / kCheckpointFile;
  const fs::path log = dir / kLogFile;
  const auto ds = data::load_dataset(a.data);

  train::TrainState state;
  if (a.resume) {
    if (!a.ablation.empty() || a.seed || !a.config.empty()) {
      throw UsageError("--resume takes its configuration from the checkpoint; drop --config, --ablation and --seed");
    }
    if (!fs::exists(ckpt)) throw UsageError("--resume: no checkpoint at " + ckpt.string());
    state = train::load_checkpoint(ckpt);
    check_compatible(state, ds);
    trim_log(log, state.epoch);
    out << "resuming after epoch " << state.epoch << '\n';
  } else {
    auto cfg = load_config(a.config);
    if (!a.ablation.empty()) {
      const auto ab = train::parse_ablation(a.ablation);
      if (!ab) throw UsageError("--ablation: expected full, no_specificity or composition_only");
      cfg.train.ablation = *ab;
    }
    if (a.seed) apply_seed(cfg.train, *a.seed);
    cfg.validate();
    fs::create_directories(dir);
    write_text(dir / kConfigEcho, config::to_json(cfg).dump(2) + '\n');
    write_text(log, "");
    state = train::init_state(cfg.train, ds);
  }

  const auto features = train::encode_features(state.model, ds);
  const auto val = ds.indices(data::Split::Val);
  const double alpha = eval_alpha(state.config);

  train::TrainHooks hooks;
  hooks.stop_after = a.stop_after;
  hooks.on_epoch = [&](const train::TrainState& st, train::EpochRecord& rec) {
    const auto curve = eval::bias_sweep(eval::score_testset(st.model, features, ds, val, ds.pairs.val_pairs, alpha));
    rec.metrics["val_cw_best_seen"] = curve.best_seen;
    rec.metrics["val_cw_best_unseen"] = curve.best_unseen;
    rec.metrics["val_cw_best_hm"] = curve.best_hm;
    rec.metrics["val_cw_auc"] = curve.auc;
    {
      std::ofstream lo(log, std::ios::app);
      lo << train::to_json(rec).dump() << '\n';
      if (!lo) throw FormatError("cannot append to " + log.string());
    }
    save_checkpoint_atomic(st, ckpt);
    char line[160];
    std::snprintf(line, sizeof line, "epoch %2d/%d  L_base %.4f  val CW AUC %.4f  HM %.4f\n", rec.epoch,
                  st.config.epochs, rec.loss_base, curve.auc, curve.best_hm);
    out << line << std::flush;
  };
  train::train(state, ds, hooks);
  out << (state.epoch < state.config.epochs ? "stopped after epoch " : "finished epoch ") << state.epoch << "; "
      << ckpt.string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint, data, setting = "cw", split = "test", csv, curve, run_id, config;
  std::vector<double> filter;
  bool filter_sweep = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::string setting = a.setting;
  std::transform(setting.begin(), setting.end(), setting.begin(), [](unsigned char c) { return std::tolower(c); });
  if (setting != "cw" && setting != "ow") throw UsageError("--setting: expected cw or ow");
  const bool ow = setting == "ow";
  const bool filtered = !a.filter.empty() || a.filter_sweep;
  if (filtered && !ow) throw UsageError("--filter and --filter-sweep apply to --setting ow only");
  if (!a.filter.empty() && !(a.filter[0] < a.filter[1])) throw UsageError("--filter: t_low must be below t_high");
  const auto split = data::parse_split(a.split);
  if (!split || *split == data::Split::Train) throw UsageError("--split: expected val or test");

  const auto cfg = load_config(a.config);
  const auto state = train::load_checkpoint(a.checkpoint);
  const auto ds = data::load_dataset(a.data);
  check_compatible(state, ds);

  const auto features = train::encode_features(state.model, ds);
  const auto rows = ds.indices(*split);
  const double alpha = eval_alpha(state.config);
  const auto all = data::all_pairs(ds.vocab);
  const auto& cw_pairs = *split == data::Split::Val ? ds.pairs.val_pairs : ds.pairs.test_pairs;

  auto scores = eval::score_testset(state.model, features, ds, rows, ow ? std::span<const data::Pair>(all)
                                                                        : std::span<const data::Pair>(cw_pairs),
                                    alpha);
  if (filtered) {
    const auto table = model::specificity_table(state.model);
    eval::FilterConfig fc{0.0, 1.0, cfg.filter.keep_seen};
    if (a.filter_sweep) {
      const auto val = ds.indices(data::Split::Val);
      const auto val_scores = eval::score_testset(state.model, features, ds, val, all, alpha);
      const auto levels = eval::grid_levels(0.0, 1.0, cfg.grid_levels);
      const auto choice = eval::threshold_sweep(val_scores, table, ds.pairs.seen, levels, fc.keep_seen);
      fc.t_low = choice.t_low;
      fc.t_high = choice.t_high;
      out << "filter sweep on val: t_low " << choice.t_low << " t_high " << choice.t_high << " val OW AUC "
          << choice.auc << '\n';
    } else {
      fc.t_low = a.filter[0];
      fc.t_high = a.filter[1];
    }
    const auto keep = eval::ow_filter(table, all, ds.pairs.seen, fc);
    scores = eval::mask_columns(std::move(scores), keep);
    out << "filter [" << fc.t_low << ", " << fc.t_high << "] keeps " << keep.size() << " of " << all.size()
        << " pairs; " << retained(ds, rows, keep) << " of " << rows.size() << " true pairs retained\n";
  }

  eval::MetricsRow row{a.run_id.empty() ? cfg.run_id : a.run_id, ow ? "OW" : "CW", scores.active_columns(),
                       eval::bias_sweep(scores)};
  out << eval::format_table(std::span<const eval::MetricsRow>(&row, 1));
  if (!a.csv.empty()) eval::write_metrics_csv(a.csv, std::span<const eval::MetricsRow>(&row, 1));
  if (!a.curve.empty()) eval::write_curve_csv(a.curve, row.curve);
  return kExitOk;
}

struct GradcheckArgs {
  std::string config, fault;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  const auto cfg = load_config(a.config);
  auto opts = cfg.gradcheck;
  if (!a.fault.empty()) {
    const auto colon = a.fault.rfind(':');
    double factor = 0.0;
    const char* first = a.fault.data() + colon + 1;
    const char* last = a.fault.data() + a.fault.size();
    if (colon == std::string::npos || colon == 0 || std::from_chars(first, last, factor).ptr != last) {
      throw UsageError("--fault: expected op:factor, e.g. tanh:1.5");
    }
    opts.fault_op = a.fault.substr(0, colon);
    opts.fault_factor = factor;
    out << "fault injected: backward of '" << opts.fault_op << "' scaled by " << factor << '\n';
  }
  const auto checks = train::gradcheck_losses(opts);
  bool ok = true;
  for (const auto& c : checks) {
    char line[128];
    std::snprintf(line, sizeof line, "%-9s max rel err %.3e  %s\n", c.loss.c_str(), c.report.max_rel_err,
                  c.passed ? "PASS" : "FAIL");
    out << line;
    if (!c.passed) {
      ok = false;
      for (const auto& name : c.report.failing(opts.tol)) out << "    " << name << '\n';
    }
  }
  out << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (tol " << opts.tol << ")\n";
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

DatasetSummary summarize(const data::Dataset& ds) {
  DatasetSummary s;
  s.attrs = ds.vocab.num_attrs();
  s.objs = ds.vocab.num_objs();
  s.seen = ds.pairs.seen.size();
  s.unseen = ds.pairs.unseen.size();
  std::set<data::Pair> pairs[3];
  SplitCounts* counts[3] = {&s.train, &s.val, &s.test};
  for (const auto& smp : ds.samples) {
    const auto k = static_cast<int>(smp.split);
    ++counts[k]->images;
    pairs[k].insert({smp.attr, smp.obj});
  }
  for (int k = 0; k < 3; ++k) {
    for (const auto& p : pairs[k]) ++(ds.pairs.is_seen(p) ? counts[k]->seen_pairs : counts[k]->unseen_pairs);
  }
  return s;
}

std::string format_summary(const DatasetSummary& s, const std::string& name) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "Dataset" << std::right << std::setw(5) << "|A|" << std::setw(5) << "|O|"
     << std::setw(7) << "|Y^S|" << std::setw(7) << "|Y^U|" << " | " << std::setw(9) << "train Y^S" << std::setw(7)
     << "#img" << " | " << std::setw(7) << "val Y^S" << std::setw(7) << "Y^U" << std::setw(7) << "#img" << " | "
     << std::setw(8) << "test Y^S" << std::setw(7) << "Y^U" << std::setw(7) << "#img" << '\n';
  os << std::left << std::setw(12) << name << std::right << std::setw(5) << s.attrs << std::setw(5) << s.objs
     << std::setw(7) << s.seen << std::setw(7) << s.unseen << " | " << std::setw(9) << s.train.seen_pairs
     << std::setw(7) << s.train.images << " | " << std::setw(7) << s.val.seen_pairs << std::setw(7)
     << s.val.unseen_pairs << std::setw(7) << s.val.images << " | " << std::setw(8) << s.test.seen_pairs
     << std::setw(7) << s.test.unseen_pairs << std::setw(7) << s.test.images << '\n';
  return os.str();
}

void apply_seed(train::TrainConfig& cfg, std::uint64_t seed) {
  cfg.model.init_seed = derive_seed(seed, 1);
  cfg.shuffle_seed = derive_seed(seed, 2);
  cfg.cluster_seed = derive_seed(seed, 3);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compositional zero-shot learning with learned attribute specificity", "cdsczsl"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  gen_cmd->add_option("--config", gen.config, "JSON run config")->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Override synthetic.seed");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model; checkpoints after every epoch");
  train_cmd->add_option("--config", tr.config, "JSON run config")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--out", tr.out, "Run directory for checkpoint and log")->required();
  train_cmd->add_option("--ablation", tr.ablation, "full, no_specificity or composition_only");
  train_cmd->add_flag("--resume", tr.resume, "Continue from the checkpoint in --out");
  train_cmd->add_option("--seed", tr.seed, "Base seed for init, shuffling and clustering");
  train_cmd->add_option("--stop-after", tr.stop_after, "Stop once this many epochs are complete")
      ->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint under the bias-sweep protocol");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--setting", ev.setting, "cw or ow")->capture_default_str();
  auto* filter_opt = eval_cmd->add_option("--filter", ev.filter, "Specificity interval t_low t_high")->expected(2);
  auto* sweep_opt = eval_cmd->add_flag("--filter-sweep", ev.filter_sweep, "Choose the interval on val");
  filter_opt->excludes(sweep_opt);
  eval_cmd->add_option("--split", ev.split, "val or test")->capture_default_str();
  eval_cmd->add_option("--out", ev.csv, "Metrics CSV");
  eval_cmd->add_option("--curve", ev.curve, "Bias curve CSV");
  eval_cmd->add_option("--run-id", ev.run_id, "Run id in the CSV (default: config run_id)");
  eval_cmd->add_option("--config", ev.config, "JSON run config (filter section)")->check(CLI::ExistingFile);

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every loss on a tiny model");
  gc_cmd->add_option("--config", gc.config, "JSON run config (gradcheck section)")->check(CLI::ExistingFile);
  gc_cmd->add_option("--fault", gc.fault, "Scale one op's backward rule, op:factor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, out);
    if (*train_cmd) return cmd_train(tr, out);
    if (*eval_cmd) return cmd_eval(ev, out);
    return cmd_gradcheck(gc, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"cdsczsl"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cds::cli
