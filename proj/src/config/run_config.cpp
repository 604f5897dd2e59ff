// SPDX-License-Identifier: Apache-2.0
#include "cds/config/run_config.hpp"

#include <fstream>
#include <set>

#include "cds/common/error.hpp"

namespace cds::config {

using json = nlohmann::json;

namespace {

// Reads typed keys from one JSON object and rejects the ones never read.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) fail(path_, "must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.count(key)) fail(where(key), "unknown key");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    const auto& v = doc_.at(key);
    const auto at = where(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(at, "expected a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(at, "expected an integer");
      if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
        fail(at, "must be non-negative");
      }
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(at, "expected a number");
      out = v.get<T>();
    } else {
      if (!v.is_string()) fail(at, "expected a string");
      out = v.get<std::string>();
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return doc_.contains(key) ? &doc_.at(key) : nullptr;
  }
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] static void fail(const std::string& at, const std::string& msg) {
    throw ConfigError("config: " + (at.empty() ? std::string("<root>") : at) + ": " + msg);
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_synthetic(const json& doc, data::SyntheticSpec& s) {
  Section sec(doc, "synthetic");
  sec.get("clusters", s.clusters);
  sec.get("objects_per_cluster", s.objects_per_cluster);
  sec.get("specific_attrs", s.specific_attrs);
  sec.get("general_attrs", s.general_attrs);
  sec.get("train_samples_per_pair", s.train_samples_per_pair);
  sec.get("eval_samples_per_pair", s.eval_samples_per_pair);
  sec.get("seen_fraction", s.seen_fraction);
  sec.get("noise", s.noise);
  sec.get("object_spread", s.object_spread);
  sec.get("attribute_spread", s.attribute_spread);
  sec.get("d_raw", s.d_raw);
  sec.get("seed", s.seed);
}

void read_model(const json& doc, model::ModelConfig& m) {
  Section sec(doc, "model");
  sec.get("tau", m.tau);
  sec.get("alpha", m.alpha);
  if (const auto* g = sec.child("gamma")) {
    if (g->is_null()) {
      m.gamma.reset();
    } else {
      if (!g->is_number()) Section::fail("model.gamma", "expected a number or null");
      m.gamma = g->get<double>();
    }
  }
  sec.get("prob_floor", m.prob_floor);
  std::string mode = m.penalty_mode == model::PenaltyMode::Logit ? "logit" : "probability";
  sec.get("penalty_mode", mode);
  if (mode == "probability") {
    m.penalty_mode = model::PenaltyMode::Probability;
  } else if (mode == "logit") {
    m.penalty_mode = model::PenaltyMode::Logit;
  } else {
    Section::fail("model.penalty_mode", "expected \"probability\" or \"logit\"");
  }
  sec.get("d_emb", m.dims.d_emb);
  sec.get("d_joint", m.dims.d_joint);
  sec.get("tokens", m.dims.tokens);
  sec.get("heads", m.heads);
  if (const auto* h = sec.child("spec_hidden")) {
    if (!h->is_array() || h->size() != 3) Section::fail("model.spec_hidden", "expected an array of 3 widths");
    for (std::size_t i = 0; i < 3; ++i) {
      if (!(*h)[i].is_number_unsigned()) Section::fail("model.spec_hidden", "widths must be non-negative integers");
      m.spec_hidden[i] = (*h)[i].get<std::size_t>();
    }
  }
  sec.get("init_std", m.init_std);
  sec.get("init_seed", m.init_seed);
  sec.get("encoder_seed", m.encoder_seed);
}

void read_train(const json& doc, train::TrainConfig& t) {
  Section sec(doc, "train");
  sec.get("epochs", t.epochs);
  sec.get("batch_size", t.batch_size);
  sec.get("lr_repr", t.lr_repr);
  sec.get("lr_spec", t.lr_spec);
  sec.get("beta1", t.beta1);
  sec.get("beta2", t.beta2);
  sec.get("adam_eps", t.adam_eps);
  if (const auto* w = sec.child("loss_weights")) {
    Section ws(*w, "train.loss_weights");
    ws.get("base", t.weights.base);
    ws.get("prim", t.weights.prim);
    ws.get("den", t.weights.den);
    ws.get("refine", t.weights.refine);
    ws.get("div", t.weights.div);
  }
  sec.get("shuffle_seed", t.shuffle_seed);
  sec.get("cluster_seed", t.cluster_seed);
  std::string ablation = train::ablation_name(t.ablation);
  sec.get("ablation", ablation);
  const auto a = train::parse_ablation(ablation);
  if (!a) Section::fail("train.ablation", "expected full, no_specificity or composition_only");
  t.ablation = *a;
}

}  // namespace

void RunConfig::validate() const {
  if (run_id.empty() || run_id.find_first_of(",\n\r") != std::string::npos) {
    throw ConfigError("config: run_id must be non-empty and free of commas and newlines");
  }
  data::validate(synthetic);
  train.validate();
  filter.validate();
  if (filter.t_low < 0.0 || filter.t_high > 1.0) throw ConfigError("config: filter thresholds must lie in [0, 1]");
  if (grid_levels < 2) throw ConfigError("config: filter.grid_levels must be >= 2");
  if (!(gradcheck.fd.eps > 0.0) || !(gradcheck.tol > 0.0) || !(gradcheck.fd.floor > 0.0)) {
    throw ConfigError("config: gradcheck eps, floor and tol must be positive");
  }
}

RunConfig parse_run_config(const json& doc) {
  RunConfig cfg;
  {
    Section root(doc, "");
    root.get("run_id", cfg.run_id);
    if (const auto* s = root.child("synthetic")) read_synthetic(*s, cfg.synthetic);
    if (const auto* m = root.child("model")) read_model(*m, cfg.train.model);
    if (const auto* t = root.child("train")) read_train(*t, cfg.train);
    if (const auto* f = root.child("filter")) {
      Section sec(*f, "filter");
      sec.get("t_low", cfg.filter.t_low);
      sec.get("t_high", cfg.filter.t_high);
      sec.get("keep_seen", cfg.filter.keep_seen);
      sec.get("grid_levels", cfg.grid_levels);
    }
    if (const auto* g = root.child("gradcheck")) {
      Section sec(*g, "gradcheck");
      sec.get("eps", cfg.gradcheck.fd.eps);
      sec.get("floor", cfg.gradcheck.fd.floor);
      sec.get("max_coords", cfg.gradcheck.fd.max_coords);
      sec.get("seed", cfg.gradcheck.seed);
      sec.get("tol", cfg.gradcheck.tol);
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return parse_run_config(doc);
}

json to_json(const RunConfig& c) {
  const auto& s = c.synthetic;
  const auto& t = c.train;
  const auto& m = t.model;
  return json{
      {"run_id", c.run_id},
      {"synthetic",
       {{"clusters", s.clusters},
        {"objects_per_cluster", s.objects_per_cluster},
        {"specific_attrs", s.specific_attrs},
        {"general_attrs", s.general_attrs},
        {"train_samples_per_pair", s.train_samples_per_pair},
        {"eval_samples_per_pair", s.eval_samples_per_pair},
        {"seen_fraction", s.seen_fraction},
        {"noise", s.noise},
        {"object_spread", s.object_spread},
        {"attribute_spread", s.attribute_spread},
        {"d_raw", s.d_raw},
        {"seed", s.seed}}},
      {"model",
       {{"tau", m.tau},
        {"alpha", m.alpha},
        {"gamma", m.gamma ? json(*m.gamma) : json(nullptr)},
        {"prob_floor", m.prob_floor},
        {"penalty_mode", m.penalty_mode == model::PenaltyMode::Logit ? "logit" : "probability"},
        {"d_emb", m.dims.d_emb},
        {"d_joint", m.dims.d_joint},
        {"tokens", m.dims.tokens},
        {"heads", m.heads},
        {"spec_hidden", m.spec_hidden},
        {"init_std", m.init_std},
        {"init_seed", m.init_seed},
        {"encoder_seed", m.encoder_seed}}},
      {"train",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"lr_repr", t.lr_repr},
        {"lr_spec", t.lr_spec},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"adam_eps", t.adam_eps},
        {"loss_weights",
         {{"base", t.weights.base},
          {"prim", t.weights.prim},
          {"den", t.weights.den},
          {"refine", t.weights.refine},
          {"div", t.weights.div}}},
        {"shuffle_seed", t.shuffle_seed},
        {"cluster_seed", t.cluster_seed},
        {"ablation", train::ablation_name(t.ablation)}}},
      {"filter",
       {{"t_low", c.filter.t_low},
        {"t_high", c.filter.t_high},
        {"keep_seen", c.filter.keep_seen},
        {"grid_levels", c.grid_levels}}},
      {"gradcheck",
       {{"eps", c.gradcheck.fd.eps},
        {"floor", c.gradcheck.fd.floor},
        {"max_coords", c.gradcheck.fd.max_coords},
        {"seed", c.gradcheck.seed},
        {"tol", c.gradcheck.tol}}}};
}

}  // namespace cds::config
