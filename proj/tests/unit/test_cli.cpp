// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "cds/cli/commands.hpp"
#include "cds/common/error.hpp"
#include "cds/config/run_config.hpp"
#include "cds/data/dataset_io.hpp"
#include "cds/evaluation/evaluation.hpp"
#include "cds/training/checkpoint.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using namespace cds;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

Result invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::vector<json> read_log(const fs::path& p) {
  std::vector<json> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
  return out;
}

// Second CSV line, split on commas.
std::vector<std::string> csv_row(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::vector<std::string> cells;
  std::stringstream ss(line);
  for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
  return cells;
}

// Shared dataset and short training run for the eval tests.
struct Fixture {
  testing::TempDir dir{"cli"};
  fs::path data = dir.path() / "data";
  fs::path run = dir.path() / "run";
  fs::path config = dir.path() / "short.json";
  Fixture() {
    write(config, R"({"run_id": "short", "train": {"epochs": 4}})");
    REQUIRE(invoke({"gen-data", "--out", data.string()}).code == 0);
    REQUIRE(invoke({"train", "--config", config.string(), "--data", data.string(), "--out", run.string()}).code == 0);
  }
  std::string ckpt() const { return (run / cli::kCheckpointFile).string(); }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("run config rejects unknown keys and wrong types with the key path") {
  auto message = [](const char* text) {
    try {
      config::parse_run_config(json::parse(text));
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message(R"({"train": {"lr_reprr": 0.1}})").find("train.lr_reprr") != std::string::npos);
  CHECK(message(R"({"train": {"loss_weights": {"dvi": 1}}})").find("train.loss_weights.dvi") != std::string::npos);
  CHECK(message(R"({"synthetic": {"seed": "7"}})").find("synthetic.seed") != std::string::npos);
  CHECK(message(R"({"model": {"penalty_mode": "hinge"}})").find("model.penalty_mode") != std::string::npos);
  CHECK(message(R"({"model": {"spec_hidden": [4, 4]}})").find("model.spec_hidden") != std::string::npos);
  CHECK(message(R"({"train": {"ablation": "spm"}})").find("train.ablation") != std::string::npos);
  CHECK(message(R"({"filter": {"t_low": 0.7, "t_high": 0.2}})") != "");
  CHECK(message(R"({"train": {"epochs": 1}})") != "");
  CHECK(message(R"([1, 2])") != "");
  CHECK(message(R"({})") == "");
}

TEST_CASE("run config survives a JSON round trip") {
  config::RunConfig c;
  c.run_id = "rt";
  c.synthetic.noise = 0.125;
  c.train.epochs = 9;
  c.train.ablation = train::Ablation::NoSpecificity;
  c.train.model.gamma = 0.25;
  c.train.model.penalty_mode = model::PenaltyMode::Logit;
  c.train.model.spec_hidden = {7, 6, 5};
  c.filter.keep_seen = false;
  c.grid_levels = 11;
  const auto back = config::parse_run_config(config::to_json(c));
  CHECK(back.run_id == "rt");
  CHECK(back.synthetic == c.synthetic);
  CHECK(back.train == c.train);
  CHECK(back.filter.keep_seen == false);
  CHECK(back.grid_levels == 11);
  CHECK(config::to_json(back) == config::to_json(c));
}

TEST_CASE("gen-data writes the four files and is deterministic") {
  testing::TempDir dir("gen");
  const auto a = dir.path() / "a", b = dir.path() / "b", c = dir.path() / "c";
  REQUIRE(invoke({"gen-data", "--out", a.string()}).code == 0);
  REQUIRE(invoke({"gen-data", "--out", b.string()}).code == 0);
  REQUIRE(invoke({"gen-data", "--out", c.string(), "--seed", "8"}).code == 0);
  for (const char* f : {"vocab.json", "pairs.json", "features.bin", "labels.csv"}) {
    CHECK(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(slurp(a / "features.bin") != slurp(c / "features.bin"));
}

TEST_CASE("gen-data summary matches a recount of labels.csv") {
  testing::TempDir dir("recount");
  const auto d = dir.path() / "d";
  const auto r = invoke({"gen-data", "--out", d.string()});
  REQUIRE(r.code == 0);

  const auto vocab = json::parse(slurp(d / "vocab.json"));
  const auto pairs = json::parse(slurp(d / "pairs.json"));
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : pairs["seen"]) seen.insert({p[0].get<std::string>(), p[1].get<std::string>()});

  std::map<std::string, std::set<std::pair<std::string, std::string>>> split_pairs;
  std::map<std::string, std::size_t> images;
  std::ifstream in(d / "labels.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "index,attribute,object,split");
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string idx, attr, obj, split;
    std::getline(ss, idx, ',');
    std::getline(ss, attr, ',');
    std::getline(ss, obj, ',');
    std::getline(ss, split, ',');
    split_pairs[split].insert({attr, obj});
    ++images[split];
  }
  auto count = [&](const std::string& split, bool want_seen) {
    std::size_t n = 0;
    for (const auto& p : split_pairs[split]) n += seen.count(p) == (want_seen ? 1u : 0u);
    return n;
  };

  cli::DatasetSummary expect;
  expect.attrs = static_cast<int>(vocab["attributes"].size());
  expect.objs = static_cast<int>(vocab["objects"].size());
  expect.seen = pairs["seen"].size();
  expect.unseen = pairs["unseen"].size();
  expect.train = {count("train", true), count("train", false), images["train"]};
  expect.val = {count("val", true), count("val", false), images["val"]};
  expect.test = {count("test", true), count("test", false), images["test"]};

  const auto got = cli::summarize(data::load_dataset(d));
  CHECK(got == expect);
  CHECK(r.out.find(cli::format_summary(expect, "run")) != std::string::npos);
}

TEST_CASE("train composition_only logs SPM mode without primitive losses") {
  const auto& f = fixture();
  const auto run = f.dir.path() / "spm";
  const auto r = invoke({"train", "--config", f.config.string(), "--data", f.data.string(), "--out", run.string(),
                      "--ablation", "composition_only"});
  REQUIRE(r.code == 0);
  const auto log = read_log(run / cli::kLogFile);
  REQUIRE(log.size() == 4);
  for (const auto& rec : log) {
    CHECK(rec["label"] == "SPM");
    CHECK(rec["mode"] == "composition_only");
    CHECK(rec["loss_prim"].is_null());
    CHECK(rec["loss_den"].is_null());
    CHECK(rec["loss_refine"].is_null());
    CHECK(rec["loss_div"].is_null());
    CHECK(rec["metrics"].contains("val_cw_auc"));
  }
  const auto echo = json::parse(slurp(run / cli::kConfigEcho));
  CHECK(echo["train"]["ablation"] == "composition_only");
}

TEST_CASE("train writes per-epoch validation metrics and a checkpoint") {
  const auto& f = fixture();
  const auto log = read_log(f.run / cli::kLogFile);
  REQUIRE(log.size() == 4);
  for (std::size_t i = 0; i < log.size(); ++i) {
    CHECK(log[i]["epoch"] == i + 1);
    for (const char* k : {"val_cw_auc", "val_cw_best_hm", "val_cw_best_seen", "val_cw_best_unseen"}) {
      const double v = log[i]["metrics"][k].get<double>();
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(train::load_checkpoint(f.ckpt()).epoch == 4);
}

TEST_CASE("interrupted training resumed with --resume matches the uninterrupted run") {
  const auto& f = fixture();
  const auto run = f.dir.path() / "resumed";
  const std::vector<std::string> base{"train", "--data", f.data.string(), "--out", run.string()};
  auto first = base;
  first.insert(first.end(), {"--config", f.config.string(), "--stop-after", "2"});
  REQUIRE(invoke(first).code == 0);
  CHECK(read_log(run / cli::kLogFile).size() == 2);
  auto second = base;
  second.push_back("--resume");
  REQUIRE(invoke(second).code == 0);
  CHECK(slurp(run / cli::kLogFile) == slurp(f.run / cli::kLogFile));
  CHECK(slurp(run / cli::kCheckpointFile) == slurp(f.ckpt()));

  auto bad = second;
  bad.insert(bad.end(), {"--seed", "3"});
  CHECK(invoke(bad).code == cli::kExitUsage);
}

TEST_CASE("--seed changes the run and is reproducible") {
  const auto& f = fixture();
  auto go = [&](const std::string& name, const std::string& seed) {
    const auto run = f.dir.path() / name;
    REQUIRE(invoke({"train", "--config", f.config.string(), "--data", f.data.string(), "--out", run.string(),
                 "--seed", seed})
                .code == 0);
    return slurp(run / cli::kCheckpointFile);
  };
  const auto a = go("s1a", "1"), b = go("s1b", "1"), c = go("s2", "2");
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("eval: OW AUC does not exceed CW AUC and the [0,1] filter is a no-op") {
  const auto& f = fixture();
  const auto d = f.dir.path();
  auto eval = [&](std::vector<std::string> extra, const std::string& csv) {
    std::vector<std::string> args{"eval", "--checkpoint", f.ckpt(), "--data", f.data.string(), "--out",
                                  (d / csv).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = invoke(args);
    REQUIRE(r.code == 0);
    return csv_row(d / csv);
  };
  const auto cw = eval({"--setting", "cw"}, "cw.csv");
  const auto ow = eval({"--setting", "ow"}, "ow.csv");
  const auto noop = eval({"--setting", "ow", "--filter", "0", "1"}, "noop.csv");
  REQUIRE(cw.size() == 7);
  CHECK(cw[1] == "CW");
  CHECK(ow[1] == "OW");
  CHECK(std::stod(ow[6]) <= std::stod(cw[6]));
  CHECK(std::stod(ow[5]) <= std::stod(cw[5]));
  CHECK(noop == ow);
}

TEST_CASE("eval --filter-sweep reports the evaluation-module choice") {
  const auto& f = fixture();
  const auto r = invoke({"eval", "--checkpoint", f.ckpt(), "--data", f.data.string(), "--setting", "ow",
                      "--filter-sweep", "--out", (f.dir.path() / "sweep.csv").string()});
  REQUIRE(r.code == 0);

  const auto state = train::load_checkpoint(f.ckpt());
  const auto ds = data::load_dataset(f.data);
  const auto features = train::encode_features(state.model, ds);
  const auto all = data::all_pairs(ds.vocab);
  const auto val = ds.indices(data::Split::Val);
  const auto table = model::specificity_table(state.model);
  const auto levels = eval::grid_levels(0.0, 1.0, 21);
  const auto choice = eval::threshold_sweep(eval::score_testset(state.model, features, ds, val, all, 0.5), table,
                                            ds.pairs.seen, levels);
  std::ostringstream want;
  want << "t_low " << choice.t_low << " t_high " << choice.t_high << " val OW AUC " << choice.auc;
  CHECK(r.out.find(want.str()) != std::string::npos);

  const auto keep = eval::ow_filter(table, all, ds.pairs.seen, {choice.t_low, choice.t_high, true});
  const auto row = csv_row(f.dir.path() / "sweep.csv");
  CHECK(row[2] == std::to_string(keep.size()));
}

TEST_CASE("eval usage errors exit with 1, runtime failures with 2") {
  const auto& f = fixture();
  const std::vector<std::string> base{"eval", "--checkpoint", f.ckpt(), "--data", f.data.string()};
  auto with = [&](std::vector<std::string> extra) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return invoke(a).code;
  };
  CHECK(with({"--setting", "ow", "--filter", "0.6", "0.6"}) == cli::kExitUsage);
  CHECK(with({"--setting", "ow", "--filter", "0.8", "0.2"}) == cli::kExitUsage);
  CHECK(with({"--setting", "cw", "--filter", "0", "1"}) == cli::kExitUsage);
  CHECK(with({"--setting", "ow", "--filter", "0", "1", "--filter-sweep"}) == cli::kExitUsage);
  CHECK(with({"--setting", "xw"}) == cli::kExitUsage);
  CHECK(with({"--split", "train"}) == cli::kExitUsage);
  CHECK(invoke({"eval", "--checkpoint", (f.dir.path() / "short.json").string(), "--data", f.data.string()}).code ==
        cli::kExitFailure);
  CHECK(invoke({"eval", "--data", f.data.string()}).code == cli::kExitUsage);
  CHECK(invoke({}).code == cli::kExitUsage);
}

TEST_CASE("config errors exit with 1 and name the key") {
  testing::TempDir dir("cfg");
  write(dir.path() / "bad.json", R"({"synthetic": {"noize": 0.1}})");
  const auto r = invoke({"gen-data", "--config", (dir.path() / "bad.json").string(), "--out",
                      (dir.path() / "d").string()});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("synthetic.noize") != std::string::npos);
  CHECK_FALSE(fs::exists(dir.path() / "d"));
}

TEST_CASE("gradcheck lists every loss, passes by default and fails under a fault") {
  const auto ok = invoke({"gradcheck"});
  CHECK(ok.code == 0);
  for (const char* loss : {"L_base", "L_prim", "L_den", "L_refine", "L_div"}) {
    CHECK(ok.out.find(loss) != std::string::npos);
  }
  CHECK(ok.out.find("FAIL") == std::string::npos);

  const auto bad = invoke({"gradcheck", "--fault", "tanh:1.5"});
  CHECK(bad.code == cli::kExitFailure);
  CHECK(bad.out.find("'tanh'") != std::string::npos);
  CHECK(bad.out.find("FAIL") != std::string::npos);
  CHECK(bad.out.find("repr.comp_attr") != std::string::npos);

  CHECK(invoke({"gradcheck", "--fault", "tanh"}).code == cli::kExitUsage);
}
