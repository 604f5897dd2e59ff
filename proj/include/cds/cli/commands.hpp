// SPDX-License-Identifier: Apache-2.0
//
// The cdsczsl command line: gen-data, train, eval and gradcheck.
// Exit codes: 0 success, 1 usage or config error, 2 runtime or validation failure.
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cds/data/dataset.hpp"
#include "cds/training/config.hpp"

namespace cds::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

inline constexpr const char* kCheckpointFile = "checkpoint.cdsz";
inline constexpr const char* kLogFile = "train_log.jsonl";
inline constexpr const char* kConfigEcho = "config.json";

struct SplitCounts {
  std::size_t seen_pairs = 0;    // distinct seen pairs among the split's images
  std::size_t unseen_pairs = 0;  // distinct unseen pairs among the split's images
  std::size_t images = 0;
  bool operator==(const SplitCounts&) const = default;
};

struct DatasetSummary {
  int attrs = 0;
  int objs = 0;
  std::size_t seen = 0;
  std::size_t unseen = 0;
  SplitCounts train, val, test;
  bool operator==(const DatasetSummary&) const = default;
};

DatasetSummary summarize(const data::Dataset& ds);
std::string format_summary(const DatasetSummary& s, const std::string& name);

// Derives the model, shuffle and cluster seeds from one base seed.
void apply_seed(train::TrainConfig& cfg, std::uint64_t seed);

// Parses argv (argv[0] is the program name) and runs the chosen command.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cds::cli
