// SPDX-License-Identifier: Apache-2.0
//
// Generalized compositional zero-shot evaluation: per-image scores over a
// candidate pair space, the seen/unseen bias sweep, and specificity-interval
// filtering of the open-world space.
#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cds/data/dataset.hpp"
#include "cds/model/model.hpp"

namespace cds::eval {

using data::Pair;

struct ScoreMatrix {
  std::vector<Pair> columns;
  std::vector<char> column_unseen;  // 1 when the column pair is not a training pair
  std::vector<char> column_active;  // 0 for columns removed by a filter
  std::vector<double> scores;       // rows x columns
  std::vector<int> truth;           // column of each row's true pair
  std::vector<char> row_unseen;     // 1 when the true pair is unseen

  std::size_t rows() const { return truth.size(); }
  std::size_t cols() const { return columns.size(); }
  double score(std::size_t r, std::size_t c) const { return scores[r * cols() + c]; }
  std::size_t active_columns() const;
  // Throws ProtocolError on inconsistent sizes or a true column out of range.
  void validate() const;
};

// Fused inference scores (no penalty) for dataset rows. The composition
// softmax is normalized over every attribute-object pair; candidates only
// choose which columns are kept. Throws ProtocolError when a row's true pair
// is not among the candidates.
ScoreMatrix score_testset(const model::Model<float>& m, const Tensor<float>& features, const data::Dataset& ds,
                          std::span<const std::size_t> rows, std::span<const Pair> candidates, double alpha);

// Deactivates every column whose pair is not in `keep` (sorted or not).
ScoreMatrix mask_columns(ScoreMatrix s, std::span<const Pair> keep);

struct BiasPoint {
  double bias = 0.0;
  double seen = 0.0;
  double unseen = 0.0;
  double hm = 0.0;
};

struct BiasCurve {
  std::vector<BiasPoint> points;  // bias descending
  double best_seen = 0.0;
  double best_unseen = 0.0;
  double best_hm = 0.0;
  double auc = 0.0;
};

double harmonic_mean(double s, double u);

// Seen and unseen accuracy with `bias` added to unseen columns; argmax over
// active columns with ties to the lowest index.
BiasPoint evaluate_bias(const ScoreMatrix& s, double bias);

// Sweeps {-inf, +inf}, every per-row critical bias and the midpoints between
// consecutive critical values. Throws ProtocolError without both seen-pair and
// unseen-pair rows.
BiasCurve bias_sweep(const ScoreMatrix& s);

// Trapezoid area under (seen, unseen) points ordered by seen accuracy.
double curve_auc(std::span<const BiasPoint> points);

struct FilterConfig {
  double t_low = 0.0;
  double t_high = 1.0;
  bool keep_seen = true;
  // Throws ConfigError unless t_low < t_high.
  void validate() const;
};

// Pairs of `space` whose specificity lies in [t_low, t_high], plus every seen
// pair when keep_seen. Throws ConfigError on an empty result.
std::vector<Pair> ow_filter(const model::Model<float>& m, std::span<const Pair> space,
                            std::span<const Pair> seen, const FilterConfig& cfg);
// The same from a precomputed |A| x |O| specificity table.
std::vector<Pair> ow_filter(const Tensor<float>& table, std::span<const Pair> space, std::span<const Pair> seen,
                            const FilterConfig& cfg);

struct ThresholdCell {
  double t_low = 0.0;
  double t_high = 0.0;
  std::size_t kept = 0;
  std::optional<double> auc;  // unset when the filter leaves nothing
};

struct ThresholdChoice {
  double t_low = 0.0;
  double t_high = 1.0;
  double auc = 0.0;
  std::vector<ThresholdCell> grid;
};

// Every (t_low, t_high) with t_low < t_high drawn from `levels`; maximizes
// AUC of `ow_scores` masked by the filter, ties to the widest interval, then
// the lowest t_low. Throws ConfigError with fewer than 2 levels.
ThresholdChoice threshold_sweep(const ScoreMatrix& ow_scores, const Tensor<float>& table,
                                std::span<const Pair> seen, std::span<const double> levels, bool keep_seen = true);

// Evenly spaced levels lo, lo + step, ..., hi.
std::vector<double> grid_levels(double lo, double hi, std::size_t count);

struct MetricsRow {
  std::string run_id;
  std::string setting;  // CW or OW
  std::size_t filtered_pairs = 0;
  BiasCurve curve;
};

// Header plus one line per row: run_id,setting,filtered_pairs,best_S,best_U,best_HM,AUC.
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);
// bias,S,U,HM per point; infinite biases written as -inf / inf.
void write_curve_csv(const std::filesystem::path& path, const BiasCurve& curve);
std::string format_table(std::span<const MetricsRow> rows);

}  // namespace cds::eval
