// SPDX-License-Identifier: Apache-2.0
#include "cds/evaluation/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "cds/common/error.hpp"

namespace cds::eval {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kChunk = 128;

std::vector<Pair> sorted_unique(std::span<const Pair> pairs) {
  std::vector<Pair> out(pairs.begin(), pairs.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool contains(const std::vector<Pair>& sorted, Pair p) { return std::binary_search(sorted.begin(), sorted.end(), p); }

// Best active seen and unseen column of one row (ties to the lowest index).
struct RowSummary {
  int seen_col = -1, unseen_col = -1;
  double seen_max = -kInf, unseen_max = -kInf;
  bool unseen_truth = false;
  int truth = -1;
};

std::vector<RowSummary> summarize(const ScoreMatrix& s) {
  s.validate();
  std::vector<RowSummary> out(s.rows());
  for (std::size_t r = 0; r < s.rows(); ++r) {
    auto& row = out[r];
    row.truth = s.truth[r];
    row.unseen_truth = s.row_unseen[r] != 0;
    for (std::size_t c = 0; c < s.cols(); ++c) {
      if (!s.column_active[c]) continue;
      const double v = s.score(r, c);
      if (s.column_unseen[c]) {
        if (row.unseen_col < 0 || v > row.unseen_max) row.unseen_col = static_cast<int>(c), row.unseen_max = v;
      } else {
        if (row.seen_col < 0 || v > row.seen_max) row.seen_col = static_cast<int>(c), row.seen_max = v;
      }
    }
  }
  return out;
}

int predict(const RowSummary& row, double bias) {
  if (row.unseen_col < 0) return row.seen_col;
  if (row.seen_col < 0) return row.unseen_col;
  if (bias == kInf) return row.unseen_col;
  if (bias == -kInf) return row.seen_col;
  const double u = row.unseen_max + bias;
  if (u > row.seen_max || (u == row.seen_max && row.unseen_col < row.seen_col)) return row.unseen_col;
  return row.seen_col;
}

BiasPoint point_at(const std::vector<RowSummary>& rows, double bias) {
  std::size_t ns = 0, nu = 0, cs = 0, cu = 0;
  for (const auto& r : rows) {
    const bool ok = predict(r, bias) == r.truth;
    if (r.unseen_truth) {
      ++nu;
      cu += ok;
    } else {
      ++ns;
      cs += ok;
    }
  }
  BiasPoint p;
  p.bias = bias;
  p.seen = ns ? static_cast<double>(cs) / static_cast<double>(ns) : 0.0;
  p.unseen = nu ? static_cast<double>(cu) / static_cast<double>(nu) : 0.0;
  p.hm = harmonic_mean(p.seen, p.unseen);
  return p;
}

std::string fmt_bias(double b) {
  if (std::isinf(b)) return b > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << b;
  return os.str();
}

}  // namespace

std::size_t ScoreMatrix::active_columns() const {
  return static_cast<std::size_t>(std::count(column_active.begin(), column_active.end(), 1));
}

void ScoreMatrix::validate() const {
  const auto bad = [](const std::string& msg) { throw ProtocolError("score matrix: " + msg); };
  if (column_unseen.size() != cols() || column_active.size() != cols()) bad("column flags do not match columns");
  if (scores.size() != rows() * cols()) bad("score buffer does not match rows x columns");
  if (row_unseen.size() != rows()) bad("row flags do not match rows");
  for (std::size_t r = 0; r < rows(); ++r) {
    if (truth[r] < 0 || static_cast<std::size_t>(truth[r]) >= cols()) {
      bad("row " + std::to_string(r) + " has no true column");
    }
    if ((column_unseen[static_cast<std::size_t>(truth[r])] != 0) != (row_unseen[r] != 0)) {
      bad("row " + std::to_string(r) + " seen flag disagrees with its true column");
    }
  }
}

ScoreMatrix score_testset(const model::Model<float>& m, const Tensor<float>& features, const data::Dataset& ds,
                          std::span<const std::size_t> rows, std::span<const Pair> candidates, double alpha) {
  if (candidates.empty()) throw ConfigError("score_testset: empty candidate set");
  const auto all = data::all_pairs(ds.vocab);
  ScoreMatrix out;
  out.columns.assign(candidates.begin(), candidates.end());
  std::set<Pair> index_check;
  for (Pair p : out.columns) {
    if (!index_check.insert(p).second) throw ConfigError("score_testset: duplicate candidate pair");
    out.column_unseen.push_back(!contains(ds.pairs.seen, p));
  }
  out.column_active.assign(out.cols(), 1);
  std::vector<std::pair<Pair, int>> lookup;
  for (std::size_t c = 0; c < out.cols(); ++c) lookup.push_back({out.columns[c], static_cast<int>(c)});
  std::sort(lookup.begin(), lookup.end());
  for (std::size_t r : rows) {
    const Pair p{ds.samples[r].attr, ds.samples[r].obj};
    const auto it = std::lower_bound(lookup.begin(), lookup.end(), std::make_pair(p, -1));
    if (it == lookup.end() || it->first != p) {
      throw ProtocolError("score_testset: true pair of sample " + std::to_string(r) + " (" +
                          ds.vocab.attributes()[static_cast<std::size_t>(p.attr)] + ", " +
                          ds.vocab.objects()[static_cast<std::size_t>(p.obj)] + ") is not a candidate");
    }
    out.truth.push_back(it->second);
    out.row_unseen.push_back(out.column_unseen[static_cast<std::size_t>(it->second)]);
  }
  out.scores.resize(rows.size() * out.cols());
  for (std::size_t begin = 0; begin < rows.size(); begin += kChunk) {
    const auto chunk = rows.subspan(begin, std::min(kChunk, rows.size() - begin));
    const auto tokens = model::gather_images<float>(features, chunk, m.seq());
    const auto sc = model::fused_scores(m, tokens, candidates, alpha, false, {}, all);
    std::transform(sc.data().begin(), sc.data().end(),
                   out.scores.begin() + static_cast<std::ptrdiff_t>(begin * out.cols()),
                   [](float v) { return static_cast<double>(v); });
  }
  return out;
}

ScoreMatrix mask_columns(ScoreMatrix s, std::span<const Pair> keep) {
  const auto k = sorted_unique(keep);
  for (std::size_t c = 0; c < s.cols(); ++c) {
    if (!contains(k, s.columns[c])) s.column_active[c] = 0;
  }
  return s;
}

double harmonic_mean(double s, double u) { return s + u > 0.0 ? 2.0 * s * u / (s + u) : 0.0; }

BiasPoint evaluate_bias(const ScoreMatrix& s, double bias) { return point_at(summarize(s), bias); }

double curve_auc(std::span<const BiasPoint> points) {
  std::vector<BiasPoint> p(points.begin(), points.end());
  std::stable_sort(p.begin(), p.end(), [](const BiasPoint& a, const BiasPoint& b) {
    return a.seen != b.seen ? a.seen < b.seen : a.unseen > b.unseen;
  });
  double area = 0.0;
  for (std::size_t i = 1; i < p.size(); ++i) area += (p[i].seen - p[i - 1].seen) * (p[i].unseen + p[i - 1].unseen) / 2.0;
  return area;
}

BiasCurve bias_sweep(const ScoreMatrix& s) {
  const auto rows = summarize(s);
  const bool has_seen = std::any_of(rows.begin(), rows.end(), [](const RowSummary& r) { return !r.unseen_truth; });
  const bool has_unseen = std::any_of(rows.begin(), rows.end(), [](const RowSummary& r) { return r.unseen_truth; });
  if (!has_seen || !has_unseen) throw ProtocolError("bias_sweep: need rows with both seen and unseen true pairs");

  std::vector<double> crit;
  for (const auto& r : rows) {
    if (r.seen_col >= 0 && r.unseen_col >= 0) crit.push_back(r.seen_max - r.unseen_max);
  }
  std::sort(crit.begin(), crit.end(), std::greater<>());
  crit.erase(std::unique(crit.begin(), crit.end()), crit.end());
  std::vector<double> biases{kInf};
  for (std::size_t i = 0; i < crit.size(); ++i) {
    biases.push_back(crit[i]);
    if (i + 1 < crit.size()) biases.push_back(crit[i] + (crit[i + 1] - crit[i]) / 2.0);
  }
  biases.push_back(-kInf);

  BiasCurve curve;
  curve.points.resize(biases.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < biases.size(); ++i) curve.points[i] = point_at(rows, biases[i]);
  for (const auto& p : curve.points) {
    curve.best_seen = std::max(curve.best_seen, p.seen);
    curve.best_unseen = std::max(curve.best_unseen, p.unseen);
    curve.best_hm = std::max(curve.best_hm, p.hm);
  }
  curve.auc = curve_auc(curve.points);
  return curve;
}

void FilterConfig::validate() const {
  if (!(t_low < t_high)) {
    throw ConfigError("filter: t_low (" + fmt_bias(t_low) + ") must be below t_high (" + fmt_bias(t_high) + ")");
  }
}

std::vector<Pair> ow_filter(const Tensor<float>& table, std::span<const Pair> space, std::span<const Pair> seen,
                            const FilterConfig& cfg) {
  cfg.validate();
  const auto seen_sorted = sorted_unique(seen);
  std::vector<Pair> out;
  for (Pair p : space) {
    const double s = table(static_cast<std::size_t>(p.attr), static_cast<std::size_t>(p.obj));
    if ((s >= cfg.t_low && s <= cfg.t_high) || (cfg.keep_seen && contains(seen_sorted, p))) out.push_back(p);
  }
  if (out.empty()) {
    throw ConfigError("filter: no pair has specificity in [" + fmt_bias(cfg.t_low) + ", " + fmt_bias(cfg.t_high) +
                      "]; widen the thresholds");
  }
  return out;
}

std::vector<Pair> ow_filter(const model::Model<float>& m, std::span<const Pair> space, std::span<const Pair> seen,
                            const FilterConfig& cfg) {
  return ow_filter(model::specificity_table(m), space, seen, cfg);
}

std::vector<double> grid_levels(double lo, double hi, std::size_t count) {
  if (count < 2 || !(lo < hi)) throw ConfigError("grid: need at least 2 levels over a non-empty range");
  std::vector<double> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  return out;
}

ThresholdChoice threshold_sweep(const ScoreMatrix& ow_scores, const Tensor<float>& table, std::span<const Pair> seen,
                                std::span<const double> levels, bool keep_seen) {
  if (levels.size() < 2) throw ConfigError("threshold_sweep: need at least 2 levels");
  std::vector<double> lv(levels.begin(), levels.end());
  std::sort(lv.begin(), lv.end());
  lv.erase(std::unique(lv.begin(), lv.end()), lv.end());
  ThresholdChoice best;
  bool found = false;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    for (std::size_t j = i + 1; j < lv.size(); ++j) {
      ThresholdCell cell{lv[i], lv[j], 0, std::nullopt};
      try {
        const auto keep = ow_filter(table, ow_scores.columns, seen, {lv[i], lv[j], keep_seen});
        cell.kept = keep.size();
        cell.auc = bias_sweep(mask_columns(ow_scores, keep)).auc;
      } catch (const ConfigError&) {
      }
      best.grid.push_back(cell);
      if (!cell.auc) continue;
      const double width = cell.t_high - cell.t_low;
      const bool better = !found || *cell.auc > best.auc ||
                          (*cell.auc == best.auc && (width > best.t_high - best.t_low ||
                                                     (width == best.t_high - best.t_low && cell.t_low < best.t_low)));
      if (better) {
        best.t_low = cell.t_low;
        best.t_high = cell.t_high;
        best.auc = *cell.auc;
        found = true;
      }
    }
  }
  if (!found) throw ConfigError("threshold_sweep: every grid cell filters out all pairs");
  return best;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("metrics: cannot write " + path.string());
  out << "run_id,setting,filtered_pairs,best_S,best_U,best_HM,AUC\n" << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.run_id << ',' << r.setting << ',' << r.filtered_pairs << ',' << r.curve.best_seen << ','
        << r.curve.best_unseen << ',' << r.curve.best_hm << ',' << r.curve.auc << '\n';
  }
}

void write_curve_csv(const std::filesystem::path& path, const BiasCurve& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("curve: cannot write " + path.string());
  out << "bias,S,U,HM\n" << std::setprecision(10);
  for (const auto& p : curve.points) out << fmt_bias(p.bias) << ',' << p.seen << ',' << p.unseen << ',' << p.hm << '\n';
}

std::string format_table(std::span<const MetricsRow> rows) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "run_id" << std::setw(9) << "setting" << std::right << std::setw(8) << "pairs"
     << std::setw(9) << "best_S" << std::setw(9) << "best_U" << std::setw(9) << "best_HM" << std::setw(9) << "AUC"
     << '\n'
     << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    os << std::left << std::setw(14) << r.run_id << std::setw(9) << r.setting << std::right << std::setw(8)
       << r.filtered_pairs << std::setw(9) << r.curve.best_seen << std::setw(9) << r.curve.best_unseen << std::setw(9)
       << r.curve.best_hm << std::setw(9) << r.curve.auc << '\n';
  }
  return os.str();
}

}  // namespace cds::eval
