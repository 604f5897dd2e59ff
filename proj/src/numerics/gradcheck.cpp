// SPDX-License-Identifier: Apache-2.0
#include "cds/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cds {

std::vector<std::string> GradCheckReport::failing(double tol) const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (!(e.max_rel_err < tol)) out.push_back(e.name);
  }
  return out;
}

namespace {

double evaluate(const LossBuilder& build, const std::vector<NamedTensor>& params) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.constant(p.value));
  return build(tape, vars).value().item();
}

}  // namespace

GradCheckReport finite_difference_check(const LossBuilder& build,
                                        const std::vector<NamedTensor>& params,
                                        const GradCheckOptions& options,
                                        const TapeHook& hook) {
  std::vector<Tensor<double>> analytic;
  double f0 = 0.0;
  {
    Tape<double> tape;
    if (hook) hook(tape);
    std::vector<Var<double>> vars;
    for (const auto& p : params) vars.push_back(tape.parameter(p.value));
    auto loss = build(tape, vars);
    f0 = loss.value().item();
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(v.grad());
  }

  // Roundoff in f(x +- eps) is proportional to |f|, so the absolute floor is too.
  const double floor = options.floor * std::max(1.0, std::abs(f0));
  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  std::vector<NamedTensor> work = params;
  for (std::size_t t = 0; t < params.size(); ++t) {
    const std::size_t n = params[t].value.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (n > options.max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords);
    }
    GradCheckEntry entry{params[t].name, coords.size(), 0.0, 0.0};
    for (std::size_t c : coords) {
      const double x0 = params[t].value[c];
      work[t].value[c] = x0 + options.eps;
      const double fp = evaluate(build, work);
      work[t].value[c] = x0 - options.eps;
      const double fm = evaluate(build, work);
      work[t].value[c] = x0;
      const double numeric = (fp - fm) / (2.0 * options.eps);
      const double a = analytic[t][c];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      entry.max_rel_err = std::max(entry.max_rel_err, std::abs(a - numeric) / denom);
      entry.max_abs_analytic = std::max(entry.max_abs_analytic, std::abs(a));
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace cds
