// SPDX-License-Identifier: Apache-2.0
#include "cds/data/batching.hpp"

#include <algorithm>

#include "cds/common/error.hpp"

namespace cds::data {

std::vector<Batch> batch_iter(const std::vector<std::size_t>& indices, std::size_t batch_size,
                              std::uint64_t epoch_seed) {
  if (batch_size < 2) throw ConfigError("batch_iter: batch_size must be >= 2");
  std::vector<std::size_t> order = indices;
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

PartnerSampler::PartnerSampler(const Dataset& ds, std::vector<std::size_t> pool)
    : ds_(&ds), by_attr_(static_cast<std::size_t>(ds.vocab.num_attrs())) {
  for (std::size_t i : pool) {
    by_attr_[static_cast<std::size_t>(ds.samples.at(i).attr)].push_back(i);
  }
}

std::vector<std::size_t> PartnerSampler::candidates(std::size_t x,
                                                    std::span<const std::size_t> batch) const {
  const Sample& s = ds_->samples.at(x);
  auto eligible = [&](std::size_t j) {
    const Sample& t = ds_->samples[j];
    return t.attr == s.attr && t.obj != s.obj;
  };
  std::vector<std::size_t> out;
  for (std::size_t j : batch) {
    if (eligible(j)) out.push_back(j);
  }
  if (!out.empty()) return out;
  for (std::size_t j : by_attr_.at(static_cast<std::size_t>(s.attr))) {
    if (eligible(j)) out.push_back(j);
  }
  return out;
}

std::optional<std::size_t> PartnerSampler::sample(std::size_t x, std::span<const std::size_t> batch,
                                                  std::mt19937_64& rng) const {
  const auto cands = candidates(x, batch);
  if (cands.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, cands.size() - 1);
  return cands[pick(rng)];
}

}  // namespace cds::data
