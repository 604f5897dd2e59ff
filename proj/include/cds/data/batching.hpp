// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "cds/data/dataset.hpp"

namespace cds::data {

using Batch = std::vector<std::size_t>;

// Shuffles `indices` with a generator seeded by `epoch_seed` and cuts it into
// consecutive batches; the final short batch is kept. Throws ConfigError when
// batch_size < 2.
std::vector<Batch> batch_iter(const std::vector<std::size_t>& indices, std::size_t batch_size,
                              std::uint64_t epoch_seed);

// Finds partners for specificity targets: a sample sharing the attribute but
// not the object. Candidates come from the current batch when it has any,
// otherwise from the whole pool (the training split).
class PartnerSampler {
 public:
  PartnerSampler(const Dataset& ds, std::vector<std::size_t> pool);

  // Uniform over eligible candidates; nullopt when none exists anywhere.
  std::optional<std::size_t> sample(std::size_t x, std::span<const std::size_t> batch,
                                    std::mt19937_64& rng) const;

  // Eligible candidates in the batch, or the pool fallback when the batch has none.
  std::vector<std::size_t> candidates(std::size_t x, std::span<const std::size_t> batch) const;

 private:
  const Dataset* ds_;
  std::vector<std::vector<std::size_t>> by_attr_;
};

}  // namespace cds::data
