// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file: "CDSZ", u32 version, then records
//   u16 name length, name bytes, u8 rank, u32 dims[rank], f32 data
// all little-endian. Integers and doubles are stored exactly as 16-bit chunks
// (four floats per value). The last record, "meta/records", counts the ones
// before it.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "cds/common/error.hpp"
#include "cds/training/trainer.hpp"

namespace cds::train {

inline constexpr char kCheckpointMagic[4] = {'C', 'D', 'S', 'Z'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public FormatError {
 public:
  enum class Kind { NotACheckpoint, VersionMismatch, Truncated, MissingRecord, BadRecord };
  CheckpointError(Kind kind, const std::string& msg) : FormatError(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace cds::train
