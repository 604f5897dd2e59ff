// SPDX-License-Identifier: Apache-2.0
//
// Dataset directory format:
//   vocab.json    {"attributes": [...], "objects": [...]}
//   pairs.json    {"seen": [[attr, obj], ...], "unseen": ..., "val_pairs": ...,
//                  "test_pairs": ...} with names, not ids
//   features.bin  "CDSF", u16 version, u16 d_raw, then N x d_raw little-endian
//                 float32, row-major
//   labels.csv    header "index,attribute,object,split", one row per sample
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cds/common/error.hpp"
#include "cds/data/dataset.hpp"

namespace cds::data {

inline constexpr char kFeatureMagic[4] = {'C', 'D', 'S', 'F'};
inline constexpr std::uint16_t kFeatureVersion = 1;

class DatasetFormatError : public FormatError {
 public:
  enum class Kind { MissingFile, CountMismatch, UnknownPrimitive, BadFeatureFile, BadLabels, BadJson };
  DatasetFormatError(Kind kind, const std::string& msg) : FormatError(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// The features.bin container on its own: rows of `dim` floats.
struct FeatureMatrix {
  std::size_t dim = 0;
  std::vector<float> values;  // rows x dim
  std::size_t rows() const { return dim ? values.size() / dim : 0; }
};

void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix read_feature_file(const std::filesystem::path& path);

}  // namespace cds::data
