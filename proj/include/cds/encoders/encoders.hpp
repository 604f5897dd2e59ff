// SPDX-License-Identifier: Apache-2.0
//
// Frozen stand-ins for the vision-language text and image towers. Weights are
// drawn once from a seed and never updated; gradients only flow into inputs.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "cds/data/dataset.hpp"
#include "cds/numerics/autodiff.hpp"
#include "cds/numerics/tensor.hpp"

namespace cds::enc {

struct EncoderDims {
  std::size_t d_emb = 24;
  std::size_t d_joint = 32;
  std::size_t tokens = 4;  // image tokens besides the pooled one
  bool operator==(const EncoderDims&) const = default;
};

enum class Layout { Composition, Attribute, Object };

const char* layout_name(Layout l);
// Prompt length: composition [w0 w1 w2 attr obj], attribute [e0 e1 e2 attr e3],
// object [e0 e1 e2 obj].
std::size_t layout_tokens(Layout l);

// Concatenate tokens, frozen affine map, tanh. One map per layout.
class FrozenTextEncoder {
 public:
  FrozenTextEncoder(EncoderDims dims, std::uint64_t seed, double bias_scale = 0.0);

  // Each token is rows x d_emb (one prompt per row); returns rows x d_joint.
  template <typename T>
  Var<T> encode(Layout layout, const std::vector<Var<T>>& tokens) const;

  const Tensor<double>& weight(Layout l) const { return weight_[static_cast<int>(l)]; }
  const Tensor<double>& bias(Layout l) const { return bias_[static_cast<int>(l)]; }
  const EncoderDims& dims() const { return dims_; }

 private:
  EncoderDims dims_;
  Tensor<double> weight_[3];  // (L * d_emb) x d_joint
  Tensor<double> bias_[3];    // 1 x d_joint
  Tensor<float> weight_f_[3];
  Tensor<float> bias_f_[3];
};

// Fixed hard-prompt word embeddings e0..e3.
class FrozenPrefixTable {
 public:
  FrozenPrefixTable(std::size_t d_emb, std::uint64_t seed);
  // e_i as a 1 x d_emb tensor.
  template <typename T>
  Tensor<T> word(std::size_t i) const;
  const Tensor<double>& table() const { return table_; }

 private:
  Tensor<double> table_;  // 4 x d_emb
};

// Image side: one (T + 1) x d_joint feature block per sample, row 0 pooled.
class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual const EncoderDims& dims() const = 0;
  // Features of dataset sample `index` whose raw input is `raw`.
  virtual Tensor<float> encode(std::size_t index, std::span<const float> raw) const = 0;
};

// Frozen affine map d_raw -> (T + 1) * d_joint.
class FrozenImageEncoder final : public ImageEncoder {
 public:
  FrozenImageEncoder(EncoderDims dims, std::size_t d_raw, std::uint64_t seed,
                     double bias_scale = 0.0);
  const EncoderDims& dims() const override { return dims_; }
  Tensor<float> encode(std::size_t index, std::span<const float> raw) const override;
  Tensor<double> encode_exact(std::span<const double> raw) const;
  const Tensor<double>& weight() const { return weight_; }
  const Tensor<double>& bias() const { return bias_; }

 private:
  EncoderDims dims_;
  std::size_t d_raw_;
  Tensor<double> weight_;  // d_raw x (T + 1) * d_joint
  Tensor<double> bias_;
};

// Reads per-sample blocks from a features container with d = (T + 1) * d_joint.
class PrecomputedImageEncoder final : public ImageEncoder {
 public:
  PrecomputedImageEncoder(EncoderDims dims, const std::filesystem::path& file);
  const EncoderDims& dims() const override { return dims_; }
  Tensor<float> encode(std::size_t index, std::span<const float> raw) const override;
  std::size_t rows() const { return rows_; }

 private:
  EncoderDims dims_;
  std::size_t rows_ = 0;
  std::vector<float> values_;
};

// Encodes every sample once: N x ((T + 1) * d_joint), row-major blocks.
Tensor<float> encode_dataset(const ImageEncoder& enc, const data::Dataset& ds);

}  // namespace cds::enc
