// SPDX-License-Identifier: Apache-2.0
#include "cds/encoders/encoders.hpp"

#include <cmath>
#include <random>
#include <string>

#include "cds/common/error.hpp"
#include "cds/common/rng.hpp"
#include "cds/data/dataset_io.hpp"
#include "cds/numerics/kernels.hpp"
#include "cds/numerics/ops.hpp"

namespace cds::enc {

const char* layout_name(Layout l) {
  switch (l) {
    case Layout::Composition:
      return "composition";
    case Layout::Attribute:
      return "attribute";
    case Layout::Object:
      return "object";
  }
  return "?";
}

std::size_t layout_tokens(Layout l) { return l == Layout::Object ? 4 : 5; }

namespace {

Tensor<double> gaussian(std::size_t rows, std::size_t cols, double stddev, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor<double> t = Tensor<double>::matrix(rows, cols);
  for (auto& v : t.data()) v = stddev * dist(rng);
  return t;
}

}  // namespace

FrozenTextEncoder::FrozenTextEncoder(EncoderDims dims, std::uint64_t seed, double bias_scale)
    : dims_(dims) {
  for (Layout l : {Layout::Composition, Layout::Attribute, Layout::Object}) {
    const int i = static_cast<int>(l);
    const std::size_t in = layout_tokens(l) * dims.d_emb;
    weight_[i] = gaussian(in, dims.d_joint, 1.0 / std::sqrt(static_cast<double>(dims.d_emb)),
                          derive_seed(seed, 2 * static_cast<std::uint64_t>(i)));
    bias_[i] = gaussian(1, dims.d_joint, bias_scale, derive_seed(seed, 2 * static_cast<std::uint64_t>(i) + 1));
    weight_f_[i] = weight_[i].cast<float>();
    bias_f_[i] = bias_[i].cast<float>();
  }
}

template <typename T>
Var<T> FrozenTextEncoder::encode(Layout layout, const std::vector<Var<T>>& tokens) const {
  if (tokens.size() != layout_tokens(layout)) {
    throw ShapeError(std::string("encode_text: ") + layout_name(layout) + " layout takes " +
                     std::to_string(layout_tokens(layout)) + " tokens, got " +
                     std::to_string(tokens.size()));
  }
  for (const auto& t : tokens) {
    if (t.cols() != dims_.d_emb) {
      throw ShapeError(std::string("encode_text: ") + layout_name(layout) + " token width " +
                       std::to_string(t.cols()) + ", expected " + std::to_string(dims_.d_emb));
    }
  }
  Tape<T>& tape = tokens.front().tape();
  const int i = static_cast<int>(layout);
  Var<T> w, b;
  if constexpr (std::is_same_v<T, float>) {
    w = tape.constant(weight_f_[i]);
    b = tape.constant(bias_f_[i]);
  } else {
    w = tape.constant(weight_[i].template cast<T>());
    b = tape.constant(bias_[i].template cast<T>());
  }
  return ops::tanh(ops::add(ops::matmul(ops::concat(tokens), w), b));
}

template Var<float> FrozenTextEncoder::encode<float>(Layout, const std::vector<Var<float>>&) const;
template Var<double> FrozenTextEncoder::encode<double>(Layout,
                                                       const std::vector<Var<double>>&) const;

FrozenPrefixTable::FrozenPrefixTable(std::size_t d_emb, std::uint64_t seed)
    : table_(gaussian(4, d_emb, 0.02, seed)) {}

template <typename T>
Tensor<T> FrozenPrefixTable::word(std::size_t i) const {
  if (i >= 4) throw ShapeError("prefix table: word index " + std::to_string(i) + " out of range");
  const auto row = table_.row(i);
  Tensor<T> out = Tensor<T>::matrix(1, table_.cols());
  for (std::size_t c = 0; c < row.size(); ++c) out[c] = static_cast<T>(row[c]);
  return out;
}

template Tensor<float> FrozenPrefixTable::word<float>(std::size_t) const;
template Tensor<double> FrozenPrefixTable::word<double>(std::size_t) const;

FrozenImageEncoder::FrozenImageEncoder(EncoderDims dims, std::size_t d_raw, std::uint64_t seed,
                                       double bias_scale)
    : dims_(dims),
      d_raw_(d_raw),
      weight_(gaussian(d_raw, (dims.tokens + 1) * dims.d_joint,
                       1.0 / std::sqrt(static_cast<double>(d_raw)), derive_seed(seed, 0))),
      bias_(gaussian(1, (dims.tokens + 1) * dims.d_joint, bias_scale, derive_seed(seed, 1))) {
  if (d_raw == 0) throw ConfigError("image encoder: d_raw must be positive");
}

Tensor<double> FrozenImageEncoder::encode_exact(std::span<const double> raw) const {
  if (raw.size() != d_raw_) {
    throw ShapeError("encode_image: input dimension " + std::to_string(raw.size()) +
                     ", expected " + std::to_string(d_raw_));
  }
  const std::size_t width = weight_.cols();
  Tensor<double> out = bias_;
  kernels::gemm<double>(raw, weight_.data(), out.data(), 1, d_raw_, width, false, false, true);
  return out.reshaped({dims_.tokens + 1, dims_.d_joint});
}

Tensor<float> FrozenImageEncoder::encode(std::size_t, std::span<const float> raw) const {
  std::vector<double> x(raw.begin(), raw.end());
  for (double v : x) {
    if (!std::isfinite(v)) throw NumericError("encode_image: non-finite input");
  }
  return encode_exact(x).cast<float>();
}

PrecomputedImageEncoder::PrecomputedImageEncoder(EncoderDims dims,
                                                 const std::filesystem::path& file)
    : dims_(dims) {
  auto m = data::read_feature_file(file);
  const std::size_t expect = (dims.tokens + 1) * dims.d_joint;
  if (m.dim != expect) {
    throw ShapeError("precomputed features: width " + std::to_string(m.dim) + ", expected " +
                     std::to_string(expect));
  }
  rows_ = m.rows();
  values_ = std::move(m.values);
}

Tensor<float> PrecomputedImageEncoder::encode(std::size_t index, std::span<const float>) const {
  if (index >= rows_) {
    throw ShapeError("precomputed features: sample " + std::to_string(index) + " beyond " +
                     std::to_string(rows_) + " rows");
  }
  const std::size_t w = (dims_.tokens + 1) * dims_.d_joint;
  const auto begin = values_.begin() + static_cast<std::ptrdiff_t>(index * w);
  return Tensor<float>({dims_.tokens + 1, dims_.d_joint},
                       std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(w)));
}

Tensor<float> encode_dataset(const ImageEncoder& enc, const data::Dataset& ds) {
  const std::size_t w = (enc.dims().tokens + 1) * enc.dims().d_joint;
  Tensor<float> out = Tensor<float>::matrix(ds.samples.size(), w);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto block = enc.encode(i, ds.samples[i].raw);
    std::copy(block.data().begin(), block.data().end(), out.row(i).begin());
  }
  return out;
}

}  // namespace cds::enc
