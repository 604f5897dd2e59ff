// SPDX-License-Identifier: Apache-2.0
#include "cds/training/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <map>

#include "cds/common/binary_io.hpp"

namespace cds::train {

namespace fs = std::filesystem;
using Kind = CheckpointError::Kind;

namespace {

constexpr std::size_t kMaxRank = 8;

Tensor<float> encode_u64(std::uint64_t v) {
  Tensor<float> t(Shape{4});
  for (std::size_t i = 0; i < 4; ++i) t[i] = static_cast<float>((v >> (16 * i)) & 0xffff);
  return t;
}

std::uint64_t decode_u64(std::span<const float> chunks, const std::string& name) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const float c = chunks[i];
    if (!(c >= 0.0f && c <= 65535.0f) || c != static_cast<float>(static_cast<std::uint32_t>(c))) {
      throw CheckpointError(Kind::BadRecord, "checkpoint: record '" + name + "' is not an integer chunk");
    }
    v |= static_cast<std::uint64_t>(c) << (16 * i);
  }
  return v;
}

class Writer {
 public:
  void tensor(const std::string& name, const Tensor<float>& t) { records_.emplace_back(name, t); }
  void u64(const std::string& name, std::uint64_t v) { tensor(name, encode_u64(v)); }
  void f64(const std::string& name, double v) { u64(name, std::bit_cast<std::uint64_t>(v)); }

  void write(const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("checkpoint: cannot write " + path.string());
    out.write(kCheckpointMagic, 4);
    io::put_u32(out, kCheckpointVersion);
    u64("meta/records", records_.size());
    for (const auto& [name, t] : records_) {
      if (name.size() > 0xffff || t.rank() > kMaxRank) throw FormatError("checkpoint: record '" + name + "' too large");
      io::put_u16(out, static_cast<std::uint16_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      io::put_u8(out, static_cast<std::uint8_t>(t.rank()));
      for (std::size_t d : t.shape()) io::put_u32(out, static_cast<std::uint32_t>(d));
      for (float v : t.data()) io::put_f32(out, v);
    }
    if (!out) throw FormatError("checkpoint: write failed for " + path.string());
  }

 private:
  std::vector<std::pair<std::string, Tensor<float>>> records_;
};

class Reader {
 public:
  explicit Reader(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("checkpoint: cannot open " + path.string());
    const auto total = fs::file_size(path);
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() != 4 || !std::equal(magic, magic + 4, kCheckpointMagic)) {
      throw CheckpointError(Kind::NotACheckpoint, "checkpoint: " + path.string() + " is not a checkpoint (bad magic)");
    }
    try {
      const auto version = io::get_u32(in, "checkpoint header");
      if (version != kCheckpointVersion) {
        throw CheckpointError(Kind::VersionMismatch, "checkpoint: version " + std::to_string(version) +
                                                         " does not match supported version " +
                                                         std::to_string(kCheckpointVersion));
      }
      std::size_t count = 0;
      bool ended = false;
      while (in.peek() != std::char_traits<char>::eof()) {
        const auto len = io::get_u16(in, "record name");
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (in.gcount() != len) throw FormatError("record name: truncated");
        const auto rank = io::get_u8(in, name);
        if (rank > kMaxRank) throw CheckpointError(Kind::BadRecord, "checkpoint: record '" + name + "' has rank " + std::to_string(rank));
        Shape shape;
        std::uint64_t size = 1;
        for (std::uint8_t r = 0; r < rank; ++r) {
          shape.push_back(io::get_u32(in, name));
          size *= shape.back();
        }
        if (size * 4 > total) throw FormatError(name + ": truncated");
        Tensor<float> t(shape);
        for (auto& v : t.data()) v = io::get_f32(in, name);
        if (name == "meta/records") {
          if (t.size() != 4 || decode_u64(t.data(), name) != count) {
            throw CheckpointError(Kind::BadRecord, "checkpoint: record count mismatch");
          }
          ended = true;
          break;
        }
        if (!records_.emplace(name, std::move(t)).second) {
          throw CheckpointError(Kind::BadRecord, "checkpoint: duplicate record '" + name + "'");
        }
        ++count;
      }
      if (!ended) throw FormatError("records: truncated");
    } catch (const CheckpointError&) {
      throw;
    } catch (const FormatError& e) {
      throw CheckpointError(Kind::Truncated, "checkpoint: " + path.string() + " truncated record (" + e.what() + ")");
    }
  }

  bool has(const std::string& name) const { return records_.count(name) != 0; }

  const Tensor<float>& tensor(const std::string& name) const {
    const auto it = records_.find(name);
    if (it == records_.end()) throw CheckpointError(Kind::MissingRecord, "checkpoint: missing record '" + name + "'");
    return it->second;
  }
  std::uint64_t u64(const std::string& name) const {
    const auto& t = tensor(name);
    if (t.size() != 4) throw CheckpointError(Kind::BadRecord, "checkpoint: record '" + name + "' is not a scalar");
    return decode_u64(t.data(), name);
  }
  double f64(const std::string& name) const { return std::bit_cast<double>(u64(name)); }
  int i32(const std::string& name) const { return static_cast<int>(u64(name)); }

 private:
  std::map<std::string, Tensor<float>> records_;
};

void put_adam(Writer& w, const std::string& prefix, const Adam<float>& a) {
  w.u64(prefix + "/steps", a.steps());
  w.u64(prefix + "/count", a.first_moments().size());
  for (std::size_t i = 0; i < a.first_moments().size(); ++i) {
    w.tensor(prefix + "/m/" + std::to_string(i), a.first_moments()[i]);
    w.tensor(prefix + "/v/" + std::to_string(i), a.second_moments()[i]);
  }
}

void get_adam(const Reader& r, const std::string& prefix, Adam<float>& a) {
  const auto n = r.u64(prefix + "/count");
  std::vector<Tensor<float>> m, v;
  for (std::size_t i = 0; i < n; ++i) {
    m.push_back(r.tensor(prefix + "/m/" + std::to_string(i)));
    v.push_back(r.tensor(prefix + "/v/" + std::to_string(i)));
  }
  a.restore(std::move(m), std::move(v), r.u64(prefix + "/steps"));
}

}  // namespace

void save_checkpoint(const TrainState& s, const fs::path& path) {
  Writer w;
  const auto& c = s.config;
  const auto& mc = c.model;
  w.u64("state/epoch", static_cast<std::uint64_t>(s.epoch));
  w.u64("state/d_raw", s.d_raw);
  w.u64("state/num_attrs", static_cast<std::uint64_t>(s.model.num_attrs));
  w.u64("state/num_objs", static_cast<std::uint64_t>(s.model.num_objs));

  w.u64("config/epochs", static_cast<std::uint64_t>(c.epochs));
  w.u64("config/batch_size", c.batch_size);
  w.f64("config/lr_repr", c.lr_repr);
  w.f64("config/lr_spec", c.lr_spec);
  w.f64("config/beta1", c.beta1);
  w.f64("config/beta2", c.beta2);
  w.f64("config/adam_eps", c.adam_eps);
  w.f64("config/weights/base", c.weights.base);
  w.f64("config/weights/prim", c.weights.prim);
  w.f64("config/weights/den", c.weights.den);
  w.f64("config/weights/refine", c.weights.refine);
  w.f64("config/weights/div", c.weights.div);
  w.u64("config/shuffle_seed", c.shuffle_seed);
  w.u64("config/cluster_seed", c.cluster_seed);
  w.u64("config/ablation", static_cast<std::uint64_t>(c.ablation));
  w.f64("config/model/tau", mc.tau);
  w.f64("config/model/alpha", mc.alpha);
  if (mc.gamma) w.f64("config/model/gamma", *mc.gamma);
  w.f64("config/model/prob_floor", mc.prob_floor);
  w.u64("config/model/penalty_mode", static_cast<std::uint64_t>(mc.penalty_mode));
  w.u64("config/model/d_emb", mc.dims.d_emb);
  w.u64("config/model/d_joint", mc.dims.d_joint);
  w.u64("config/model/tokens", mc.dims.tokens);
  w.u64("config/model/heads", mc.heads);
  for (std::size_t i = 0; i < 3; ++i) w.u64("config/model/spec_hidden/" + std::to_string(i), mc.spec_hidden[i]);
  w.f64("config/model/init_std", mc.init_std);
  w.u64("config/model/init_seed", mc.init_seed);
  w.u64("config/model/encoder_seed", mc.encoder_seed);

  s.model.params.visit([&](const char* name, const Tensor<float>& t) { w.tensor(std::string("param/") + name, t); });
  put_adam(w, "adam_repr", s.adam_repr);
  put_adam(w, "adam_spec", s.adam_spec);
  if (s.clusters.initialized()) {
    w.tensor("clusters/centroids", s.clusters.centroids);
    Tensor<float> counts = Tensor<float>::matrix(s.clusters.k(), 4);
    for (std::size_t k = 0; k < s.clusters.k(); ++k) {
      const auto e = encode_u64(static_cast<std::uint64_t>(s.clusters.counts[k]));
      std::copy(e.data().begin(), e.data().end(), counts.row(k).begin());
    }
    w.tensor("clusters/counts", counts);
  }
  w.write(path);
}

TrainState load_checkpoint(const fs::path& path) {
  const Reader r(path);
  TrainConfig c;
  auto& mc = c.model;
  c.epochs = r.i32("config/epochs");
  c.batch_size = r.u64("config/batch_size");
  c.lr_repr = r.f64("config/lr_repr");
  c.lr_spec = r.f64("config/lr_spec");
  c.beta1 = r.f64("config/beta1");
  c.beta2 = r.f64("config/beta2");
  c.adam_eps = r.f64("config/adam_eps");
  c.weights.base = r.f64("config/weights/base");
  c.weights.prim = r.f64("config/weights/prim");
  c.weights.den = r.f64("config/weights/den");
  c.weights.refine = r.f64("config/weights/refine");
  c.weights.div = r.f64("config/weights/div");
  c.shuffle_seed = r.u64("config/shuffle_seed");
  c.cluster_seed = r.u64("config/cluster_seed");
  const auto ablation = r.u64("config/ablation");
  if (ablation > 2) throw CheckpointError(Kind::BadRecord, "checkpoint: unknown ablation code");
  c.ablation = static_cast<Ablation>(ablation);
  mc.tau = r.f64("config/model/tau");
  mc.alpha = r.f64("config/model/alpha");
  if (r.has("config/model/gamma")) mc.gamma = r.f64("config/model/gamma");
  mc.prob_floor = r.f64("config/model/prob_floor");
  const auto mode = r.u64("config/model/penalty_mode");
  if (mode > 1) throw CheckpointError(Kind::BadRecord, "checkpoint: unknown penalty mode");
  mc.penalty_mode = static_cast<model::PenaltyMode>(mode);
  mc.dims.d_emb = r.u64("config/model/d_emb");
  mc.dims.d_joint = r.u64("config/model/d_joint");
  mc.dims.tokens = r.u64("config/model/tokens");
  mc.heads = r.u64("config/model/heads");
  for (std::size_t i = 0; i < 3; ++i) mc.spec_hidden[i] = r.u64("config/model/spec_hidden/" + std::to_string(i));
  mc.init_std = r.f64("config/model/init_std");
  mc.init_seed = r.u64("config/model/init_seed");
  mc.encoder_seed = r.u64("config/model/encoder_seed");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(Kind::BadRecord, std::string("checkpoint: stored config invalid: ") + e.what());
  }

  const auto d_raw = r.u64("state/d_raw");
  TrainState s{c,
               model::init_model(mc, r.i32("state/num_attrs"), r.i32("state/num_objs"), d_raw),
               Adam<float>(AdamConfig{c.lr_repr, c.beta1, c.beta2, c.adam_eps}),
               Adam<float>(AdamConfig{c.lr_spec, c.beta1, c.beta2, c.adam_eps}),
               {},
               d_raw,
               r.i32("state/epoch")};
  s.model.params.visit([&](const char* name, Tensor<float>& t) {
    const auto& stored = r.tensor(std::string("param/") + name);
    if (stored.shape() != t.shape()) {
      throw CheckpointError(Kind::BadRecord, std::string("checkpoint: parameter '") + name + "' has the wrong shape");
    }
    t = stored;
  });
  get_adam(r, "adam_repr", s.adam_repr);
  get_adam(r, "adam_spec", s.adam_spec);
  if (r.has("clusters/centroids")) {
    s.clusters.centroids = r.tensor("clusters/centroids");
    const auto& counts = r.tensor("clusters/counts");
    if (counts.rows() != s.clusters.centroids.rows() || counts.cols() != 4) {
      throw CheckpointError(Kind::BadRecord, "checkpoint: cluster counts do not match centroids");
    }
    for (std::size_t k = 0; k < counts.rows(); ++k) {
      s.clusters.counts.push_back(static_cast<std::int64_t>(decode_u64(counts.row(k), "clusters/counts")));
    }
  }
  return s;
}

}  // namespace cds::train
