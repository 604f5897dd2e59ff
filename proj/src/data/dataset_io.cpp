// SPDX-License-Identifier: Apache-2.0
#include "cds/data/dataset_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cds/common/binary_io.hpp"
#include "json.hpp"

namespace cds::data {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Kind = DatasetFormatError::Kind;

namespace {

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw DatasetFormatError(Kind::MissingFile, "dataset: missing file " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw FormatError("dataset: cannot write " + path.string());
  return out;
}

json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DatasetFormatError(Kind::BadJson, "dataset: " + path.filename().string() + ": " + e.what());
  }
}

json pairs_to_json(const std::vector<Pair>& pairs, const Vocab& vocab) {
  json arr = json::array();
  for (Pair p : pairs) {
    arr.push_back({vocab.attributes()[static_cast<std::size_t>(p.attr)],
                   vocab.objects()[static_cast<std::size_t>(p.obj)]});
  }
  return arr;
}

std::vector<Pair> pairs_from_json(const json& doc, const char* key, const Vocab& vocab) {
  if (!doc.contains(key) || !doc[key].is_array()) {
    throw DatasetFormatError(Kind::BadJson, std::string("dataset: pairs.json lacks array '") + key + "'");
  }
  std::vector<Pair> out;
  for (const auto& item : doc[key]) {
    if (!item.is_array() || item.size() != 2 || !item[0].is_string() || !item[1].is_string()) {
      throw DatasetFormatError(Kind::BadJson, std::string("dataset: malformed pair in '") + key + "'");
    }
    const auto a = vocab.attr_id(item[0].get<std::string>());
    const auto o = vocab.obj_id(item[1].get<std::string>());
    if (!a || !o) {
      throw DatasetFormatError(Kind::UnknownPrimitive,
                               std::string("dataset: pair in '") + key + "' references unknown " +
                                   (!a ? "attribute '" + item[0].get<std::string>() + "'"
                                       : "object '" + item[1].get<std::string>() + "'"));
    }
    out.push_back({*a, *o});
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

void write_feature_file(const fs::path& path, const FeatureMatrix& m) {
  if (m.dim == 0 || m.dim > 0xffff || m.values.size() % m.dim != 0) {
    throw FormatError("features: invalid matrix dimension " + std::to_string(m.dim));
  }
  auto out = open_out(path, std::ios::binary);
  out.write(kFeatureMagic, 4);
  io::put_u16(out, kFeatureVersion);
  io::put_u16(out, static_cast<std::uint16_t>(m.dim));
  for (float v : m.values) io::put_f32(out, v);
  if (!out) throw FormatError("features: write failed for " + path.string());
}

FeatureMatrix read_feature_file(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  const auto bad = [&](const std::string& msg) {
    return DatasetFormatError(Kind::BadFeatureFile, "features: " + path.filename().string() + ": " + msg);
  };
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || !std::equal(magic, magic + 4, kFeatureMagic)) throw bad("bad magic");
  std::uint16_t version = 0, dim = 0;
  try {
    version = io::get_u16(in, "features header");
    dim = io::get_u16(in, "features header");
  } catch (const FormatError&) {
    throw bad("truncated header");
  }
  if (version != kFeatureVersion) throw bad("unsupported version " + std::to_string(version));
  if (dim == 0) throw bad("zero feature dimension");
  std::vector<char> body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (body.size() % (4u * dim) != 0) {
    throw bad("payload of " + std::to_string(body.size()) + " bytes is not a multiple of 4*" +
              std::to_string(dim));
  }
  FeatureMatrix m;
  m.dim = dim;
  m.values.resize(body.size() / 4);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(body[i * 4 + static_cast<std::size_t>(b)]))
              << (8 * b);
    }
    m.values[i] = std::bit_cast<float>(bits);
  }
  return m;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  ds.validate();
  fs::create_directories(dir);
  for (const auto* names : {&ds.vocab.attributes(), &ds.vocab.objects()}) {
    for (const auto& n : *names) {
      if (n.find_first_of(",\n\r") != std::string::npos) {
        throw ConfigError("dataset: primitive name '" + n + "' contains a CSV delimiter");
      }
    }
  }
  {
    auto out = open_out(dir / "vocab.json");
    out << json{{"attributes", ds.vocab.attributes()}, {"objects", ds.vocab.objects()}}.dump(2) << '\n';
  }
  {
    auto out = open_out(dir / "pairs.json");
    json doc{{"seen", pairs_to_json(ds.pairs.seen, ds.vocab)},
             {"unseen", pairs_to_json(ds.pairs.unseen, ds.vocab)},
             {"val_pairs", pairs_to_json(ds.pairs.val_pairs, ds.vocab)},
             {"test_pairs", pairs_to_json(ds.pairs.test_pairs, ds.vocab)}};
    out << doc.dump(2) << '\n';
  }
  FeatureMatrix feats;
  feats.dim = ds.d_raw;
  for (const auto& s : ds.samples) feats.values.insert(feats.values.end(), s.raw.begin(), s.raw.end());
  write_feature_file(dir / "features.bin", feats);
  {
    auto out = open_out(dir / "labels.csv");
    out << "index,attribute,object,split\n";
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      const auto& s = ds.samples[i];
      out << i << ',' << ds.vocab.attributes()[static_cast<std::size_t>(s.attr)] << ','
          << ds.vocab.objects()[static_cast<std::size_t>(s.obj)] << ',' << split_name(s.split) << '\n';
    }
  }
}

Dataset load_dataset(const fs::path& dir) {
  for (const char* name : {"vocab.json", "pairs.json", "features.bin", "labels.csv"}) {
    if (!fs::exists(dir / name)) {
      throw DatasetFormatError(Kind::MissingFile, "dataset: missing file " + (dir / name).string());
    }
  }
  Dataset ds;
  {
    const json doc = read_json(dir / "vocab.json");
    try {
      ds.vocab = Vocab(doc.at("attributes").get<std::vector<std::string>>(),
                       doc.at("objects").get<std::vector<std::string>>());
    } catch (const json::exception& e) {
      throw DatasetFormatError(Kind::BadJson, std::string("dataset: vocab.json: ") + e.what());
    }
  }
  {
    const json doc = read_json(dir / "pairs.json");
    ds.pairs.seen = pairs_from_json(doc, "seen", ds.vocab);
    ds.pairs.unseen = pairs_from_json(doc, "unseen", ds.vocab);
    ds.pairs.val_pairs = pairs_from_json(doc, "val_pairs", ds.vocab);
    ds.pairs.test_pairs = pairs_from_json(doc, "test_pairs", ds.vocab);
  }
  const FeatureMatrix feats = read_feature_file(dir / "features.bin");
  ds.d_raw = feats.dim;

  auto in = open_in(dir / "labels.csv");
  std::string line;
  if (!std::getline(in, line) || line != "index,attribute,object,split") {
    throw DatasetFormatError(Kind::BadLabels, "dataset: labels.csv has a missing or wrong header");
  }
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto cells = split_csv(line);
    const auto where = "dataset: labels.csv row " + std::to_string(row);
    if (cells.size() != 4) throw DatasetFormatError(Kind::BadLabels, where + ": expected 4 columns");
    if (cells[0] != std::to_string(ds.samples.size())) {
      throw DatasetFormatError(Kind::BadLabels, where + ": index '" + cells[0] + "' out of sequence");
    }
    const auto a = ds.vocab.attr_id(cells[1]);
    if (!a) throw DatasetFormatError(Kind::UnknownPrimitive, where + ": unknown attribute '" + cells[1] + "'");
    const auto o = ds.vocab.obj_id(cells[2]);
    if (!o) throw DatasetFormatError(Kind::UnknownPrimitive, where + ": unknown object '" + cells[2] + "'");
    const auto split = parse_split(cells[3]);
    if (!split) throw DatasetFormatError(Kind::BadLabels, where + ": unknown split '" + cells[3] + "'");
    Sample s;
    s.attr = *a;
    s.obj = *o;
    s.split = *split;
    ds.samples.push_back(std::move(s));
  }
  if (feats.rows() != ds.samples.size()) {
    throw DatasetFormatError(Kind::CountMismatch,
                             "dataset: features.bin holds " + std::to_string(feats.rows()) +
                                 " rows but labels.csv has " + std::to_string(ds.samples.size()));
  }
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto begin = feats.values.begin() + static_cast<std::ptrdiff_t>(i * feats.dim);
    ds.samples[i].raw.assign(begin, begin + static_cast<std::ptrdiff_t>(feats.dim));
  }
  ds.validate();
  return ds;
}

}  // namespace cds::data
