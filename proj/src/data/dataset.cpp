// SPDX-License-Identifier: Apache-2.0
#include "cds/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

#include "cds/common/error.hpp"

namespace cds::data {

const char* split_name(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "?";
}

std::optional<Split> parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

namespace {

std::unordered_map<std::string, int> index_names(const std::vector<std::string>& names,
                                                 const char* kind) {
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].empty()) throw ConfigError(std::string("vocab: empty ") + kind + " name");
    if (!index.emplace(names[i], static_cast<int>(i)).second) {
      throw ConfigError(std::string("vocab: duplicate ") + kind + " name '" + names[i] + "'");
    }
  }
  return index;
}

std::string pair_str(Pair p) {
  return "(" + std::to_string(p.attr) + "," + std::to_string(p.obj) + ")";
}

}  // namespace

Vocab::Vocab(std::vector<std::string> attributes, std::vector<std::string> objects)
    : attributes_(std::move(attributes)),
      objects_(std::move(objects)),
      attr_index_(index_names(attributes_, "attribute")),
      obj_index_(index_names(objects_, "object")) {}

std::optional<int> Vocab::attr_id(const std::string& name) const {
  auto it = attr_index_.find(name);
  if (it == attr_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> Vocab::obj_id(const std::string& name) const {
  auto it = obj_index_.find(name);
  if (it == obj_index_.end()) return std::nullopt;
  return it->second;
}

bool PairSpace::is_seen(Pair p) const {
  return std::binary_search(seen.begin(), seen.end(), p);
}

void PairSpace::validate(const Vocab& vocab) const {
  auto check_list = [&](const std::vector<Pair>& list, const char* name) {
    if (!std::is_sorted(list.begin(), list.end()) ||
        std::adjacent_find(list.begin(), list.end()) != list.end()) {
      throw ConfigError(std::string("pair space: ") + name + " is not sorted and unique");
    }
    for (Pair p : list) {
      if (p.attr < 0 || p.attr >= vocab.num_attrs() || p.obj < 0 || p.obj >= vocab.num_objs()) {
        throw ConfigError(std::string("pair space: ") + name + " pair " + pair_str(p) +
                          " outside the vocabulary");
      }
    }
  };
  check_list(seen, "seen");
  check_list(unseen, "unseen");
  check_list(val_pairs, "val_pairs");
  check_list(test_pairs, "test_pairs");

  std::vector<Pair> both;
  std::set_intersection(seen.begin(), seen.end(), unseen.begin(), unseen.end(),
                        std::back_inserter(both));
  if (!both.empty()) {
    throw ConfigError("pair space: " + pair_str(both.front()) + " is both seen and unseen");
  }
  const auto all = pair_union(seen, unseen);
  for (const auto* list : {&val_pairs, &test_pairs}) {
    for (Pair p : *list) {
      if (!std::binary_search(all.begin(), all.end(), p)) {
        throw ConfigError("pair space: evaluation pair " + pair_str(p) +
                          " is neither seen nor unseen");
      }
    }
  }
  std::vector<bool> attr_seen(static_cast<std::size_t>(vocab.num_attrs()), false);
  std::vector<bool> obj_seen(static_cast<std::size_t>(vocab.num_objs()), false);
  for (Pair p : seen) {
    attr_seen[static_cast<std::size_t>(p.attr)] = true;
    obj_seen[static_cast<std::size_t>(p.obj)] = true;
  }
  for (int a = 0; a < vocab.num_attrs(); ++a) {
    if (!attr_seen[static_cast<std::size_t>(a)]) {
      throw ConfigError("pair space: attribute '" + vocab.attributes()[static_cast<std::size_t>(a)] +
                        "' has no seen pair");
    }
  }
  for (int o = 0; o < vocab.num_objs(); ++o) {
    if (!obj_seen[static_cast<std::size_t>(o)]) {
      throw ConfigError("pair space: object '" + vocab.objects()[static_cast<std::size_t>(o)] +
                        "' has no seen pair");
    }
  }
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == s) out.push_back(i);
  }
  return out;
}

void Dataset::validate() const {
  pairs.validate(vocab);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.raw.size() != d_raw) {
      throw ConfigError("dataset: sample " + std::to_string(i) + " has dimension " +
                        std::to_string(s.raw.size()) + ", expected " + std::to_string(d_raw));
    }
    if (!std::all_of(s.raw.begin(), s.raw.end(), [](float v) { return std::isfinite(v); })) {
      throw ConfigError("dataset: sample " + std::to_string(i) + " has non-finite features");
    }
    if (s.attr < 0 || s.attr >= vocab.num_attrs() || s.obj < 0 || s.obj >= vocab.num_objs()) {
      throw ConfigError("dataset: sample " + std::to_string(i) + " label outside the vocabulary");
    }
    if (s.split == Split::Train && !pairs.is_seen({s.attr, s.obj})) {
      throw ConfigError("dataset: training sample " + std::to_string(i) + " has unseen pair " +
                        pair_str({s.attr, s.obj}));
    }
  }
}

std::vector<Pair> all_pairs(const Vocab& vocab) {
  std::vector<Pair> out;
  out.reserve(static_cast<std::size_t>(vocab.num_attrs() * vocab.num_objs()));
  for (int a = 0; a < vocab.num_attrs(); ++a) {
    for (int o = 0; o < vocab.num_objs(); ++o) out.push_back({a, o});
  }
  return out;
}

std::vector<Pair> pair_union(const std::vector<Pair>& a, const std::vector<Pair>& b) {
  std::vector<Pair> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace cds::data
