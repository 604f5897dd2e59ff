// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace cds::data {

// An attribute-object composition, by primitive id.
struct Pair {
  int attr = 0;
  int obj = 0;
  auto operator<=>(const Pair&) const = default;
};

enum class Split { Train, Val, Test };

const char* split_name(Split s);
std::optional<Split> parse_split(const std::string& s);

class Vocab {
 public:
  Vocab() = default;
  // Throws ConfigError on duplicate or empty names.
  Vocab(std::vector<std::string> attributes, std::vector<std::string> objects);

  const std::vector<std::string>& attributes() const { return attributes_; }
  const std::vector<std::string>& objects() const { return objects_; }
  int num_attrs() const { return static_cast<int>(attributes_.size()); }
  int num_objs() const { return static_cast<int>(objects_.size()); }

  std::optional<int> attr_id(const std::string& name) const;
  std::optional<int> obj_id(const std::string& name) const;

  bool operator==(const Vocab& o) const {
    return attributes_ == o.attributes_ && objects_ == o.objects_;
  }

 private:
  std::vector<std::string> attributes_;
  std::vector<std::string> objects_;
  std::unordered_map<std::string, int> attr_index_;
  std::unordered_map<std::string, int> obj_index_;
};

// Seen/unseen compositions plus the pair sets each evaluation split draws
// from. All vectors are kept sorted and duplicate-free.
struct PairSpace {
  std::vector<Pair> seen;
  std::vector<Pair> unseen;
  std::vector<Pair> val_pairs;
  std::vector<Pair> test_pairs;

  bool is_seen(Pair p) const;
  bool operator==(const PairSpace&) const = default;

  // Checks disjointness, vocabulary bounds and primitive coverage by seen
  // pairs; throws ConfigError describing the first violation.
  void validate(const Vocab& vocab) const;
};

struct Sample {
  std::vector<float> raw;
  int attr = 0;
  int obj = 0;
  Split split = Split::Train;
  bool operator==(const Sample&) const = default;
};

struct Dataset {
  Vocab vocab;
  PairSpace pairs;
  std::vector<Sample> samples;
  std::size_t d_raw = 0;

  std::vector<std::size_t> indices(Split s) const;
  bool operator==(const Dataset&) const = default;

  // PairSpace invariants plus per-sample checks (dimension, finiteness,
  // training samples on seen pairs).
  void validate() const;
};

// Every (a, o) in vocabulary order: the open-world output space.
std::vector<Pair> all_pairs(const Vocab& vocab);

// Sorted union of two sorted pair lists.
std::vector<Pair> pair_union(const std::vector<Pair>& a, const std::vector<Pair>& b);

}  // namespace cds::data
