#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ccprobe/grammar.hpp"
#include "ccprobe/types.hpp"

namespace ccprobe::dataset {

enum class Split { train, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct BalanceSpec {
  Feature feature = Feature::length;
  int per_value_count = 1;  // n*, per label
  int v_min = 0;
  int v_max = 0;
};

struct Item {
  std::string text;
  Label label = Label::positive;
  int feature_value = 0;
  FeatureVector features;
  std::optional<std::int64_t> pair_id;
  std::string source_id;
};

struct ProbeDataset {
  BalanceSpec spec;
  Split split = Split::train;
  std::string provenance;
  std::vector<Item> items;
};

/// Positive sentences and their negative twins, sharing a pair id. Repeated
/// positive texts are skipped, so the pool may hold fewer than n_pairs pairs.
std::vector<LabeledSentence> artificial_pool(const grammar::Grammar& g, std::size_t n_pairs, std::uint64_t seed);

/// Upper end of the lowest quartile, rounded down: v_min + floor((v_max - v_min) / 4).
int quartile_upper(int v_min, int v_max);

struct BuildOptions {
  Feature feature = Feature::length;
  int n_star = 1;
  Split split = Split::train;
  std::uint64_t seed = 0;
  /// Observed [v_min, v_max] override; defaults to the pool's range.
  std::optional<std::pair<int, int>> observed_range;
  /// Pool indices that must not be drawn (e.g. already used by the other split).
  std::set<std::size_t> exclude;
};

struct DropEntry {
  int value = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

struct BuildResult {
  ProbeDataset dataset;
  std::vector<DropEntry> dropped;
  std::vector<std::size_t> drawn;  // pool indices, in dataset order
  bool paired = false;             // sampled as positive/negative twins
};

/// D_f = union over retained values v and labels l of n* items drawn without
/// replacement. When every pool item carries a pair id, whole twin pairs are
/// drawn so that each value holds n* complete pairs.
BuildResult build_feature_subset(const std::vector<LabeledSentence>& pool, const BuildOptions& options);

struct BalanceReport {
  std::map<int, std::pair<std::size_t, std::size_t>> counts;  // value -> (positive, negative)
  bool pass = false;
  std::vector<std::string> reasons;
};

BalanceReport verify_balance(const ProbeDataset& d);

}  // namespace ccprobe::dataset
