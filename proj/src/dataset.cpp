#include "ccprobe/dataset.hpp"

#include <algorithm>
#include <unordered_set>

#include "ccprobe/error.hpp"
#include "ccprobe/rng.hpp"

namespace ccprobe::dataset {

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw Error("invalid_split", "unknown split '" + std::string(text) + "'");
}

std::vector<LabeledSentence> artificial_pool(const grammar::Grammar& g, std::size_t n_pairs, std::uint64_t seed) {
  std::vector<LabeledSentence> pool;
  std::unordered_set<std::string> seen;
  for (std::size_t k = 0; k < n_pairs; ++k) {
    auto pos = grammar::sample_sentence(g, derive_seed(seed, g.name + "/pair/" + std::to_string(k)), Label::positive);
    if (!seen.insert(pos.text).second) continue;
    auto neg = grammar::negative_twin(g, pos);
    for (const auto* s : {&pos, &neg}) {
      LabeledSentence ls;
      ls.text = s->text;
      ls.label = s->label;
      ls.features = s->features;
      ls.provenance = "artificial";
      ls.source_id = g.name + ":" + std::to_string(k);
      ls.pair_id = static_cast<std::int64_t>(k);
      pool.push_back(std::move(ls));
    }
  }
  return pool;
}

int quartile_upper(int v_min, int v_max) { return v_min + (v_max - v_min) / 4; }

namespace {

Item make_item(const LabeledSentence& s, Feature feature) {
  return Item{s.text, s.label, feature_value(s.features, feature), s.features, s.pair_id, s.source_id};
}

std::vector<std::size_t> draw(std::vector<std::size_t> candidates, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  rng.shuffle(candidates);
  candidates.resize(n);
  return candidates;
}

}  // namespace

BuildResult build_feature_subset(const std::vector<LabeledSentence>& pool, const BuildOptions& options) {
  if (pool.empty()) throw Error("empty_pool", "cannot build a dataset from an empty pool");
  if (options.n_star < 1) throw Error("invalid_config", "n_star must be at least 1");
  const Feature f = options.feature;

  int v_min = feature_value(pool.front().features, f);
  int v_max = v_min;
  for (const auto& s : pool) {
    v_min = std::min(v_min, feature_value(s.features, f));
    v_max = std::max(v_max, feature_value(s.features, f));
  }
  if (options.observed_range) std::tie(v_min, v_max) = *options.observed_range;
  if (v_min > v_max) throw Error("invalid_config", "v_min exceeds v_max");
  const int hi = options.split == Split::train ? quartile_upper(v_min, v_max) : v_max;

  const bool paired =
      std::all_of(pool.begin(), pool.end(), [](const LabeledSentence& s) { return s.pair_id.has_value(); });

  // value -> label -> pool indices (pool order)
  std::map<int, std::vector<std::size_t>> by_value[2];
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (options.exclude.count(i)) continue;
    int v = feature_value(pool[i].features, f);
    if (v < v_min || v > hi) continue;
    by_value[pool[i].label == Label::positive ? 0 : 1][v].push_back(i);
  }

  BuildResult result;
  result.paired = paired;
  result.dataset.spec = BalanceSpec{f, options.n_star, v_min, v_max};
  result.dataset.split = options.split;
  result.dataset.provenance = pool.front().provenance;
  const auto n = static_cast<std::size_t>(options.n_star);
  const std::string tag = std::string(to_string(f)) + "/" + std::string(to_string(options.split));

  for (int v = v_min; v <= hi; ++v) {
    const auto& pos = by_value[0][v];
    const auto& neg = by_value[1][v];
    if (pos.empty() && neg.empty()) continue;
    const std::uint64_t value_seed = derive_seed(options.seed, tag + "/" + std::to_string(v));
    std::vector<std::size_t> chosen_pos, chosen_neg;
    if (paired) {
      std::map<std::int64_t, std::size_t> neg_by_pair;
      for (auto i : neg) neg_by_pair.emplace(*pool[i].pair_id, i);
      std::vector<std::size_t> complete;  // positive indices whose twin is available
      for (auto i : pos) {
        if (neg_by_pair.count(*pool[i].pair_id)) complete.push_back(i);
      }
      if (complete.size() < n) {
        result.dropped.push_back({v, pos.size(), neg.size()});
        continue;
      }
      chosen_pos = draw(complete, n, value_seed);
      for (auto i : chosen_pos) chosen_neg.push_back(neg_by_pair.at(*pool[i].pair_id));
    } else {
      if (pos.size() < n || neg.size() < n) {
        result.dropped.push_back({v, pos.size(), neg.size()});
        continue;
      }
      chosen_pos = draw(pos, n, derive_seed(value_seed, "positive"));
      chosen_neg = draw(neg, n, derive_seed(value_seed, "negative"));
    }
    for (std::size_t k = 0; k < n; ++k) {
      for (auto i : {chosen_pos[k], chosen_neg[k]}) {
        result.dataset.items.push_back(make_item(pool[i], f));
        result.drawn.push_back(i);
      }
    }
  }

  if (result.dataset.items.empty()) {
    std::string detail;
    for (const auto& d : result.dropped) {
      detail += " " + std::to_string(d.value) + ":" + std::to_string(d.positives) + "/" + std::to_string(d.negatives);
    }
    throw Error("all_values_dropped", "no value of " + tag + " reaches n*=" + std::to_string(n) +
                                          " per label (value:pos/neg)" + (detail.empty() ? " none in range" : detail));
  }
  return result;
}

BalanceReport verify_balance(const ProbeDataset& d) {
  BalanceReport report;
  std::set<std::pair<std::string, int>> seen;
  for (const auto& item : d.items) {
    auto& c = report.counts[item.feature_value];
    (item.label == Label::positive ? c.first : c.second)++;
    if (!seen.insert({item.text, static_cast<int>(item.label)}).second) {
      report.reasons.push_back("duplicate item '" + item.text + "'");
    }
  }
  if (report.counts.empty()) report.reasons.push_back("no values");
  const auto n = static_cast<std::size_t>(d.spec.per_value_count);
  for (const auto& [v, c] : report.counts) {
    if (c.first != n || c.second != n) {
      report.reasons.push_back("value " + std::to_string(v) + " has " + std::to_string(c.first) + " positive / " +
                               std::to_string(c.second) + " negative, expected " + std::to_string(n) + " each");
    }
    const int hi = d.split == Split::train ? quartile_upper(d.spec.v_min, d.spec.v_max) : d.spec.v_max;
    if (v < d.spec.v_min || v > hi) {
      report.reasons.push_back("value " + std::to_string(v) + " outside [" + std::to_string(d.spec.v_min) + ", " +
                               std::to_string(hi) + "]");
    }
  }
  report.pass = report.reasons.empty();
  return report;
}

}  // namespace ccprobe::dataset
