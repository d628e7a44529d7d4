#include <map>
#include <set>

#include "ccprobe/dataset.hpp"
#include "ccprobe/error.hpp"
#include "doctest.h"

using namespace ccprobe;
using namespace ccprobe::dataset;

namespace {

LabeledSentence at_length(int length, Label label, const std::string& text) {
  LabeledSentence s;
  s.text = text;
  s.label = label;
  s.features = FeatureVector::from_positions(length, 0, 1);
  s.provenance = "corpus";
  return s;
}

std::vector<LabeledSentence> pool_with(std::initializer_list<std::tuple<int, int, int>> spec) {
  std::vector<LabeledSentence> pool;
  int id = 0;
  for (auto [value, pos, neg] : spec) {
    for (int k = 0; k < pos; ++k) pool.push_back(at_length(value, Label::positive, "p" + std::to_string(id++)));
    for (int k = 0; k < neg; ++k) pool.push_back(at_length(value, Label::negative, "n" + std::to_string(id++)));
  }
  return pool;
}

}  // namespace

TEST_CASE("quartile boundary") {
  CHECK(quartile_upper(10, 50) == 20);
  CHECK(quartile_upper(10, 13) == 10);
  CHECK(quartile_upper(7, 7) == 7);
  CHECK(quartile_upper(13, 57) == 24);
}

TEST_CASE("train split draws only from the lowest quartile") {
  auto pool = pool_with({{10, 3, 3}, {20, 3, 3}, {21, 3, 3}, {50, 3, 3}});
  BuildOptions opt;
  opt.n_star = 2;
  auto train = build_feature_subset(pool, opt);
  std::set<int> values;
  for (auto& item : train.dataset.items) values.insert(item.feature_value);
  CHECK(values == std::set<int>{10, 20});
  CHECK(train.dataset.spec.v_min == 10);
  CHECK(train.dataset.spec.v_max == 50);
  CHECK(verify_balance(train.dataset).pass);

  opt.split = Split::test;
  auto test = build_feature_subset(pool, opt);
  CHECK(test.dataset.items.size() == 16);
  CHECK(verify_balance(test.dataset).pass);
}

TEST_CASE("exactly n* per value and label, without replacement") {
  auto pool = pool_with({{7, 3, 3}});
  BuildOptions opt;
  opt.n_star = 2;
  opt.split = Split::test;
  auto r = build_feature_subset(pool, opt);
  auto report = verify_balance(r.dataset);
  CHECK(report.counts.at(7) == std::pair<std::size_t, std::size_t>{2, 2});
  std::set<std::size_t> drawn(r.drawn.begin(), r.drawn.end());
  CHECK(drawn.size() == r.drawn.size());

  auto again = build_feature_subset(pool, opt);
  CHECK(again.drawn == r.drawn);
  opt.seed = 99;
  bool differs = false;
  for (int s = 0; s < 20 && !differs; ++s) {
    opt.seed = static_cast<std::uint64_t>(s);
    differs = build_feature_subset(pool, opt).drawn != r.drawn;
  }
  CHECK(differs);
}

TEST_CASE("values short of n* are dropped and reported") {
  auto pool = pool_with({{7, 3, 3}, {9, 5, 0}});
  BuildOptions opt;
  opt.n_star = 2;
  opt.split = Split::test;
  auto r = build_feature_subset(pool, opt);
  REQUIRE(r.dropped.size() == 1);
  CHECK(r.dropped[0].value == 9);
  CHECK(r.dropped[0].positives == 5);
  CHECK(r.dropped[0].negatives == 0);

  auto sparse = pool_with({{9, 5, 0}});
  CHECK_THROWS_WITH_AS(build_feature_subset(sparse, opt), doctest::Contains("9:5/0"), Error);
  CHECK_THROWS_AS(build_feature_subset({}, opt), Error);
}

TEST_CASE("exclusions keep splits disjoint") {
  auto pool = pool_with({{7, 4, 4}});
  BuildOptions opt;
  opt.n_star = 2;
  opt.split = Split::test;
  auto first = build_feature_subset(pool, opt);
  opt.exclude.insert(first.drawn.begin(), first.drawn.end());
  auto second = build_feature_subset(pool, opt);
  for (auto i : second.drawn) CHECK(opt.exclude.count(i) == 0);
  opt.exclude.insert(second.drawn.begin(), second.drawn.end());
  CHECK_THROWS_AS(build_feature_subset(pool, opt), Error);
}

TEST_CASE("verify_balance failure modes") {
  auto pool = pool_with({{7, 3, 3}});
  BuildOptions opt;
  opt.n_star = 2;
  opt.split = Split::test;
  auto d = build_feature_subset(pool, opt).dataset;
  d.items.push_back(Item{"extra", Label::positive, 7, {}, std::nullopt, ""});
  auto report = verify_balance(d);
  CHECK_FALSE(report.pass);
  REQUIRE(report.reasons.size() == 1);
  CHECK(report.reasons[0].find("value 7") != std::string::npos);

  ProbeDataset empty;
  auto er = verify_balance(empty);
  CHECK_FALSE(er.pass);
  CHECK(er.reasons == std::vector<std::string>{"no values"});

  auto train = build_feature_subset(pool_with({{10, 2, 2}, {50, 2, 2}}), BuildOptions{Feature::length, 2});
  train.dataset.items.push_back(Item{"hi+", Label::positive, 50, {}, std::nullopt, ""});
  train.dataset.items.push_back(Item{"hi-", Label::negative, 50, {}, std::nullopt, ""});
  auto tr = verify_balance(train.dataset);
  CHECK_FALSE(tr.pass);
}

TEST_CASE("artificial pools draw whole twin pairs") {
  auto g = grammar::bundled_grammar("train");
  auto pool = artificial_pool(g, 2000, 4);
  CHECK(pool.size() == 4000);
  for (Feature f : kAllFeatures) {
    BuildOptions opt;
    opt.feature = f;
    opt.n_star = 5;
    opt.seed = 4;
    auto r = build_feature_subset(pool, opt);
    CHECK(r.paired);
    CHECK(verify_balance(r.dataset).pass);
    std::map<std::int64_t, int> per_pair;
    for (auto& item : r.dataset.items) per_pair[*item.pair_id] += item.label == Label::positive ? 1 : 10;
    for (auto& [id, mask] : per_pair) CHECK(mask == 11);
  }
}
