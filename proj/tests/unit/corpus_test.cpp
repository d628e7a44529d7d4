#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "ccprobe/annotation.hpp"
#include "ccprobe/corpus.hpp"
#include "ccprobe/error.hpp"
#include "ccprobe/io.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace ccprobe;
using namespace ccprobe::corpus;

namespace {

TaggedSentence tagged(const std::string& text, const std::string& tags, const std::string& id = "s") {
  auto forms = split_tokens(text);
  auto ts = split_tokens(tags);
  REQUIRE(forms.size() == ts.size());
  TaggedSentence s;
  s.source_id = id;
  for (std::size_t i = 0; i < forms.size(); ++i) s.tokens.push_back({forms[i], ts[i], "", false});
  return s;
}

std::vector<Candidate> fixture_candidates(ScanLog* log = nullptr) {
  auto read = read_corpus_file(testing::fixture_path("corpus_examples.tsv"));
  return scan_candidates(read.sentences, ScanOptions{}, log);
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "ccprobe_unit";
  std::filesystem::create_directories(dir);
  auto p = dir / name;
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST_CASE("tsv reader reports malformed records and keeps going") {
  auto read = read_corpus_file(testing::fixture_path("corpus_examples.tsv"));
  CHECK(read.sentences.size() == 15);
  REQUIRE(read.errors.size() == 1);
  CHECK(read.errors[0].source_id == "bad01");
  CHECK(read.sentences.front().source_id == "c01");
  CHECK(read.sentences.back().source_id == "x05");
}

TEST_CASE("conllu reader skips ranges and empty nodes and reads Degree=Cmp") {
  auto read = read_corpus_file(testing::fixture_path("corpus_sample.conllu"));
  REQUIRE(read.sentences.size() == 3);
  REQUIRE(read.errors.size() == 1);
  CHECK(read.errors[0].source_id == "u03");
  const auto& u02 = read.sentences[1];
  CHECK(u02.text() == "The sooner we 're done , the happier .");
  CHECK(u02.tokens[0].tag == "DET");
  CHECK(u02.tokens[1].degree_cmp);

  auto cands = scan_candidates(read.sentences, ScanOptions{});
  REQUIRE(cands.size() == 3);
  CHECK(cands[1].features == FeatureVector{9, 0, 6, 6});
  CHECK(cands[0].pattern_key == "PRP VBZ DT JJR NN PRP VBZ DT JJR PRP$ NN VBZ .");
}

TEST_CASE("matcher sites") {
  auto s = tagged("the more specific you are the better", "DT RBR JJ PRP VBP DT JJR");
  CHECK(match_site(s.tokens, 0) == Span{0, 3});
  CHECK(match_site(s.tokens, 5) == Span{5, 7});
  CHECK(match_site(s.tokens, 1) == Span{});
  // -er form without a comparative tag, and a comparative tag without -er.
  CHECK(match_site(tagged("the corner", "DT NN").tokens, 0) == Span{});
  CHECK(match_site(tagged("the best", "DT JJS").tokens, 0) == Span{});
  CHECK(match_site(tagged("the bigger", "NN JJR").tokens, 0) == Span{});
}

TEST_CASE("scan over the corpus example table") {
  ScanLog log;
  auto cands = fixture_candidates(&log);
  std::vector<std::string> ids;
  for (auto& c : cands) ids.push_back(c.sentence.source_id);
  CHECK(ids == std::vector<std::string>{"c01", "c02", "c03", "c04", "c05", "c06", "c07", "c08", "c09", "c10", "x03",
                                        "x04"});
  CHECK(log.excluded == std::vector<std::string>{"x01"});
  CHECK(log.duplicates == std::vector<std::string>{"x02"});
  CHECK(log.extra_matches == std::vector<std::string>{"x04"});

  const auto& c02 = cands[1];
  CHECK(c02.sentence.text() == "She thinks the more water she drinks the better her skin looks .");
  CHECK(c02.half_spans[0] == Span{2, 4});
  CHECK(c02.half_spans[1] == Span{7, 9});
  CHECK(c02.features == FeatureVector{13, 2, 7, 5});
  CHECK(cands[5].features == FeatureVector{8, 1, 4, 3});  // Subtract the smaller from the larger . "

  for (const auto& c : cands) {
    for (const auto& span : c.half_spans) {
      CHECK(c.sentence.tokens[span.begin].form.size() == 3);
      CHECK(c.sentence.tokens[span.begin].tag == "DT");
    }
    CHECK(c.half_spans[0].end <= c.half_spans[1].begin);
  }
}

TEST_CASE("exclusions, length cap and rescans") {
  auto s = tagged("the other day the better one", "DT JJR NN DT JJR CD");
  CHECK(scan_candidates({s}, ScanOptions{}).empty());
  ScanOptions no_exclusions;
  no_exclusions.exclusions.clear();
  CHECK(scan_candidates({s}, no_exclusions).size() == 1);
  ScanOptions tight;
  tight.max_tokens = 5;
  ScanLog log;
  CHECK(scan_candidates({s}, tight, &log).empty());
  CHECK(log.too_long.size() == 1);

  auto a = fixture_candidates();
  auto b = fixture_candidates();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(io::dump(io::to_json(a[i])) == io::dump(io::to_json(b[i])));
  CHECK(parse_exclusions("# c\nOther\n  less more # trailing\n") == std::set<std::string>{"other", "less", "more"});
}

TEST_CASE("candidate json round trip") {
  for (const auto& c : fixture_candidates()) {
    auto j = io::to_json(c);
    auto back = io::candidate_from_json(j);
    CHECK(io::dump(io::to_json(back)) == io::dump(j));
  }
}

TEST_CASE("group_patterns") {
  auto cands = fixture_candidates();
  auto groups = group_patterns(cands, 5);
  CHECK(groups.size() == 11);
  std::size_t members = 0;
  for (auto& g : groups) {
    members += g.members.size();
    for (auto i : g.members) CHECK(cands[i].pattern_key == g.pattern_key);
  }
  CHECK(members == cands.size());
  auto again = group_patterns(cands, 5);
  for (std::size_t i = 0; i < groups.size(); ++i) CHECK(groups[i].pattern_key == again[i].pattern_key);

  // n distinct sequences give n singleton groups.
  std::vector<Candidate> distinct(cands.begin(), cands.begin() + 3);
  auto singles = group_patterns(distinct, 1);
  CHECK(singles.size() == 3);
  for (auto& g : singles) CHECK(g.members.size() == 1);
}

TEST_CASE("label transitions") {
  using GL = GroupLabel;
  CHECK(transition_allowed(GL::unlabeled, GL::positive));
  CHECK(transition_allowed(GL::unlabeled, GL::skip));
  CHECK(transition_allowed(GL::skip, GL::negative));
  CHECK_FALSE(transition_allowed(GL::skip, GL::skip));
  CHECK_FALSE(transition_allowed(GL::positive, GL::negative));
  CHECK_FALSE(transition_allowed(GL::negative, GL::unlabeled));
  PatternGroup g;
  apply_label(g, GL::positive, "ann", "t0");
  CHECK_THROWS_WITH_AS(apply_label(g, GL::negative, "ann", "t1"), doctest::Contains("already positive"), Error);
  CHECK(g.labeled_at == "t0");
}

TEST_CASE("split_by_pattern keeps pattern keys disjoint") {
  std::vector<Candidate> cands;
  std::vector<PatternGroup> groups;
  for (int p = 0; p < 10; ++p) {
    PatternGroup g;
    g.pattern_key = "P" + std::to_string(p);
    g.label = p % 2 ? GroupLabel::positive : GroupLabel::negative;
    for (int k = 0; k < 3; ++k) {
      Candidate c;
      c.sentence = tagged("the x the y", "DT JJR DT JJR", g.pattern_key + "_" + std::to_string(k));
      c.pattern_key = g.pattern_key;
      c.features = FeatureVector::from_positions(4, 0, 2);
      g.members.push_back(cands.size());
      cands.push_back(c);
    }
    groups.push_back(g);
  }
  auto split = split_by_pattern(groups, cands, 0.3, 11);
  CHECK(split.test_patterns.size() == 3);
  CHECK(split.train_patterns.size() == 7);
  CHECK(split.test.size() == 9);
  std::set<std::string> train_keys, test_keys;
  for (auto& s : split.train) train_keys.insert(s.pattern_key);
  for (auto& s : split.test) test_keys.insert(s.pattern_key);
  for (auto& k : test_keys) CHECK(train_keys.count(k) == 0);
  for (auto& s : split.test) {
    CHECK(s.provenance == "corpus");
    CHECK(s.label == (std::stoi(s.pattern_key.substr(1)) % 2 ? Label::positive : Label::negative));
  }
  auto again = split_by_pattern(groups, cands, 0.3, 11);
  CHECK(again.test_patterns == split.test_patterns);

  // Unlabeled and skipped groups are left out.
  groups[0].label = GroupLabel::skip;
  groups[1].label = GroupLabel::unlabeled;
  auto partial = split_by_pattern(groups, cands, 0.3, 11);
  CHECK(partial.train_patterns.size() + partial.test_patterns.size() == 8);

  std::vector<PatternGroup> one{groups[2]};
  auto single = split_by_pattern(one, cands, 0.3, 11);
  CHECK(single.test.empty());
  CHECK(single.train.size() == 3);
  CHECK(single.warnings.size() == 1);

  for (auto& g : groups) g.label = GroupLabel::unlabeled;
  CHECK_THROWS_AS(split_by_pattern(groups, cands, 0.3, 11), Error);
}

TEST_CASE("annotation store persists labels across restarts") {
  auto log_path = temp_path("labels.jsonl");
  auto cands = fixture_candidates();
  int tick = 0;
  auto clock = [&] { return "2026-01-01T00:00:0" + std::to_string(tick++) + "Z"; };
  std::vector<std::string> labeled;
  {
    annotation::Store store(cands, 3, log_path, clock);
    auto first = store.patterns(GroupLabel::unlabeled, 5);
    REQUIRE(first.size() == 5);
    for (std::size_t i = 0; i < first.size(); ++i) {
      store.label(first[i].pattern_key, i == 4 ? GroupLabel::skip : GroupLabel::positive, "ann");
      labeled.push_back(first[i].pattern_key);
    }
    CHECK_THROWS_AS(store.label(first[0].pattern_key, GroupLabel::negative, "other"), Error);
    CHECK_THROWS_AS(store.label("no such key", GroupLabel::negative, "other"), Error);
    store.label(first[4].pattern_key, GroupLabel::negative, "ann");
    CHECK(store.progress().at("positive") == 4);
    CHECK(store.patterns(GroupLabel::unlabeled, 100).size() == 6);
  }
  // Torn trailing write from a crash.
  { std::ofstream(log_path, std::ios::app) << "{\"pattern_key\": \"tru"; }
  annotation::Store reopened(cands, 3, log_path, clock);
  CHECK(reopened.replay_skipped() == 1);
  auto progress = reopened.progress();
  CHECK(progress.at("positive") == 4);
  CHECK(progress.at("negative") == 1);
  CHECK(progress.at("skip") == 0);
  CHECK(progress.at("unlabeled") == 6);

  auto exported = reopened.export_jsonl();
  std::istringstream lines(exported);
  std::set<std::string> keys;
  for (std::string line; std::getline(lines, line);) {
    auto j = io::Json::parse(line);
    keys.insert(j.at("pattern_key").get<std::string>());
    CHECK(j.at("labeled_at").get<std::string>().rfind("2026-01-01T", 0) == 0);
  }
  CHECK(keys == std::set<std::string>(labeled.begin(), labeled.end()));
  // Compacted log holds exactly one event per labeled pattern.
  auto compacted = io::read_jsonl(log_path);
  CHECK(compacted.records.size() == 5);
  annotation::Store third(cands, 3, log_path, clock);
  CHECK(third.progress() == progress);
}

TEST_CASE("annotation store serializes concurrent labels") {
  auto log_path = temp_path("concurrent.jsonl");
  annotation::Store store(fixture_candidates(), 1, log_path);
  auto keys = store.patterns(std::nullopt, 100);
  std::atomic<int> accepted{0}, rejected{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (auto& p : keys) {
        try {
          store.label(p.pattern_key, t % 2 ? GroupLabel::positive : GroupLabel::negative, "t" + std::to_string(t));
          ++accepted;
        } catch (const Error& e) {
          CHECK(e.code() == "label_conflict");
          ++rejected;
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(accepted == static_cast<int>(keys.size()));
  CHECK(rejected == static_cast<int>(3 * keys.size()));
  CHECK(io::read_jsonl(log_path).records.size() == keys.size());
}

TEST_CASE("label files by pattern key or source id") {
  auto cands = fixture_candidates();
  auto groups = group_patterns(cands, 0);
  annotation::apply_label_file(testing::fixture_path("corpus_examples_labels.jsonl"), groups, cands);
  std::map<std::string, GroupLabel> by_key;
  for (auto& g : groups) by_key[g.pattern_key] = g.label;
  CHECK(by_key.at(cands[0].pattern_key) == GroupLabel::positive);
  CHECK(by_key.at(cands[10].pattern_key) == GroupLabel::negative);  // x03 shares c07's pattern
  CHECK(by_key.at(cands[11].pattern_key) == GroupLabel::unlabeled);
}
