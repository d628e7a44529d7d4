#include "ccprobe/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <unordered_set>

#include "ccprobe/bundled.hpp"
#include "ccprobe/error.hpp"
#include "ccprobe/rng.hpp"

namespace ccprobe::corpus {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::vector<std::string> split_on(std::string_view line, char sep) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(sep, start);
    fields.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool is_determiner(const Token& t) { return t.tag == "DT" || t.tag == "DET" || t.upos == "DET"; }

bool is_adj_or_adv(const Token& t) {
  return t.tag.rfind("JJ", 0) == 0 || t.tag.rfind("RB", 0) == 0 || t.tag == "ADJ" || t.tag == "ADV" ||
         t.upos == "ADJ" || t.upos == "ADV";
}

bool is_comparative(const Token& t) { return t.tag == "JJR" || t.tag == "RBR" || t.degree_cmp; }

// Collects sentences block by block; a bad line poisons only its own block.
class BlockReader {
public:
  BlockReader(std::string_view source) : source_(source) {}

  void begin_line() { ++line_no_; }
  void set_id(std::string id) { id_ = std::move(id); }
  void add(Token t) { current_.tokens.push_back(std::move(t)); }
  void fail(const std::string& message) {
    if (!bad_) result.errors.push_back({current_id(), "line " + std::to_string(line_no_) + ": " + message});
    bad_ = true;
  }
  void end_block() {
    if (!bad_ && !current_.tokens.empty()) {
      current_.source_id = current_id();
      result.sentences.push_back(std::move(current_));
    }
    if (bad_ || !current_.tokens.empty()) ++ordinal_;
    current_ = {};
    id_.clear();
    bad_ = false;
  }

  ReadResult result;

private:
  std::string current_id() const { return id_.empty() ? source_ + "#" + std::to_string(ordinal_ + 1) : id_; }

  std::string source_;
  TaggedSentence current_;
  std::string id_;
  bool bad_ = false;
  std::size_t ordinal_ = 0;
  std::size_t line_no_ = 0;
};

}  // namespace

std::string TaggedSentence::text() const {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t.form;
  }
  return out;
}

ReadResult read_conllu(std::istream& in, std::string_view source_name) {
  BlockReader reader(source_name);
  for (std::string line; std::getline(in, line);) {
    reader.begin_line();
    strip_cr(line);
    if (line.empty()) {
      reader.end_block();
      continue;
    }
    if (line[0] == '#') {
      static constexpr std::string_view kSentId = "# sent_id = ";
      if (line.rfind(kSentId, 0) == 0) reader.set_id(line.substr(kSentId.size()));
      continue;
    }
    auto cols = split_on(line, '\t');
    if (cols.size() != 10) {
      reader.fail("expected 10 tab-separated columns, found " + std::to_string(cols.size()));
      continue;
    }
    // Multiword ranges and empty nodes carry no tag of their own.
    if (cols[0].find_first_of("-.") != std::string::npos) continue;
    if (cols[1].empty() || cols[3].empty()) {
      reader.fail("empty FORM or UPOS");
      continue;
    }
    Token t;
    t.form = cols[1];
    t.upos = cols[3];
    t.tag = cols[4] != "_" && !cols[4].empty() ? cols[4] : cols[3];
    for (const auto& feat : split_on(cols[5], '|')) {
      if (feat == "Degree=Cmp") t.degree_cmp = true;
    }
    reader.add(std::move(t));
  }
  reader.end_block();
  return std::move(reader.result);
}

ReadResult read_tsv(std::istream& in, std::string_view source_name) {
  BlockReader reader(source_name);
  for (std::string line; std::getline(in, line);) {
    reader.begin_line();
    strip_cr(line);
    if (line.empty()) {
      reader.end_block();
      continue;
    }
    if (line[0] == '#') {
      static constexpr std::string_view kId = "# id = ";
      if (line.rfind(kId, 0) == 0) reader.set_id(line.substr(kId.size()));
      continue;
    }
    auto cols = split_on(line, '\t');
    if (cols.size() != 2 || cols[0].empty() || cols[1].empty()) {
      reader.fail("expected 'form<TAB>tag'");
      continue;
    }
    reader.add(Token{cols[0], cols[1], "", false});
  }
  reader.end_block();
  return std::move(reader.result);
}

ReadResult read_corpus_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_input", "cannot open corpus file " + path.string());
  auto ext = path.extension().string();
  auto name = path.filename().string();
  if (ext == ".conllu" || ext == ".conll") return read_conllu(in, name);
  return read_tsv(in, name);
}

std::set<std::string> parse_exclusions(std::string_view text) {
  std::set<std::string> words;
  for (auto& line : split_on(text, '\n')) {
    strip_cr(line);
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    for (auto& w : split_tokens(line)) words.insert(lower(w));
  }
  return words;
}

std::set<std::string> load_exclusions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_input", "cannot open exclusion list " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_exclusions(text);
}

std::set<std::string> default_exclusions() { return parse_exclusions(bundled_text("exclusions.txt")); }

Span match_site(const std::vector<Token>& tokens, int i) {
  const int n = static_cast<int>(tokens.size());
  if (i < 0 || i + 1 >= n) return {};
  if (lower(tokens[i].form) != "the" || !is_determiner(tokens[i])) return {};
  const Token& next = tokens[i + 1];
  const auto next_form = lower(next.form);
  if (next_form == "more" && i + 2 < n && is_adj_or_adv(tokens[i + 2])) return {i, i + 3};
  // "more" itself tagged comparative covers "the more water ...".
  if (is_adj_or_adv(next) && is_comparative(next) && (ends_with(next_form, "er") || next_form == "more")) {
    return {i, i + 2};
  }
  return {};
}

std::string pattern_key(const TaggedSentence& sentence) {
  std::string key;
  for (const auto& t : sentence.tokens) {
    if (!key.empty()) key += ' ';
    key += t.tag;
  }
  return key;
}

std::vector<Candidate> scan_candidates(const std::vector<TaggedSentence>& corpus, const ScanOptions& options,
                                       ScanLog* log) {
  std::vector<Candidate> out;
  std::unordered_set<std::string> seen;
  for (const auto& sentence : corpus) {
    const int n = static_cast<int>(sentence.tokens.size());
    if (n > options.max_tokens) {
      if (log) log->too_long.push_back(sentence.source_id);
      continue;
    }
    std::vector<Span> sites;
    for (int i = 0; i < n;) {
      Span s = match_site(sentence.tokens, i);
      if (s.end > s.begin) {
        sites.push_back(s);
        i = s.end;
      } else {
        ++i;
      }
    }
    if (sites.size() < 2) continue;
    bool excluded = false;
    for (std::size_t k = 0; k < 2; ++k) {
      for (int j = sites[k].begin + 1; j < sites[k].end; ++j) {
        if (options.exclusions.count(lower(sentence.tokens[j].form))) excluded = true;
      }
    }
    if (excluded) {
      if (log) log->excluded.push_back(sentence.source_id);
      continue;
    }
    auto text = sentence.text();
    if (!seen.insert(text).second) {
      if (log) log->duplicates.push_back(sentence.source_id);
      continue;
    }
    if (sites.size() > 2 && log) log->extra_matches.push_back(sentence.source_id);
    Candidate c;
    c.sentence = sentence;
    c.half_spans = {sites[0], sites[1]};
    c.pattern_key = pattern_key(sentence);
    c.features = FeatureVector::from_positions(n, sites[0].begin, sites[1].begin);
    out.push_back(std::move(c));
  }
  return out;
}

std::string_view to_string(GroupLabel label) {
  switch (label) {
    case GroupLabel::unlabeled: return "unlabeled";
    case GroupLabel::positive: return "positive";
    case GroupLabel::negative: return "negative";
    case GroupLabel::skip: return "skip";
  }
  return "unlabeled";
}

GroupLabel parse_group_label(std::string_view text) {
  for (auto l : {GroupLabel::unlabeled, GroupLabel::positive, GroupLabel::negative, GroupLabel::skip}) {
    if (to_string(l) == text) return l;
  }
  throw Error("invalid_label", "unknown label '" + std::string(text) + "'");
}

bool transition_allowed(GroupLabel from, GroupLabel to) {
  if (to == GroupLabel::unlabeled) return false;
  if (from == GroupLabel::unlabeled) return true;
  return from == GroupLabel::skip && to != GroupLabel::skip;
}

std::vector<PatternGroup> group_patterns(const std::vector<Candidate>& candidates, std::uint64_t seed) {
  std::map<std::string, PatternGroup> by_key;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto& g = by_key[candidates[i].pattern_key];
    g.pattern_key = candidates[i].pattern_key;
    g.members.push_back(i);
  }
  std::vector<PatternGroup> groups;
  groups.reserve(by_key.size());
  for (auto& [key, g] : by_key) groups.push_back(std::move(g));
  Rng rng(derive_seed(seed, "group_patterns"));
  rng.shuffle(groups);
  return groups;
}

void apply_label(PatternGroup& group, GroupLabel label, std::string annotator, std::string timestamp) {
  if (!transition_allowed(group.label, label)) {
    throw Error("label_conflict", "pattern '" + group.pattern_key + "' is already " +
                                      std::string(to_string(group.label)) + "; cannot set " +
                                      std::string(to_string(label)));
  }
  group.label = label;
  group.labeled_by = std::move(annotator);
  group.labeled_at = std::move(timestamp);
}

PatternSplit split_by_pattern(const std::vector<PatternGroup>& groups, const std::vector<Candidate>& candidates,
                              double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw Error("invalid_config", "test_fraction must lie in [0, 1)");
  }
  std::vector<const PatternGroup*> labeled;
  for (const auto& g : groups) {
    if (g.label == GroupLabel::positive || g.label == GroupLabel::negative) labeled.push_back(&g);
  }
  if (labeled.empty()) throw Error("no_labeled_groups", "no pattern group carries a positive or negative label");
  std::sort(labeled.begin(), labeled.end(), [](auto* a, auto* b) { return a->pattern_key < b->pattern_key; });
  Rng rng(derive_seed(seed, "split_by_pattern"));
  rng.shuffle(labeled);

  PatternSplit split;
  std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(labeled.size())));
  if (labeled.size() == 1) {
    split.warnings.push_back("only one labeled pattern; all sentences go to the train split");
    n_test = 0;
  } else {
    n_test = std::min(n_test, labeled.size() - 1);
  }
  for (std::size_t k = 0; k < labeled.size(); ++k) {
    const auto& g = *labeled[k];
    const bool to_test = k < n_test;
    (to_test ? split.test_patterns : split.train_patterns).push_back(g.pattern_key);
    auto& dest = to_test ? split.test : split.train;
    for (auto idx : g.members) {
      const auto& c = candidates.at(idx);
      LabeledSentence s;
      s.text = c.sentence.text();
      s.label = g.label == GroupLabel::positive ? Label::positive : Label::negative;
      s.features = c.features;
      s.provenance = "corpus";
      s.pattern_key = g.pattern_key;
      s.source_id = c.sentence.source_id;
      dest.push_back(std::move(s));
    }
  }
  return split;
}

}  // namespace ccprobe::corpus
