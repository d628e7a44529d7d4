#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ccprobe/types.hpp"

namespace ccprobe::corpus {

struct Token {
  std::string form;
  std::string tag;   // XPOS when the input has one, else UPOS
  std::string upos;  // empty for two-column TSV
  bool degree_cmp = false;  // Degree=Cmp in the CoNLL-U FEATS column
};

struct TaggedSentence {
  std::vector<Token> tokens;
  std::string source_id;

  std::string text() const;
};

struct ReadError {
  std::string source_id;
  std::string message;
};

struct ReadResult {
  std::vector<TaggedSentence> sentences;
  std::vector<ReadError> errors;
};

/// Malformed records are reported and skipped; reading continues.
ReadResult read_conllu(std::istream& in, std::string_view source_name);
ReadResult read_tsv(std::istream& in, std::string_view source_name);
/// Dispatches on extension: .conllu / .conll are CoNLL-U, anything else TSV.
ReadResult read_corpus_file(const std::filesystem::path& path);

std::set<std::string> parse_exclusions(std::string_view text);
std::set<std::string> load_exclusions(const std::filesystem::path& path);
std::set<std::string> default_exclusions();

/// Half-open token range [begin, end).
struct Span {
  int begin = 0;
  int end = 0;

  friend bool operator==(const Span&, const Span&) = default;
};

struct Candidate {
  TaggedSentence sentence;
  std::array<Span, 2> half_spans;
  std::string pattern_key;
  FeatureVector features;
};

struct ScanOptions {
  std::set<std::string> exclusions = default_exclusions();
  int max_tokens = 128;
};

struct ScanLog {
  std::vector<std::string> too_long;
  std::vector<std::string> duplicates;
  std::vector<std::string> excluded;
  std::vector<std::string> extra_matches;  // more than two sites; first two kept
};

/// Site of "the" + comparative starting at `i`, or an empty span.
Span match_site(const std::vector<Token>& tokens, int i);
std::string pattern_key(const TaggedSentence& sentence);

std::vector<Candidate> scan_candidates(const std::vector<TaggedSentence>& corpus, const ScanOptions& options,
                                       ScanLog* log = nullptr);

enum class GroupLabel { unlabeled, positive, negative, skip };

std::string_view to_string(GroupLabel label);
GroupLabel parse_group_label(std::string_view text);
bool transition_allowed(GroupLabel from, GroupLabel to);

struct PatternGroup {
  std::string pattern_key;
  std::vector<std::size_t> members;  // indices into the candidate list
  GroupLabel label = GroupLabel::unlabeled;
  std::string labeled_by;
  std::string labeled_at;
};

/// One group per pattern key, in seeded random order.
std::vector<PatternGroup> group_patterns(const std::vector<Candidate>& candidates, std::uint64_t seed);

/// Throws Error("label_conflict") on a disallowed transition.
void apply_label(PatternGroup& group, GroupLabel label, std::string annotator, std::string timestamp);

struct PatternSplit {
  std::vector<LabeledSentence> train;
  std::vector<LabeledSentence> test;
  std::vector<std::string> train_patterns;
  std::vector<std::string> test_patterns;
  std::vector<std::string> warnings;
};

PatternSplit split_by_pattern(const std::vector<PatternGroup>& groups, const std::vector<Candidate>& candidates,
                              double test_fraction, std::uint64_t seed);

}  // namespace ccprobe::corpus
