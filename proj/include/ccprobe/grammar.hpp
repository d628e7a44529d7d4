#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ccprobe/types.hpp"

namespace ccprobe::grammar {

/// Token inside a terminal that marks the onset of a CC half. It never
/// reaches surface text; the index of the token after it becomes
/// cc_start / second_start.
inline constexpr std::string_view kOnsetMarker = "0";

struct Symbol {
  enum class Kind { terminal, nonterminal };

  Kind kind = Kind::terminal;
  std::string name;                 // nonterminal name, or the raw quoted text
  std::vector<std::string> tokens;  // whitespace split of a terminal; may be empty

  bool is_terminal() const { return kind == Kind::terminal; }
};

using Alternative = std::vector<Symbol>;

struct Grammar {
  std::string name;
  std::string start;
  std::map<std::string, std::vector<Alternative>> productions;
  std::vector<std::string> declaration_order;
  /// Nonterminals whose alternatives are all single terminals: class -> words.
  std::map<std::string, std::vector<std::string>> terminal_classes;
  /// Declared roots exempt from the reachability check (e.g. LOC_SENT).
  std::set<std::string> unreachable_allowed;
  std::string positive_symbol = "SPOS";
  std::string negative_symbol = "SNEG";
  /// Maximum number of times a recursive nonterminal may appear on one
  /// root-to-leaf path.
  int recursion_cap = 3;

  const std::vector<Alternative>& alternatives(const std::string& nonterminal) const;
  bool has(const std::string& nonterminal) const { return productions.count(nonterminal) != 0; }
  /// Nonterminals that can reach themselves.
  std::set<std::string> recursive_nonterminals() const;
};

/// Parse and validate a grammar document. `fallback_name` is used when the
/// document has no `%grammar` directive.
Grammar parse_grammar(std::string_view source, std::string_view fallback_name = "grammar");
Grammar load_grammar_file(const std::filesystem::path& path);
/// "train" or "test": the two grammars shipped with the library.
Grammar bundled_grammar(std::string_view name);
std::string_view bundled_grammar_source(std::string_view name);
/// "train", "test", or a path to a grammar file.
Grammar resolve_grammar(std::string_view name_or_path);

struct DerivationStep {
  std::string nonterminal;
  int alternative = 0;

  friend bool operator==(const DerivationStep&, const DerivationStep&) = default;
};

using Derivation = std::vector<DerivationStep>;  // pre-order

struct GeneratedSentence {
  std::string text;
  Label label = Label::positive;
  FeatureVector features;
  Derivation derivation;
  std::string grammar_name;
};

/// Draw one sentence from the start symbol. Alternatives are chosen
/// uniformly; `forced_label` restricts the start expansion to the SPOS or
/// SNEG branch. Identical arguments give identical output.
GeneratedSentence sample_sentence(const Grammar& g, std::uint64_t seed,
                                  std::optional<Label> forced_label = std::nullopt);

/// Expand an arbitrary nonterminal; onset markers are dropped.
std::vector<std::string> sample_tokens(const Grammar& g, const std::string& symbol, std::uint64_t seed);

/// The negative counterpart of a positive sentence: the same derivation
/// replayed through the NEG side of the grammar, so both cores keep their
/// words and only their order changes.
GeneratedSentence negative_twin(const Grammar& g, const GeneratedSentence& positive);

enum class Verdict { positive, negative, reject };

std::string_view to_string(Verdict verdict);

struct Recognition {
  Verdict verdict = Verdict::reject;
  Derivation derivation;  // empty on reject
  std::optional<FeatureVector> features;  // recovered from the onset markers on accept
};

/// Chart-based membership test, independent of the sampler.
Recognition recognize(const Grammar& g, std::string_view text);

/// "The ADV(s) the NUM NOUN VERB" -> "The ADV(s) NUM VERB the NOUN".
std::vector<std::string> negate_core(const std::vector<std::string>& positive_core);

/// Content-word classes compared for train/test lexical disjointness.
inline constexpr std::string_view kContentClasses[] = {
    "VERB", "NOUN", "ADV", "NUM", "CITY", "PRON", "CANWORD", "KNOWNWORD", "TEMP2", "UNDER2"};

struct ClassOverlap {
  std::string word_class;
  std::vector<std::string> shared;
};

/// Per-class intersections of the two grammars' terminal classes; empty
/// result means the vocabularies are disjoint.
std::vector<ClassOverlap> lexical_overlap(const Grammar& a, const Grammar& b);

}  // namespace ccprobe::grammar
