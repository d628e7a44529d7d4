#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ccprobe {

enum class Label { positive, negative };

std::string_view to_string(Label label);
Label parse_label(std::string_view text);

/// Positions of the two CC halves within a whitespace-tokenized sentence.
/// All indices are 0-based token offsets; punctuation counts as a token.
struct FeatureVector {
  int length = 0;
  int cc_start = 0;
  int second_start = 0;
  int distance = 0;

  static FeatureVector from_positions(int length, int cc_start, int second_start) {
    return {length, cc_start, second_start, second_start - cc_start};
  }

  bool valid() const {
    return 0 <= cc_start && cc_start < second_start && second_start < length &&
           distance == second_start - cc_start;
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

enum class Feature { length, cc_start, second_start, distance };

inline constexpr Feature kAllFeatures[] = {Feature::length, Feature::cc_start,
                                           Feature::second_start, Feature::distance};

std::string_view to_string(Feature feature);
Feature parse_feature(std::string_view text);
int feature_value(const FeatureVector& features, Feature feature);

/// A sentence with a syntax label, as fed to dataset construction.
struct LabeledSentence {
  std::string text;
  Label label = Label::positive;
  FeatureVector features;
  std::string provenance;   // "artificial" or "corpus"
  std::string pattern_key;  // corpus only
  std::string source_id;
  // Positive/negative twins produced from one derivation share a pair id.
  std::optional<std::int64_t> pair_id;
};

std::vector<std::string> split_tokens(std::string_view text);
std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace ccprobe
