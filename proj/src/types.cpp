#include "ccprobe/types.hpp"

#include "ccprobe/error.hpp"

namespace ccprobe {

std::string_view to_string(Label label) {
  return label == Label::positive ? "positive" : "negative";
}

Label parse_label(std::string_view text) {
  if (text == "positive") return Label::positive;
  if (text == "negative") return Label::negative;
  throw Error("invalid_label", "unknown label '" + std::string(text) + "'");
}

std::string_view to_string(Feature feature) {
  switch (feature) {
    case Feature::length: return "length";
    case Feature::cc_start: return "cc_start";
    case Feature::second_start: return "second_start";
    case Feature::distance: return "distance";
  }
  return "length";
}

Feature parse_feature(std::string_view text) {
  for (Feature f : kAllFeatures) {
    if (to_string(f) == text) return f;
  }
  throw Error("invalid_feature", "unknown feature '" + std::string(text) + "'");
}

int feature_value(const FeatureVector& features, Feature feature) {
  switch (feature) {
    case Feature::length: return features.length;
    case Feature::cc_start: return features.cc_start;
    case Feature::second_start: return features.second_start;
    case Feature::distance: return features.distance;
  }
  return features.length;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\n' || text[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < text.size() && !(text[j] == ' ' || text[j] == '\t' || text[j] == '\n' || text[j] == '\r')) ++j;
    if (j > i) tokens.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace ccprobe
