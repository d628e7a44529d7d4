#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ccprobe/corpus.hpp"
#include "ccprobe/dataset.hpp"
#include "ccprobe/grammar.hpp"
#include "ccprobe/types.hpp"

namespace ccprobe::io {

using Json = nlohmann::ordered_json;

/// Compact, key-order preserving dump; floats use the shortest
/// round-trip representation.
std::string dump(const Json& value);

Json to_json(const FeatureVector& f);
FeatureVector feature_vector_from_json(const Json& j);

Json to_json(const LabeledSentence& s);
LabeledSentence labeled_sentence_from_json(const Json& j);

Json to_json(const grammar::GeneratedSentence& s);

Json to_json(const corpus::Candidate& c);
corpus::Candidate candidate_from_json(const Json& j);

Json to_json(const dataset::Item& item);
dataset::Item item_from_json(const Json& j);

/// JSONL with an optional leading {"meta": ...} line.
struct JsonlDocument {
  Json meta;  // null when the file has no meta line
  std::vector<Json> records;
};

void write_jsonl(const std::filesystem::path& path, const Json& meta, const std::vector<Json>& records);
JsonlDocument read_jsonl(const std::filesystem::path& path);

/// Write via a temporary sibling and rename, so readers never see a torn file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace ccprobe::io
