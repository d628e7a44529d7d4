#include "ccprobe/io.hpp"

#include <fstream>
#include <sstream>

#include "ccprobe/error.hpp"

namespace ccprobe::io {

std::string dump(const Json& value) { return value.dump(-1, ' ', false, Json::error_handler_t::strict); }

Json to_json(const FeatureVector& f) {
  return Json{{"length", f.length}, {"cc_start", f.cc_start}, {"second_start", f.second_start}, {"distance", f.distance}};
}

FeatureVector feature_vector_from_json(const Json& j) {
  auto f = FeatureVector::from_positions(j.at("length").get<int>(), j.at("cc_start").get<int>(),
                                         j.at("second_start").get<int>());
  if (j.contains("distance") && j.at("distance").get<int>() != f.distance) {
    throw Error("invalid_record", "distance does not equal second_start - cc_start");
  }
  return f;
}

Json to_json(const LabeledSentence& s) {
  Json j{{"text", s.text}, {"label", to_string(s.label)}, {"features", to_json(s.features)},
         {"provenance", s.provenance}};
  if (!s.pattern_key.empty()) j["pattern_key"] = s.pattern_key;
  if (!s.source_id.empty()) j["source_id"] = s.source_id;
  if (s.pair_id) j["pair_id"] = *s.pair_id;
  return j;
}

LabeledSentence labeled_sentence_from_json(const Json& j) {
  try {
    LabeledSentence s;
    s.text = j.at("text").get<std::string>();
    s.label = parse_label(j.at("label").get<std::string>());
    s.features = feature_vector_from_json(j.at("features"));
    s.provenance = j.value("provenance", "");
    s.pattern_key = j.value("pattern_key", "");
    s.source_id = j.value("source_id", "");
    if (j.contains("pair_id")) s.pair_id = j.at("pair_id").get<std::int64_t>();
    return s;
  } catch (const Json::exception& e) {
    throw Error("invalid_record", std::string("bad sentence record: ") + e.what());
  }
}

Json to_json(const grammar::GeneratedSentence& s) {
  Json derivation = Json::array();
  for (const auto& step : s.derivation) derivation.push_back(Json::array({step.nonterminal, step.alternative}));
  return Json{{"text", s.text},
              {"label", to_string(s.label)},
              {"features", to_json(s.features)},
              {"grammar_name", s.grammar_name},
              {"derivation", std::move(derivation)}};
}

Json to_json(const dataset::Item& item) {
  Json j{{"text", item.text},
         {"label", to_string(item.label)},
         {"feature_value", item.feature_value},
         {"features", to_json(item.features)}};
  if (item.pair_id) j["pair_id"] = *item.pair_id;
  if (!item.source_id.empty()) j["source_id"] = item.source_id;
  return j;
}

dataset::Item item_from_json(const Json& j) {
  try {
    dataset::Item item;
    item.text = j.at("text").get<std::string>();
    item.label = parse_label(j.at("label").get<std::string>());
    item.feature_value = j.at("feature_value").get<int>();
    item.features = feature_vector_from_json(j.at("features"));
    if (j.contains("pair_id")) item.pair_id = j.at("pair_id").get<std::int64_t>();
    item.source_id = j.value("source_id", "");
    return item;
  } catch (const Json::exception& e) {
    throw Error("invalid_record", std::string("bad dataset item: ") + e.what());
  }
}

Json to_json(const corpus::Candidate& c) {
  Json tokens = Json::array();
  for (const auto& t : c.sentence.tokens) {
    Json tok{{"form", t.form}, {"tag", t.tag}};
    if (!t.upos.empty()) tok["upos"] = t.upos;
    if (t.degree_cmp) tok["degree_cmp"] = true;
    tokens.push_back(std::move(tok));
  }
  Json spans = Json::array();
  for (const auto& s : c.half_spans) spans.push_back(Json::array({s.begin, s.end}));
  return Json{{"source_id", c.sentence.source_id},
              {"text", c.sentence.text()},
              {"pattern_key", c.pattern_key},
              {"half_spans", std::move(spans)},
              {"features", to_json(c.features)},
              {"tokens", std::move(tokens)}};
}

corpus::Candidate candidate_from_json(const Json& j) {
  try {
    corpus::Candidate c;
    c.sentence.source_id = j.at("source_id").get<std::string>();
    for (const auto& tok : j.at("tokens")) {
      c.sentence.tokens.push_back(corpus::Token{tok.at("form").get<std::string>(), tok.at("tag").get<std::string>(),
                                                tok.value("upos", ""), tok.value("degree_cmp", false)});
    }
    const auto& spans = j.at("half_spans");
    if (spans.size() != 2) throw Error("invalid_record", "candidate needs exactly two half_spans");
    for (std::size_t k = 0; k < 2; ++k) c.half_spans[k] = {spans[k].at(0).get<int>(), spans[k].at(1).get<int>()};
    c.pattern_key = j.at("pattern_key").get<std::string>();
    c.features = feature_vector_from_json(j.at("features"));
    return c;
  } catch (const Json::exception& e) {
    throw Error("invalid_record", std::string("bad candidate record: ") + e.what());
  }
}

void write_jsonl(const std::filesystem::path& path, const Json& meta, const std::vector<Json>& records) {
  std::string out;
  if (!meta.is_null()) out += dump(Json{{"meta", meta}}) + "\n";
  for (const auto& r : records) out += dump(r) + "\n";
  write_file_atomic(path, out);
}

JsonlDocument read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_input", "cannot open " + path.string());
  JsonlDocument doc;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw Error("invalid_record", path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (line_no == 1 && j.is_object() && j.size() == 1 && j.contains("meta")) {
      doc.meta = std::move(j["meta"]);
      continue;
    }
    doc.records.push_back(std::move(j));
  }
  return doc;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io_error", "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("io_error", "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_input", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace ccprobe::io
