#include "ccprobe/provider.hpp"

#include <cmath>
#include <fstream>

#include "ccprobe/rng.hpp"
#include "ccprobe/types.hpp"

namespace ccprobe::provider {

TokenEmbeddings Provider::embed(const std::string& text) {
  if (split_tokens(text).empty()) throw ProviderError("invalid_request", "embed needs non-empty text", false, 400);
  return do_embed(text);
}

std::vector<TokenEmbeddings> Provider::embed_batch(const std::vector<std::string>& texts) {
  for (const auto& t : texts) {
    if (split_tokens(t).empty()) throw ProviderError("invalid_request", "embed needs non-empty text", false, 400);
  }
  return do_embed_batch(texts);
}

std::vector<TokenEmbeddings> Provider::do_embed_batch(const std::vector<std::string>& texts) {
  std::vector<TokenEmbeddings> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(do_embed(t));
  return out;
}

MaskScore Provider::mask_score(const std::string& text, const std::vector<std::string>& candidates) {
  const auto n = count_sentinels(text);
  if (n != 1) {
    throw ProviderError("invalid_request", "text must contain exactly one [MASK], found " + std::to_string(n), false,
                        400);
  }
  if (candidates.empty()) throw ProviderError("invalid_request", "no candidates given", false, 400);
  auto score = do_mask_score(text, candidates);
  for (const auto& c : candidates) {
    if (!score.probabilities.count(c) || !score.single_token.count(c)) {
      throw ProviderError("bad_response", "provider omitted candidate '" + c + "'", false);
    }
  }
  return score;
}

std::size_t count_sentinels(std::string_view text) {
  std::size_t n = 0;
  for (auto pos = text.find(kMaskSentinel); pos != std::string_view::npos;
       pos = text.find(kMaskSentinel, pos + kMaskSentinel.size())) {
    ++n;
  }
  return n;
}

std::vector<double> mean_pool(const TokenEmbeddings& e, int layer) {
  if (layer < 0 || layer >= static_cast<int>(e.layers.size())) {
    throw Error("invalid_layer", "layer " + std::to_string(layer) + " out of range");
  }
  const auto& vectors = e.layers[static_cast<std::size_t>(layer)];
  std::vector<double> sum;
  std::size_t count = 0;
  for (std::size_t t = 0; t < vectors.size(); ++t) {
    if (t < e.special.size() && e.special[t]) continue;
    if (sum.empty()) sum.assign(vectors[t].size(), 0.0);
    for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += vectors[t][d];
    ++count;
  }
  if (count == 0) throw Error("all_special", "no non-special tokens to pool");
  for (auto& v : sum) v /= static_cast<double>(count);
  return sum;
}

void require_single_tokens(const MaskScore& score) {
  std::string offenders;
  for (const auto& [c, single] : score.single_token) {
    if (!single) offenders += (offenders.empty() ? "" : ", ") + c;
  }
  if (!offenders.empty()) throw Error("multi_token_candidate", "not a single token: " + offenders);
}

double MaskTable::lookup(const std::string& text, const std::string& candidate) const {
  for (const auto& rule : rules) {
    if (text.find(rule.contains) == std::string::npos) continue;
    auto it = rule.probabilities.find(candidate);
    if (it != rule.probabilities.end()) return it->second;
  }
  auto it = probabilities.find(candidate);
  return it != probabilities.end() ? it->second : default_probability;
}

namespace {

std::map<std::string, double> probability_map(const Json& j) {
  std::map<std::string, double> out;
  for (const auto& [k, v] : j.items()) {
    double p = v.get<double>();
    if (!(p >= 0.0 && p <= 1.0)) throw Error("invalid_config", "probability for '" + k + "' outside [0, 1]");
    out[k] = p;
  }
  return out;
}

}  // namespace

MaskTable parse_mask_table(const Json& j) {
  try {
    MaskTable t;
    if (j.contains("probabilities")) t.probabilities = probability_map(j.at("probabilities"));
    if (j.contains("multi_token")) {
      for (const auto& w : j.at("multi_token")) t.multi_token.insert(w.get<std::string>());
    }
    t.default_probability = j.value("default_probability", 0.0);
    if (j.contains("rules")) {
      for (const auto& r : j.at("rules")) {
        t.rules.push_back({r.at("contains").get<std::string>(), probability_map(r.at("probabilities"))});
      }
    }
    return t;
  } catch (const Json::exception& e) {
    throw Error("invalid_config", std::string("bad mask table: ") + e.what());
  }
}

MaskTable load_mask_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_input", "cannot open mask table " + path.string());
  try {
    return parse_mask_table(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw Error("invalid_config", path.string() + ": " + e.what());
  }
}

std::string_view to_string(MockMode mode) { return mode == MockMode::bag ? "bag" : "positional"; }

MockMode parse_mock_mode(std::string_view text) {
  if (text == "bag") return MockMode::bag;
  if (text == "positional") return MockMode::positional;
  throw Error("invalid_config", "unknown mock mode '" + std::string(text) + "'");
}

MockProvider::MockProvider(MockConfig config) : config_(std::move(config)) {
  if (config_.hidden_size < 1 || config_.num_layers < 1) {
    throw Error("invalid_config", "mock needs hidden_size >= 1 and num_layers >= 1");
  }
}

ProviderInfo MockProvider::info() {
  return {"mock-" + std::string(to_string(config_.mode)), config_.num_layers, config_.hidden_size, "[MASK]"};
}

double MockProvider::coordinate(std::string_view token, int index, int layer, int dim) const {
  std::uint64_t h = fnv1a(token, mix64(config_.seed));
  h = mix64(h ^ (static_cast<std::uint64_t>(layer) * 0x9e3779b97f4a7c15ULL));
  h = mix64(h ^ (static_cast<std::uint64_t>(dim) * 0xc2b2ae3d27d4eb4fULL));
  if (config_.mode == MockMode::positional) h = mix64(h ^ (static_cast<std::uint64_t>(index + 1) * 0x165667b19e3779f9ULL));
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

TokenEmbeddings MockProvider::do_embed(const std::string& text) {
  TokenEmbeddings e;
  auto words = split_tokens(text);
  if (config_.add_special_tokens) e.tokens.push_back("[CLS]");
  for (auto& w : words) e.tokens.push_back(std::move(w));
  if (config_.add_special_tokens) e.tokens.push_back("[SEP]");
  if (static_cast<int>(e.tokens.size()) > config_.max_tokens) {
    throw ProviderError("token_limit",
                        std::to_string(e.tokens.size()) + " tokens exceed the limit of " +
                            std::to_string(config_.max_tokens),
                        false, 422);
  }
  e.special.resize(e.tokens.size(), false);
  if (config_.add_special_tokens) e.special.front() = e.special.back() = true;
  e.layers.resize(static_cast<std::size_t>(config_.num_layers) + 1);
  for (int l = 0; l <= config_.num_layers; ++l) {
    auto& layer = e.layers[static_cast<std::size_t>(l)];
    layer.resize(e.tokens.size());
    for (std::size_t t = 0; t < e.tokens.size(); ++t) {
      layer[t].resize(static_cast<std::size_t>(config_.hidden_size));
      for (int d = 0; d < config_.hidden_size; ++d) {
        layer[t][static_cast<std::size_t>(d)] = coordinate(e.tokens[t], static_cast<int>(t), l, d);
      }
    }
  }
  return e;
}

MaskScore MockProvider::do_mask_score(const std::string& text, const std::vector<std::string>& candidates) {
  MaskScore s;
  for (const auto& c : candidates) {
    if (config_.table.empty()) {
      const std::uint64_t h = fnv1a(c, fnv1a(text, mix64(config_.seed ^ 0x6d61736b)));
      s.probabilities[c] = 0.001 + 0.998 * std::ldexp(static_cast<double>(h >> 11), -53);
    } else {
      s.probabilities[c] = config_.table.lookup(text, c);
    }
    s.single_token[c] = !config_.table.multi_token.count(c) && split_tokens(c).size() == 1;
  }
  return s;
}

Json to_json(const ProviderInfo& info) {
  return Json{{"name", info.name},
              {"num_layers", info.num_layers},
              {"hidden_size", info.hidden_size},
              {"mask_token", info.mask_token}};
}

ProviderInfo info_from_json(const Json& j) {
  ProviderInfo info{j.at("name").get<std::string>(), j.at("num_layers").get<int>(), j.at("hidden_size").get<int>(),
                    j.at("mask_token").get<std::string>()};
  if (info.num_layers < 1 || info.hidden_size < 1) {
    throw ProviderError("bad_response", "provider info needs num_layers >= 1 and hidden_size >= 1", false);
  }
  return info;
}

Json to_json(const TokenEmbeddings& e) {
  Json special = Json::array();
  for (bool b : e.special) special.push_back(b);
  return Json{{"tokens", e.tokens}, {"special", std::move(special)}, {"layers", e.layers}};
}

TokenEmbeddings embeddings_from_json(const Json& j) {
  TokenEmbeddings e;
  try {
    e.tokens = j.at("tokens").get<std::vector<std::string>>();
    for (const auto& b : j.at("special")) e.special.push_back(b.get<bool>());
    e.layers = j.at("layers").get<std::vector<std::vector<std::vector<double>>>>();
  } catch (const Json::exception& ex) {
    throw ProviderError("bad_response", std::string("malformed embed response: ") + ex.what(), false);
  }
  if (e.special.size() != e.tokens.size() || e.layers.empty()) {
    throw ProviderError("bad_response", "embed response shape mismatch", false);
  }
  const std::size_t hidden = e.layers[0].empty() ? 0 : e.layers[0][0].size();
  for (const auto& layer : e.layers) {
    if (layer.size() != e.tokens.size()) throw ProviderError("bad_response", "layer token count mismatch", false);
    for (const auto& v : layer) {
      if (v.size() != hidden) throw ProviderError("bad_response", "ragged hidden size", false);
    }
  }
  return e;
}

Json to_json(const MaskScore& s) {
  Json probs = Json::object();
  for (const auto& [k, v] : s.probabilities) probs[k] = v;
  Json single = Json::object();
  for (const auto& [k, v] : s.single_token) single[k] = v;
  return Json{{"probabilities", std::move(probs)}, {"single_token", std::move(single)}};
}

MaskScore mask_score_from_json(const Json& j) {
  MaskScore s;
  try {
    for (const auto& [k, v] : j.at("probabilities").items()) s.probabilities[k] = v.get<double>();
    for (const auto& [k, v] : j.at("single_token").items()) s.single_token[k] = v.get<bool>();
  } catch (const Json::exception& ex) {
    throw ProviderError("bad_response", std::string("malformed mask_score response: ") + ex.what(), false);
  }
  return s;
}

Json error_json(std::string_view code, std::string_view message) {
  return Json{{"error", Json{{"code", code}, {"message", message}}}};
}

}  // namespace ccprobe::provider
