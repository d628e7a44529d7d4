#include "ccprobe/semantics.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <fstream>
#include <set>
#include <thread>

#include "ccprobe/bundled.hpp"
#include "ccprobe/error.hpp"
#include "ccprobe/rng.hpp"

namespace ccprobe::semantics {

using provider::Json;

Lexicon parse_lexicon(const Json& j) {
  Lexicon lex;
  try {
    for (const auto& p : j.at("adjective_pairs")) {
      if (p.size() != 2) throw Error("invalid_lexicon", "adjective pairs need exactly two forms");
      lex.adjective_pairs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
    }
    lex.names = j.at("names").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    throw Error("invalid_lexicon", std::string("bad lexicon: ") + e.what());
  }
  std::set<std::string> forms;
  for (const auto& [a, b] : lex.adjective_pairs) {
    for (const auto& w : {a, b}) {
      if (w.empty() || w.find(' ') != std::string::npos) {
        throw Error("invalid_lexicon", "adjective '" + w + "' must be one non-empty word");
      }
      if (!forms.insert(w).second) throw Error("invalid_lexicon", "adjective '" + w + "' appears more than once");
    }
  }
  std::set<std::string> names(lex.names.begin(), lex.names.end());
  if (names.size() != lex.names.size()) throw Error("invalid_lexicon", "names must be distinct");
  if (lex.adjective_pairs.size() < 2) throw Error("invalid_lexicon", "need at least two adjective pairs");
  if (lex.names.size() < 2) throw Error("invalid_lexicon", "need at least two names");
  return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_input", "cannot open lexicon " + path.string());
  try {
    return parse_lexicon(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw Error("invalid_lexicon", path.string() + ": " + e.what());
  }
}

Lexicon bundled_lexicon() { return parse_lexicon(Json::parse(bundled_text("lexicon.json"))); }

std::string_view to_string(Schema s) {
  static constexpr std::string_view names[] = {"S1", "S2", "S3", "S4", "S5", "S6", "S7"};
  return names[static_cast<int>(s)];
}

Schema parse_schema(std::string_view text) {
  for (Schema s : kAllSchemas) {
    if (to_string(s) == text) return s;
  }
  throw Error("invalid_schema", "unknown schema '" + std::string(text) + "'");
}

bool is_calibration(Schema s) { return s == Schema::S5 || s == Schema::S6 || s == Schema::S7; }

namespace {

std::string cc(const std::string& a, const std::string& b) {
  return "The " + a + " you are, the " + b + " you are.";
}

std::string premise(const std::string& n1, const std::string& adj, const std::string& n2) {
  return n1 + " is " + adj + " than " + n2 + ".";
}

std::string conclusion(const std::string& n1, const std::string& n2, const TemplateOptions& o) {
  return "Therefore, " + n1 + (o.will_be ? " will be " : " is ") + std::string(provider::kMaskSentinel) + " than " +
         n2 + ".";
}

const std::string& slot(const Slots& slots, const std::string& name, Schema schema) {
  auto it = slots.find(name);
  if (it == slots.end() || it->second.empty()) {
    throw Error("missing_slot", std::string(to_string(schema)) + " needs slot " + name);
  }
  return it->second;
}

}  // namespace

ScenarioInstance render_scenario(Schema schema, const Slots& slots, const TemplateOptions& options,
                                 std::string base_id, std::string id) {
  auto get = [&](const char* name) -> const std::string& { return slot(slots, name, schema); };
  const auto& adj1 = get("ADJ1");
  const auto& adj2 = get("ADJ2");
  const auto& ant2 = get("ANT2");
  const auto& n1 = get("NAME1");
  const auto& n2 = get("NAME2");
  if (n1 == n2) throw Error("duplicate_names", "NAME1 and NAME2 are both '" + n1 + "'");
  if (adj2 == ant2) throw Error("invalid_slots", "ADJ2 and ANT2 are both '" + adj2 + "'");

  ScenarioInstance inst;
  inst.schema = schema;
  inst.slots = slots;
  inst.base_id = std::move(base_id);
  inst.id = std::move(id);
  inst.correct = schema == Schema::S3 ? ant2 : adj2;
  inst.incorrect = schema == Schema::S3 ? adj2 : ant2;

  std::string ccs;
  if (schema != Schema::S5) {
    const auto& ant1 = get("ANT1");
    switch (schema) {
      case Schema::S2: ccs = cc(ant1, ant2) + " " + cc(adj1, adj2); break;
      case Schema::S3: ccs = cc(adj1, ant2) + " " + cc(ant1, adj2); break;
      default: ccs = cc(adj1, adj2) + " " + cc(ant1, ant2); break;
    }
    ccs += " ";
  }
  switch (schema) {
    case Schema::S4:
      inst.text = ccs + premise(n2, adj1, n1) + " " + conclusion(n2, n1, options);
      break;
    case Schema::S6: {
      const auto& n3 = get("NAME3");
      const auto& n4 = get("NAME4");
      if (n3 == n4) throw Error("duplicate_names", "NAME3 and NAME4 are both '" + n3 + "'");
      inst.text = ccs + premise(n1, adj1, n2) + " " + conclusion(n3, n4, options);
      break;
    }
    case Schema::S7:
      inst.text = ccs + premise(n1, get("ADJ3"), n2) + " " + conclusion(n1, n2, options);
      break;
    default:
      inst.text = ccs + premise(n1, adj1, n2) + " " + conclusion(n1, n2, options);
      break;
  }
  return inst;
}

GeneratedSet generate_all(const Lexicon& lexicon, const GenerateOptions& options) {
  const auto& pairs = lexicon.adjective_pairs;
  const auto& names = lexicon.names;
  const std::size_t n_pairs = pairs.size();
  const std::size_t n_names = names.size();
  if (options.calibration) {
    const std::size_t fresh_names = n_names - 2;
    if (fresh_names * (fresh_names - 1) < kCalibrationContexts || fresh_names < 2) {
      throw Error("lexicon_too_small", "five calibration contexts need at least 5 names");
    }
    if (2 * n_pairs - 4 < kCalibrationContexts) {
      throw Error("lexicon_too_small", "five calibration adjectives need at least 5 adjective pairs");
    }
  }

  const std::size_t name_pairs = n_names * (n_names - 1) / 2;
  const std::size_t total = n_pairs * (n_pairs - 1) * name_pairs;
  std::vector<std::size_t> chosen;
  if (options.max_bases == 0 || options.max_bases >= total) {
    chosen.resize(total);
    for (std::size_t i = 0; i < total; ++i) chosen[i] = i;
  } else {
    std::vector<std::size_t> all(total);
    for (std::size_t i = 0; i < total; ++i) all[i] = i;
    Rng rng(derive_seed(options.seed, "bases"));
    for (std::size_t i = 0; i < options.max_bases; ++i) std::swap(all[i], all[i + rng.index(total - i)]);
    chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(options.max_bases));
    std::sort(chosen.begin(), chosen.end());
  }

  // Name-pair index -> (a, b) with a < b in lexicon order.
  std::vector<std::pair<std::size_t, std::size_t>> name_index;
  for (std::size_t a = 0; a < n_names; ++a) {
    for (std::size_t b = a + 1; b < n_names; ++b) name_index.emplace_back(a, b);
  }

  GeneratedSet out;
  out.total_bases = total;
  out.base_count = chosen.size();
  for (std::size_t idx : chosen) {
    const std::size_t np = idx % name_pairs;
    const std::size_t ordered = idx / name_pairs;
    const std::size_t i = ordered / (n_pairs - 1);
    std::size_t j = ordered % (n_pairs - 1);
    if (j >= i) ++j;
    const auto [na, nb] = name_index[np];
    Slots base{{"ADJ1", pairs[i].first},
               {"ANT1", pairs[i].second},
               {"ADJ2", pairs[j].first},
               {"ANT2", pairs[j].second},
               {"NAME1", names[na]},
               {"NAME2", names[nb]}};
    const std::string base_id = "b" + std::to_string(idx);
    for (Schema s : {Schema::S1, Schema::S2, Schema::S3, Schema::S4}) {
      out.instances.push_back(
          render_scenario(s, base, options.templates, base_id, base_id + "/" + std::string(to_string(s))));
    }
    if (!options.calibration) continue;

    Rng rng(derive_seed(options.seed, base_id));
    std::vector<std::string> fresh_names;
    for (std::size_t k = 0; k < n_names; ++k) {
      if (k != na && k != nb) fresh_names.push_back(names[k]);
    }
    auto draw_name_pairs = [&] {
      std::set<std::pair<std::size_t, std::size_t>> seen;
      std::vector<std::pair<std::string, std::string>> picked;
      while (picked.size() < static_cast<std::size_t>(kCalibrationContexts)) {
        std::size_t a = rng.index(fresh_names.size());
        std::size_t b = rng.index(fresh_names.size());
        if (a == b || !seen.insert({a, b}).second) continue;
        picked.emplace_back(fresh_names[a], fresh_names[b]);
      }
      return picked;
    };
    auto emit = [&](Schema s, int k, Slots slots) {
      out.instances.push_back(render_scenario(s, slots, options.templates, base_id,
                                              base_id + "/" + std::string(to_string(s)) + "." + std::to_string(k)));
    };
    int k = 0;
    for (const auto& [a, b] : draw_name_pairs()) {
      Slots s = base;
      s["NAME1"] = a;
      s["NAME2"] = b;
      emit(Schema::S5, k++, s);
    }
    k = 0;
    for (const auto& [a, b] : draw_name_pairs()) {
      Slots s = base;
      s["NAME3"] = a;
      s["NAME4"] = b;
      emit(Schema::S6, k++, s);
    }
    std::vector<std::string> fresh_adjectives;
    for (std::size_t p = 0; p < n_pairs; ++p) {
      if (p == i || p == j) continue;
      fresh_adjectives.push_back(pairs[p].first);
      fresh_adjectives.push_back(pairs[p].second);
    }
    for (k = 0; k < kCalibrationContexts; ++k) {
      std::swap(fresh_adjectives[static_cast<std::size_t>(k)],
                fresh_adjectives[static_cast<std::size_t>(k) + rng.index(fresh_adjectives.size() - static_cast<std::size_t>(k))]);
      Slots s = base;
      s["ADJ3"] = fresh_adjectives[static_cast<std::size_t>(k)];
      emit(Schema::S7, k, s);
    }
  }
  return out;
}

Decision decide(double correct, double incorrect) {
  if (correct == incorrect) return {false, true};
  return {correct > incorrect, false};
}

ScoreRecord score_instance(provider::Provider& p, const ScenarioInstance& inst) {
  ScoreRecord r;
  r.instance_id = inst.id;
  r.base_id = inst.base_id;
  r.schema = inst.schema;
  r.correct = inst.correct;
  r.incorrect = inst.incorrect;
  auto score = p.mask_score(inst.text, {inst.correct, inst.incorrect});
  try {
    provider::require_single_tokens(score);
  } catch (const Error& e) {
    r.skipped = true;
    r.skip_reason = e.what();
    return r;
  }
  r.probabilities = score.probabilities;
  r.p_correct = score.probabilities.at(inst.correct);
  r.p_incorrect = score.probabilities.at(inst.incorrect);
  auto d = decide(r.p_correct, r.p_incorrect);
  r.decision = d.decision;
  r.tied = d.tied;
  return r;
}

std::vector<ScoreRecord> score_all(provider::Provider& p, const std::vector<ScenarioInstance>& instances,
                                   int threads) {
  std::vector<ScoreRecord> out(instances.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < instances.size(); i = next++) {
      try {
        out[i] = score_instance(p, instances[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = instances.size();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

double accuracy(const std::vector<ScoreRecord>& records) {
  std::size_t n = 0, correct = 0;
  for (const auto& r : records) {
    if (r.skipped) continue;
    ++n;
    correct += r.decision;
  }
  if (n == 0) throw Error("all_skipped", "no scored records to compute accuracy over");
  return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

std::size_t tie_count(const std::vector<ScoreRecord>& records) {
  std::size_t n = 0;
  for (const auto& r : records) n += !r.skipped && r.tied;
  return n;
}

double decision_flip(const std::vector<ScoreRecord>& base, const std::vector<ScoreRecord>& variant) {
  if (base.size() != variant.size()) throw Error("misaligned", "base and variant differ in length");
  if (base.empty()) throw Error("misaligned", "no records to compare");
  std::map<std::string, bool> by_base;
  for (const auto& r : base) {
    if (!by_base.emplace(r.base_id, r.decision).second) throw Error("misaligned", "duplicate base id " + r.base_id);
  }
  std::size_t flips = 0;
  std::set<std::string> seen;
  for (const auto& r : variant) {
    auto it = by_base.find(r.base_id);
    if (it == by_base.end() || !seen.insert(r.base_id).second) {
      throw Error("misaligned", "variant record " + r.instance_id + " has no unique base partner");
    }
    flips += it->second != r.decision;
  }
  return 100.0 * static_cast<double>(flips) / static_cast<double>(base.size());
}

std::map<std::string, double> calibrate(const std::map<std::string, double>& base_scores,
                                        const std::vector<std::map<std::string, double>>& contexts) {
  if (contexts.size() != static_cast<std::size_t>(kCalibrationContexts)) {
    throw Error("invalid_calibration", "calibration needs exactly " + std::to_string(kCalibrationContexts) +
                                           " contexts, got " + std::to_string(contexts.size()));
  }
  std::map<std::string, double> out;
  for (const auto& [candidate, p] : base_scores) {
    double sum = 0.0;
    for (const auto& c : contexts) {
      auto it = c.find(candidate);
      if (it == c.end()) throw Error("invalid_calibration", "context lacks candidate '" + candidate + "'");
      sum += it->second / static_cast<double>(kCalibrationContexts);
    }
    if (sum < 1e-12) {
      throw Error("calibration_underflow", "mean context probability of '" + candidate + "' is below 1e-12");
    }
    out[candidate] = p / sum;
  }
  return out;
}

SemanticsTables aggregate(const std::vector<ScoreRecord>& records) {
  const double nan = std::nan("");
  SemanticsTables t;
  for (auto& row : t.calibrated_accuracy) std::fill(std::begin(row), std::end(row), nan);
  for (auto& row : t.calibrated_flip) std::fill(std::begin(row), std::end(row), nan);

  struct Group {
    std::map<Schema, const ScoreRecord*> tests;
    std::map<Schema, std::vector<const ScoreRecord*>> contexts;
    bool any_skipped = false;
  };
  std::map<std::string, Group> groups;
  std::map<Schema, std::vector<ScoreRecord>> by_schema;
  for (const auto& r : records) {
    auto& g = groups[r.base_id];
    if (is_calibration(r.schema)) {
      g.contexts[r.schema].push_back(&r);
    } else {
      g.tests[r.schema] = &r;
      by_schema[r.schema].push_back(r);
    }
    g.any_skipped |= r.skipped;
    t.skipped += r.skipped;
    t.ties += !r.skipped && r.tied;
  }
  t.records = records.size();
  t.bases = groups.size();

  auto safe_accuracy = [&](Schema s) {
    auto it = by_schema.find(s);
    if (it == by_schema.end()) return nan;
    for (const auto& r : it->second) {
      if (!r.skipped) return accuracy(it->second);
    }
    return nan;
  };
  t.accuracy_s1 = safe_accuracy(Schema::S1);
  t.accuracy_s2 = safe_accuracy(Schema::S2);
  t.calibrated_accuracy[0][0] = t.accuracy_s1;
  t.calibrated_accuracy[1][0] = t.accuracy_s2;
  t.calibrated_accuracy[2][0] = safe_accuracy(Schema::S3);

  // Flip metrics and calibration use complete, unskipped groups only.
  std::vector<const Group*> complete;
  for (const auto& [id, g] : groups) {
    if (g.any_skipped) {
      ++t.bases_excluded;
      continue;
    }
    if (g.tests.size() == 4) complete.push_back(&g);
  }
  const Schema tests[] = {Schema::S1, Schema::S2, Schema::S3};
  const Schema variants[] = {Schema::S2, Schema::S3, Schema::S4};
  const Schema methods[] = {Schema::S5, Schema::S6, Schema::S7};
  if (!complete.empty()) {
    const double n = static_cast<double>(complete.size());
    for (int v = 0; v < 3; ++v) {
      std::size_t flips = 0;
      for (const auto* g : complete) flips += g->tests.at(Schema::S1)->decision != g->tests.at(variants[v])->decision;
      t.calibrated_flip[v][0] = 100.0 * static_cast<double>(flips) / n;
    }
    for (int m = 0; m < 3; ++m) {
      std::array<std::size_t, 3> correct{};
      std::array<std::size_t, 3> flips{};
      std::size_t n_groups = 0;
      for (const auto* g : complete) {
        auto it = g->contexts.find(methods[m]);
        if (it == g->contexts.end()) continue;
        std::vector<std::map<std::string, double>> ctx;
        for (const auto* r : it->second) ctx.push_back(r->probabilities);
        std::array<bool, 3> d{};
        for (std::size_t k = 0; k < 3; ++k) {
          const auto* r = g->tests.at(tests[k]);
          auto cal = calibrate(r->probabilities, ctx);
          d[k] = decide(cal.at(r->correct), cal.at(r->incorrect)).decision;
          correct[k] += d[k];
        }
        flips[0] += d[0] != d[1];
        flips[1] += d[0] != d[2];
        ++n_groups;
      }
      if (n_groups == 0) continue;
      const double ng = static_cast<double>(n_groups);
      for (int k = 0; k < 3; ++k) t.calibrated_accuracy[k][m + 1] = 100.0 * static_cast<double>(correct[static_cast<std::size_t>(k)]) / ng;
      t.calibrated_flip[0][m + 1] = 100.0 * static_cast<double>(flips[0]) / ng;
      t.calibrated_flip[1][m + 1] = 100.0 * static_cast<double>(flips[1]) / ng;
    }
  }
  t.flip_s2 = t.calibrated_flip[0][0];
  t.flip_s3 = t.calibrated_flip[1][0];
  t.flip_s4 = t.calibrated_flip[2][0];
  return t;
}

namespace {

std::string cell(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string comment(const std::string& header) { return header.empty() ? "" : "# " + header + "\n"; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string table2_csv(const SemanticsTables& t, const std::string& model, const std::string& header) {
  return comment(header) + "model,acc_S1,acc_S2,flip_S2,flip_S3,flip_S4\n" + csv_field(model) + "," +
         cell(t.accuracy_s1) + "," + cell(t.accuracy_s2) + "," + cell(t.flip_s2) + "," + cell(t.flip_s3) + "," +
         cell(t.flip_s4) + "\n";
}

std::string calibration_csv(const SemanticsTables& t, const std::string& model, const std::string& header) {
  std::string out = comment(header) + "model,test,none,S5,S6,S7\n";
  const char* rows[] = {"S1", "S2", "S3"};
  for (int r = 0; r < 3; ++r) {
    out += csv_field(model) + "," + rows[r];
    for (int c = 0; c < 4; ++c) out += "," + cell(t.calibrated_accuracy[r][c]);
    out += "\n";
  }
  return out;
}

std::string flips_calibration_csv(const SemanticsTables& t, const std::string& model, const std::string& header) {
  std::string out = comment(header) + "model,variant,none,S5,S6,S7\n";
  const char* rows[] = {"S2", "S3", "S4"};
  for (int r = 0; r < 3; ++r) {
    out += csv_field(model) + "," + rows[r];
    for (int c = 0; c < 4; ++c) out += "," + cell(t.calibrated_flip[r][c]);
    out += "\n";
  }
  return out;
}

Json to_json(const ScenarioInstance& inst) {
  Json slots = Json::object();
  for (const auto& [k, v] : inst.slots) slots[k] = v;
  return Json{{"id", inst.id},           {"base_id", inst.base_id},     {"schema", to_string(inst.schema)},
              {"text", inst.text},       {"correct", inst.correct},     {"incorrect", inst.incorrect},
              {"slots", std::move(slots)}};
}

Json to_json(const ScoreRecord& r) {
  Json j{{"id", r.instance_id}, {"base_id", r.base_id}, {"schema", to_string(r.schema)},
         {"correct", r.correct}, {"incorrect", r.incorrect}};
  if (r.skipped) {
    j["skipped"] = true;
    j["skip_reason"] = r.skip_reason;
    return j;
  }
  Json probs = Json::object();
  for (const auto& [k, v] : r.probabilities) probs[k] = v;
  j["probabilities"] = std::move(probs);
  j["p_correct"] = r.p_correct;
  j["p_incorrect"] = r.p_incorrect;
  j["decision"] = r.decision;
  j["tied"] = r.tied;
  return j;
}

}  // namespace ccprobe::semantics
