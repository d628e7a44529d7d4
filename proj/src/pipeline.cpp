#include "ccprobe/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "ccprobe/annotation.hpp"
#include "ccprobe/annotation_server.hpp"
#include "ccprobe/dataset.hpp"
#include "ccprobe/error.hpp"
#include "ccprobe/grammar.hpp"
#include "ccprobe/probe.hpp"
#include "ccprobe/provider.hpp"
#include "ccprobe/rng.hpp"
#include "ccprobe/semantics.hpp"

namespace ccprobe::pipeline {

namespace fs = std::filesystem;

Json default_config() {
  return Json::parse(R"({
  "seed": 0,
  "output_dir": "ccprobe-out",
  "provider": {
    "url": "",
    "mock": "positional",
    "mock_seed": 0,
    "mock_table": "",
    "hidden_size": 32,
    "num_layers": 4,
    "max_retries": 3,
    "timeout_s": 60
  },
  "generate": {"grammars": ["train", "test"], "pairs": 2000},
  "corpus": {"inputs": [], "exclusions": "", "max_tokens": 128, "labels": "", "test_fraction": 0.3},
  "datasets": {
    "sources": ["artificial"],
    "features": ["length", "cc_start", "second_start", "distance"],
    "n_star": 10,
    "n_star_overrides": {},
    "observed_range": {}
  },
  "probe": {"l2": 1.0, "tolerance": 1e-6, "max_iterations": 1000, "batch_size": 64, "cache_dir": ""},
  "semantics": {"lexicon": "", "max_bases": 500, "will_be": false, "calibration": true, "threads": 4},
  "annotate": {"host": "127.0.0.1", "port": 8080, "static_dir": ""}
})");
}

namespace {

// Keys holding file system paths, and whether the path must already exist.
const std::pair<const char*, bool> kPathKeys[] = {
    {"/corpus/exclusions", true}, {"/corpus/labels", true},   {"/provider/mock_table", true},
    {"/semantics/lexicon", true}, {"/annotate/static_dir", true}, {"/probe/cache_dir", false},
    {"/output_dir", false}};

bool same_kind(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) return !(a.is_number_integer() && b.is_number_float());
  return a.type() == b.type();
}

void merge_into(Json& target, const Json& source, const std::string& where) {
  if (!source.is_object()) throw Error("invalid_config", (where.empty() ? "config" : where) + " must be an object");
  for (const auto& [key, value] : source.items()) {
    const std::string path = where + "/" + key;
    if (!target.contains(key)) throw Error("invalid_config", "unknown config key " + path);
    Json& slot = target[key];
    if (slot.is_object() && slot.empty()) {  // free-form maps
      if (!value.is_object()) throw Error("invalid_config", path + " must be an object");
      slot = value;
    } else if (slot.is_object()) {
      merge_into(slot, value, path);
    } else {
      if (!same_kind(slot, value)) {
        throw Error("invalid_config", path + " should be " + std::string(slot.type_name()) + ", got " +
                                          std::string(value.type_name()));
      }
      slot = value;
    }
  }
}

std::string resolve(const std::string& p, const fs::path& base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

void check_paths(const Json& config) {
  for (const auto& [key, must_exist] : kPathKeys) {
    const auto& value = config.at(Json::json_pointer(key)).get_ref<const std::string&>();
    if (must_exist && !value.empty() && !fs::exists(value)) {
      throw Error("missing_input", std::string(key + 1) + ": " + value + " does not exist");
    }
  }
  for (const auto& input : config.at("corpus").at("inputs")) {
    if (!fs::exists(input.get<std::string>())) {
      throw Error("missing_input", "corpus/inputs: " + input.get<std::string>() + " does not exist");
    }
  }
}

}  // namespace

Json merge_config(const Json& overrides, const fs::path& base_dir) {
  Json config = default_config();
  if (!overrides.is_null()) merge_into(config, overrides, "");
  for (const auto& [key, must_exist] : kPathKeys) {
    (void)must_exist;
    auto& value = config[Json::json_pointer(key)];
    value = resolve(value.get<std::string>(), base_dir);
  }
  for (auto& input : config["corpus"]["inputs"]) {
    if (!input.is_string()) throw Error("invalid_config", "corpus/inputs must hold strings");
    input = resolve(input.get<std::string>(), base_dir);
  }
  if (config.at("seed").get<std::int64_t>() < 0) throw Error("invalid_config", "seed must be non-negative");
  return config;
}

Json load_config(const fs::path& path) {
  if (!fs::exists(path)) throw Error("missing_input", "config " + path.string() + " does not exist");
  Json doc;
  try {
    doc = Json::parse(io::read_file(path));
  } catch (const Json::parse_error& e) {
    throw Error("invalid_config", path.string() + ": " + e.what());
  }
  return merge_config(doc, path.parent_path());
}

std::string config_hash(const Json& config) {
  nlohmann::json canonical = nlohmann::json::parse(config.dump());
  canonical.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical.dump())));
  return buf;
}

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

void wait_for_signal() {
  g_stop = false;
  auto previous_int = std::signal(SIGINT, on_signal);
  auto previous_term = std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  std::signal(SIGINT, previous_int);
  std::signal(SIGTERM, previous_term);
}

struct Context {
  Json config;
  fs::path out_dir;
  std::uint64_t seed = 0;
  std::string hash;
  std::string command;
  std::ostream& out;
  std::ostream& err;
  std::vector<fs::path> artifacts;

  Json meta(Json extra = Json::object()) const {
    Json m{{"config_hash", hash}, {"seed", seed}, {"command", command}};
    for (auto& [k, v] : extra.items()) m[k] = v;
    return m;
  }

  std::string header(const std::string& extra = "") const {
    return "config_hash=" + hash + " seed=" + std::to_string(seed) + (extra.empty() ? "" : " " + extra);
  }

  fs::path path(const std::string& relative) const { return out_dir / relative; }

  void write_text(const std::string& relative, const std::string& content) {
    auto p = path(relative);
    fs::create_directories(p.parent_path());
    io::write_file_atomic(p, content);
    artifacts.push_back(relative);
  }

  void write_jsonl(const std::string& relative, const Json& meta_line, const std::vector<Json>& records) {
    auto p = path(relative);
    fs::create_directories(p.parent_path());
    io::write_jsonl(p, meta_line, records);
    artifacts.push_back(relative);
  }

  io::JsonlDocument read_jsonl(const std::string& relative, const std::string& producer) const {
    auto p = path(relative);
    if (!fs::exists(p)) {
      throw Error("missing_input", p.string() + " not found; run `ccprobe " + producer + "` first");
    }
    return io::read_jsonl(p);
  }

  // Timestamps live only here so that the artifacts themselves are reproducible.
  void write_manifest() {
    if (artifacts.empty()) return;
    auto p = out_dir / "manifest.json";
    Json manifest{{"artifacts", Json::object()}, {"configs", Json::object()}};
    if (fs::exists(p)) {
      try {
        manifest = Json::parse(io::read_file(p));
      } catch (const Json::parse_error&) {
        err << "warning: replacing unreadable " << p.string() << "\n";
      }
    }
    const auto now = annotation::utc_timestamp();
    for (const auto& a : artifacts) {
      manifest["artifacts"][a.generic_string()] =
          Json{{"command", command}, {"config_hash", hash}, {"seed", seed}, {"written_at", now}};
    }
    manifest["configs"][hash] = config;
    io::write_file_atomic(p, manifest.dump(2) + "\n");
  }
};

std::unique_ptr<provider::Provider> make_provider(const Json& pc) {
  const auto url = pc.at("url").get<std::string>();
  if (!url.empty()) {
    provider::HttpOptions o;
    o.max_retries = pc.at("max_retries").get<int>();
    o.timeout_s = pc.at("timeout_s").get<int>();
    return provider::make_http_provider(url, o);
  }
  provider::MockConfig m;
  m.mode = provider::parse_mock_mode(pc.at("mock").get<std::string>());
  m.seed = pc.at("mock_seed").get<std::uint64_t>();
  m.hidden_size = pc.at("hidden_size").get<int>();
  m.num_layers = pc.at("num_layers").get<int>();
  const auto table = pc.at("mock_table").get<std::string>();
  if (!table.empty()) m.table = provider::load_mask_table(table);
  return std::make_unique<provider::MockProvider>(m);
}

// ---- generate ------------------------------------------------------------

void cmd_generate(Context& ctx, const std::vector<std::string>& grammars, std::size_t pairs) {
  for (const auto& name : grammars) {
    auto g = grammar::resolve_grammar(name);
    auto pool = dataset::artificial_pool(g, pairs, ctx.seed);
    std::vector<Json> records;
    records.reserve(pool.size());
    for (const auto& s : pool) records.push_back(io::to_json(s));
    const std::string file = "artificial/" + g.name + ".jsonl";
    ctx.write_jsonl(file, ctx.meta({{"grammar", g.name}, {"pairs_requested", pairs}, {"pairs", pool.size() / 2}}),
                    records);
    ctx.out << file << ": " << pool.size() << " sentences\n";
  }
}

// ---- mine ----------------------------------------------------------------

void cmd_mine(Context& ctx) {
  const auto& cc = ctx.config.at("corpus");
  if (cc.at("inputs").empty()) throw Error("missing_input", "no corpus inputs given (corpus/inputs or --input)");
  std::vector<corpus::TaggedSentence> sentences;
  Json read_errors = Json::array();
  Json inputs = Json::array();
  for (const auto& input : cc.at("inputs")) {
    const fs::path p = input.get<std::string>();
    auto r = corpus::read_corpus_file(p);
    for (const auto& e : r.errors) read_errors.push_back(Json{{"source_id", e.source_id}, {"message", e.message}});
    for (auto& s : r.sentences) sentences.push_back(std::move(s));
    inputs.push_back(p.filename().string());
  }
  corpus::ScanOptions options;
  const auto excl = cc.at("exclusions").get<std::string>();
  if (!excl.empty()) options.exclusions = corpus::load_exclusions(excl);
  options.max_tokens = cc.at("max_tokens").get<int>();
  corpus::ScanLog log;
  auto candidates = corpus::scan_candidates(sentences, options, &log);
  auto groups = corpus::group_patterns(candidates, ctx.seed);

  std::vector<Json> records;
  for (const auto& c : candidates) records.push_back(io::to_json(c));
  Json meta = ctx.meta({{"inputs", inputs},
                        {"sentences", sentences.size()},
                        {"candidates", candidates.size()},
                        {"patterns", groups.size()},
                        {"too_long", log.too_long.size()},
                        {"duplicates", log.duplicates.size()},
                        {"excluded", log.excluded.size()},
                        {"extra_matches", log.extra_matches.size()},
                        {"read_errors", read_errors}});
  ctx.write_jsonl("corpus/candidates.jsonl", meta, records);
  ctx.out << "corpus/candidates.jsonl: " << candidates.size() << " candidates in " << groups.size()
          << " patterns from " << sentences.size() << " sentences";
  if (!read_errors.empty()) ctx.out << " (" << read_errors.size() << " malformed records skipped)";
  ctx.out << "\n";
}

std::vector<corpus::Candidate> load_candidates(const Context& ctx) {
  auto doc = ctx.read_jsonl("corpus/candidates.jsonl", "mine");
  std::vector<corpus::Candidate> out;
  out.reserve(doc.records.size());
  for (const auto& r : doc.records) out.push_back(io::candidate_from_json(r));
  return out;
}

fs::path label_log_path(const Context& ctx) { return ctx.path("corpus/labels.log.jsonl"); }

// ---- annotate ------------------------------------------------------------

void cmd_annotate(Context& ctx) {
  const auto& ac = ctx.config.at("annotate");
  annotation::Store store(load_candidates(ctx), ctx.seed, label_log_path(ctx));
  std::optional<fs::path> static_dir;
  if (!ac.at("static_dir").get<std::string>().empty()) static_dir = ac.at("static_dir").get<std::string>();
  annotation::Server server(store, static_dir);
  const auto host = ac.at("host").get<std::string>();
  const int port = server.start(host, ac.at("port").get<int>());
  ctx.out << "annotation service on http://" << host << ":" << port << "\n" << std::flush;
  wait_for_signal();
  server.stop();
}

// ---- datasets ------------------------------------------------------------

struct Pools {
  std::vector<LabeledSentence> train;
  std::vector<LabeledSentence> test;
};

std::vector<LabeledSentence> read_pool(const Context& ctx, const std::string& relative) {
  auto doc = ctx.read_jsonl(relative, "generate");
  std::vector<LabeledSentence> out;
  out.reserve(doc.records.size());
  for (const auto& r : doc.records) out.push_back(io::labeled_sentence_from_json(r));
  return out;
}

Pools corpus_pools(Context& ctx) {
  const auto& cc = ctx.config.at("corpus");
  auto candidates = load_candidates(ctx);
  std::vector<corpus::PatternGroup> groups;
  const auto labels = cc.at("labels").get<std::string>();
  if (!labels.empty()) {
    groups = corpus::group_patterns(candidates, ctx.seed);
    annotation::apply_label_file(labels, groups, candidates);
  } else if (fs::exists(label_log_path(ctx))) {
    annotation::Store store(candidates, ctx.seed, label_log_path(ctx));
    groups = store.groups();
  } else {
    throw Error("missing_input", "no pattern labels: set corpus/labels or label patterns with `ccprobe annotate`");
  }
  auto split = corpus::split_by_pattern(groups, candidates, cc.at("test_fraction").get<double>(), ctx.seed);
  for (const auto& w : split.warnings) ctx.err << "warning: " << w << "\n";
  return {std::move(split.train), std::move(split.test)};
}

// Most specific key wins: "source/split/feature", "source/feature", "feature".
const Json* lookup_override(const Json& table, const std::string& source, dataset::Split split,
                            const std::string& feature) {
  for (const auto& key : {source + "/" + std::string(dataset::to_string(split)) + "/" + feature,
                          source + "/" + feature, feature}) {
    if (table.contains(key)) return &table.at(key);
  }
  return nullptr;
}

std::string dataset_file(const std::string& source, const std::string& feature, dataset::Split split) {
  return "datasets/" + source + "_" + feature + "_" + std::string(dataset::to_string(split)) + ".jsonl";
}

void cmd_datasets(Context& ctx) {
  const auto& dc = ctx.config.at("datasets");
  Json balance = Json::array();
  std::vector<std::string> failures;
  for (const auto& source_json : dc.at("sources")) {
    const auto source = source_json.get<std::string>();
    Pools pools;
    if (source == "artificial") {
      pools.train = read_pool(ctx, "artificial/train.jsonl");
      pools.test = read_pool(ctx, "artificial/test.jsonl");
    } else if (source == "corpus") {
      pools = corpus_pools(ctx);
    } else {
      throw Error("invalid_config", "unknown dataset source '" + source + "'");
    }
    for (const auto& feature_json : dc.at("features")) {
      const auto feature_name = feature_json.get<std::string>();
      const Feature feature = parse_feature(feature_name);
      for (auto split : {dataset::Split::train, dataset::Split::test}) {
        dataset::BuildOptions o;
        o.feature = feature;
        o.split = split;
        o.seed = derive_seed(ctx.seed, "datasets/" + source + "/" + feature_name);
        o.n_star = dc.at("n_star").get<int>();
        if (auto* n = lookup_override(dc.at("n_star_overrides"), source, split, feature_name)) o.n_star = n->get<int>();
        if (auto* r = lookup_override(dc.at("observed_range"), source, split, feature_name)) {
          if (!r->is_array() || r->size() != 2) throw Error("invalid_config", "observed_range entries are [min, max]");
          o.observed_range = std::make_pair(r->at(0).get<int>(), r->at(1).get<int>());
        }
        const auto& pool = split == dataset::Split::train ? pools.train : pools.test;
        const std::string tag = source + "/" + std::string(dataset::to_string(split)) + "/" + feature_name;
        Json entry{{"source", source}, {"feature", feature_name}, {"split", dataset::to_string(split)},
                   {"n_star", o.n_star}};
        try {
          auto built = dataset::build_feature_subset(pool, o);
          auto& d = built.dataset;
          auto report = dataset::verify_balance(d);
          Json dropped = Json::array();
          for (const auto& e : built.dropped) {
            dropped.push_back(Json{{"value", e.value}, {"positives", e.positives}, {"negatives", e.negatives}});
          }
          std::vector<Json> records;
          for (const auto& item : d.items) records.push_back(io::to_json(item));
          ctx.write_jsonl(dataset_file(source, feature_name, split),
                          ctx.meta({{"source", source},
                                    {"feature", feature_name},
                                    {"split", dataset::to_string(split)},
                                    {"provenance", d.provenance},
                                    {"n_star", d.spec.per_value_count},
                                    {"v_min", d.spec.v_min},
                                    {"v_max", d.spec.v_max},
                                    {"paired", built.paired},
                                    {"dropped", dropped}}),
                          records);
          Json counts = Json::object();
          for (const auto& [v, c] : report.counts) counts[std::to_string(v)] = Json::array({c.first, c.second});
          entry["pass"] = report.pass;
          entry["items"] = d.items.size();
          entry["v_min"] = d.spec.v_min;
          entry["v_max"] = d.spec.v_max;
          entry["counts"] = counts;
          entry["reasons"] = report.reasons;
          if (!report.pass) failures.push_back(tag);
          ctx.out << dataset_file(source, feature_name, split) << ": " << d.items.size() << " items, "
                  << report.counts.size() << " values, balance " << (report.pass ? "ok" : "FAILED") << "\n";
        } catch (const Error& e) {
          if (e.code() != "all_values_dropped" && e.code() != "empty_pool") throw;
          entry["pass"] = false;
          entry["reasons"] = Json::array({std::string(e.code()) + ": " + e.what()});
          failures.push_back(tag);
          ctx.err << "warning: " << tag << ": " << e.what() << "\n";
        }
        balance.push_back(entry);
      }
    }
  }
  ctx.write_text("datasets/balance.json", io::dump(Json{{"meta", ctx.meta()}, {"datasets", balance}}) + "\n");
  if (!failures.empty()) {
    std::string list;
    for (const auto& f : failures) list += (list.empty() ? "" : ", ") + f;
    throw Error("balance_failed", "datasets failing balance: " + list);
  }
}

dataset::ProbeDataset read_dataset(const Context& ctx, const std::string& relative) {
  auto doc = ctx.read_jsonl(relative, "datasets");
  dataset::ProbeDataset d;
  try {
    d.spec.feature = parse_feature(doc.meta.at("feature").get<std::string>());
    d.spec.per_value_count = doc.meta.at("n_star").get<int>();
    d.spec.v_min = doc.meta.at("v_min").get<int>();
    d.spec.v_max = doc.meta.at("v_max").get<int>();
    d.split = dataset::parse_split(doc.meta.at("split").get<std::string>());
    d.provenance = doc.meta.at("provenance").get<std::string>();
  } catch (const Json::exception& e) {
    throw Error("invalid_record", relative + ": bad meta line: " + e.what());
  }
  for (const auto& r : doc.records) d.items.push_back(io::item_from_json(r));
  return d;
}

// ---- probe ---------------------------------------------------------------

void cmd_probe(Context& ctx) {
  const auto& dc = ctx.config.at("datasets");
  const auto& pc = ctx.config.at("probe");
  // Check every input before contacting the provider.
  std::vector<std::pair<std::string, std::string>> jobs;
  for (const auto& s : dc.at("sources")) {
    for (const auto& f : dc.at("features")) {
      jobs.emplace_back(s.get<std::string>(), f.get<std::string>());
      for (auto split : {dataset::Split::train, dataset::Split::test}) {
        auto p = ctx.path(dataset_file(jobs.back().first, jobs.back().second, split));
        if (!fs::exists(p)) throw Error("missing_input", p.string() + " not found; run `ccprobe datasets` first");
      }
    }
  }
  auto provider = make_provider(ctx.config.at("provider"));
  const auto model = provider->info().name;
  std::optional<probe::EmbeddingCache> cache;
  if (!pc.at("cache_dir").get<std::string>().empty()) cache.emplace(pc.at("cache_dir").get<std::string>(), model);

  probe::SweepOptions o;
  o.train.l2 = pc.at("l2").get<double>();
  o.train.tolerance = pc.at("tolerance").get<double>();
  o.train.max_iterations = pc.at("max_iterations").get<int>();
  o.batch_size = pc.at("batch_size").get<std::size_t>();
  o.seed = ctx.seed;
  o.cache = cache ? &*cache : nullptr;
  for (const auto& [source, feature] : jobs) {
    auto train = read_dataset(ctx, dataset_file(source, feature, dataset::Split::train));
    auto test = read_dataset(ctx, dataset_file(source, feature, dataset::Split::test));
    auto m = probe::layer_sweep(train, test, *provider, o);
    m.source = source;
    m.model = model;
    const std::string stem = "results/probe_" + source + "_" + feature;
    ctx.write_text(stem + ".csv",
                   probe::matrix_csv(m, ctx.header("source=" + source + " feature=" + feature + " model=" + model)));
    ctx.write_text(stem + ".json",
                   probe::matrix_json(m, ctx.meta({{"source", source}, {"feature", feature}})).dump(2) + "\n");
    double best = 0.0;
    int best_layer = 0;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      if (m.overall[l] > best) {
        best = m.overall[l];
        best_layer = m.layers[l];
      }
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", best);
    ctx.out << stem << ".csv: best overall " << buf << " at layer " << best_layer << "\n";
  }
}

// ---- semantics -----------------------------------------------------------

void cmd_semantics(Context& ctx) {
  const auto& sc = ctx.config.at("semantics");
  const auto lexicon_path = sc.at("lexicon").get<std::string>();
  auto lexicon = lexicon_path.empty() ? semantics::bundled_lexicon() : semantics::load_lexicon(lexicon_path);
  semantics::GenerateOptions g;
  g.seed = ctx.seed;
  g.max_bases = sc.at("max_bases").get<std::size_t>();
  g.calibration = sc.at("calibration").get<bool>();
  g.templates.will_be = sc.at("will_be").get<bool>();
  auto set = semantics::generate_all(lexicon, g);

  auto provider = make_provider(ctx.config.at("provider"));
  const auto model = provider->info().name;
  auto records = semantics::score_all(*provider, set.instances, sc.at("threads").get<int>());
  auto tables = semantics::aggregate(records);

  const std::string header =
      ctx.header("model=" + model + " bases=" + std::to_string(set.base_count) + "/" +
                 std::to_string(set.total_bases) + " instances=" + std::to_string(records.size()) +
                 " skipped=" + std::to_string(tables.skipped) + " ties=" + std::to_string(tables.ties) +
                 " excluded_bases=" + std::to_string(tables.bases_excluded) +
                 " conclusion=" + (g.templates.will_be ? "will_be" : "is") + " s3_premise=NAME1");
  ctx.write_text("results/table2.csv", semantics::table2_csv(tables, model, header));
  ctx.write_text("results/calibration.csv", semantics::calibration_csv(tables, model, header));
  ctx.write_text("results/flips_calibration.csv", semantics::flips_calibration_csv(tables, model, header));

  std::vector<Json> lines;
  lines.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    Json j = semantics::to_json(records[i]);
    j["text"] = set.instances[i].text;
    lines.push_back(std::move(j));
  }
  ctx.write_jsonl("results/semantics_records.jsonl",
                  ctx.meta({{"model", model},
                            {"bases", set.base_count},
                            {"total_bases", set.total_bases},
                            {"conclusion", g.templates.will_be ? "will be" : "is"},
                            {"s3_premise", "NAME1 is ADJ1 than NAME2 (the schema table's NAME2/NAME2 read as a typo)"}}),
                  lines);
  char buf[96];
  std::snprintf(buf, sizeof buf, "S1 accuracy %.2f, S2 accuracy %.2f", tables.accuracy_s1, tables.accuracy_s2);
  ctx.out << "results/table2.csv: " << buf << " over " << set.base_count << " bases (" << tables.skipped
          << " skipped, " << tables.ties << " ties)\n";
}

// ---- report --------------------------------------------------------------

std::string fmt(double v, const char* spec = "%.4f") {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(io::read_file(p));
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

std::string markdown_table(const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return "";
  auto line = [](const std::vector<std::string>& cells) {
    std::string s = "|";
    for (const auto& c : cells) s += " " + (c.empty() ? std::string("-") : c) + " |";
    return s + "\n";
  };
  std::string out = line(rows[0]) + "|";
  for (std::size_t i = 0; i < rows[0].size(); ++i) out += "---|";
  out += "\n";
  for (std::size_t r = 1; r < rows.size(); ++r) out += line(rows[r]);
  return out;
}

void cmd_report(Context& ctx) {
  const fs::path results = ctx.path("results");
  std::vector<fs::path> matrices;
  if (fs::exists(results)) {
    for (const auto& e : fs::directory_iterator(results)) {
      const auto name = e.path().filename().string();
      if (name.rfind("probe_", 0) == 0 && e.path().extension() == ".json") matrices.push_back(e.path());
    }
  }
  std::sort(matrices.begin(), matrices.end());
  const bool have_semantics = fs::exists(results / "table2.csv");
  if (matrices.empty() && !have_semantics) {
    throw Error("missing_input", results.string() + " holds no results; run `ccprobe probe` or `ccprobe semantics`");
  }

  std::string long_csv = "# " + ctx.header() + "\nsource,feature,model,layer,value,accuracy,n_test\n";
  std::string md = "# ccprobe report\n\n" + ctx.header() + "\n";
  if (!matrices.empty()) md += "\n## Layer-wise probe accuracy\n\nLayer 0 is the static embedding layer.\n";
  for (const auto& p : matrices) {
    auto j = Json::parse(io::read_file(p));
    const auto source = j.at("source").get<std::string>();
    const auto feature = j.at("feature").get<std::string>();
    const auto model = j.at("model").get<std::string>();
    std::vector<std::vector<std::string>> table{{"layer", "overall"}};
    const auto& layers = j.at("layers");
    const auto& values = j.at("values");
    std::size_t n_test = 0;
    for (const auto& [v, n] : j.at("value_counts").items()) n_test += n.get<std::size_t>();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto layer = std::to_string(layers[l].get<int>());
      const auto& row = j.at("cells").at(l);
      for (std::size_t v = 0; v < values.size(); ++v) {
        const auto value = std::to_string(values[v].get<int>());
        long_csv += source + "," + feature + "," + model + "," + layer + "," + value + "," +
                    (row[v].is_null() ? "" : fmt(row[v].get<double>(), "%.6f")) + "," +
                    std::to_string(j.at("value_counts").at(value).get<std::size_t>()) + "\n";
      }
      const double overall = j.at("overall").at(l).get<double>();
      long_csv += source + "," + feature + "," + model + "," + layer + ",overall," + fmt(overall, "%.6f") + "," +
                  std::to_string(n_test) + "\n";
      table.push_back({layer, fmt(overall)});
    }
    md += "\n### " + source + " / " + feature + " (" + model + ")\n\n" + markdown_table(table);
  }
  if (have_semantics) {
    md += "\n## Cloze semantics\n\nAccuracy and decision flips (percent):\n\n" +
          markdown_table(read_csv_rows(results / "table2.csv"));
    if (fs::exists(results / "calibration.csv")) {
      md += "\nCalibrated accuracy by test scenario and calibration method:\n\n" +
            markdown_table(read_csv_rows(results / "calibration.csv"));
    }
    if (fs::exists(results / "flips_calibration.csv")) {
      md += "\nDecision flips against S1 under calibration:\n\n" +
            markdown_table(read_csv_rows(results / "flips_calibration.csv"));
    }
  }
  if (!matrices.empty()) ctx.write_text("report/probe_layers.csv", long_csv);
  ctx.write_text("report/summary.md", md);
  ctx.out << "report/summary.md written\n";
}

// ---- serve-mock ----------------------------------------------------------

void cmd_serve_mock(Context& ctx, const std::string& host, int port) {
  Json pc = ctx.config.at("provider");
  pc["url"] = "";
  auto provider = make_provider(pc);
  provider::ProviderServer server(*provider);
  const int bound = server.start(host, port);
  ctx.out << provider->info().name << " on http://" << host << ":" << bound << "\n" << std::flush;
  wait_for_signal();
  server.stop();
}

void emit_error(std::ostream& err, std::string_view code, std::string_view message) {
  err << io::dump(provider::error_json(code, message)) << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Comparative-correlative probing pipeline", "ccprobe"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Expand all help");

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string provider_flag;
  std::string mock_mode;
  std::string mock_table;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--out", out_dir, "Output directory (overrides output_dir)");
  app.add_option("--seed", seed, "Seed (overrides seed)");

  auto add_provider_flags = [&](CLI::App* sub) {
    sub->add_option("--provider", provider_flag, "'mock' or an http:// provider URL");
    sub->add_option("--mock-mode", mock_mode, "bag or positional");
    sub->add_option("--mock-table", mock_table, "Mask score table for the mock");
  };

  auto* generate = app.add_subcommand("generate", "Sample positive/negative twin pairs from a grammar");
  std::vector<std::string> grammars;
  std::optional<std::size_t> pairs;
  generate->add_option("--grammar", grammars, "train, test, or a grammar file (repeatable)");
  generate->add_option("--n", pairs, "Number of twin pairs per grammar");

  auto* mine = app.add_subcommand("mine", "Scan tagged corpora for candidate sentences");
  std::vector<std::string> inputs;
  std::string exclusions;
  mine->add_option("--input", inputs, "CoNLL-U or TSV corpus file (repeatable)");
  mine->add_option("--exclusions", exclusions, "Exclusion word list");

  auto* annotate = app.add_subcommand("annotate", "Serve the annotation API and UI");
  std::optional<int> annotate_port;
  std::string annotate_host;
  std::string static_dir;
  annotate->add_option("--host", annotate_host);
  annotate->add_option("--port", annotate_port, "0 picks a free port");
  annotate->add_option("--static", static_dir, "Directory with the built UI");

  auto* datasets = app.add_subcommand("datasets", "Build balanced probing datasets");
  std::vector<std::string> sources;
  std::vector<std::string> features;
  std::optional<int> n_star;
  std::string labels;
  datasets->add_option("--source", sources, "artificial or corpus (repeatable)");
  datasets->add_option("--feature", features, "length, cc_start, second_start, distance (repeatable)");
  datasets->add_option("--n-star", n_star, "Items per value and label");
  datasets->add_option("--labels", labels, "Pattern label file for the corpus source");

  auto* probe_cmd = app.add_subcommand("probe", "Layer sweep of the linear probe");
  probe_cmd->add_option("--source", sources, "artificial or corpus (repeatable)");
  probe_cmd->add_option("--feature", features, "Feature (repeatable)");
  std::string cache_dir;
  probe_cmd->add_option("--cache", cache_dir, "Embedding cache directory");
  add_provider_flags(probe_cmd);

  auto* sem = app.add_subcommand("semantics", "Cloze evaluation of CC semantics");
  std::string lexicon;
  std::optional<std::size_t> max_bases;
  std::optional<int> threads;
  bool will_be = false;
  sem->add_option("--lexicon", lexicon, "Lexicon JSON");
  sem->add_option("--max-bases", max_bases, "Sample this many bases (0: all)");
  sem->add_option("--threads", threads, "Scoring threads");
  sem->add_flag("--will-be", will_be, "Use 'will be' in the conclusion");
  add_provider_flags(sem);

  app.add_subcommand("report", "Summarise results into markdown and plot-ready CSV");

  auto* serve_mock = app.add_subcommand("serve-mock", "Serve the mock provider over HTTP");
  std::string mock_host = "127.0.0.1";
  int mock_port = 8700;
  serve_mock->add_option("--host", mock_host);
  serve_mock->add_option("--port", mock_port, "0 picks a free port");
  serve_mock->add_option("--mock-mode", mock_mode, "bag or positional");
  serve_mock->add_option("--mock-table", mock_table, "Mask score table");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    emit_error(err, "usage", e.what());
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    Json config = config_path.empty() ? merge_config(Json()) : load_config(config_path);
    if (const char* env = std::getenv("CCPROBE_PROVIDER_URL"); env && *env) config["provider"]["url"] = env;
    if (!out_dir.empty()) config["output_dir"] = out_dir;
    if (seed) config["seed"] = *seed;
    if (!provider_flag.empty()) config["provider"]["url"] = provider_flag == "mock" ? "" : provider_flag;
    if (!mock_mode.empty()) config["provider"]["mock"] = mock_mode;
    if (!mock_table.empty()) config["provider"]["mock_table"] = mock_table;
    if (!inputs.empty()) config["corpus"]["inputs"] = inputs;
    if (!exclusions.empty()) config["corpus"]["exclusions"] = exclusions;
    if (!labels.empty()) config["corpus"]["labels"] = labels;
    if (!sources.empty()) config["datasets"]["sources"] = sources;
    if (!features.empty()) config["datasets"]["features"] = features;
    if (n_star) config["datasets"]["n_star"] = *n_star;
    if (!cache_dir.empty()) config["probe"]["cache_dir"] = cache_dir;
    if (!lexicon.empty()) config["semantics"]["lexicon"] = lexicon;
    if (max_bases) config["semantics"]["max_bases"] = *max_bases;
    if (threads) config["semantics"]["threads"] = *threads;
    if (will_be) config["semantics"]["will_be"] = true;
    if (!annotate_host.empty()) config["annotate"]["host"] = annotate_host;
    if (annotate_port) config["annotate"]["port"] = *annotate_port;
    if (!static_dir.empty()) config["annotate"]["static_dir"] = static_dir;
    if (!grammars.empty()) config["generate"]["grammars"] = grammars;
    if (pairs) config["generate"]["pairs"] = *pairs;
    check_paths(config);
    provider::parse_mock_mode(config["provider"]["mock"].get<std::string>());

    Context ctx{config, config.at("output_dir").get<std::string>(), config.at("seed").get<std::uint64_t>(),
                config_hash(config), sub->get_name(), out, err, {}};
    const auto& name = ctx.command;
    if (name == "generate") {
      cmd_generate(ctx, config["generate"]["grammars"].get<std::vector<std::string>>(),
                   config["generate"]["pairs"].get<std::size_t>());
    } else if (name == "mine") {
      cmd_mine(ctx);
    } else if (name == "annotate") {
      cmd_annotate(ctx);
    } else if (name == "datasets") {
      try {
        cmd_datasets(ctx);
      } catch (...) {
        ctx.write_manifest();
        throw;
      }
    } else if (name == "probe") {
      cmd_probe(ctx);
    } else if (name == "semantics") {
      cmd_semantics(ctx);
    } else if (name == "report") {
      cmd_report(ctx);
    } else if (name == "serve-mock") {
      cmd_serve_mock(ctx, mock_host, mock_port);
    }
    ctx.write_manifest();
    return 0;
  } catch (const Error& e) {
    emit_error(err, e.code(), e.what());
  } catch (const Json::exception& e) {
    emit_error(err, "invalid_config", e.what());
  } catch (const fs::filesystem_error& e) {
    emit_error(err, "io_error", e.what());
  } catch (const std::exception& e) {
    emit_error(err, "internal", e.what());
  }
  return 1;
}

}  // namespace ccprobe::pipeline
