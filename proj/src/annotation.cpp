#include "ccprobe/annotation.hpp"

#include <ctime>
#include <fstream>

#include "ccprobe/error.hpp"
#include "ccprobe/io.hpp"

namespace ccprobe::annotation {

using corpus::GroupLabel;
using io::Json;

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

Json event_json(const corpus::PatternGroup& g) {
  return Json{{"pattern_key", g.pattern_key},
              {"label", to_string(g.label)},
              {"labeled_by", g.labeled_by},
              {"labeled_at", g.labeled_at}};
}

PatternSummary summarize(const corpus::PatternGroup& g) {
  return {g.pattern_key, g.members.size(), g.label, g.labeled_by, g.labeled_at};
}

}  // namespace

Store::Store(std::vector<corpus::Candidate> candidates, std::uint64_t seed, std::filesystem::path log_path,
             Clock clock)
    : candidates_(std::move(candidates)), log_path_(std::move(log_path)), clock_(std::move(clock)) {
  groups_ = corpus::group_patterns(candidates_, seed);
  for (std::size_t i = 0; i < groups_.size(); ++i) index_[groups_[i].pattern_key] = i;

  std::ifstream in(log_path_);
  for (std::string line; in && std::getline(in, line);) {
    if (line.empty()) continue;
    try {
      auto j = Json::parse(line);
      auto key = j.at("pattern_key").get<std::string>();
      auto it = index_.find(key);
      if (it == index_.end()) {
        foreign_events_.push_back(line);
        continue;
      }
      auto& g = groups_[it->second];
      auto label = corpus::parse_group_label(j.at("label").get<std::string>());
      if (!corpus::transition_allowed(g.label, label)) {
        ++replay_skipped_;
        continue;
      }
      corpus::apply_label(g, label, j.value("labeled_by", ""), j.value("labeled_at", ""));
    } catch (const std::exception&) {
      // A torn final line from a crash mid-append; the label was never acknowledged.
      ++replay_skipped_;
    }
  }
}

const corpus::PatternGroup& Store::find(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw Error("not_found", "unknown pattern '" + key + "'");
  return groups_[it->second];
}

std::vector<PatternSummary> Store::patterns(std::optional<GroupLabel> status, std::size_t limit) const {
  std::lock_guard lock(mutex_);
  std::vector<PatternSummary> out;
  for (const auto& g : groups_) {
    if (out.size() >= limit) break;
    if (status && g.label != *status) continue;
    out.push_back(summarize(g));
  }
  return out;
}

std::vector<corpus::Candidate> Store::examples(const std::string& pattern_key, std::size_t n) const {
  std::lock_guard lock(mutex_);
  const auto& g = find(pattern_key);
  std::vector<corpus::Candidate> out;
  for (std::size_t i = 0; i < g.members.size() && i < n; ++i) out.push_back(candidates_[g.members[i]]);
  return out;
}

void Store::append_log(const std::string& line) {
  if (log_path_.has_parent_path()) std::filesystem::create_directories(log_path_.parent_path());
  std::ofstream out(log_path_, std::ios::app | std::ios::binary);
  out << line << '\n';
  out.flush();
  if (!out) throw Error("io_error", "cannot append to label log " + log_path_.string());
}

PatternSummary Store::label(const std::string& pattern_key, GroupLabel label, const std::string& annotator) {
  std::lock_guard lock(mutex_);
  auto it = index_.find(pattern_key);
  if (it == index_.end()) throw Error("not_found", "unknown pattern '" + pattern_key + "'");
  auto updated = groups_[it->second];
  corpus::apply_label(updated, label, annotator, clock_());
  append_log(io::dump(event_json(updated)));
  groups_[it->second] = std::move(updated);
  return summarize(groups_[it->second]);
}

std::map<std::string, std::size_t> Store::progress() const {
  std::lock_guard lock(mutex_);
  std::map<std::string, std::size_t> counts{{"unlabeled", 0}, {"positive", 0}, {"negative", 0}, {"skip", 0}};
  for (const auto& g : groups_) counts[std::string(to_string(g.label))]++;
  return counts;
}

std::string Store::export_jsonl() {
  std::lock_guard lock(mutex_);
  std::string exported;
  std::string compacted;
  for (const auto& line : foreign_events_) compacted += line + "\n";
  for (const auto& g : groups_) {
    if (g.label == GroupLabel::unlabeled) continue;
    auto j = event_json(g);
    compacted += io::dump(j) + "\n";
    if (g.label == GroupLabel::skip) continue;
    j["size"] = g.members.size();
    exported += io::dump(j) + "\n";
  }
  io::write_file_atomic(log_path_, compacted);
  return exported;
}

std::vector<corpus::PatternGroup> Store::groups() const {
  std::lock_guard lock(mutex_);
  return groups_;
}

void apply_label_file(const std::filesystem::path& path, std::vector<corpus::PatternGroup>& groups,
                      const std::vector<corpus::Candidate>& candidates) {
  std::map<std::string, std::size_t> by_key;
  for (std::size_t i = 0; i < groups.size(); ++i) by_key[groups[i].pattern_key] = i;
  std::map<std::string, std::string> source_to_key;
  for (const auto& c : candidates) source_to_key[c.sentence.source_id] = c.pattern_key;

  for (const auto& j : io::read_jsonl(path).records) {
    std::string key;
    if (j.contains("pattern_key")) {
      key = j.at("pattern_key").get<std::string>();
    } else {
      auto src = j.at("source_id").get<std::string>();
      auto it = source_to_key.find(src);
      if (it == source_to_key.end()) continue;  // sentence was not mined
      key = it->second;
    }
    auto it = by_key.find(key);
    if (it == by_key.end()) continue;
    auto& g = groups[it->second];
    auto label = corpus::parse_group_label(j.at("label").get<std::string>());
    if (g.label == label) continue;
    corpus::apply_label(g, label, j.value("labeled_by", "fixture"), j.value("labeled_at", ""));
  }
}

}  // namespace ccprobe::annotation
