#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ccprobe/corpus.hpp"

namespace ccprobe::annotation {

struct PatternSummary {
  std::string pattern_key;
  std::size_t size = 0;
  corpus::GroupLabel label = corpus::GroupLabel::unlabeled;
  std::string labeled_by;
  std::string labeled_at;
};

std::string utc_timestamp();

/// Pattern-level label store behind the annotation API. Every accepted
/// label is appended to a JSONL log before it is acknowledged; the log is
/// replayed on construction and compacted on export.
class Store {
public:
  using Clock = std::function<std::string()>;

  Store(std::vector<corpus::Candidate> candidates, std::uint64_t seed, std::filesystem::path log_path,
        Clock clock = utc_timestamp);

  /// Patterns in the seeded order, optionally filtered by label state.
  std::vector<PatternSummary> patterns(std::optional<corpus::GroupLabel> status, std::size_t limit) const;
  std::vector<corpus::Candidate> examples(const std::string& pattern_key, std::size_t n) const;
  PatternSummary label(const std::string& pattern_key, corpus::GroupLabel label, const std::string& annotator);
  std::map<std::string, std::size_t> progress() const;
  /// One JSON line per labeled pattern; also compacts the log.
  std::string export_jsonl();

  std::vector<corpus::PatternGroup> groups() const;
  const std::vector<corpus::Candidate>& candidates() const { return candidates_; }
  std::size_t replay_skipped() const { return replay_skipped_; }

private:
  const corpus::PatternGroup& find(const std::string& key) const;
  void append_log(const std::string& line);

  mutable std::mutex mutex_;
  std::vector<corpus::Candidate> candidates_;
  std::vector<corpus::PatternGroup> groups_;
  std::map<std::string, std::size_t> index_;
  std::filesystem::path log_path_;
  Clock clock_;
  std::vector<std::string> foreign_events_;  // log lines for patterns not in this corpus
  std::size_t replay_skipped_ = 0;
};

/// Pattern labels read back from an export (or a hand-written fixture).
/// Lines may name a pattern_key directly or a source_id whose pattern
/// receives the label.
void apply_label_file(const std::filesystem::path& path, std::vector<corpus::PatternGroup>& groups,
                      const std::vector<corpus::Candidate>& candidates);

}  // namespace ccprobe::annotation
