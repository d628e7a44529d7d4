#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ccprobe/provider.hpp"

namespace ccprobe::semantics {

struct Lexicon {
  std::vector<std::pair<std::string, std::string>> adjective_pairs;  // (comparative, antonym comparative)
  std::vector<std::string> names;
};

Lexicon parse_lexicon(const provider::Json& j);
Lexicon load_lexicon(const std::filesystem::path& path);
Lexicon bundled_lexicon();

enum class Schema { S1, S2, S3, S4, S5, S6, S7 };

inline constexpr Schema kAllSchemas[] = {Schema::S1, Schema::S2, Schema::S3, Schema::S4,
                                         Schema::S5, Schema::S6, Schema::S7};
inline constexpr int kCalibrationContexts = 5;

std::string_view to_string(Schema s);
Schema parse_schema(std::string_view text);
bool is_calibration(Schema s);

using Slots = std::map<std::string, std::string>;  // ADJ1, ADJ2, ANT1, ANT2, NAME1, NAME2, ADJ3, NAME3, NAME4

struct TemplateOptions {
  bool will_be = false;  // "Therefore, NAME1 will be [MASK] ..." instead of "is"
};

struct ScenarioInstance {
  std::string id;
  Schema schema = Schema::S1;
  Slots slots;
  std::string text;
  std::string correct;
  std::string incorrect;
  std::string base_id;
};

ScenarioInstance render_scenario(Schema schema, const Slots& slots, const TemplateOptions& options = {},
                                 std::string base_id = "", std::string id = "");

struct GenerateOptions {
  std::uint64_t seed = 0;
  std::size_t max_bases = 0;  // 0: every base; otherwise a seeded sample
  bool calibration = true;    // add the S5-S7 contexts
  TemplateOptions templates;
};

struct GeneratedSet {
  std::vector<ScenarioInstance> instances;  // grouped by base, S1..S4 then S5..S7 contexts
  std::size_t base_count = 0;
  std::size_t total_bases = 0;  // before sampling
};

/// Bases are ordered pairs of distinct adjective pairs times unordered name
/// pairs (NAME1 is the one listed first).
GeneratedSet generate_all(const Lexicon& lexicon, const GenerateOptions& options);

struct ScoreRecord {
  std::string instance_id;
  std::string base_id;
  Schema schema = Schema::S1;
  std::string correct;
  std::string incorrect;
  std::map<std::string, double> probabilities;  // both candidates
  double p_correct = 0.0;
  double p_incorrect = 0.0;
  bool decision = false;
  bool tied = false;
  bool skipped = false;
  std::string skip_reason;
};

ScoreRecord score_instance(provider::Provider& p, const ScenarioInstance& inst);
/// Scores in parallel; the result order follows `instances`.
std::vector<ScoreRecord> score_all(provider::Provider& p, const std::vector<ScenarioInstance>& instances,
                                   int threads = 1);

/// Percentage of non-skipped records with decision = true.
double accuracy(const std::vector<ScoreRecord>& records);
std::size_t tie_count(const std::vector<ScoreRecord>& records);

/// Percentage of base-aligned pairs whose decision differs.
double decision_flip(const std::vector<ScoreRecord>& base, const std::vector<ScoreRecord>& variant);

/// P(a | S_b) divided elementwise by the mean of P(a | C_i) over the contexts.
std::map<std::string, double> calibrate(const std::map<std::string, double>& base_scores,
                                        const std::vector<std::map<std::string, double>>& contexts);

struct Decision {
  bool decision = false;
  bool tied = false;
};

Decision decide(double correct, double incorrect);

/// Everything behind the result tables. Cells hold percentages; NaN marks
/// combinations that are not reported.
struct SemanticsTables {
  double accuracy_s1 = 0, accuracy_s2 = 0;
  double flip_s2 = 0, flip_s3 = 0, flip_s4 = 0;
  double calibrated_accuracy[3][4];  // rows S1, S2, S3; columns none, S5, S6, S7
  double calibrated_flip[3][4];      // rows S2, S3, S4; columns none, S5, S6, S7
  std::size_t records = 0;
  std::size_t skipped = 0;
  std::size_t ties = 0;
  std::size_t bases = 0;
  std::size_t bases_excluded = 0;
};

SemanticsTables aggregate(const std::vector<ScoreRecord>& records);

std::string table2_csv(const SemanticsTables& t, const std::string& model, const std::string& header);
std::string calibration_csv(const SemanticsTables& t, const std::string& model, const std::string& header);
std::string flips_calibration_csv(const SemanticsTables& t, const std::string& model, const std::string& header);

provider::Json to_json(const ScenarioInstance& inst);
provider::Json to_json(const ScoreRecord& r);

}  // namespace ccprobe::semantics
