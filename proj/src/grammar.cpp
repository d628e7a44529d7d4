#include "ccprobe/grammar.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "ccprobe/bundled.hpp"
#include "ccprobe/error.hpp"
#include "ccprobe/rng.hpp"

namespace ccprobe::grammar {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

[[noreturn]] void syntax_error(int line, const std::string& what) {
  throw Error("grammar_syntax", "line " + std::to_string(line) + ": " + what);
}

std::vector<Alternative> parse_rhs(std::string_view rhs, int line) {
  std::vector<Alternative> alts(1);
  std::size_t i = 0;
  while (i < rhs.size()) {
    char c = rhs[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '|') {
      alts.emplace_back();
      ++i;
    } else if (c == '\'') {
      auto close = rhs.find('\'', i + 1);
      if (close == std::string_view::npos) syntax_error(line, "unterminated terminal");
      Symbol sym;
      sym.kind = Symbol::Kind::terminal;
      sym.name = std::string(rhs.substr(i + 1, close - i - 1));
      sym.tokens = split_tokens(sym.name);
      alts.back().push_back(std::move(sym));
      i = close + 1;
    } else if (is_name_char(c)) {
      std::size_t j = i;
      while (j < rhs.size() && is_name_char(rhs[j])) ++j;
      Symbol sym;
      sym.kind = Symbol::Kind::nonterminal;
      sym.name = std::string(rhs.substr(i, j - i));
      alts.back().push_back(std::move(sym));
      i = j;
    } else {
      syntax_error(line, std::string("unexpected character '") + c + "'");
    }
  }
  return alts;
}

void validate(Grammar& g) {
  if (g.productions.empty()) throw Error("empty_grammar", "grammar has no productions");
  if (!g.has(g.start)) throw Error("undefined_nonterminal", "start symbol '" + g.start + "' has no production");

  for (const auto& lhs : g.declaration_order) {
    for (const auto& alt : g.productions.at(lhs)) {
      for (const auto& sym : alt) {
        if (!sym.is_terminal() && !g.has(sym.name)) {
          throw Error("undefined_nonterminal",
                      "nonterminal '" + sym.name + "' (used by " + lhs + ") has no production");
        }
      }
    }
  }
  for (const auto& allowed : g.unreachable_allowed) {
    if (!g.has(allowed)) throw Error("undefined_nonterminal", "nonterminal '" + allowed + "' has no production");
  }

  std::set<std::string> reached;
  std::vector<std::string> stack(g.unreachable_allowed.begin(), g.unreachable_allowed.end());
  stack.push_back(g.start);
  while (!stack.empty()) {
    auto nt = stack.back();
    stack.pop_back();
    if (!reached.insert(nt).second) continue;
    for (const auto& alt : g.productions.at(nt)) {
      for (const auto& sym : alt) {
        if (!sym.is_terminal()) stack.push_back(sym.name);
      }
    }
  }
  for (const auto& lhs : g.declaration_order) {
    if (!reached.count(lhs)) {
      throw Error("unreachable_nonterminal", "nonterminal '" + lhs + "' is not reachable from " + g.start);
    }
  }

  // Every nonterminal must be able to finish a derivation.
  std::set<std::string> productive;
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& [lhs, alts] : g.productions) {
      if (productive.count(lhs)) continue;
      for (const auto& alt : alts) {
        bool ok = std::all_of(alt.begin(), alt.end(), [&](const Symbol& s) {
          return s.is_terminal() || productive.count(s.name);
        });
        if (ok) {
          productive.insert(lhs);
          changed = true;
          break;
        }
      }
    }
  }
  for (const auto& lhs : g.declaration_order) {
    if (!productive.count(lhs)) {
      throw Error("nonterminating_nonterminal", "nonterminal '" + lhs + "' cannot derive a finite string");
    }
  }

  g.terminal_classes.clear();
  for (const auto& [lhs, alts] : g.productions) {
    bool is_class = std::all_of(alts.begin(), alts.end(), [](const Alternative& alt) {
      return alt.size() == 1 && alt.front().is_terminal();
    });
    if (!is_class) continue;
    std::vector<std::string> words;
    for (const auto& alt : alts) {
      if (std::find(words.begin(), words.end(), alt.front().name) == words.end()) {
        words.push_back(alt.front().name);
      }
    }
    g.terminal_classes.emplace(lhs, std::move(words));
  }
}

// --- sampling --------------------------------------------------------------

using Chooser = std::function<int(const std::string& nonterminal, const std::vector<int>& allowed)>;

class Expander {
public:
  Expander(const Grammar& g, Chooser choose)
      : g_(g), recursive_(g.recursive_nonterminals()), choose_(std::move(choose)) {}

  void expand(const std::string& nt) {
    const bool counted = recursive_.count(nt) != 0;
    if (counted) ++path_counts_[nt];

    const auto& alts = g_.alternatives(nt);
    std::vector<int> allowed;
    for (int i = 0; i < static_cast<int>(alts.size()); ++i) {
      bool ok = std::all_of(alts[i].begin(), alts[i].end(), [&](const Symbol& s) {
        return s.is_terminal() || !recursive_.count(s.name) || path_counts_[s.name] < g_.recursion_cap;
      });
      if (ok) allowed.push_back(i);
    }
    if (allowed.empty()) {
      throw Error("recursion_cap_dead_end", "no alternative of '" + nt + "' fits under the recursion cap");
    }
    const int choice = choose_(nt, allowed);
    derivation.push_back({nt, choice});
    for (const auto& sym : alts[choice]) {
      if (sym.is_terminal()) {
        tokens.insert(tokens.end(), sym.tokens.begin(), sym.tokens.end());
      } else {
        expand(sym.name);
      }
    }
    if (counted) --path_counts_[nt];
  }

  std::vector<std::string> tokens;  // includes onset markers
  Derivation derivation;

private:
  const Grammar& g_;
  std::set<std::string> recursive_;
  std::map<std::string, int> path_counts_;
  Chooser choose_;
};

bool alternative_mentions(const Alternative& alt, const std::string& nt) {
  return std::any_of(alt.begin(), alt.end(), [&](const Symbol& s) { return !s.is_terminal() && s.name == nt; });
}

GeneratedSentence finish(const Grammar& g, Expander& ex, Label label) {
  std::vector<std::string> surface;
  std::vector<int> onsets;
  for (const auto& t : ex.tokens) {
    if (t == kOnsetMarker) {
      onsets.push_back(static_cast<int>(surface.size()));
    } else {
      surface.push_back(t);
    }
  }
  if (onsets.size() != 2) {
    throw Error("onset_markers", "expected 2 onset markers in a generated sentence, found " +
                                     std::to_string(onsets.size()));
  }
  GeneratedSentence out;
  out.features = FeatureVector::from_positions(static_cast<int>(surface.size()), onsets[0], onsets[1]);
  out.text = join_tokens(surface);
  out.label = label;
  out.derivation = std::move(ex.derivation);
  out.grammar_name = g.name;
  return out;
}

// --- recognition -----------------------------------------------------------

// The recognizer unrolls recursion up to the cap into an acyclic grammar of
// "instances" (nonterminal + per-path recursion counts) and runs a memoized
// span chart over it.
struct Item {
  bool terminal = false;
  std::vector<std::string> tokens;
  std::vector<int> onset_offsets;  // onset markers, as offsets into tokens
  int instance = -1;
};

struct AltInstance {
  int source_index = 0;
  std::vector<Item> items;
  std::vector<int> suffix_min, suffix_max;
};

struct Instance {
  std::string nonterminal;
  std::vector<AltInstance> alts;
  int min_len = 0;
  int max_len = 0;
};

class Chart {
public:
  explicit Chart(const Grammar& g) : g_(g), recursive_(g.recursive_nonterminals()) {}

  int instance_for(const std::string& nt, std::map<std::string, int> counts) {
    if (recursive_.count(nt)) ++counts[nt];
    std::string key = nt;
    for (const auto& [k, v] : counts) key += "|" + k + "=" + std::to_string(v);
    if (auto it = index_.find(key); it != index_.end()) return it->second;

    const int id = static_cast<int>(instances_.size());
    index_.emplace(key, id);
    instances_.push_back({nt, {}, 0, 0});

    const auto& alts = g_.alternatives(nt);
    std::vector<AltInstance> built;
    for (int a = 0; a < static_cast<int>(alts.size()); ++a) {
      bool ok = true;
      for (const auto& s : alts[a]) {
        if (!s.is_terminal() && recursive_.count(s.name)) {
          auto c = counts.find(s.name);
          if (c != counts.end() && c->second >= g_.recursion_cap) ok = false;
        }
      }
      if (!ok) continue;
      AltInstance ai;
      ai.source_index = a;
      for (const auto& s : alts[a]) {
        Item item;
        if (s.is_terminal()) {
          item.terminal = true;
          for (const auto& t : s.tokens) {
            if (t == kOnsetMarker) {
              item.onset_offsets.push_back(static_cast<int>(item.tokens.size()));
            } else {
              item.tokens.push_back(t);
            }
          }
          if (item.tokens.empty() && item.onset_offsets.empty()) continue;
        } else {
          item.instance = instance_for(s.name, counts);
        }
        ai.items.push_back(std::move(item));
      }
      built.push_back(std::move(ai));
    }

    int lo = std::numeric_limits<int>::max(), hi = 0;
    for (auto& ai : built) {
      const std::size_t k = ai.items.size();
      ai.suffix_min.assign(k + 1, 0);
      ai.suffix_max.assign(k + 1, 0);
      for (std::size_t i = k; i-- > 0;) {
        const auto& item = ai.items[i];
        const int mn = item.terminal ? static_cast<int>(item.tokens.size()) : instances_[item.instance].min_len;
        const int mx = item.terminal ? static_cast<int>(item.tokens.size()) : instances_[item.instance].max_len;
        ai.suffix_min[i] = ai.suffix_min[i + 1] + mn;
        ai.suffix_max[i] = ai.suffix_max[i + 1] + mx;
      }
      lo = std::min(lo, ai.suffix_min[0]);
      hi = std::max(hi, ai.suffix_max[0]);
    }
    if (built.empty()) {
      throw Error("recursion_cap_dead_end", "no alternative of '" + nt + "' fits under the recursion cap");
    }
    instances_[id].alts = std::move(built);
    instances_[id].min_len = lo;
    instances_[id].max_len = hi;
    return id;
  }

  void reset(std::vector<std::string> tokens) {
    tokens_ = std::move(tokens);
    n_ = static_cast<int>(tokens_.size());
    onsets_.clear();
    memo_.assign(instances_.size() * static_cast<std::size_t>(n_ + 1) * static_cast<std::size_t>(n_ + 1), kUnknown);
  }

  int n() const { return n_; }

  // Index of the matching alternative (into Instance::alts), or -1.
  int derive(int inst, int i, int j) {
    const Instance& in = instances_[inst];
    if (j - i < in.min_len || j - i > in.max_len) return -1;
    auto& slot = memo_[(static_cast<std::size_t>(inst) * (n_ + 1) + i) * (n_ + 1) + j];
    if (slot != kUnknown) return slot;
    slot = -1;
    for (int a = 0; a < static_cast<int>(in.alts.size()); ++a) {
      if (match(in.alts[a], 0, i, j, nullptr)) {
        slot = static_cast<std::int16_t>(a);
        break;
      }
    }
    return slot;
  }

  void build(int inst, int i, int j, Derivation& out) {
    const int a = derive(inst, i, j);
    const Instance& in = instances_[inst];
    const AltInstance& alt = in.alts[a];
    out.push_back({in.nonterminal, alt.source_index});
    std::vector<int> ends(alt.items.size());
    match(alt, 0, i, j, &ends);
    int pos = i;
    for (std::size_t k = 0; k < alt.items.size(); ++k) {
      const Item& item = alt.items[k];
      if (item.terminal) {
        for (int off : item.onset_offsets) onsets_.push_back(pos + off);
      } else {
        build(item.instance, pos, ends[k], out);
      }
      pos = ends[k];
    }
  }

  const std::vector<int>& onsets() const { return onsets_; }

  const Instance& instance(int id) const { return instances_[id]; }

private:
  static constexpr std::int16_t kUnknown = -2;

  bool match(const AltInstance& alt, std::size_t k, int i, int j, std::vector<int>* ends) {
    const int span = j - i;
    if (span < alt.suffix_min[k] || span > alt.suffix_max[k]) return false;
    if (k == alt.items.size()) return i == j;
    const Item& item = alt.items[k];
    if (item.terminal) {
      const int len = static_cast<int>(item.tokens.size());
      for (int t = 0; t < len; ++t) {
        if (tokens_[i + t] != item.tokens[t]) return false;
      }
      if (!match(alt, k + 1, i + len, j, ends)) return false;
      if (ends) (*ends)[k] = i + len;
      return true;
    }
    const Instance& child = instances_[item.instance];
    const int first = i + child.min_len;
    const int last = std::min(j - alt.suffix_min[k + 1], i + child.max_len);
    for (int m = first; m <= last; ++m) {
      if (derive(item.instance, i, m) < 0) continue;
      if (match(alt, k + 1, m, j, ends)) {
        if (ends) (*ends)[k] = m;
        return true;
      }
    }
    return false;
  }

  const Grammar& g_;
  std::set<std::string> recursive_;
  std::unordered_map<std::string, int> index_;
  std::vector<Instance> instances_;
  std::vector<std::string> tokens_;
  int n_ = 0;
  std::vector<std::int16_t> memo_;
  std::vector<int> onsets_;
};

}  // namespace

const std::vector<Alternative>& Grammar::alternatives(const std::string& nonterminal) const {
  auto it = productions.find(nonterminal);
  if (it == productions.end()) {
    throw Error("undefined_nonterminal", "nonterminal '" + nonterminal + "' has no production");
  }
  return it->second;
}

std::set<std::string> Grammar::recursive_nonterminals() const {
  std::set<std::string> result;
  for (const auto& [root, _] : productions) {
    std::set<std::string> seen;
    std::vector<std::string> stack;
    for (const auto& alt : productions.at(root)) {
      for (const auto& s : alt) {
        if (!s.is_terminal()) stack.push_back(s.name);
      }
    }
    while (!stack.empty()) {
      auto nt = stack.back();
      stack.pop_back();
      if (nt == root) {
        result.insert(root);
        break;
      }
      if (!seen.insert(nt).second) continue;
      for (const auto& alt : productions.at(nt)) {
        for (const auto& s : alt) {
          if (!s.is_terminal()) stack.push_back(s.name);
        }
      }
    }
  }
  return result;
}

Grammar parse_grammar(std::string_view source, std::string_view fallback_name) {
  Grammar g;
  g.name = std::string(fallback_name);

  struct PendingRule {
    std::string lhs;
    std::string rhs;
    int line;
  };
  std::vector<PendingRule> rules;

  std::istringstream in{std::string(source)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '%') {
      std::istringstream words(line.substr(1));
      std::string directive;
      words >> directive;
      std::vector<std::string> args;
      for (std::string w; words >> w;) args.push_back(w);
      if (args.empty()) syntax_error(line_no, "directive %" + directive + " needs an argument");
      if (directive == "grammar") {
        g.name = args[0];
      } else if (directive == "start") {
        g.start = args[0];
      } else if (directive == "unreachable") {
        g.unreachable_allowed.insert(args.begin(), args.end());
      } else if (directive == "positive") {
        g.positive_symbol = args[0];
      } else if (directive == "negative") {
        g.negative_symbol = args[0];
      } else if (directive == "recursion-cap") {
        g.recursion_cap = std::stoi(args[0]);
        if (g.recursion_cap < 1) syntax_error(line_no, "recursion cap must be at least 1");
      } else {
        syntax_error(line_no, "unknown directive %" + directive);
      }
      continue;
    }
    if (line[0] == '|') {
      if (rules.empty()) syntax_error(line_no, "continuation line before any rule");
      rules.back().rhs += " " + line;
      continue;
    }
    std::size_t arrow_len = 2;
    auto arrow = line.find("->");
    if (arrow == std::string::npos) {
      arrow = line.find("→");
      arrow_len = std::string_view("→").size();
    }
    if (arrow == std::string::npos) syntax_error(line_no, "expected '->'");
    std::string lhs = trim(std::string_view(line).substr(0, arrow));
    if (lhs.empty() || !std::all_of(lhs.begin(), lhs.end(), is_name_char)) {
      syntax_error(line_no, "invalid nonterminal name '" + lhs + "'");
    }
    rules.push_back({lhs, line.substr(arrow + arrow_len), line_no});
  }

  for (auto& rule : rules) {
    if (g.has(rule.lhs)) {
      throw Error("duplicate_nonterminal", "nonterminal '" + rule.lhs + "' is defined twice");
    }
    if (trim(rule.rhs).empty()) {
      throw Error("empty_production", "nonterminal '" + rule.lhs + "' has an empty alternative list");
    }
    g.productions.emplace(rule.lhs, parse_rhs(rule.rhs, rule.line));
    g.declaration_order.push_back(rule.lhs);
  }
  if (g.start.empty() && !rules.empty()) g.start = rules.front().lhs;
  validate(g);
  return g;
}

Grammar load_grammar_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_input", "cannot open grammar file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_grammar(buffer.str(), path.stem().string());
}

std::string_view bundled_grammar_source(std::string_view name) {
  if (name == "train") return bundled_text("grammars/train.cfg");
  if (name == "test") return bundled_text("grammars/test.cfg");
  throw Error("unknown_grammar", "no bundled grammar named '" + std::string(name) + "'");
}

Grammar bundled_grammar(std::string_view name) {
  return parse_grammar(bundled_grammar_source(name), name);
}

Grammar resolve_grammar(std::string_view name_or_path) {
  if (name_or_path == "train" || name_or_path == "test") return bundled_grammar(name_or_path);
  return load_grammar_file(std::filesystem::path(name_or_path));
}

GeneratedSentence sample_sentence(const Grammar& g, std::uint64_t seed, std::optional<Label> forced_label) {
  Rng rng(seed);
  const std::string* forced_symbol = nullptr;
  if (forced_label) forced_symbol = *forced_label == Label::positive ? &g.positive_symbol : &g.negative_symbol;

  Expander ex(g, [&](const std::string& nt, const std::vector<int>& allowed) {
    if (forced_symbol && nt == g.start) {
      std::vector<int> restricted;
      for (int a : allowed) {
        if (alternative_mentions(g.alternatives(nt)[a], *forced_symbol)) restricted.push_back(a);
      }
      if (restricted.empty()) {
        throw Error("label_unavailable", "start symbol has no alternative through " + *forced_symbol);
      }
      return restricted[rng.index(restricted.size())];
    }
    return allowed[rng.index(allowed.size())];
  });
  ex.expand(g.start);

  Label label = Label::positive;
  bool labeled = false;
  for (const auto& step : ex.derivation) {
    if (step.nonterminal == g.positive_symbol) { label = Label::positive; labeled = true; break; }
    if (step.nonterminal == g.negative_symbol) { label = Label::negative; labeled = true; break; }
  }
  if (!labeled) throw Error("label_unavailable", "derivation passed through neither label symbol");
  return finish(g, ex, label);
}

std::vector<std::string> sample_tokens(const Grammar& g, const std::string& symbol, std::uint64_t seed) {
  Rng rng(seed);
  Expander ex(g, [&](const std::string&, const std::vector<int>& allowed) {
    return allowed[rng.index(allowed.size())];
  });
  ex.expand(symbol);
  std::vector<std::string> out;
  for (auto& t : ex.tokens) {
    if (t != kOnsetMarker) out.push_back(std::move(t));
  }
  return out;
}

GeneratedSentence negative_twin(const Grammar& g, const GeneratedSentence& positive) {
  if (positive.label != Label::positive) {
    throw Error("invalid_argument", "negative_twin expects a positive sentence");
  }
  // Choices recorded per nonterminal, consumed in order. A NEG-side
  // nonterminal replays the choices of its POS-side namesake.
  std::map<std::string, std::deque<int>> recorded;
  for (const auto& step : positive.derivation) recorded[step.nonterminal].push_back(step.alternative);

  auto source_of = [&](const std::string& nt) {
    auto at = nt.find("NEG");
    if (at != std::string::npos) {
      std::string pos = nt;
      pos.replace(at, 3, "POS");
      if (g.has(pos)) return pos;
    }
    return nt;
  };

  Expander ex(g, [&](const std::string& nt, const std::vector<int>& allowed) {
    if (nt == g.start) {
      for (int a : allowed) {
        if (alternative_mentions(g.alternatives(nt)[a], g.negative_symbol)) return a;
      }
      throw Error("label_unavailable", "start symbol has no alternative through " + g.negative_symbol);
    }
    auto& queue = recorded[source_of(nt)];
    if (queue.empty()) {
      throw Error("twin_mismatch", "positive derivation has no recorded choice for " + nt);
    }
    const int choice = queue.front();
    queue.pop_front();
    if (std::find(allowed.begin(), allowed.end(), choice) == allowed.end()) {
      throw Error("twin_mismatch", "recorded choice not available for " + nt);
    }
    return choice;
  });
  ex.expand(g.start);
  return finish(g, ex, Label::negative);
}

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::positive: return "positive";
    case Verdict::negative: return "negative";
    case Verdict::reject: return "reject";
  }
  return "reject";
}

Recognition recognize(const Grammar& g, std::string_view text) {
  Chart chart(g);
  const int root = chart.instance_for(g.start, {});
  chart.reset(split_tokens(text));

  Recognition result;
  const int a = chart.derive(root, 0, chart.n());
  if (a < 0) return result;

  chart.build(root, 0, chart.n(), result.derivation);
  for (const auto& step : result.derivation) {
    if (step.nonterminal == g.positive_symbol) { result.verdict = Verdict::positive; break; }
    if (step.nonterminal == g.negative_symbol) { result.verdict = Verdict::negative; break; }
  }
  if (result.verdict == Verdict::reject) {
    result.derivation.clear();
    return result;
  }

  if (chart.onsets().size() == 2) {
    result.features = FeatureVector::from_positions(chart.n(), chart.onsets()[0], chart.onsets()[1]);
  }
  return result;
}

std::vector<std::string> negate_core(const std::vector<std::string>& core) {
  auto mismatch = [&](const std::string& why) {
    return Error("core_pattern_mismatch", "'" + join_tokens(core) + "' is not a positive core: " + why);
  };
  const std::size_t n = core.size();
  if (n != 6 && n != 8) throw mismatch("expected 6 or 8 tokens");
  if (core[0] != "The" && core[0] != "the") throw mismatch("must start with The/the");
  if (core[n - 4] != "the") throw mismatch("expected 'the' before the numeral");
  if (n == 8 && core[2] != "and") throw mismatch("coordinated comparatives need 'and'");
  for (std::size_t i = 1; i < n; ++i) {
    if (i == n - 4 || (n == 8 && i == 2)) continue;
    if (core[i] == "the" || core[i] == "The" || core[i] == "and") throw mismatch("unexpected function word");
  }
  std::vector<std::string> out(core.begin(), core.begin() + static_cast<std::ptrdiff_t>(n - 4));
  out.push_back(core[n - 3]);  // numeral
  out.push_back(core[n - 1]);  // verb
  out.push_back("the");
  out.push_back(core[n - 2]);  // noun
  return out;
}

std::vector<ClassOverlap> lexical_overlap(const Grammar& a, const Grammar& b) {
  std::vector<ClassOverlap> overlaps;
  for (auto cls : kContentClasses) {
    const std::string key(cls);
    auto ia = a.terminal_classes.find(key);
    auto ib = b.terminal_classes.find(key);
    if (ia == a.terminal_classes.end() || ib == b.terminal_classes.end()) continue;
    std::set<std::string> left(ia->second.begin(), ia->second.end());
    ClassOverlap overlap{key, {}};
    for (const auto& w : std::set<std::string>(ib->second.begin(), ib->second.end())) {
      if (left.count(w)) overlap.shared.push_back(w);
    }
    if (!overlap.shared.empty()) overlaps.push_back(std::move(overlap));
  }
  return overlaps;
}

}  // namespace ccprobe::grammar
