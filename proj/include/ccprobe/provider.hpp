#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ccprobe/error.hpp"
#include "json.hpp"

namespace ccprobe::provider {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kMaskSentinel = "[MASK]";

struct ProviderInfo {
  std::string name;
  int num_layers = 0;  // hidden layers; layer 0 (static embeddings) comes on top
  int hidden_size = 0;
  std::string mask_token;
};

struct TokenEmbeddings {
  std::vector<std::string> tokens;
  std::vector<bool> special;
  std::vector<std::vector<std::vector<double>>> layers;  // [layer][token][dim], layers 0..num_layers
};

struct MaskScore {
  std::map<std::string, double> probabilities;
  std::map<std::string, bool> single_token;
};

/// Failure reported by a provider. Transport failures are retryable;
/// everything the provider answered with is not.
class ProviderError : public Error {
public:
  ProviderError(std::string code, const std::string& message, bool retryable, int http_status = 0)
      : Error(std::move(code), message), retryable_(retryable), http_status_(http_status) {}

  bool retryable() const noexcept { return retryable_; }
  int http_status() const noexcept { return http_status_; }

private:
  bool retryable_;
  int http_status_;
};

/// Checks preconditions, then defers to the concrete provider.
class Provider {
public:
  virtual ~Provider() = default;

  virtual ProviderInfo info() = 0;
  TokenEmbeddings embed(const std::string& text);
  std::vector<TokenEmbeddings> embed_batch(const std::vector<std::string>& texts);
  MaskScore mask_score(const std::string& text, const std::vector<std::string>& candidates);

protected:
  virtual TokenEmbeddings do_embed(const std::string& text) = 0;
  virtual std::vector<TokenEmbeddings> do_embed_batch(const std::vector<std::string>& texts);
  virtual MaskScore do_mask_score(const std::string& text, const std::vector<std::string>& candidates) = 0;
};

std::size_t count_sentinels(std::string_view text);

/// Mean over non-special tokens at one layer.
std::vector<double> mean_pool(const TokenEmbeddings& e, int layer);

/// Throws Error("multi_token_candidate") listing every offender.
void require_single_tokens(const MaskScore& score);

struct MaskRule {
  std::string contains;  // applies when the text contains this substring
  std::map<std::string, double> probabilities;
};

/// Scores the mock returns at the mask. Rules are tried in order before
/// the global table; unknown candidates get default_probability.
struct MaskTable {
  std::map<std::string, double> probabilities;
  std::set<std::string> multi_token;
  double default_probability = 0.0;
  std::vector<MaskRule> rules;

  double lookup(const std::string& text, const std::string& candidate) const;
  bool empty() const {
    return probabilities.empty() && multi_token.empty() && rules.empty() && default_probability == 0.0;
  }
};

MaskTable parse_mask_table(const Json& j);
MaskTable load_mask_table(const std::filesystem::path& path);

enum class MockMode { bag, positional };

std::string_view to_string(MockMode mode);
MockMode parse_mock_mode(std::string_view text);

struct MockConfig {
  MockMode mode = MockMode::bag;
  std::uint64_t seed = 0;
  int hidden_size = 32;
  int num_layers = 4;
  int max_tokens = 512;
  bool add_special_tokens = true;  // [CLS] ... [SEP]
  MaskTable table;  // empty: seeded hash of (text, candidate), uniform in (0.001, 0.999)
};

/// Whitespace-tokenizing provider whose vectors are seeded hashes of
/// (token, layer, dimension), plus the token index in positional mode.
class MockProvider : public Provider {
public:
  explicit MockProvider(MockConfig config);

  ProviderInfo info() override;
  /// The hashed value in [-1, 1] behind one embedding coordinate.
  double coordinate(std::string_view token, int index, int layer, int dim) const;

protected:
  TokenEmbeddings do_embed(const std::string& text) override;
  MaskScore do_mask_score(const std::string& text, const std::vector<std::string>& candidates) override;

private:
  MockConfig config_;
};

// Wire format. Field order is fixed so a parse/dump cycle is byte-stable.
Json to_json(const ProviderInfo& info);
ProviderInfo info_from_json(const Json& j);
Json to_json(const TokenEmbeddings& e);
TokenEmbeddings embeddings_from_json(const Json& j);
Json to_json(const MaskScore& s);
MaskScore mask_score_from_json(const Json& j);
Json error_json(std::string_view code, std::string_view message);

struct HttpOptions {
  int max_retries = 3;
  int backoff_ms = 100;  // doubled after each failed attempt
  int timeout_s = 60;
};

/// Client for the provider wire protocol at `base_url` (http://host:port).
std::unique_ptr<Provider> make_http_provider(const std::string& base_url, HttpOptions options = {});

/// Serves any provider over the wire protocol on a background thread.
class ProviderServer {
public:
  explicit ProviderServer(Provider& provider);
  ~ProviderServer();
  ProviderServer(const ProviderServer&) = delete;
  ProviderServer& operator=(const ProviderServer&) = delete;

  /// Binds and starts serving; port 0 picks a free port. Returns the port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ccprobe::provider
