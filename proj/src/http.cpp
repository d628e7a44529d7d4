// Everything that touches httplib lives in this file.
#include <chrono>
#include <thread>

#include "ccprobe/annotation_server.hpp"
#include "ccprobe/io.hpp"
#include "ccprobe/provider.hpp"
#include "httplib.h"

namespace ccprobe {

namespace {

using Json = nlohmann::ordered_json;

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(io::dump(body), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
  send_json(res, status, provider::error_json(code, message));
}

int status_for(const Error& e) {
  const auto& c = e.code();
  if (c == "not_found") return 404;
  if (c == "label_conflict") return 409;
  if (c == "token_limit") return 422;
  if (c == "invalid_request" || c == "invalid_label" || c == "multi_token_candidate") return 400;
  return 500;
}

// Runs `handler`, turning exceptions into protocol error bodies.
template <typename F>
void guarded(httplib::Response& res, F&& handler) {
  try {
    handler();
  } catch (const provider::ProviderError& e) {
    send_error(res, e.http_status() ? e.http_status() : status_for(e), e.code(), e.what());
  } catch (const Error& e) {
    send_error(res, status_for(e), e.code(), e.what());
  } catch (const Json::exception& e) {
    send_error(res, 400, "invalid_request", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

class BackgroundServer {
public:
  httplib::Server server;

  int start(const std::string& host, int port) {
    int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("bind_failed", "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
    return bound;
  }

  void listen(const std::string& host, int port) {
    if (!server.listen(host, port)) throw Error("bind_failed", "cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    server.stop();
    if (thread_.joinable()) thread_.join();
  }

  ~BackgroundServer() { stop(); }

private:
  std::thread thread_;
};

}  // namespace

namespace provider {

namespace {


class HttpProvider : public Provider {
public:
  HttpProvider(std::string base_url, HttpOptions options) : base_(std::move(base_url)), options_(options) {
    while (!base_.empty() && base_.back() == '/') base_.pop_back();
  }

  ProviderInfo info() override {
    std::lock_guard lock(info_mutex_);
    if (!info_) info_ = info_from_json(call("GET", "/v1/info", Json()));
    return *info_;
  }

protected:
  TokenEmbeddings do_embed(const std::string& text) override {
    return embeddings_from_json(call("POST", "/v1/embed", Json{{"text", text}}));
  }

  std::vector<TokenEmbeddings> do_embed_batch(const std::vector<std::string>& texts) override {
    Json items = Json::array();
    for (std::size_t i = 0; i < texts.size(); ++i) items.push_back(Json{{"id", std::to_string(i)}, {"text", texts[i]}});
    auto body = call("POST", "/v1/embed_batch", Json{{"items", std::move(items)}});
    std::vector<TokenEmbeddings> out(texts.size());
    std::vector<bool> filled(texts.size(), false);
    for (const auto& r : body.at("results")) {
      const auto id = std::stoul(r.at("id").get<std::string>());
      if (id >= out.size() || filled[id]) throw ProviderError("bad_response", "unexpected batch id", false);
      out[id] = embeddings_from_json(r);
      filled[id] = true;
    }
    for (bool f : filled) {
      if (!f) throw ProviderError("bad_response", "batch response is missing items", false);
    }
    return out;
  }

  MaskScore do_mask_score(const std::string& text, const std::vector<std::string>& candidates) override {
    return mask_score_from_json(call("POST", "/v1/mask_score", Json{{"text", text}, {"candidates", candidates}}));
  }

private:
  Json call(const std::string& method, const std::string& path, const Json& body) {
    int delay = options_.backoff_ms;
    for (int attempt = 0;; ++attempt) {
      // One client per call so concurrent callers never share a socket.
      httplib::Client client(base_);
      client.set_connection_timeout(options_.timeout_s, 0);
      client.set_read_timeout(options_.timeout_s, 0);
      client.set_write_timeout(options_.timeout_s, 0);
      auto result = method == "GET" ? client.Get(path) : client.Post(path, io::dump(body), "application/json");
      if (!result) {
        if (attempt < options_.max_retries) {
          std::this_thread::sleep_for(std::chrono::milliseconds(delay));
          delay *= 2;
          continue;
        }
        throw ProviderError("transport", base_ + path + ": " + httplib::to_string(result.error()) + " after " +
                                             std::to_string(attempt + 1) + " attempts",
                            true);
      }
      Json parsed;
      try {
        parsed = Json::parse(result->body);
      } catch (const Json::parse_error&) {
        throw ProviderError("bad_response", base_ + path + " returned non-JSON (HTTP " +
                                                std::to_string(result->status) + ")",
                            false, result->status);
      }
      if (result->status >= 400) {
        std::string code = "provider_error";
        std::string message = "HTTP " + std::to_string(result->status);
        if (parsed.contains("error")) {
          code = parsed["error"].value("code", code);
          message = parsed["error"].value("message", message);
        }
        throw ProviderError(code, message, false, result->status);
      }
      return parsed;
    }
  }

  std::string base_;
  HttpOptions options_;
  std::mutex info_mutex_;
  std::optional<ProviderInfo> info_;
};

}  // namespace

std::unique_ptr<Provider> make_http_provider(const std::string& base_url, HttpOptions options) {
  if (base_url.rfind("http://", 0) != 0) {
    throw Error("invalid_config", "provider endpoint must start with http://, got '" + base_url + "'");
  }
  return std::make_unique<HttpProvider>(base_url, options);
}

struct ProviderServer::Impl {
  Provider& provider;
  BackgroundServer bg;

  explicit Impl(Provider& p) : provider(p) {
    auto& s = bg.server;
    s.Get("/v1/info", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, to_json(provider.info())); });
    });
    s.Post("/v1/embed", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto body = Json::parse(req.body);
        send_json(res, 200, to_json(provider.embed(body.at("text").get<std::string>())));
      });
    });
    s.Post("/v1/embed_batch", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto body = Json::parse(req.body);
        std::vector<std::string> ids, texts;
        for (const auto& item : body.at("items")) {
          ids.push_back(item.at("id").get<std::string>());
          texts.push_back(item.at("text").get<std::string>());
        }
        auto embeddings = provider.embed_batch(texts);
        Json results = Json::array();
        for (std::size_t i = 0; i < ids.size(); ++i) {
          Json r{{"id", ids[i]}};
          const Json e = to_json(embeddings[i]);
          for (const auto& [k, v] : e.items()) r[k] = v;
          results.push_back(std::move(r));
        }
        send_json(res, 200, Json{{"results", std::move(results)}});
      });
    });
    s.Post("/v1/mask_score", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto body = Json::parse(req.body);
        auto score = provider.mask_score(body.at("text").get<std::string>(),
                                         body.at("candidates").get<std::vector<std::string>>());
        send_json(res, 200, to_json(score));
      });
    });
  }
};

ProviderServer::ProviderServer(Provider& provider) : impl_(std::make_unique<Impl>(provider)) {}
ProviderServer::~ProviderServer() = default;
int ProviderServer::start(const std::string& host, int port) { return impl_->bg.start(host, port); }
void ProviderServer::listen(const std::string& host, int port) { impl_->bg.listen(host, port); }
void ProviderServer::stop() { impl_->bg.stop(); }

}  // namespace provider

namespace annotation {

namespace {

Json summary_json(const PatternSummary& p) {
  return Json{{"pattern_key", p.pattern_key},
              {"size", p.size},
              {"label", to_string(p.label)},
              {"labeled_by", p.labeled_by},
              {"labeled_at", p.labeled_at}};
}

std::size_t size_param(const httplib::Request& req, const std::string& name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  try {
    return static_cast<std::size_t>(std::stoul(req.get_param_value(name)));
  } catch (const std::exception&) {
    throw Error("invalid_request", "parameter '" + name + "' must be a non-negative integer");
  }
}

}  // namespace

struct Server::Impl {
  Store& store;
  BackgroundServer bg;

  Impl(Store& st, const std::optional<std::filesystem::path>& static_dir) : store(st) {
    auto& s = bg.server;
    s.Get("/api/patterns", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::optional<corpus::GroupLabel> status;
        if (req.has_param("status") && req.get_param_value("status") != "all") {
          status = corpus::parse_group_label(req.get_param_value("status"));
        }
        Json list = Json::array();
        for (const auto& p : store.patterns(status, size_param(req, "limit", 20))) list.push_back(summary_json(p));
        send_json(res, 200, Json{{"patterns", std::move(list)}});
      });
    });
    s.Get(R"(/api/patterns/(.+)/examples)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string key = req.matches[1];
        Json examples = Json::array();
        for (const auto& c : store.examples(key, size_param(req, "n", 10))) examples.push_back(io::to_json(c));
        send_json(res, 200, Json{{"pattern_key", key}, {"examples", std::move(examples)}});
      });
    });
    s.Post(R"(/api/patterns/(.+)/label)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string key = req.matches[1];
        auto body = Json::parse(req.body);
        auto label = corpus::parse_group_label(body.at("label").get<std::string>());
        if (label == corpus::GroupLabel::unlabeled) throw Error("invalid_label", "cannot set a pattern to unlabeled");
        send_json(res, 200, summary_json(store.label(key, label, body.value("annotator", ""))));
      });
    });
    s.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        Json counts = Json::object();
        for (const auto& [k, v] : store.progress()) counts[k] = v;
        send_json(res, 200, counts);
      });
    });
    s.Get("/api/export", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        res.status = 200;
        res.set_content(store.export_jsonl(), "application/x-ndjson");
      });
    });
    if (static_dir) {
      if (!s.set_mount_point("/", static_dir->string())) {
        throw Error("missing_input", "static UI directory not found: " + static_dir->string());
      }
    }
  }
};

Server::Server(Store& store, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(store, static_dir)) {}
Server::~Server() = default;
int Server::start(const std::string& host, int port) { return impl_->bg.start(host, port); }
void Server::listen(const std::string& host, int port) { impl_->bg.listen(host, port); }
void Server::stop() { impl_->bg.stop(); }

}  // namespace annotation

}  // namespace ccprobe
