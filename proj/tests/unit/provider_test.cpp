#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "ccprobe/annotation_server.hpp"
#include "ccprobe/io.hpp"
#include "ccprobe/provider.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "httplib.h"

using namespace ccprobe;
using namespace ccprobe::provider;

namespace {

MockConfig mock_config(MockMode mode) {
  MockConfig c;
  c.mode = mode;
  c.seed = 17;
  c.table = load_mask_table(testing::fixture_path("mask_table.json"));
  return c;
}

}  // namespace

TEST_CASE("mock embeddings") {
  MockProvider mock(mock_config(MockMode::bag));
  auto info = mock.info();
  CHECK(info.num_layers == 4);
  CHECK(info.hidden_size == 32);
  auto e = mock.embed("a b");
  REQUIRE(e.tokens == std::vector<std::string>{"[CLS]", "a", "b", "[SEP]"});
  CHECK(e.special == std::vector<bool>{true, false, false, true});
  REQUIRE(e.layers.size() == 5);
  for (const auto& layer : e.layers) {
    REQUIRE(layer.size() == 4);
    for (const auto& v : layer) {
      REQUIRE(v.size() == 32);
      for (double x : v) CHECK((x >= -1.0 && x <= 1.0));
    }
  }
  CHECK(e.layers[2][1][5] == mock.coordinate("a", 1, 2, 5));
  CHECK(io::dump(to_json(mock.embed("a b"))) == io::dump(to_json(e)));
  CHECK_THROWS_AS(mock.embed(""), ProviderError);
  CHECK_THROWS_AS(mock.embed("   "), ProviderError);

  MockConfig small = mock_config(MockMode::bag);
  small.max_tokens = 3;
  MockProvider limited(small);
  try {
    limited.embed("a b");
    FAIL("expected token_limit");
  } catch (const ProviderError& err) {
    CHECK(err.code() == "token_limit");
    CHECK_FALSE(err.retryable());
  }
}

TEST_CASE("bag mode pools reorderings identically; positional mode does not") {
  MockProvider bag(mock_config(MockMode::bag));
  MockProvider positional(mock_config(MockMode::positional));
  const std::string pos = "The harder the two cats fight";
  const std::string neg = "The harder two fight the cats";
  for (int layer = 0; layer <= 4; ++layer) {
    auto a = mean_pool(bag.embed(pos), layer);
    auto b = mean_pool(bag.embed(neg), layer);
    // Summation order differs, so allow rounding.
    for (std::size_t d = 0; d < a.size(); ++d) CHECK(a[d] == doctest::Approx(b[d]).epsilon(1e-12));
    CHECK(mean_pool(positional.embed(pos), layer) != mean_pool(positional.embed(neg), layer));
  }
  CHECK(bag.coordinate("x", 0, 1, 1) == bag.coordinate("x", 9, 1, 1));
  CHECK(positional.coordinate("x", 0, 1, 1) != positional.coordinate("x", 9, 1, 1));
}

TEST_CASE("mean_pool") {
  TokenEmbeddings e;
  e.tokens = {"x", "y"};
  e.special = {false, false};
  e.layers = {{{1, 3}, {3, 5}}};
  CHECK(mean_pool(e, 0) == std::vector<double>{2, 4});
  e.tokens = {"x"};
  e.special = {false};
  e.layers = {{{1, 3}}};
  CHECK(mean_pool(e, 0) == std::vector<double>{1, 3});
  e.tokens = {"[CLS]", "a", "b", "c", "[SEP]"};
  e.special = {true, false, false, false, true};
  e.layers = {{{100, 100}, {1, 0}, {0, 1}, {2, 2}, {-50, 7}}};
  CHECK(mean_pool(e, 0) == std::vector<double>{1, 1});
  CHECK_THROWS_AS(mean_pool(e, 1), Error);
  e.special = {true, true, true, true, true};
  CHECK_THROWS_AS(mean_pool(e, 0), Error);
}

TEST_CASE("mask scoring") {
  MockProvider mock(mock_config(MockMode::bag));
  auto s = mock.mask_score("Terry is [MASK] than John.", {"faster", "slower", "quicker"});
  CHECK(s.probabilities.at("faster") == 0.6);
  CHECK(s.probabilities.at("slower") == 0.2);
  CHECK(s.probabilities.at("quicker") == 0.01);
  CHECK_NOTHROW(require_single_tokens(s));
  CHECK_THROWS_AS(mock.mask_score("[MASK] and [MASK]", {"faster"}), ProviderError);
  CHECK_THROWS_AS(mock.mask_score("no sentinel", {"faster"}), ProviderError);
  CHECK_THROWS_AS(mock.mask_score("a [MASK]", {}), ProviderError);

  auto multi = mock.mask_score("a [MASK]", {"faster", "more quickly"});
  CHECK_FALSE(multi.single_token.at("more quickly"));
  CHECK_THROWS_WITH_AS(require_single_tokens(multi), doctest::Contains("more quickly"), Error);

  auto table = parse_mask_table(Json::parse(R"({"probabilities": {"a": 0.5},
      "rules": [{"contains": "blue", "probabilities": {"a": 0.9}}]})"));
  CHECK(table.lookup("the blue one", "a") == 0.9);
  CHECK(table.lookup("the red one", "a") == 0.5);
  CHECK(table.lookup("the red one", "b") == 0.0);
  CHECK_THROWS_AS(parse_mask_table(Json::parse(R"({"probabilities": {"a": 1.5}})")), Error);

  // Without a table the mock hashes (text, candidate) into (0.001, 0.999).
  MockProvider bare(MockConfig{});
  auto h1 = bare.mask_score("Terry is [MASK] than John.", {"faster", "slower"});
  auto h2 = bare.mask_score("Terry is [MASK] than John.", {"faster", "slower"});
  auto h3 = bare.mask_score("Mary is [MASK] than John.", {"faster", "slower"});
  CHECK(h1.probabilities == h2.probabilities);
  CHECK(h1.probabilities != h3.probabilities);
  for (const auto& [c, p] : h1.probabilities) {
    CHECK(p > 0.001);
    CHECK(p < 0.999);
  }
}

TEST_CASE("wire bodies re-serialize byte-identically") {
  MockProvider mock(mock_config(MockMode::positional));
  auto e = to_json(mock.embed("The bigger the eighteen sheep date ."));
  auto text = io::dump(e);
  CHECK(io::dump(Json::parse(text)) == text);
  CHECK(io::dump(to_json(embeddings_from_json(Json::parse(text)))) == text);

  auto m = io::dump(to_json(mock.mask_score("x [MASK]", {"slower", "faster"})));
  CHECK(io::dump(to_json(mask_score_from_json(Json::parse(m)))) == m);
  auto i = io::dump(to_json(mock.info()));
  CHECK(i == R"({"name":"mock-positional","num_layers":4,"hidden_size":32,"mask_token":"[MASK]"})");
  CHECK(io::dump(to_json(info_from_json(Json::parse(i)))) == i);
  CHECK_THROWS_AS(embeddings_from_json(Json::parse(R"({"tokens":["a"],"special":[],"layers":[]})")), ProviderError);
}

TEST_CASE("http client against the provider server matches in-process calls") {
  MockProvider mock(mock_config(MockMode::positional));
  ProviderServer server(mock);
  int port = server.start();
  auto remote = make_http_provider("http://127.0.0.1:" + std::to_string(port));
  CHECK(io::dump(to_json(remote->info())) == io::dump(to_json(mock.info())));
  const std::string text = "The harder the two cats fight";
  CHECK(io::dump(to_json(remote->embed(text))) == io::dump(to_json(mock.embed(text))));
  auto batch = remote->embed_batch({text, "a b", "c"});
  REQUIRE(batch.size() == 3);
  CHECK(io::dump(to_json(batch[1])) == io::dump(to_json(mock.embed("a b"))));
  auto s = remote->mask_score("x [MASK] y", {"faster", "slower"});
  CHECK(s.probabilities.at("faster") == 0.6);

  // The server validates too; talk to it directly to bypass client checks.
  httplib::Client raw("127.0.0.1", port);
  auto res = raw.Post("/v1/mask_score", R"({"text":"[MASK][MASK]","candidates":["a"]})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(Json::parse(res->body)["error"]["code"] == "invalid_request");
  res = raw.Post("/v1/embed", "not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);

  // Concurrent in-flight requests.
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      auto e = remote->embed("word" + std::to_string(t) + " x");
      if (e.tokens[1] == "word" + std::to_string(t)) ++ok;
    });
  }
  for (auto& th : threads) th.join();
  CHECK(ok == 4);
  server.stop();
}

TEST_CASE("transport failures are retried then reported as retryable") {
  int port;
  {
    MockProvider mock(mock_config(MockMode::bag));
    ProviderServer server(mock);
    port = server.start();
    server.stop();
  }
  HttpOptions opts;
  opts.backoff_ms = 1;
  opts.timeout_s = 2;
  auto remote = make_http_provider("http://127.0.0.1:" + std::to_string(port), opts);
  try {
    remote->info();
    FAIL("expected transport error");
  } catch (const ProviderError& e) {
    CHECK(e.code() == "transport");
    CHECK(e.retryable());
    CHECK(std::string(e.what()).find("4 attempts") != std::string::npos);
  }
  CHECK_THROWS_AS(make_http_provider("ftp://x"), Error);
}

TEST_CASE("annotation api") {
  auto dir = std::filesystem::temp_directory_path() / "ccprobe_unit_api";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir / "ui");
  { std::ofstream(dir / "ui" / "index.html") << "<html>ui</html>"; }
  auto read = corpus::read_corpus_file(testing::fixture_path("corpus_examples.tsv"));
  auto cands = corpus::scan_candidates(read.sentences, corpus::ScanOptions{});

  std::vector<std::string> labeled;
  {
    annotation::Store store(cands, 2, dir / "labels.jsonl");
    annotation::Server server(store, dir / "ui");
    int port = server.start();
    httplib::Client c("127.0.0.1", port);
    auto res = c.Get("/api/patterns?status=unlabeled&limit=3");
    REQUIRE(res);
    auto list = Json::parse(res->body)["patterns"];
    REQUIRE(list.size() == 3);
    for (auto& p : list) {
      auto key = p["pattern_key"].get<std::string>();
      auto path = "/api/patterns/" + httplib::detail::encode_url(key);
      auto ex = c.Get(path + "/examples?n=1");
      REQUIRE(ex);
      CHECK(ex->status == 200);
      CHECK(Json::parse(ex->body)["examples"].size() == 1);
      auto post = c.Post(path + "/label", R"({"label":"positive","annotator":"a1"})", "application/json");
      REQUIRE(post);
      CHECK(post->status == 200);
      auto again = c.Post(path + "/label", R"({"label":"negative","annotator":"a2"})", "application/json");
      CHECK(again->status == 409);
      labeled.push_back(key);
    }
    auto bad = c.Post("/api/patterns/nope/label", R"({"label":"positive"})", "application/json");
    CHECK(bad->status == 404);
    auto invalid = c.Post("/api/patterns/" + httplib::detail::encode_url(labeled[0]) + "/label",
                          R"({"label":"maybe"})", "application/json");
    CHECK(invalid->status == 400);
    auto progress = Json::parse(c.Get("/api/progress")->body);
    CHECK(progress["positive"] == 3);
    CHECK(progress["unlabeled"] == 8);
    auto ui = c.Get("/index.html");
    REQUIRE(ui);
    CHECK(ui->body == "<html>ui</html>");
    server.stop();
  }
  annotation::Store restarted(cands, 2, dir / "labels.jsonl");
  annotation::Server server(restarted);
  int port = server.start();
  httplib::Client c("127.0.0.1", port);
  auto exported = c.Get("/api/export");
  REQUIRE(exported);
  std::istringstream lines(exported->body);
  std::vector<std::string> keys;
  for (std::string line; std::getline(lines, line);) keys.push_back(Json::parse(line)["pattern_key"]);
  std::sort(keys.begin(), keys.end());
  std::sort(labeled.begin(), labeled.end());
  CHECK(keys == labeled);
}
