#include <cmath>

#include "ccprobe/error.hpp"
#include "ccprobe/probe.hpp"
#include "ccprobe/rng.hpp"
#include "doctest.h"

using namespace ccprobe;
using namespace ccprobe::probe;

namespace {

ProbeModel identity_model(std::vector<double> w, double b) {
  ProbeModel m;
  m.standardization.mean.assign(w.size(), 0.0);
  m.standardization.std.assign(w.size(), 1.0);
  m.weights = std::move(w);
  m.bias = b;
  return m;
}

std::vector<Example> two_blobs(std::uint64_t seed, int n, double gap) {
  Rng rng(seed);
  std::vector<Example> out;
  for (int i = 0; i < n; ++i) {
    Label l = i % 2 ? Label::positive : Label::negative;
    double cx = l == Label::positive ? gap : -gap;
    out.push_back({{cx + rng.uniform() * 2 - 1, 0.5 * cx + rng.uniform() * 2 - 1}, l, 0});
  }
  return out;
}

std::size_t errors(const ProbeModel& m, const std::vector<Example>& xs) {
  std::size_t e = 0;
  for (const auto& x : xs) e += predict(m, x.x) != x.label;
  return e;
}

}  // namespace

TEST_CASE("separable 1-D data is fit exactly") {
  std::vector<Example> xs;
  for (int i = 0; i < 100; ++i) {
    xs.push_back({{-1.0}, Label::negative, 0});
    xs.push_back({{1.0}, Label::positive, 0});
  }
  auto m = train_probe(xs, TrainOptions{});
  CHECK(evaluate(m, xs).overall == 1.0);
  CHECK(m.converged);
}

TEST_CASE("objective value and gradient") {
  // Single point at the origin of parameter space: loss log 2.
  auto o = logistic_objective({{1.0, 2.0}}, {1}, {0.0, 0.0, 0.0}, 1.0);
  CHECK(o.value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(o.gradient[0] == doctest::Approx(-0.5));
  CHECK(o.gradient[1] == doctest::Approx(-1.0));
  CHECK(o.gradient[2] == doctest::Approx(-0.5));
  // Regularization excludes the bias.
  auto r = logistic_objective({{0.0}}, {1}, {2.0, 0.0}, 1.0);
  CHECK(r.value == doctest::Approx(std::log(2.0) + 2.0));
  CHECK(r.gradient[0] == doctest::Approx(2.0));
  // Large margins stay finite.
  auto big = logistic_objective({{1.0}}, {-1}, {1000.0, 0.0}, 0.0);
  CHECK(big.value == doctest::Approx(1000.0));
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + rng.index(8), dim = 1 + rng.index(5);
    std::vector<std::vector<double>> z(n, std::vector<double>(dim));
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (auto& v : z[i]) v = rng.uniform() * 4 - 2;
      y[i] = rng.index(2) ? 1 : -1;
    }
    std::vector<double> p(dim + 1);
    for (auto& v : p) v = rng.uniform() * 2 - 1;
    auto g = logistic_objective(z, y, p, 1.0).gradient;
    double num = 0, den = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double h = 1e-6;
      auto hi = p, lo = p;
      hi[k] += h;
      lo[k] -= h;
      double fd = (logistic_objective(z, y, hi, 1.0).value - logistic_objective(z, y, lo, 1.0).value) / (2 * h);
      num += (fd - g[k]) * (fd - g[k]);
      den = std::max(den, std::max(std::abs(fd), std::abs(g[k])));
    }
    CHECK(std::sqrt(num) / den < 1e-5);
  }
}

TEST_CASE("loss never increases across accepted iterations") {
  auto xs = two_blobs(8, 60, 0.4);
  auto m = train_probe(xs, TrainOptions{});
  REQUIRE(m.loss_history.size() >= 2);
  for (std::size_t i = 1; i < m.loss_history.size(); ++i) CHECK(m.loss_history[i] <= m.loss_history[i - 1]);
  CHECK(m.converged);
}

TEST_CASE("decision boundary agrees with a brute-force grid separator") {
  const double pts[20][3] = {
      {-1.2, -0.8, 0}, {-0.9, -1.4, 0}, {-1.6, -0.3, 0}, {-0.4, -1.1, 0}, {-1.0, 0.2, 0},
      {-0.2, -0.6, 0}, {-1.8, -1.2, 0}, {0.1, -1.5, 0},  {-0.7, -0.1, 0}, {0.4, 0.1, 0},
      {1.1, 0.9, 1},   {0.8, 1.5, 1},   {1.7, 0.4, 1},   {0.3, 1.2, 1},   {1.2, -0.1, 1},
      {0.5, 0.6, 1},   {2.0, 1.1, 1},   {-0.1, 1.6, 1},  {0.9, 0.2, 1},   {-0.3, -0.2, 1}};
  std::vector<Example> xs;
  for (const auto& p : pts) xs.push_back({{p[0], p[1]}, p[2] > 0 ? Label::positive : Label::negative, 0});
  auto m = train_probe(xs, TrainOptions{});
  // Oracle: best linear separator on a lattice of directions and offsets, raw coordinates.
  std::size_t best = xs.size();
  for (int deg = 0; deg < 360; ++deg) {
    const double a = deg * M_PI / 180.0;
    for (int bi = -400; bi <= 400; ++bi) {
      const double b = bi * 0.01;
      std::size_t e = 0;
      for (const auto& x : xs) {
        const double s = std::cos(a) * x.x[0] + std::sin(a) * x.x[1] + b;
        e += (s > 0 ? Label::positive : Label::negative) != x.label;
      }
      best = std::min(best, e);
    }
  }
  MESSAGE("probe errors " << errors(m, xs) << ", grid optimum " << best);
  CHECK(best > 0);
  CHECK(errors(m, xs) <= best + 1);
}

TEST_CASE("scaling the inputs leaves predictions unchanged") {
  auto xs = two_blobs(5, 80, 0.3);
  auto scaled = xs;
  for (auto& x : scaled) {
    for (auto& v : x.x) v *= 37.5;
  }
  auto a = train_probe(xs, TrainOptions{});
  auto b = train_probe(scaled, TrainOptions{});
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(predict(a, xs[i].x) == predict(b, scaled[i].x));
}

TEST_CASE("zero-variance dimensions are harmless") {
  std::vector<Example> xs;
  for (int i = 0; i < 10; ++i) xs.push_back({{static_cast<double>(i), 4.0}, i < 5 ? Label::negative : Label::positive, 0});
  auto m = train_probe(xs, TrainOptions{});
  CHECK(m.standardization.std[1] == 1.0);
  CHECK(m.weights[1] == 0.0);
  CHECK(evaluate(m, xs).overall == 1.0);
}

TEST_CASE("training preconditions") {
  CHECK_THROWS_AS(train_probe({{{1.0}, Label::positive, 0}}, TrainOptions{}), Error);
  CHECK_THROWS_AS(train_probe({{{1.0}, Label::positive, 0}, {{2.0}, Label::positive, 0}}, TrainOptions{}), Error);
}

TEST_CASE("evaluate") {
  auto m = identity_model({1.0}, 0.0);
  std::vector<Example> right{{{1.0}, Label::positive, 3}, {{-1.0}, Label::negative, 4}};
  auto ev = evaluate(m, right);
  CHECK(ev.overall == 1.0);
  CHECK(ev.per_value.at(3) == 1.0);
  std::vector<Example> wrong{{{1.0}, Label::negative, 3}, {{-1.0}, Label::positive, 4}};
  CHECK(evaluate(m, wrong).overall == 0.0);
  std::vector<Example> mixed{{{1.0}, Label::positive, 7},
                             {{2.0}, Label::positive, 7},
                             {{-1.0}, Label::negative, 7},
                             {{-1.0}, Label::positive, 7},
                             {{5.0}, Label::positive, 9}};
  auto mv = evaluate(m, mixed);
  CHECK(mv.per_value.at(7) == 0.75);
  CHECK(mv.per_value.at(9) == 1.0);
  CHECK(mv.overall == doctest::Approx(0.8));
  // Ties go negative.
  CHECK(predict(m, {0.0}) == Label::negative);
  CHECK_THROWS_AS(evaluate(m, {}), Error);
}

TEST_CASE("coin-flip labels on noise vectors stay near chance") {
  provider::MockConfig cfg;
  cfg.seed = 99;
  provider::MockProvider mock(cfg);
  Rng rng(12);
  auto make = [&](int offset) {
    std::vector<Example> xs;
    for (int i = 0; i < 2000; ++i) {
      auto e = mock.embed("w" + std::to_string(offset + i));
      xs.push_back({provider::mean_pool(e, 2), i % 2 ? Label::positive : Label::negative, 0});
    }
    rng.shuffle(xs);  // labels carry no information about the vector
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i].label = i % 2 ? Label::positive : Label::negative;
    return xs;
  };
  auto train = make(0);
  auto test = make(100000);
  auto m = train_probe(train, TrainOptions{});
  auto acc = evaluate(m, test).overall;
  CHECK(acc >= 0.45);
  CHECK(acc <= 0.55);
}

TEST_CASE("layer sweep over the mock") {
  auto g = grammar::bundled_grammar("train");
  auto pool = dataset::artificial_pool(g, 400, 2);
  dataset::BuildOptions opt;
  opt.n_star = 3;
  auto train = dataset::build_feature_subset(pool, opt).dataset;
  opt.split = dataset::Split::test;
  opt.n_star = 2;
  auto test = dataset::build_feature_subset(dataset::artificial_pool(grammar::bundled_grammar("test"), 400, 3), opt)
                  .dataset;
  provider::MockProvider mock(provider::MockConfig{});

  auto cache_dir = std::filesystem::temp_directory_path() / "ccprobe_unit_cache";
  std::filesystem::remove_all(cache_dir);
  EmbeddingCache cache(cache_dir, "mock");
  SweepOptions so;
  so.cache = &cache;
  auto a = layer_sweep(train, test, mock, so);
  CHECK(a.layers.size() == 5);
  CHECK(a.cells.size() == 5);
  CHECK(a.source == "artificial");
  CHECK(cache.hits() == 0);
  auto b = layer_sweep(train, test, mock, so);
  CHECK(cache.hits() == train.items.size() + test.items.size());
  auto csv = matrix_csv(a, "config_hash=x seed=1");
  CHECK(csv == matrix_csv(b, "config_hash=x seed=1"));
  CHECK(csv.rfind("# config_hash=x seed=1\nlayer,", 0) == 0);
  for (std::size_t r = 0; r < a.layers.size(); ++r) {
    double weighted = 0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < a.values.size(); ++c) {
      weighted += a.cells[r][c] * static_cast<double>(a.value_counts.at(a.values[c]));
      n += a.value_counts.at(a.values[c]);
    }
    CHECK(a.overall[r] == doctest::Approx(weighted / static_cast<double>(n)).epsilon(1e-12));
  }
}
