#include "ccprobe/probe.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "ccprobe/error.hpp"
#include "ccprobe/io.hpp"
#include "ccprobe/rng.hpp"

namespace ccprobe::probe {

std::vector<double> Standardization::apply(const std::vector<double>& x) const {
  if (x.size() != mean.size()) throw Error("dimension_mismatch", "vector size differs from the training data");
  std::vector<double> z(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) z[d] = (x[d] - mean[d]) / std[d];
  return z;
}

Standardization fit_standardization(const std::vector<std::vector<double>>& xs) {
  Standardization s;
  const std::size_t dim = xs.front().size();
  const double n = static_cast<double>(xs.size());
  s.mean.assign(dim, 0.0);
  s.std.assign(dim, 0.0);
  for (const auto& x : xs) {
    for (std::size_t d = 0; d < dim; ++d) s.mean[d] += x[d];
  }
  for (auto& m : s.mean) m /= n;
  for (const auto& x : xs) {
    for (std::size_t d = 0; d < dim; ++d) s.std[d] += (x[d] - s.mean[d]) * (x[d] - s.mean[d]);
  }
  for (auto& v : s.std) {
    v = std::sqrt(v / n);
    if (!(v > 1e-12)) v = 1.0;
  }
  return s;
}

namespace {

// log(1 + exp(-m)) without overflow.
double softplus_neg(double m) { return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m)); }

// d/dm log(1 + exp(-m)) = -1 / (1 + exp(m)).
double softplus_neg_grad(double m) {
  if (m > 0) {
    double e = std::exp(-m);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(m));
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

Objective logistic_objective(const std::vector<std::vector<double>>& z, const std::vector<int>& y,
                             const std::vector<double>& params, double l2) {
  const std::size_t dim = params.size() - 1;
  const double n = static_cast<double>(z.size());
  Objective out;
  out.gradient.assign(params.size(), 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    double s = params[dim];
    for (std::size_t d = 0; d < dim; ++d) s += params[d] * z[i][d];
    const double m = y[i] * s;
    loss += softplus_neg(m);
    const double g = softplus_neg_grad(m) * y[i];
    for (std::size_t d = 0; d < dim; ++d) out.gradient[d] += g * z[i][d];
    out.gradient[dim] += g;
  }
  double reg = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    reg += params[d] * params[d];
    out.gradient[d] += l2 * params[d];
  }
  out.value = (loss + 0.5 * l2 * reg) / n;
  for (auto& g : out.gradient) g /= n;
  return out;
}

ProbeModel train_probe(const std::vector<Example>& train, const TrainOptions& options, std::uint64_t seed) {
  (void)seed;
  if (train.size() < 2) throw Error("too_few_examples", "training needs at least 2 examples");
  std::size_t positives = 0;
  for (const auto& e : train) positives += e.label == Label::positive;
  if (positives == 0 || positives == train.size()) throw Error("single_class", "training data has only one class");

  std::vector<std::vector<double>> xs;
  xs.reserve(train.size());
  for (const auto& e : train) xs.push_back(e.x);
  for (const auto& x : xs) {
    if (x.size() != xs.front().size()) throw Error("dimension_mismatch", "training vectors differ in size");
  }

  ProbeModel model;
  model.standardization = fit_standardization(xs);
  std::vector<std::vector<double>> z;
  z.reserve(xs.size());
  for (const auto& x : xs) z.push_back(model.standardization.apply(x));
  std::vector<int> y;
  for (const auto& e : train) y.push_back(e.label == Label::positive ? 1 : -1);

  std::vector<double> params(xs.front().size() + 1, 0.0);
  auto current = logistic_objective(z, y, params, options.l2);
  model.loss_history.push_back(current.value);
  double step = 1.0;
  for (int it = 0; it < options.max_iterations; ++it) {
    if (max_abs(current.gradient) <= options.tolerance) {
      model.converged = true;
      break;
    }
    double g2 = 0.0;
    for (double g : current.gradient) g2 += g * g;
    step = std::min(step * 2.0, 1e6);
    std::vector<double> trial(params.size());
    Objective next;
    for (;;) {
      for (std::size_t k = 0; k < params.size(); ++k) trial[k] = params[k] - step * current.gradient[k];
      next = logistic_objective(z, y, trial, options.l2);
      if (next.value <= current.value - 0.5 * step * g2) break;
      step *= 0.5;
      if (step < 1e-20) break;
    }
    if (!(next.value <= current.value)) break;  // no descent left at machine precision
    params = std::move(trial);
    current = std::move(next);
    model.loss_history.push_back(current.value);
    model.iterations = it + 1;
  }
  if (!model.converged && max_abs(current.gradient) <= options.tolerance) model.converged = true;
  model.weights.assign(params.begin(), params.end() - 1);
  model.bias = params.back();
  return model;
}

double decision_value(const ProbeModel& m, const std::vector<double>& x) {
  auto z = m.standardization.apply(x);
  double s = m.bias;
  for (std::size_t d = 0; d < z.size(); ++d) s += m.weights[d] * z[d];
  return s;
}

Label predict(const ProbeModel& m, const std::vector<double>& x) {
  return decision_value(m, x) > 0.0 ? Label::positive : Label::negative;
}

Evaluation evaluate(const ProbeModel& m, const std::vector<Example>& test) {
  if (test.empty()) throw Error("empty_test_set", "evaluation needs at least one example");
  Evaluation ev;
  std::size_t correct = 0;
  std::map<int, std::size_t> correct_by_value;
  for (const auto& e : test) {
    const bool ok = predict(m, e.x) == e.label;
    correct += ok;
    correct_by_value[e.feature_value] += ok;
    ev.per_value_count[e.feature_value]++;
  }
  ev.overall = static_cast<double>(correct) / static_cast<double>(test.size());
  for (const auto& [v, n] : ev.per_value_count) {
    ev.per_value[v] = static_cast<double>(correct_by_value[v]) / static_cast<double>(n);
  }
  return ev;
}

EmbeddingCache::EmbeddingCache(std::filesystem::path dir, std::string name_space)
    : dir_(std::move(dir) / name_space) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path EmbeddingCache::path_for(const std::string& text) const {
  char name[32];
  std::snprintf(name, sizeof name, "%016llx.json", static_cast<unsigned long long>(fnv1a(text)));
  return dir_ / name;
}

std::optional<std::vector<std::vector<double>>> EmbeddingCache::get(const std::string& text) const {
  auto path = path_for(text);
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    auto j = io::Json::parse(io::read_file(path));
    if (j.at("text").get<std::string>() != text) return std::nullopt;  // hash collision
    ++hits_;
    return j.at("layers").get<std::vector<std::vector<double>>>();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void EmbeddingCache::put(const std::string& text, const std::vector<std::vector<double>>& pooled) {
  io::write_file_atomic(path_for(text), io::dump(io::Json{{"text", text}, {"layers", pooled}}));
}

std::vector<std::vector<std::vector<double>>> pooled_layers(provider::Provider& p, const std::vector<std::string>& texts,
                                                            EmbeddingCache* cache, std::size_t batch_size) {
  std::vector<std::vector<std::vector<double>>> out(texts.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (cache) {
      if (auto hit = cache->get(texts[i])) {
        out[i] = std::move(*hit);
        continue;
      }
    }
    missing.push_back(i);
  }
  for (std::size_t start = 0; start < missing.size(); start += batch_size) {
    const std::size_t end = std::min(missing.size(), start + batch_size);
    std::vector<std::string> batch;
    for (std::size_t k = start; k < end; ++k) batch.push_back(texts[missing[k]]);
    auto embeddings = p.embed_batch(batch);
    for (std::size_t k = start; k < end; ++k) {
      const auto& e = embeddings[k - start];
      auto& layers = out[missing[k]];
      for (std::size_t l = 0; l < e.layers.size(); ++l) layers.push_back(provider::mean_pool(e, static_cast<int>(l)));
      if (cache) cache->put(texts[missing[k]], layers);
    }
  }
  return out;
}

LayerAccuracyMatrix layer_sweep(const dataset::ProbeDataset& train, const dataset::ProbeDataset& test,
                                provider::Provider& provider, const SweepOptions& options) {
  if (train.items.empty() || test.items.empty()) throw Error("empty_dataset", "layer sweep needs both splits");
  const auto info = provider.info();
  std::vector<std::string> train_texts, test_texts;
  for (const auto& it : train.items) train_texts.push_back(it.text);
  for (const auto& it : test.items) test_texts.push_back(it.text);
  auto train_vecs = pooled_layers(provider, train_texts, options.cache, options.batch_size);
  auto test_vecs = pooled_layers(provider, test_texts, options.cache, options.batch_size);

  LayerAccuracyMatrix m;
  m.model = info.name;
  m.feature = std::string(to_string(train.spec.feature));
  m.source = train.provenance;
  for (const auto& it : test.items) m.value_counts[it.feature_value]++;
  for (const auto& [v, n] : m.value_counts) m.values.push_back(v);

  for (int layer = 0; layer <= info.num_layers; ++layer) {
    auto examples = [&](const dataset::ProbeDataset& d, const auto& vecs) {
      std::vector<Example> out;
      for (std::size_t i = 0; i < d.items.size(); ++i) {
        if (static_cast<int>(vecs[i].size()) <= layer) {
          throw Error("provider_shape", "provider returned " + std::to_string(vecs[i].size()) + " layers, expected " +
                                            std::to_string(info.num_layers + 1));
        }
        out.push_back({vecs[i][static_cast<std::size_t>(layer)], d.items[i].label, d.items[i].feature_value});
      }
      return out;
    };
    ProbeModel model;
    try {
      model = train_probe(examples(train, train_vecs), options.train, options.seed);
    } catch (const Error& e) {
      throw Error(e.code(), "layer " + std::to_string(layer) + ": " + e.what());
    }
    model.layer = layer;
    model.feature = m.feature;
    auto ev = evaluate(model, examples(test, test_vecs));
    m.layers.push_back(layer);
    m.overall.push_back(ev.overall);
    std::vector<double> row;
    for (int v : m.values) row.push_back(ev.per_value.count(v) ? ev.per_value.at(v) : std::nan(""));
    m.cells.push_back(std::move(row));
  }
  return m;
}

namespace {

std::string fixed(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string matrix_csv(const LayerAccuracyMatrix& m, const std::string& header) {
  std::string out = "# " + header + "\nlayer";
  for (int v : m.values) out += "," + std::to_string(v);
  out += ",overall\n";
  for (std::size_t r = 0; r < m.layers.size(); ++r) {
    out += std::to_string(m.layers[r]);
    for (double c : m.cells[r]) out += "," + fixed(c);
    out += "," + fixed(m.overall[r]) + "\n";
  }
  return out;
}

provider::Json matrix_json(const LayerAccuracyMatrix& m, const provider::Json& meta) {
  provider::Json cells = provider::Json::array();
  for (const auto& row : m.cells) {
    provider::Json r = provider::Json::array();
    for (double c : row) r.push_back(std::isnan(c) ? provider::Json(nullptr) : provider::Json(c));
    cells.push_back(std::move(r));
  }
  provider::Json counts = provider::Json::object();
  for (const auto& [v, n] : m.value_counts) counts[std::to_string(v)] = n;
  return provider::Json{{"meta", meta},
                        {"model", m.model},
                        {"feature", m.feature},
                        {"source", m.source},
                        {"layer0", "static embeddings"},
                        {"layers", m.layers},
                        {"values", m.values},
                        {"value_counts", std::move(counts)},
                        {"cells", std::move(cells)},
                        {"overall", m.overall}};
}

}  // namespace ccprobe::probe
