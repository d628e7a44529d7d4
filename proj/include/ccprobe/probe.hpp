#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ccprobe/dataset.hpp"
#include "ccprobe/provider.hpp"
#include "ccprobe/types.hpp"

namespace ccprobe::probe {

struct Example {
  std::vector<double> x;
  Label label = Label::positive;
  int feature_value = 0;
};

struct Standardization {
  std::vector<double> mean;
  std::vector<double> std;  // zero-variance dimensions get 1

  std::vector<double> apply(const std::vector<double>& x) const;
};

Standardization fit_standardization(const std::vector<std::vector<double>>& xs);

struct TrainOptions {
  double l2 = 1.0;
  double tolerance = 1e-6;  // on the gradient's max-norm
  int max_iterations = 1000;
};

struct ProbeModel {
  std::vector<double> weights;
  double bias = 0.0;
  Standardization standardization;
  int layer = -1;
  std::string feature;
  std::vector<double> loss_history;  // one entry per accepted iterate, starting at w = 0
  int iterations = 0;
  bool converged = false;
};

struct Objective {
  double value = 0.0;
  std::vector<double> gradient;  // d/dw..., then d/db
};

/// J(w, b) = (1/N) [ sum_i log(1 + exp(-y_i (w.z_i + b))) + (l2/2) |w|^2 ], y in {-1, +1}.
/// `params` holds w followed by b; the bias is not regularized.
Objective logistic_objective(const std::vector<std::vector<double>>& z, const std::vector<int>& y,
                             const std::vector<double>& params, double l2);

/// Full-batch gradient descent with Armijo backtracking on z-scored inputs.
/// The optimizer is deterministic; `seed` is recorded for provenance only.
ProbeModel train_probe(const std::vector<Example>& train, const TrainOptions& options, std::uint64_t seed = 0);

double decision_value(const ProbeModel& m, const std::vector<double>& x);
/// Positive iff the decision value is strictly above zero.
Label predict(const ProbeModel& m, const std::vector<double>& x);

struct Evaluation {
  double overall = 0.0;
  std::map<int, double> per_value;
  std::map<int, std::size_t> per_value_count;
};

Evaluation evaluate(const ProbeModel& m, const std::vector<Example>& test);

/// Pooled sentence vectors on disk, one file per (namespace, text hash)
/// holding every layer. Files are written via rename.
class EmbeddingCache {
public:
  EmbeddingCache(std::filesystem::path dir, std::string name_space);

  std::optional<std::vector<std::vector<double>>> get(const std::string& text) const;
  void put(const std::string& text, const std::vector<std::vector<double>>& pooled);
  std::size_t hits() const { return hits_; }

private:
  std::filesystem::path path_for(const std::string& text) const;

  std::filesystem::path dir_;
  mutable std::size_t hits_ = 0;
};

/// Mean-pooled vectors at every layer, fetched in batches, cache first.
std::vector<std::vector<std::vector<double>>> pooled_layers(provider::Provider& p, const std::vector<std::string>& texts,
                                                            EmbeddingCache* cache = nullptr,
                                                            std::size_t batch_size = 64);

struct LayerAccuracyMatrix {
  std::vector<int> layers;
  std::vector<int> values;
  std::vector<std::vector<double>> cells;  // [layer][value index]; NaN where a value has no test items
  std::vector<double> overall;
  std::map<int, std::size_t> value_counts;
  std::string model;
  std::string feature;
  std::string source;
};

struct SweepOptions {
  TrainOptions train;
  std::uint64_t seed = 0;
  EmbeddingCache* cache = nullptr;
  std::size_t batch_size = 64;
};

LayerAccuracyMatrix layer_sweep(const dataset::ProbeDataset& train, const dataset::ProbeDataset& test,
                                provider::Provider& provider, const SweepOptions& options);

/// Rows are layers, columns feature values then "overall". The first line
/// is a comment carrying `header` (config hash, seed).
std::string matrix_csv(const LayerAccuracyMatrix& m, const std::string& header);
provider::Json matrix_json(const LayerAccuracyMatrix& m, const provider::Json& meta);

}  // namespace ccprobe::probe
