#pragma once

#include <cstdio>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "modeldx/model.hpp"
#include "modeldx/sparse_data.hpp"

namespace modeldx::testing {

inline ScoredModel logistic_model(std::vector<double> w, double bias, double threshold = 0.5) {
  ScoredModel m;
  m.num_features = w.size();
  m.predictor = std::make_shared<LogisticModel>(std::move(w), bias);
  m.threshold = threshold;
  m.name = "test";
  return m;
}

inline ScoredModel function_model(std::size_t features, std::function<double(FeatureView)> fn,
                                  double threshold = 0.5) {
  ScoredModel m;
  m.num_features = features;
  m.predictor = std::make_shared<FunctionModel>(std::move(fn));
  m.threshold = threshold;
  m.name = "fn";
  return m;
}

inline std::vector<Feature> named_features(std::size_t n) {
  std::vector<Feature> out;
  for (std::size_t i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "f%zu", i);
    out.push_back({static_cast<FeatureIndex>(i), buf});
  }
  return out;
}

/// Items with independent Bernoulli(density) features and random labels.
inline SparseDataset random_dataset(std::size_t items, std::size_t features, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution on(density), coin(0.5);
  std::vector<Item> rows;
  for (std::size_t i = 0; i < items; ++i) {
    Item it;
    it.id = static_cast<ItemId>(i);
    for (std::size_t f = 0; f < features; ++f)
      if (on(rng)) it.active.push_back(static_cast<FeatureIndex>(f));
    it.label = coin(rng);
    rows.push_back(std::move(it));
  }
  return SparseDataset(named_features(features), std::move(rows));
}

}  // namespace modeldx::testing
