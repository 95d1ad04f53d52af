#include "modeldx/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "modeldx/model.hpp"

namespace modeldx {

namespace {

std::string feature_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "feat_%04zu", i);
  return buf;
}

class ActiveSampler {
 public:
  ActiveSampler(std::size_t background, double mean_active) : mean_(mean_active), background_(background) {
    std::vector<double> popularity(background);
    for (std::size_t f = 0; f < background; ++f) popularity[f] = 1.0 / std::pow(static_cast<double>(f) + 5.0, 0.8);
    pick_ = std::discrete_distribution<std::size_t>(popularity.begin(), popularity.end());
  }

  FeatureSet draw(std::mt19937_64& rng) {
    if (background_ == 0) return {};
    std::poisson_distribution<std::size_t> count(mean_);
    const auto k = std::min(count(rng), background_ / 2);
    FeatureSet out;
    while (out.size() < k) {
      const auto f = static_cast<FeatureIndex>(pick_(rng));
      if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  double mean_;
  std::size_t background_;
  std::discrete_distribution<std::size_t> pick_;
};

std::vector<Feature> make_features(std::size_t n) {
  std::vector<Feature> features;
  features.reserve(n);
  for (std::size_t i = 0; i < n; ++i) features.push_back({static_cast<FeatureIndex>(i), feature_name(i)});
  return features;
}

}  // namespace

SyntheticData make_planted_logistic(const SyntheticConfig& config) {
  std::mt19937_64 rng(config.seed);
  const std::size_t planted = (config.frequent_noise_rate > 0 ? 1 : 0) + (config.strong_rate > 0 ? 1 : 0);
  if (config.features < planted + 1) throw DataError("too few features for the planted ones");
  const std::size_t background = config.features - planted;

  SyntheticData out;
  out.bias = config.bias;
  out.weights.assign(config.features, 0.0);
  std::normal_distribution<double> weight(0.0, config.weight_scale);
  for (std::size_t f = 0; f < background; ++f) out.weights[f] = weight(rng);

  auto features = make_features(config.features);
  FeatureIndex next = static_cast<FeatureIndex>(background);
  if (config.frequent_noise_rate > 0) {
    out.frequent_noise = next;
    features[next].name = "frequent_noise";
    ++next;
  }
  if (config.strong_rate > 0) {
    out.strong = next;
    features[next].name = "strong_signal";
    out.weights[next] = config.strong_weight;
    ++next;
  }

  ActiveSampler sampler(background, config.mean_active);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Item> items;
  items.reserve(config.items);
  for (std::size_t i = 0; i < config.items; ++i) {
    Item item;
    item.id = static_cast<ItemId>(i);
    item.active = sampler.draw(rng);
    if (out.frequent_noise && unit(rng) < config.frequent_noise_rate) item.active.push_back(*out.frequent_noise);
    if (out.strong && unit(rng) < config.strong_rate) item.active.push_back(*out.strong);
    double z = config.bias;
    for (auto f : item.active) z += out.weights[f];
    item.label = unit(rng) < sigmoid(z);
    items.push_back(std::move(item));
  }
  out.dataset = SparseDataset(std::move(features), std::move(items));
  return out;
}

SparseDataset make_fixed_rate(std::size_t items, std::size_t features, double mean_active, double positive_rate,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ActiveSampler sampler(features, mean_active);
  std::vector<Item> out(items);
  for (std::size_t i = 0; i < items; ++i) {
    out[i].id = static_cast<ItemId>(i);
    out[i].active = sampler.draw(rng);
  }
  std::vector<std::size_t> order(items);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto positives = static_cast<std::size_t>(std::llround(positive_rate * static_cast<double>(items)));
  for (std::size_t i = 0; i < positives && i < items; ++i) out[order[i]].label = true;
  return SparseDataset(make_features(features), std::move(out));
}

}  // namespace modeldx
