#pragma once

#include <random>
#include <vector>

#include "oracles.hpp"
#include "sfl/model.hpp"

namespace gradcheck {

struct Result {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t worst_layer = 0;
  std::size_t worst_index = 0;
  bool worst_is_bias = false;
};

// Thinned CAE in 64-bit with weights and biases large enough that every
// activation regime is exercised.
inline sfl::CaeModel<double> tiny_model(std::uint64_t seed, const sfl::TrainConfig& config,
                                        sfl::CaeWidths widths = {4, 2, 4}) {
  auto model = sfl::build_cae<double>(seed, config, widths).model;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& layer : model.layers) {
    for (auto& w : layer.weights) w = std::normal_distribution<double>(0.0, 0.3)(rng);
    for (auto& b : layer.biases) b = oracle::uniform(rng, -0.2, 0.2);
  }
  return model;
}

// Dataset-mean objective that `backward` differentiates.
inline double objective(const sfl::CaeModel<double>& model,
                        const std::vector<sfl::Volume<double>>& images,
                        const sfl::TrainConfig& config) {
  double total = 0.0;
  for (const auto& img : images) {
    const auto r = sfl::image_losses(sfl::forward(model, img), config);
    total += config.sfl_enabled ? r.e_total : r.e_pl;
  }
  return total / static_cast<double>(images.size());
}

inline sfl::Gradients<double> analytic(const sfl::CaeModel<double>& model,
                                       const std::vector<sfl::Volume<double>>& images,
                                       const sfl::TrainConfig& config) {
  auto grads = sfl::zero_gradients(model);
  const int n = static_cast<int>(images.size());
  for (const auto& img : images) {
    sfl::accumulate(grads, sfl::backward(model, sfl::forward(model, img), config, n));
  }
  return grads;
}

inline Result check(sfl::CaeModel<double> model, const std::vector<sfl::Volume<double>>& images,
                    const sfl::TrainConfig& config, double h = 1e-4) {
  const auto grads = analytic(model, images, config);
  auto f = [&] { return objective(model, images, config); };
  Result r;
  auto visit = [&](double& param, double g, std::size_t layer, std::size_t index, bool bias) {
    const double err = oracle::rel_err(g, oracle::central_diff(param, f, h));
    ++r.checked;
    if (err > r.max_rel_err) {
      r.max_rel_err = err;
      r.worst_layer = layer;
      r.worst_index = index;
      r.worst_is_bias = bias;
    }
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      visit(layer.weights[i], grads[l].weights[i], l, i, false);
    }
    for (std::size_t i = 0; i < layer.biases.size(); ++i) {
      visit(layer.biases[i], grads[l].biases[i], l, i, true);
    }
  }
  return r;
}

}  // namespace gradcheck
