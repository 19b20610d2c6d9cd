#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sfl/conv.hpp"
#include "sfl/log_bank.hpp"
#include "sfl/losses.hpp"
#include "sfl/volume.hpp"

namespace sfl {

inline constexpr int kImageChannels = 3;

// Hidden channel counts of the encoder/decoder. Defaults give the 3-32-16-32-3 network.
struct CaeWidths {
  int hidden1 = 32;
  int hidden2 = 16;
  int hidden3 = 32;
};

struct TrainConfig {
  double learning_rate = 0.02;
  double momentum = 0.5;
  double init_std = 0.02;
  int max_epochs = 2000;
  int mini_batch = 0;  // images per update; 0 means full batch
  std::uint64_t seed = 0;
  LossWeights weights;
  std::vector<double> scales = kDefaultScales;
  bool sfl_enabled = true;  // false trains on E_PL only; SFL is still measured
  int threads = 1;          // per-image workers inside a batch

  void validate() const;
};

/// Encoder/decoder stack followed by the fixed LoG bank.
///
/// `layers` holds the trainable convolutions in order (network layers 2..L);
/// the bank is the extra (L+1)-th layer and is never updated.
template <typename T>
struct CaeModel {
  std::vector<ConvLayer<T>> layers;
  LogBank<T> bank;

  int image_channels() const { return layers.front().in_channels; }
  // Channel chain, stride pairing and bank compatibility.
  void validate() const;
};

template <typename T>
struct ParamGrads {
  std::vector<T> weights;
  std::vector<T> biases;
};

// One entry per model layer, in layer order.
template <typename T>
using Gradients = std::vector<ParamGrads<T>>;

// Momentum velocities; entries for non-trainable layers stay empty.
template <typename T>
struct OptimizerState {
  std::vector<ParamGrads<T>> velocity;
};

template <typename T>
struct ForwardCache {
  Volume<T> input;                                   // f^1
  std::vector<Volume<T>> pre_activations;            // o^l, without bias
  std::vector<Volume<T>> activations;                // f^l
  std::vector<std::optional<Extent>> upsample_targets;  // per layer, set for stride half
  std::vector<Extent> skip_sizes;                    // inputs of stride-2 layers
  Volume<T> bank_recon;                              // bank applied to f^L
  Volume<T> bank_orig;                               // bank applied to f^1

  const Volume<T>& output() const { return activations.back(); }
};

template <typename T>
struct ModelAndState {
  CaeModel<T> model;
  OptimizerState<T> state;
};

// Zero-initialized gradient / velocity buffers matching the model.
template <typename T>
Gradients<T> zero_gradients(const CaeModel<T>& model);

template <typename T>
ModelAndState<T> build_cae(std::uint64_t seed, const TrainConfig& config,
                           const CaeWidths& widths = {});

template <typename T>
ForwardCache<T> forward(const CaeModel<T>& model, const Volume<T>& image,
                        const Volume<T>* bank_of_image = nullptr);

// f^L only, without the bank.
template <typename T>
Volume<T> reconstruct(const CaeModel<T>& model, const Volume<T>& image);

// Gradients of one image's share of the batch loss (outputs divided by batch_size).
template <typename T>
Gradients<T> backward(const CaeModel<T>& model, const ForwardCache<T>& cache,
                      const TrainConfig& config, int batch_size = 1);

template <typename T>
void sgd_momentum_step(CaeModel<T>& model, OptimizerState<T>& state, const Gradients<T>& grads,
                       const TrainConfig& config);

// Images plus their (fixed) bank responses, computed once.
template <typename T>
class TrainingSet {
 public:
  TrainingSet(std::vector<Volume<T>> images, const LogBank<T>& bank);

  std::size_t size() const { return images_.size(); }
  const Volume<T>& image(std::size_t i) const { return images_[i]; }
  const Volume<T>& bank_response(std::size_t i) const { return bank_responses_[i]; }

 private:
  std::vector<Volume<T>> images_;
  std::vector<Volume<T>> bank_responses_;
};

// Per-image losses, without touching the model.
template <typename T>
LossReport image_losses(const ForwardCache<T>& cache, const TrainConfig& config);

// Dataset-mean losses of the current model.
template <typename T>
LossReport evaluate(const CaeModel<T>& model, const TrainingSet<T>& set, const TrainConfig& config);

// One pass over the data in order; one momentum step per batch. Returns the
// dataset-mean losses measured before each batch's update.
template <typename T>
LossReport train_epoch(CaeModel<T>& model, OptimizerState<T>& state, const TrainingSet<T>& set,
                       const TrainConfig& config);

template <typename T>
LossReport train_epoch(CaeModel<T>& model, OptimizerState<T>& state,
                       std::span<const Volume<T>> dataset, const TrainConfig& config);

// Element-wise into += g.
template <typename T>
void accumulate(Gradients<T>& into, const Gradients<T>& g);

}  // namespace sfl
