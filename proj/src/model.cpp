#include "sfl/model.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <thread>

namespace sfl {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(init_std > 0.0) || !std::isfinite(init_std)) throw ConfigError("init std must be positive");
  if (max_epochs < 0) throw ConfigError("epoch count must be non-negative");
  if (mini_batch < 0) throw ConfigError("mini-batch size must be non-negative");
  if (threads < 1) throw ConfigError("thread count must be at least 1");
  weights.validate(kImageChannels, static_cast<int>(scales.size()));
}

template <typename T>
void CaeModel<T>::validate() const {
  if (layers.empty()) throw ConfigError("model has no layers");
  int open_downsamples = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].validate();
    if (!layers[i].trainable) throw ConfigError("only the bank layer may be non-trainable");
    if (i > 0 && layers[i].in_channels != layers[i - 1].out_channels) {
      throw ConfigError("layer " + std::to_string(i) + " expects " +
                        std::to_string(layers[i].in_channels) + " channels but receives " +
                        std::to_string(layers[i - 1].out_channels));
    }
    if (layers[i].stride == Stride::two) ++open_downsamples;
    if (layers[i].stride == Stride::half && open_downsamples > 0) --open_downsamples;
  }
  if (open_downsamples != 0) throw ConfigError("every stride-2 layer needs a matching stride-half layer");
  if (layers.back().out_channels != image_channels()) {
    throw ConfigError("model output channels do not match image channels");
  }
  if (bank.layer.in_channels != image_channels() || bank.layer.trainable) {
    throw ConfigError("filter bank does not match the model");
  }
}

namespace {

// Box-Muller on a 64-bit Mersenne Twister; the standard distributions are
// implementation-defined, this sequence is not.
class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace

template <typename T>
Gradients<T> zero_gradients(const CaeModel<T>& model) {
  Gradients<T> g(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (!model.layers[i].trainable) continue;
    g[i].weights.assign(model.layers[i].weights.size(), T(0));
    g[i].biases.assign(model.layers[i].biases.size(), T(0));
  }
  return g;
}

template <typename T>
ModelAndState<T> build_cae(std::uint64_t seed, const TrainConfig& config, const CaeWidths& widths) {
  config.validate();
  if (widths.hidden1 <= 0 || widths.hidden2 <= 0 || widths.hidden3 <= 0) {
    throw ConfigError("hidden widths must be positive");
  }
  const int c = kImageChannels;
  ModelAndState<T> ms;
  auto& layers = ms.model.layers;
  layers.emplace_back(c, widths.hidden1, 1, Stride::one, Activation::relu);
  layers.emplace_back(widths.hidden1, widths.hidden2, 1, Stride::two, Activation::relu);
  layers.emplace_back(widths.hidden2, widths.hidden3, 1, Stride::half, Activation::relu);
  layers.emplace_back(widths.hidden3, c, 1, Stride::one, Activation::tanh);

  GaussianSource gauss(seed);
  for (auto& layer : layers) {
    for (T& w : layer.weights) w = static_cast<T>(config.init_std * gauss.next());
  }
  ms.model.bank = build_bank<T>(config.scales, config.weights.subband, c);
  ms.model.validate();
  ms.state.velocity = zero_gradients(ms.model);
  return ms;
}

template <typename T>
ForwardCache<T> forward(const CaeModel<T>& model, const Volume<T>& image,
                        const Volume<T>* bank_of_image) {
  if (image.channels() != model.image_channels()) {
    throw ConfigError("forward: image has " + std::to_string(image.channels()) +
                      " channels, model expects " + std::to_string(model.image_channels()));
  }
  ForwardCache<T> cache;
  cache.input = image;
  cache.pre_activations.reserve(model.layers.size());
  cache.activations.reserve(model.layers.size());
  std::vector<Extent> open;
  const Volume<T>* current = &cache.input;
  for (const auto& layer : model.layers) {
    std::optional<Extent> target;
    if (layer.stride == Stride::two) {
      cache.skip_sizes.push_back(current->extent());
      open.push_back(current->extent());
    } else if (layer.stride == Stride::half && !open.empty()) {
      target = open.back();
      open.pop_back();
    }
    auto r = conv_forward(*current, layer, target);
    cache.pre_activations.push_back(std::move(r.pre));
    cache.activations.push_back(std::move(r.out));
    cache.upsample_targets.push_back(target);
    current = &cache.activations.back();
  }
  if (!cache.output().same_shape(image)) {
    throw ConfigError("forward: output " + shape_string(cache.output()) +
                      " does not match input " + shape_string(image));
  }
  cache.bank_recon = bank_forward(model.bank, cache.output());
  if (bank_of_image != nullptr) {
    if (bank_of_image->channels() != model.bank.bands() ||
        bank_of_image->extent() != image.extent()) {
      throw ConfigError("forward: precomputed bank response has the wrong shape");
    }
    cache.bank_orig = *bank_of_image;
  } else {
    cache.bank_orig = bank_forward(model.bank, image);
  }
  return cache;
}

template <typename T>
Volume<T> reconstruct(const CaeModel<T>& model, const Volume<T>& image) {
  if (image.channels() != model.image_channels()) {
    throw ConfigError("reconstruct: image has " + std::to_string(image.channels()) +
                      " channels, model expects " + std::to_string(model.image_channels()));
  }
  std::vector<Extent> open;
  Volume<T> current = image;
  for (const auto& layer : model.layers) {
    std::optional<Extent> target;
    if (layer.stride == Stride::two) {
      open.push_back(current.extent());
    } else if (layer.stride == Stride::half && !open.empty()) {
      target = open.back();
      open.pop_back();
    }
    current = conv_forward(current, layer, target).out;
  }
  return current;
}

template <typename T>
Gradients<T> backward(const CaeModel<T>& model, const ForwardCache<T>& cache,
                      const TrainConfig& config, int batch_size) {
  const std::size_t n = model.layers.size();
  if (cache.pre_activations.size() != n || cache.activations.size() != n ||
      cache.upsample_targets.size() != n) {
    throw InternalError("backward: forward cache does not match the model");
  }
  for (std::size_t l = 0; l < n; ++l) {
    if (cache.activations[l].channels() != model.layers[l].out_channels ||
        !cache.activations[l].same_shape(cache.pre_activations[l])) {
      throw InternalError("backward: forward cache shapes drifted at layer " + std::to_string(l));
    }
  }
  if (!cache.output().same_shape(cache.input) ||
      cache.bank_recon.channels() != model.bank.bands() ||
      !cache.bank_recon.same_shape(cache.bank_orig)) {
    throw InternalError("backward: forward cache output shapes drifted");
  }

  const std::size_t last = n - 1;
  const ConvLayer<T>& out_layer = model.layers[last];
  const Volume<T> z_last = add_bias(cache.pre_activations[last], out_layer.biases);
  const Volume<T> pl_term =
      pl_output_term(cache.output(), cache.input, config.weights.pixel, batch_size);

  Volume<T> delta;
  if (config.sfl_enabled) {
    const Volume<T> g_bank =
        sfl_output_gradient(cache.bank_recon, cache.bank_orig, config.weights.subband, batch_size);
    const Volume<T> sfl_back = conv_backward_input(cache.output(), model.bank.layer, g_bank);
    delta = fuse_gradients_at_L(sfl_back, pl_term, z_last, out_layer.activation);
  } else {
    const Volume<T> none(pl_term.channels(), pl_term.width(), pl_term.height());
    delta = fuse_gradients_at_L(none, pl_term, z_last, out_layer.activation);
  }

  Gradients<T> grads(n);
  for (std::size_t l = n; l-- > 0;) {
    const ConvLayer<T>& layer = model.layers[l];
    const Volume<T>& in = l == 0 ? cache.input : cache.activations[l - 1];
    const auto target = cache.upsample_targets[l];
    conv_backward_params(in, layer, delta, grads[l].weights, grads[l].biases, target);
    if (l == 0) break;
    Volume<T> g_in = conv_backward_input(in, layer, delta, target);
    const ConvLayer<T>& prev = model.layers[l - 1];
    const auto pre = cache.pre_activations[l - 1].data();
    auto gd = g_in.data();
    const std::size_t plane = cache.pre_activations[l - 1].plane_size();
    for (std::size_t i = 0; i < gd.size(); ++i) {
      gd[i] *= activate_derivative(pre[i] + prev.biases[i / plane], prev.activation);
    }
    delta = std::move(g_in);
  }
  return grads;
}

template <typename T>
void sgd_momentum_step(CaeModel<T>& model, OptimizerState<T>& state, const Gradients<T>& grads,
                       const TrainConfig& config) {
  if (grads.size() != model.layers.size() || state.velocity.size() != model.layers.size()) {
    throw InternalError("sgd_momentum_step: gradient or velocity count does not match the model");
  }
  const T lr = static_cast<T>(config.learning_rate);
  const T mu = static_cast<T>(config.momentum);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    ConvLayer<T>& layer = model.layers[l];
    if (!layer.trainable) continue;
    auto& v = state.velocity[l];
    const auto& g = grads[l];
    if (g.weights.size() != layer.weights.size() || g.biases.size() != layer.biases.size() ||
        v.weights.size() != layer.weights.size() || v.biases.size() != layer.biases.size()) {
      throw InternalError("sgd_momentum_step: shape mismatch at layer " + std::to_string(l));
    }
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      v.weights[i] = mu * v.weights[i] - lr * g.weights[i];
      layer.weights[i] += v.weights[i];
    }
    for (std::size_t i = 0; i < layer.biases.size(); ++i) {
      v.biases[i] = mu * v.biases[i] - lr * g.biases[i];
      layer.biases[i] += v.biases[i];
    }
  }
}

template <typename T>
void accumulate(Gradients<T>& into, const Gradients<T>& g) {
  if (into.size() != g.size()) throw InternalError("accumulate: layer count mismatch");
  for (std::size_t l = 0; l < g.size(); ++l) {
    if (into[l].weights.size() != g[l].weights.size() ||
        into[l].biases.size() != g[l].biases.size()) {
      throw InternalError("accumulate: shape mismatch");
    }
    for (std::size_t i = 0; i < g[l].weights.size(); ++i) into[l].weights[i] += g[l].weights[i];
    for (std::size_t i = 0; i < g[l].biases.size(); ++i) into[l].biases[i] += g[l].biases[i];
  }
}

template <typename T>
TrainingSet<T>::TrainingSet(std::vector<Volume<T>> images, const LogBank<T>& bank)
    : images_(std::move(images)) {
  bank_responses_.reserve(images_.size());
  for (const auto& im : images_) bank_responses_.push_back(bank_forward(bank, im));
}

template <typename T>
LossReport image_losses(const ForwardCache<T>& cache, const TrainConfig& config) {
  LossReport r;
  r.e_pl = pixel_loss(cache.output(), cache.input, config.weights.pixel);
  const SubbandLoss s = subband_loss(cache.bank_recon, cache.bank_orig, config.weights.subband);
  r.e_sfl_per_band = s.per_band;
  r.e_sfl_weighted = s.weighted;
  r.e_total = r.e_pl + r.e_sfl_weighted;
  return r;
}

namespace {

void add_report(LossReport& into, const LossReport& r) {
  into.e_pl += r.e_pl;
  if (into.e_sfl_per_band.empty()) into.e_sfl_per_band.assign(r.e_sfl_per_band.size(), 0.0);
  for (std::size_t c = 0; c < r.e_sfl_per_band.size(); ++c) {
    into.e_sfl_per_band[c] += r.e_sfl_per_band[c];
  }
  into.e_sfl_weighted += r.e_sfl_weighted;
}

void finish_report(LossReport& r, std::size_t count) {
  const double inv = 1.0 / static_cast<double>(count);
  r.e_pl *= inv;
  for (double& v : r.e_sfl_per_band) v *= inv;
  r.e_sfl_weighted *= inv;
  r.e_total = r.e_pl + r.e_sfl_weighted;
}

template <typename T>
struct ImageResult {
  LossReport losses;
  Gradients<T> grads;
};

// Runs fn(i) for i in [begin, end) on up to `threads` workers. Results are
// written to per-index slots, so scheduling order never affects values.
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, int threads, Fn&& fn) {
  const std::size_t count = end - begin;
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{begin};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < end; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace

template <typename T>
LossReport evaluate(const CaeModel<T>& model, const TrainingSet<T>& set, const TrainConfig& config) {
  if (set.size() == 0) throw ConfigError("evaluate: empty dataset");
  std::vector<LossReport> per_image(set.size());
  parallel_for(0, set.size(), config.threads, [&](std::size_t i) {
    per_image[i] = image_losses(forward(model, set.image(i), &set.bank_response(i)), config);
  });
  LossReport total;
  for (const auto& r : per_image) add_report(total, r);
  finish_report(total, set.size());
  return total;
}

template <typename T>
LossReport train_epoch(CaeModel<T>& model, OptimizerState<T>& state, const TrainingSet<T>& set,
                       const TrainConfig& config) {
  config.validate();
  if (set.size() == 0) throw ConfigError("train_epoch: empty dataset");
  const std::size_t n = set.size();
  const std::size_t batch =
      config.mini_batch > 0 ? std::min<std::size_t>(config.mini_batch, n) : n;

  LossReport total;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t stop = std::min(n, start + batch);
    const int batch_size = static_cast<int>(stop - start);
    std::vector<ImageResult<T>> results(stop - start);
    parallel_for(start, stop, config.threads, [&](std::size_t i) {
      const auto cache = forward(model, set.image(i), &set.bank_response(i));
      auto& slot = results[i - start];
      slot.losses = image_losses(cache, config);
      slot.grads = backward(model, cache, config, batch_size);
    });
    Gradients<T> grads = zero_gradients(model);
    for (const auto& r : results) {
      add_report(total, r.losses);
      accumulate(grads, r.grads);
    }
    sgd_momentum_step(model, state, grads, config);
  }
  finish_report(total, n);
  return total;
}

template <typename T>
LossReport train_epoch(CaeModel<T>& model, OptimizerState<T>& state,
                       std::span<const Volume<T>> dataset, const TrainConfig& config) {
  if (dataset.empty()) throw ConfigError("train_epoch: empty dataset");
  const TrainingSet<T> set(std::vector<Volume<T>>(dataset.begin(), dataset.end()), model.bank);
  return train_epoch(model, state, set, config);
}

#define SFL_INSTANTIATE_MODEL(T)                                                                 \
  template struct CaeModel<T>;                                                                   \
  template class TrainingSet<T>;                                                                 \
  template Gradients<T> zero_gradients(const CaeModel<T>&);                                      \
  template ModelAndState<T> build_cae(std::uint64_t, const TrainConfig&, const CaeWidths&);      \
  template ForwardCache<T> forward(const CaeModel<T>&, const Volume<T>&, const Volume<T>*);      \
  template Volume<T> reconstruct(const CaeModel<T>&, const Volume<T>&);                          \
  template Gradients<T> backward(const CaeModel<T>&, const ForwardCache<T>&, const TrainConfig&, \
                                 int);                                                           \
  template void sgd_momentum_step(CaeModel<T>&, OptimizerState<T>&, const Gradients<T>&,         \
                                  const TrainConfig&);                                           \
  template void accumulate(Gradients<T>&, const Gradients<T>&);                                  \
  template LossReport image_losses(const ForwardCache<T>&, const TrainConfig&);                  \
  template LossReport evaluate(const CaeModel<T>&, const TrainingSet<T>&, const TrainConfig&);   \
  template LossReport train_epoch(CaeModel<T>&, OptimizerState<T>&, const TrainingSet<T>&,       \
                                  const TrainConfig&);                                           \
  template LossReport train_epoch(CaeModel<T>&, OptimizerState<T>&, std::span<const Volume<T>>,  \
                                  const TrainConfig&);

SFL_INSTANTIATE_MODEL(float)
SFL_INSTANTIATE_MODEL(double)

#undef SFL_INSTANTIATE_MODEL

}  // namespace sfl
