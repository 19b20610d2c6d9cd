#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "sfl/volume.hpp"

namespace sfl {

enum class Stride : std::uint8_t { one = 0, two = 1, half = 2 };
enum class Activation : std::uint8_t { relu = 0, tanh = 1, identity = 2 };

// Border handling for taps that fall outside the input. Trainable layers use
// zero padding; the fixed filter bank replicates edge pixels so that constant
// images stay in its null space.
enum class Padding : std::uint8_t { zero = 0, replicate = 1 };

std::string_view to_string(Stride s);
std::string_view to_string(Activation a);
std::string_view to_string(Padding p);

/// One convolution layer: o(c,x,y) = sum_{c',a,b} f(c', x+a, y+b) w(c,c',a,b),
/// followed by f' = act(o + bias(c)).
///
/// Weights are stored in (c, c', alpha, beta) order, alpha being the
/// horizontal offset, with alpha and beta running over [-s, s].
template <typename T>
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int half_size = 0;
  Stride stride = Stride::one;
  Activation activation = Activation::identity;
  Padding padding = Padding::zero;
  bool trainable = true;
  std::vector<T> weights;
  std::vector<T> biases;

  ConvLayer() = default;
  ConvLayer(int in_ch, int out_ch, int half, Stride st, Activation act,
            Padding pad = Padding::zero, bool train = true);

  int side() const { return 2 * half_size + 1; }

  std::size_t weight_index(int c, int cp, int alpha, int beta) const {
    const int k = side();
    return ((static_cast<std::size_t>(c) * in_channels + cp) * k + (alpha + half_size)) * k +
           (beta + half_size);
  }
  T& weight(int c, int cp, int alpha, int beta) {
    return weights[weight_index(c, cp, alpha, beta)];
  }
  const T& weight(int c, int cp, int alpha, int beta) const {
    return weights[weight_index(c, cp, alpha, beta)];
  }

  // Throws ConfigError if array sizes do not match the declared geometry.
  void validate() const;

  // Output extent for an input of the given size. `upsample_to` applies only to
  // stride half and defaults to twice the input size.
  Extent output_extent(Extent input, std::optional<Extent> upsample_to = {}) const;

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

template <typename T>
struct ConvForwardResult {
  Volume<T> pre;  // o, before bias and activation
  Volume<T> out;  // act(o + bias)
};

template <typename T>
struct ConvBackwardResult {
  Volume<T> grad_input;
  std::vector<T> grad_weights;
  std::vector<T> grad_biases;
};

template <typename T>
ConvForwardResult<T> conv_forward(const Volume<T>& input, const ConvLayer<T>& layer,
                                  std::optional<Extent> upsample_to = {});

// grad_pre is dE/do for this layer; the activation derivative must already be
// applied by the caller.
template <typename T>
ConvBackwardResult<T> conv_backward(const Volume<T>& input, const ConvLayer<T>& layer,
                                    const Volume<T>& grad_pre,
                                    std::optional<Extent> upsample_to = {});

// The input-gradient half of conv_backward (the adjoint of the linear part of
// conv_forward).
template <typename T>
Volume<T> conv_backward_input(const Volume<T>& input_shape_source, const ConvLayer<T>& layer,
                              const Volume<T>& grad_pre, std::optional<Extent> upsample_to = {});

// The parameter-gradient half of conv_backward.
template <typename T>
void conv_backward_params(const Volume<T>& input, const ConvLayer<T>& layer,
                          const Volume<T>& grad_pre, std::vector<T>& grad_weights,
                          std::vector<T>& grad_biases, std::optional<Extent> upsample_to = {});

template <typename T>
Volume<T> apply_activation(const Volume<T>& v, Activation kind);

template <typename T>
Volume<T> activation_derivative(const Volume<T>& pre, Activation kind);

template <typename T>
T activate(T x, Activation kind);

template <typename T>
T activate_derivative(T x, Activation kind);

// Adds bias(c) to every element of channel c.
template <typename T>
Volume<T> add_bias(const Volume<T>& v, const std::vector<T>& biases);

// Half-pixel-centre bilinear resampling with edge clamping, any target size.
template <typename T>
Volume<T> bilinear_resample(const Volume<T>& v, int target_w, int target_h);

// Same as bilinear_resample but requires target >= source on both axes.
template <typename T>
Volume<T> bilinear_upsample(const Volume<T>& v, int target_w, int target_h);

// Adjoint of bilinear_upsample from (source_w, source_h) to grad's extent.
template <typename T>
Volume<T> bilinear_upsample_adjoint(const Volume<T>& grad, int source_w, int source_h);

}  // namespace sfl
