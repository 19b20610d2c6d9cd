#include "sfl/conv.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace sfl {

std::string_view to_string(Stride s) {
  switch (s) {
    case Stride::one: return "1";
    case Stride::two: return "2";
    case Stride::half: return "half";
  }
  return "?";
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

std::string_view to_string(Padding p) {
  switch (p) {
    case Padding::zero: return "zero";
    case Padding::replicate: return "replicate";
  }
  return "?";
}

template <typename T>
ConvLayer<T>::ConvLayer(int in_ch, int out_ch, int half, Stride st, Activation act, Padding pad,
                        bool train)
    : in_channels(in_ch),
      out_channels(out_ch),
      half_size(half),
      stride(st),
      activation(act),
      padding(pad),
      trainable(train) {
  if (in_ch <= 0 || out_ch <= 0 || half < 0) {
    throw ConfigError("conv layer needs positive channel counts and a non-negative half size");
  }
  weights.assign(static_cast<std::size_t>(out_ch) * in_ch * side() * side(), T(0));
  biases.assign(static_cast<std::size_t>(out_ch), T(0));
}

template <typename T>
void ConvLayer<T>::validate() const {
  if (in_channels <= 0 || out_channels <= 0 || half_size < 0) {
    throw ConfigError("conv layer has invalid geometry");
  }
  const std::size_t expect = static_cast<std::size_t>(out_channels) * in_channels * side() * side();
  if (weights.size() != expect) {
    throw ConfigError("conv layer weights length " + std::to_string(weights.size()) +
                      ", expected " + std::to_string(expect));
  }
  if (biases.size() != static_cast<std::size_t>(out_channels)) {
    throw ConfigError("conv layer biases length " + std::to_string(biases.size()) +
                      ", expected " + std::to_string(out_channels));
  }
}

template <typename T>
Extent ConvLayer<T>::output_extent(Extent input, std::optional<Extent> upsample_to) const {
  switch (stride) {
    case Stride::one: return input;
    case Stride::two: return {(input.width + 1) / 2, (input.height + 1) / 2};
    case Stride::half:
      return upsample_to ? *upsample_to : Extent{2 * input.width, 2 * input.height};
  }
  return input;
}

namespace {

// Output indices x' in [0, n_out) whose tap step*x' + offset lands inside [0, n_in).
struct TapRange {
  int lo;
  int hi;  // inclusive; lo > hi means empty
};

TapRange valid_taps(int n_out, int n_in, int step, int offset) {
  const int lo = offset >= 0 ? 0 : (-offset + step - 1) / step;
  const int top = n_in - 1 - offset;
  const int hi = top < 0 ? -1 : std::min(n_out - 1, top / step);
  return {lo, hi};
}

inline int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

template <typename T>
void check_input(const Volume<T>& input, const ConvLayer<T>& layer, const char* what) {
  layer.validate();
  if (input.channels() != layer.in_channels) {
    throw ConfigError(std::string(what) + ": input has " + std::to_string(input.channels()) +
                      " channels, layer expects " + std::to_string(layer.in_channels));
  }
}

Extent upsample_target(Extent input, std::optional<Extent> upsample_to) {
  const Extent target = upsample_to ? *upsample_to : Extent{2 * input.width, 2 * input.height};
  if (target.width < input.width || target.height < input.height) {
    throw ConfigError("stride-half target " + std::to_string(target.width) + "x" +
                      std::to_string(target.height) + " is smaller than its input");
  }
  return target;
}

// Linear part of a stride-1 or stride-2 convolution on an already upsampled input.
template <typename T>
Volume<T> correlate(const Volume<T>& in, const ConvLayer<T>& layer, int step) {
  const int W = in.width();
  const int H = in.height();
  const int Wo = step == 1 ? W : (W + 1) / 2;
  const int Ho = step == 1 ? H : (H + 1) / 2;
  const int s = layer.half_size;
  const bool replicate = layer.padding == Padding::replicate;
  Volume<T> out(layer.out_channels, Wo, Ho);

  for (int c = 0; c < layer.out_channels; ++c) {
    T* dst_plane = out.plane(c).data();
    for (int cp = 0; cp < layer.in_channels; ++cp) {
      const T* src_plane = in.plane(cp).data();
      for (int a = -s; a <= s; ++a) {
        const TapRange xr = valid_taps(Wo, W, step, a);
        for (int b = -s; b <= s; ++b) {
          const T w = layer.weight(c, cp, a, b);
          if (w == T(0)) continue;
          for (int y = 0; y < Ho; ++y) {
            int sy = step * y + b;
            if (sy < 0 || sy >= H) {
              if (!replicate) continue;
              sy = clamp_index(sy, H);
            }
            const T* src = src_plane + static_cast<std::size_t>(sy) * W;
            T* dst = dst_plane + static_cast<std::size_t>(y) * Wo;
            if (step == 1) {
              for (int x = xr.lo; x <= xr.hi; ++x) dst[x] += w * src[x + a];
            } else {
              for (int x = xr.lo; x <= xr.hi; ++x) dst[x] += w * src[2 * x + a];
            }
            if (replicate) {
              const int left = std::min(xr.lo, Wo);
              for (int x = 0; x < left; ++x) dst[x] += w * src[0];
              for (int x = std::max(xr.hi + 1, 0); x < Wo; ++x) dst[x] += w * src[W - 1];
            }
          }
        }
      }
    }
  }
  return out;
}

// Adjoint of correlate: scatters grad_out back onto an input of extent `in_extent`.
template <typename T>
Volume<T> correlate_adjoint(const Volume<T>& grad_out, const ConvLayer<T>& layer, int step,
                            Extent in_extent) {
  const int W = in_extent.width;
  const int H = in_extent.height;
  const int Wo = grad_out.width();
  const int Ho = grad_out.height();
  const int s = layer.half_size;
  const bool replicate = layer.padding == Padding::replicate;
  Volume<T> grad_in(layer.in_channels, W, H);

  for (int cp = 0; cp < layer.in_channels; ++cp) {
    T* dst_plane = grad_in.plane(cp).data();
    for (int c = 0; c < layer.out_channels; ++c) {
      const T* g_plane = grad_out.plane(c).data();
      for (int a = -s; a <= s; ++a) {
        const TapRange xr = valid_taps(Wo, W, step, a);
        for (int b = -s; b <= s; ++b) {
          const T w = layer.weight(c, cp, a, b);
          if (w == T(0)) continue;
          for (int y = 0; y < Ho; ++y) {
            int sy = step * y + b;
            if (sy < 0 || sy >= H) {
              if (!replicate) continue;
              sy = clamp_index(sy, H);
            }
            T* dst = dst_plane + static_cast<std::size_t>(sy) * W;
            const T* g = g_plane + static_cast<std::size_t>(y) * Wo;
            if (step == 1) {
              for (int x = xr.lo; x <= xr.hi; ++x) dst[x + a] += w * g[x];
            } else {
              for (int x = xr.lo; x <= xr.hi; ++x) dst[2 * x + a] += w * g[x];
            }
            if (replicate) {
              const int left = std::min(xr.lo, Wo);
              for (int x = 0; x < left; ++x) dst[0] += w * g[x];
              for (int x = std::max(xr.hi + 1, 0); x < Wo; ++x) dst[W - 1] += w * g[x];
            }
          }
        }
      }
    }
  }
  return grad_in;
}

// Eight-lane dot product; lanes are combined in a fixed order so the result is
// reproducible.
template <typename T>
T dot_strided(const T* src, int src_step, const T* g, int lo, int hi) {
  constexpr int kLanes = 8;
  std::array<T, kLanes> lanes{};
  int x = lo;
  if (src_step == 1) {
    for (; x + kLanes <= hi + 1; x += kLanes) {
      for (int j = 0; j < kLanes; ++j) lanes[j] += src[x + j] * g[x + j];
    }
  }
  T tail = T(0);
  for (; x <= hi; ++x) tail += src[src_step * x] * g[x];
  T sum = T(0);
  for (T v : lanes) sum += v;
  return sum + tail;
}

template <typename T>
void correlate_params(const Volume<T>& in, const ConvLayer<T>& layer, int step,
                      const Volume<T>& grad_out, std::vector<T>& grad_w) {
  const int W = in.width();
  const int H = in.height();
  const int Wo = grad_out.width();
  const int Ho = grad_out.height();
  const int s = layer.half_size;
  const bool replicate = layer.padding == Padding::replicate;
  grad_w.assign(layer.weights.size(), T(0));

  for (int c = 0; c < layer.out_channels; ++c) {
    const T* g_plane = grad_out.plane(c).data();
    for (int cp = 0; cp < layer.in_channels; ++cp) {
      const T* src_plane = in.plane(cp).data();
      for (int a = -s; a <= s; ++a) {
        const TapRange xr = valid_taps(Wo, W, step, a);
        for (int b = -s; b <= s; ++b) {
          T acc = T(0);
          for (int y = 0; y < Ho; ++y) {
            int sy = step * y + b;
            if (sy < 0 || sy >= H) {
              if (!replicate) continue;
              sy = clamp_index(sy, H);
            }
            const T* src = src_plane + static_cast<std::size_t>(sy) * W;
            const T* g = g_plane + static_cast<std::size_t>(y) * Wo;
            T row = T(0);
            if (xr.lo <= xr.hi) {
              row = step == 1 ? dot_strided(src + a, 1, g, xr.lo, xr.hi)
                              : dot_strided(src + a, 2, g, xr.lo, xr.hi);
            }
            if (replicate) {
              const int left = std::min(xr.lo, Wo);
              for (int x = 0; x < left; ++x) row += src[0] * g[x];
              for (int x = std::max(xr.hi + 1, 0); x < Wo; ++x) row += src[W - 1] * g[x];
            }
            acc += row;
          }
          grad_w[layer.weight_index(c, cp, a, b)] = acc;
        }
      }
    }
  }
}

int step_of(Stride s) {
  return s == Stride::two ? 2 : 1;
}

template <typename T>
void require_finite(const Volume<T>& v, const char* what) {
  if (!v.all_finite()) throw NumericalError(std::string(what) + ": non-finite values");
}

template <typename T>
void check_grad_shape(const Volume<T>& input, const ConvLayer<T>& layer, const Volume<T>& grad_pre,
                      std::optional<Extent> upsample_to) {
  const Extent expect = layer.output_extent(input.extent(), upsample_to);
  if (grad_pre.channels() != layer.out_channels || grad_pre.extent() != expect) {
    throw ConfigError("conv_backward: gradient shape " + shape_string(grad_pre) +
                      " does not match layer output " +
                      shape_string(layer.out_channels, expect.width, expect.height));
  }
}

}  // namespace

template <typename T>
T activate(T x, Activation kind) {
  switch (kind) {
    case Activation::relu: return x > T(0) ? x : T(0);
    case Activation::tanh: return std::tanh(x);
    case Activation::identity: return x;
  }
  return x;
}

template <typename T>
T activate_derivative(T x, Activation kind) {
  switch (kind) {
    case Activation::relu: return x > T(0) ? T(1) : T(0);
    case Activation::tanh: {
      const T t = std::tanh(x);
      return T(1) - t * t;
    }
    case Activation::identity: return T(1);
  }
  return T(1);
}

template <typename T>
Volume<T> apply_activation(const Volume<T>& v, Activation kind) {
  Volume<T> out = v;
  for (T& x : out.data()) x = activate(x, kind);
  return out;
}

template <typename T>
Volume<T> activation_derivative(const Volume<T>& pre, Activation kind) {
  Volume<T> out = pre;
  for (T& x : out.data()) x = activate_derivative(x, kind);
  return out;
}

template <typename T>
Volume<T> add_bias(const Volume<T>& v, const std::vector<T>& biases) {
  if (biases.size() != static_cast<std::size_t>(v.channels())) {
    throw ConfigError("add_bias: bias count does not match channel count");
  }
  Volume<T> out = v;
  for (int c = 0; c < v.channels(); ++c) {
    for (T& x : out.plane(c)) x += biases[c];
  }
  return out;
}

namespace {

struct Tap {
  int i0;
  int i1;
  double frac;
};

std::vector<Tap> resample_taps(int source, int target) {
  std::vector<Tap> taps(target);
  const double scale = static_cast<double>(source) / target;
  for (int i = 0; i < target; ++i) {
    double pos = (i + 0.5) * scale - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(source - 1));
    const int i0 = static_cast<int>(std::floor(pos));
    const int i1 = std::min(i0 + 1, source - 1);
    taps[i] = {i0, i1, pos - i0};
  }
  return taps;
}

}  // namespace

template <typename T>
Volume<T> bilinear_resample(const Volume<T>& v, int target_w, int target_h) {
  if (target_w <= 0 || target_h <= 0) throw ConfigError("resample target must be positive");
  const auto xt = resample_taps(v.width(), target_w);
  const auto yt = resample_taps(v.height(), target_h);
  Volume<T> out(v.channels(), target_w, target_h);
  for (int c = 0; c < v.channels(); ++c) {
    for (int y = 0; y < target_h; ++y) {
      const T ly = static_cast<T>(yt[y].frac);
      for (int x = 0; x < target_w; ++x) {
        const T lx = static_cast<T>(xt[x].frac);
        const T a = v(c, xt[x].i0, yt[y].i0);
        const T b = v(c, xt[x].i1, yt[y].i0);
        const T d = v(c, xt[x].i0, yt[y].i1);
        const T e = v(c, xt[x].i1, yt[y].i1);
        const T top = a + lx * (b - a);
        const T bottom = d + lx * (e - d);
        out(c, x, y) = top + ly * (bottom - top);
      }
    }
  }
  return out;
}

template <typename T>
Volume<T> bilinear_upsample(const Volume<T>& v, int target_w, int target_h) {
  if (target_w < v.width() || target_h < v.height()) {
    throw ConfigError("bilinear_upsample: target " + std::to_string(target_w) + "x" +
                      std::to_string(target_h) + " smaller than source " +
                      std::to_string(v.width()) + "x" + std::to_string(v.height()));
  }
  return bilinear_resample(v, target_w, target_h);
}

template <typename T>
Volume<T> bilinear_upsample_adjoint(const Volume<T>& grad, int source_w, int source_h) {
  if (grad.width() < source_w || grad.height() < source_h || source_w <= 0 || source_h <= 0) {
    throw ConfigError("bilinear_upsample_adjoint: source larger than gradient extent");
  }
  const auto xt = resample_taps(source_w, grad.width());
  const auto yt = resample_taps(source_h, grad.height());
  Volume<T> out(grad.channels(), source_w, source_h);
  for (int c = 0; c < grad.channels(); ++c) {
    for (int y = 0; y < grad.height(); ++y) {
      const T ly = static_cast<T>(yt[y].frac);
      for (int x = 0; x < grad.width(); ++x) {
        const T lx = static_cast<T>(xt[x].frac);
        const T g = grad(c, x, y);
        const T top = g * (T(1) - ly);
        const T bottom = g * ly;
        out(c, xt[x].i0, yt[y].i0) += top * (T(1) - lx);
        out(c, xt[x].i1, yt[y].i0) += top * lx;
        out(c, xt[x].i0, yt[y].i1) += bottom * (T(1) - lx);
        out(c, xt[x].i1, yt[y].i1) += bottom * lx;
      }
    }
  }
  return out;
}

template <typename T>
ConvForwardResult<T> conv_forward(const Volume<T>& input, const ConvLayer<T>& layer,
                                  std::optional<Extent> upsample_to) {
  check_input(input, layer, "conv_forward");
  require_finite(input, "conv_forward input");
  ConvForwardResult<T> r;
  if (layer.stride == Stride::half) {
    const Extent target = upsample_target(input.extent(), upsample_to);
    r.pre = correlate(bilinear_upsample(input, target.width, target.height), layer, 1);
  } else {
    r.pre = correlate(input, layer, step_of(layer.stride));
  }
  r.out = apply_activation(add_bias(r.pre, layer.biases), layer.activation);
  require_finite(r.out, "conv_forward output");
  return r;
}

template <typename T>
Volume<T> conv_backward_input(const Volume<T>& input, const ConvLayer<T>& layer,
                              const Volume<T>& grad_pre, std::optional<Extent> upsample_to) {
  check_input(input, layer, "conv_backward");
  check_grad_shape(input, layer, grad_pre, upsample_to);
  if (layer.stride == Stride::half) {
    const Volume<T> g_up = correlate_adjoint(grad_pre, layer, 1, grad_pre.extent());
    return bilinear_upsample_adjoint(g_up, input.width(), input.height());
  }
  return correlate_adjoint(grad_pre, layer, step_of(layer.stride), input.extent());
}

template <typename T>
void conv_backward_params(const Volume<T>& input, const ConvLayer<T>& layer,
                          const Volume<T>& grad_pre, std::vector<T>& grad_weights,
                          std::vector<T>& grad_biases, std::optional<Extent> upsample_to) {
  check_input(input, layer, "conv_backward");
  check_grad_shape(input, layer, grad_pre, upsample_to);
  if (layer.stride == Stride::half) {
    const Extent target = upsample_target(input.extent(), upsample_to);
    correlate_params(bilinear_upsample(input, target.width, target.height), layer, 1, grad_pre,
                     grad_weights);
  } else {
    correlate_params(input, layer, step_of(layer.stride), grad_pre, grad_weights);
  }
  grad_biases.assign(static_cast<std::size_t>(layer.out_channels), T(0));
  for (int c = 0; c < layer.out_channels; ++c) {
    T acc = T(0);
    for (T g : grad_pre.plane(c)) acc += g;
    grad_biases[c] = acc;
  }
}

template <typename T>
ConvBackwardResult<T> conv_backward(const Volume<T>& input, const ConvLayer<T>& layer,
                                    const Volume<T>& grad_pre, std::optional<Extent> upsample_to) {
  ConvBackwardResult<T> r;
  r.grad_input = conv_backward_input(input, layer, grad_pre, upsample_to);
  conv_backward_params(input, layer, grad_pre, r.grad_weights, r.grad_biases, upsample_to);
  return r;
}

#define SFL_INSTANTIATE_CONV(T)                                                                  \
  template struct ConvLayer<T>;                                                                  \
  template ConvForwardResult<T> conv_forward(const Volume<T>&, const ConvLayer<T>&,              \
                                             std::optional<Extent>);                             \
  template ConvBackwardResult<T> conv_backward(const Volume<T>&, const ConvLayer<T>&,            \
                                               const Volume<T>&, std::optional<Extent>);         \
  template Volume<T> conv_backward_input(const Volume<T>&, const ConvLayer<T>&, const Volume<T>&, \
                                         std::optional<Extent>);                                 \
  template void conv_backward_params(const Volume<T>&, const ConvLayer<T>&, const Volume<T>&,    \
                                     std::vector<T>&, std::vector<T>&, std::optional<Extent>);   \
  template Volume<T> apply_activation(const Volume<T>&, Activation);                             \
  template Volume<T> activation_derivative(const Volume<T>&, Activation);                        \
  template T activate(T, Activation);                                                            \
  template T activate_derivative(T, Activation);                                                 \
  template Volume<T> add_bias(const Volume<T>&, const std::vector<T>&);                          \
  template Volume<T> bilinear_resample(const Volume<T>&, int, int);                              \
  template Volume<T> bilinear_upsample(const Volume<T>&, int, int);                              \
  template Volume<T> bilinear_upsample_adjoint(const Volume<T>&, int, int);

SFL_INSTANTIATE_CONV(float)
SFL_INSTANTIATE_CONV(double)

#undef SFL_INSTANTIATE_CONV

}  // namespace sfl
