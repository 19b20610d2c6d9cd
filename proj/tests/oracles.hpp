#pragma once

// Test-side reference implementations. They are written from the defining
// formulas with plain loops and share no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "sfl/conv.hpp"
#include "sfl/volume.hpp"

namespace oracle {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

template <typename T>
sfl::Volume<T> random_volume(std::mt19937_64& rng, int c, int w, int h, double lo = -1.0,
                             double hi = 1.0) {
  sfl::Volume<T> v(c, w, h);
  for (auto& x : v.data()) x = static_cast<T>(uniform(rng, lo, hi));
  return v;
}

template <typename T>
void randomize(sfl::ConvLayer<T>& layer, std::mt19937_64& rng, double scale = 1.0) {
  for (auto& w : layer.weights) w = static_cast<T>(uniform(rng, -scale, scale));
  for (auto& b : layer.biases) b = static_cast<T>(uniform(rng, -scale, scale));
}

// Half-pixel-centre bilinear sample of channel c at output cell (xo, yo).
inline double bilinear_at(const sfl::Volume<double>& v, int c, int xo, int yo, int tw, int th) {
  auto coord = [](int o, int src, int dst) {
    double s = (o + 0.5) * src / dst - 0.5;
    if (s < 0) s = 0;
    if (s > src - 1) s = src - 1;
    return s;
  };
  const double sx = coord(xo, v.width(), tw);
  const double sy = coord(yo, v.height(), th);
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x1 = std::min(x0 + 1, v.width() - 1);
  const int y1 = std::min(y0 + 1, v.height() - 1);
  const double fx = sx - x0;
  const double fy = sy - y0;
  return (1 - fx) * (1 - fy) * v(c, x0, y0) + fx * (1 - fy) * v(c, x1, y0) +
         (1 - fx) * fy * v(c, x0, y1) + fx * fy * v(c, x1, y1);
}

inline sfl::Volume<double> upsample(const sfl::Volume<double>& v, int tw, int th) {
  sfl::Volume<double> out(v.channels(), tw, th);
  for (int c = 0; c < v.channels(); ++c)
    for (int y = 0; y < th; ++y)
      for (int x = 0; x < tw; ++x) out(c, x, y) = bilinear_at(v, c, x, y, tw, th);
  return out;
}

// Pre-activation o of a layer by direct summation over (c', alpha, beta).
inline sfl::Volume<double> conv_pre(const sfl::Volume<double>& input,
                                    const sfl::ConvLayer<double>& layer,
                                    std::optional<sfl::Extent> upsample_to = {}) {
  sfl::Volume<double> src = input;
  int step = 1;
  if (layer.stride == sfl::Stride::half) {
    const sfl::Extent t = upsample_to.value_or(sfl::Extent{2 * input.width(), 2 * input.height()});
    src = upsample(input, t.width, t.height);
  } else if (layer.stride == sfl::Stride::two) {
    step = 2;
  }
  const int W = src.width(), H = src.height();
  const int ow = (W + step - 1) / step, oh = (H + step - 1) / step;
  const int s = layer.half_size;
  sfl::Volume<double> out(layer.out_channels, ow, oh);
  for (int c = 0; c < layer.out_channels; ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int cp = 0; cp < layer.in_channels; ++cp) {
          for (int a = -s; a <= s; ++a) {
            for (int b = -s; b <= s; ++b) {
              int xi = step * x + a, yi = step * y + b;
              if (layer.padding == sfl::Padding::replicate) {
                xi = std::clamp(xi, 0, W - 1);
                yi = std::clamp(yi, 0, H - 1);
              } else if (xi < 0 || yi < 0 || xi >= W || yi >= H) {
                continue;
              }
              acc += src(cp, xi, yi) * layer.weight(c, cp, a, b);
            }
          }
        }
        out(c, x, y) = acc;
      }
    }
  }
  return out;
}

inline double act(double x, sfl::Activation a) {
  switch (a) {
    case sfl::Activation::relu: return x > 0 ? x : 0;
    case sfl::Activation::tanh: return std::tanh(x);
    case sfl::Activation::identity: return x;
  }
  return x;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// |a - n| / max(|a|, |n|); both tiny counts as agreement.
inline double rel_err(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < 1e-10) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

// Central difference of f with respect to *param.
inline double central_diff(double& param, const std::function<double()>& f, double h = 1e-4) {
  const double saved = param;
  param = saved + h;
  const double up = f();
  param = saved - h;
  const double down = f();
  param = saved;
  return (up - down) / (2 * h);
}

}  // namespace oracle
