#include "sfl/log_bank.hpp"

#include <cmath>
#include <complex>
#include <bit>
#include <type_traits>
#include <numbers>
#include <string>

namespace sfl {

double Kernel2D::sum() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

int kernel_size(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw DomainError("kernel_size: sigma must be positive, got " + std::to_string(sigma));
  }
  int k = static_cast<int>(std::ceil(8.0 * sigma));
  if (k % 2 == 0) ++k;
  return k;
}

double log_value(double sigma, double x, double y) {
  const double s2 = sigma * sigma;
  const double r2 = x * x + y * y;
  const double g = std::exp(-r2 / (2.0 * s2)) / (2.0 * std::numbers::pi * s2);
  return -(2.0 - r2 / s2) * g;
}

Kernel2D make_log_kernel(double sigma) {
  Kernel2D k;
  k.side = kernel_size(sigma);
  k.values.resize(static_cast<std::size_t>(k.side) * k.side);
  const int h = k.half();
  for (int a = -h; a <= h; ++a) {
    for (int b = -h; b <= h; ++b) k.at(a, b) = log_value(sigma, a, b);
  }
  const double mean = k.sum() / static_cast<double>(k.values.size());
  for (double& v : k.values) v -= mean;
  return k;
}

template <typename T>
std::uint64_t LogBank<T>::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  for (T w : layer.weights) {
    const Bits bits = std::bit_cast<Bits>(w);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      h ^= static_cast<unsigned char>(bits >> (8 * i));
      h *= 1099511628211ULL;
    }
  }
  return h;
}

template <typename T>
LogBank<T> build_bank(const std::vector<double>& scales, const std::vector<double>& subband_weights,
                      int image_channels) {
  if (scales.empty()) throw ConfigError("build_bank: at least one scale is required");
  if (scales.size() != subband_weights.size()) {
    throw ConfigError("build_bank: " + std::to_string(scales.size()) + " scales but " +
                      std::to_string(subband_weights.size()) + " subband weights");
  }
  if (image_channels <= 0) throw ConfigError("build_bank: image channels must be positive");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (!(scales[i] > 0.0) || !std::isfinite(scales[i])) {
      throw ConfigError("build_bank: scale " + std::to_string(scales[i]) + " is not positive");
    }
    if (i > 0 && !(scales[i] > scales[i - 1])) {
      throw ConfigError("build_bank: scales must be strictly increasing");
    }
    if (!(subband_weights[i] > 0.0)) {
      throw ConfigError("build_bank: subband weights must be strictly positive");
    }
  }

  LogBank<T> bank;
  bank.scales = scales;
  bank.subband_weights = subband_weights;
  int max_side = 1;
  for (double s : scales) {
    bank.kernels.push_back(make_log_kernel(s));
    max_side = std::max(max_side, bank.kernels.back().side);
  }
  const int half = max_side / 2;
  bank.layer = ConvLayer<T>(image_channels, static_cast<int>(scales.size()), half, Stride::one,
                            Activation::identity, Padding::replicate, false);
  for (int c = 0; c < bank.bands(); ++c) {
    const Kernel2D& k = bank.kernels[c];
    const int kh = k.half();
    for (int cp = 0; cp < image_channels; ++cp) {
      for (int a = -kh; a <= kh; ++a) {
        for (int b = -kh; b <= kh; ++b) bank.layer.weight(c, cp, a, b) = static_cast<T>(k.at(a, b));
      }
    }
  }
  return bank;
}

template <typename T>
Volume<T> bank_forward(const LogBank<T>& bank, const Volume<T>& image) {
  return conv_forward(image, bank.layer).out;
}

FrequencyResponse frequency_response(const Kernel2D& kernel, int fft_size) {
  if (fft_size < kernel.side) {
    throw ConfigError("frequency_response: fft size " + std::to_string(fft_size) +
                      " is smaller than kernel side " + std::to_string(kernel.side));
  }
  const int n = fft_size;
  const int h = kernel.half();
  std::vector<std::complex<double>> twiddle(n);
  for (int j = 0; j < n; ++j) {
    const double angle = -2.0 * std::numbers::pi * j / n;
    twiddle[j] = {std::cos(angle), std::sin(angle)};
  }
  auto tw = [&](int freq, int offset) {
    const int idx = ((freq * offset) % n + n) % n;
    return twiddle[idx];
  };

  // Transform along beta (vertical) first, then along alpha.
  std::vector<std::complex<double>> partial(static_cast<std::size_t>(kernel.side) * n);
  for (int a = -h; a <= h; ++a) {
    for (int v = 0; v < n; ++v) {
      std::complex<double> acc = 0.0;
      for (int b = -h; b <= h; ++b) acc += kernel.at(a, b) * tw(v, b);
      partial[static_cast<std::size_t>(a + h) * n + v] = acc;
    }
  }

  FrequencyResponse r;
  r.size = n;
  r.magnitude.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int rv = 0; rv < n; ++rv) {
    const int v = ((rv - n / 2) % n + n) % n;
    for (int ru = 0; ru < n; ++ru) {
      const int u = ((ru - n / 2) % n + n) % n;
      std::complex<double> acc = 0.0;
      for (int a = -h; a <= h; ++a) acc += partial[static_cast<std::size_t>(a + h) * n + v] * tw(u, a);
      r.magnitude[static_cast<std::size_t>(rv) * n + ru] = std::abs(acc);
    }
  }
  return r;
}

template <typename T>
FrequencyResponse frequency_response(const LogBank<T>& bank, int scale_index, int fft_size) {
  if (scale_index < 0 || scale_index >= bank.bands()) {
    throw ConfigError("frequency_response: scale index out of range");
  }
  return frequency_response(bank.kernels[scale_index], fft_size);
}

double peak_radial_bin(const FrequencyResponse& response) {
  const int n = response.size;
  std::size_t best = 0;
  for (std::size_t i = 1; i < response.magnitude.size(); ++i) {
    if (response.magnitude[i] > response.magnitude[best]) best = i;
  }
  const double du = static_cast<double>(best % n) - n / 2;
  const double dv = static_cast<double>(best / n) - n / 2;
  return std::hypot(du, dv);
}

template struct LogBank<float>;
template struct LogBank<double>;
template LogBank<float> build_bank(const std::vector<double>&, const std::vector<double>&, int);
template LogBank<double> build_bank(const std::vector<double>&, const std::vector<double>&, int);
template Volume<float> bank_forward(const LogBank<float>&, const Volume<float>&);
template Volume<double> bank_forward(const LogBank<double>&, const Volume<double>&);
template FrequencyResponse frequency_response(const LogBank<float>&, int, int);
template FrequencyResponse frequency_response(const LogBank<double>&, int, int);

}  // namespace sfl
