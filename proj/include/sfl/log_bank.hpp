#pragma once

#include <cstdint>
#include <vector>

#include "sfl/conv.hpp"
#include "sfl/volume.hpp"

namespace sfl {

inline const std::vector<double> kDefaultScales{0.8, 1.6, 3.2};
inline const std::vector<double> kDefaultSubbandWeights{100.0, 10.0, 10.0};

// Square kernel with odd side; value(alpha, beta) for offsets in [-half, half].
struct Kernel2D {
  int side = 0;
  std::vector<double> values;  // alpha-major, same order as ConvLayer weights

  int half() const { return side / 2; }
  double& at(int alpha, int beta) { return values[(alpha + half()) * side + (beta + half())]; }
  double at(int alpha, int beta) const {
    return values[(alpha + half()) * side + (beta + half())];
  }
  double sum() const;
};

// ceil(8 sigma), bumped to the next odd integer if even.
int kernel_size(double sigma);

// Scale-normalized LoG sample -(2 - r^2/sigma^2) g(x, y), without DC correction.
double log_value(double sigma, double x, double y);

// Sampled scale-normalized LoG of side kernel_size(sigma) with its mean
// subtracted, so the coefficients sum to zero.
Kernel2D make_log_kernel(double sigma);

/// Fixed Laplacian-of-Gaussian filter bank, applied as one non-trainable
/// convolution layer with one output channel per scale.
///
/// Each scale's kernel is replicated over all image channels and embedded,
/// centred, in a square of the largest kernel side. The layer uses replicate
/// padding so that the bank rejects constant images everywhere, borders
/// included.
template <typename T>
struct LogBank {
  std::vector<double> scales;
  std::vector<double> subband_weights;
  std::vector<Kernel2D> kernels;
  ConvLayer<T> layer;

  int bands() const { return static_cast<int>(scales.size()); }
  int image_channels() const { return layer.in_channels; }

  // FNV-1a over the little-endian bytes of the layer weights.
  std::uint64_t checksum() const;
};

template <typename T>
LogBank<T> build_bank(const std::vector<double>& scales, const std::vector<double>& subband_weights,
                      int image_channels);

template <typename T>
Volume<T> bank_forward(const LogBank<T>& bank, const Volume<T>& image);

// Centred DFT magnitude raster of a zero-padded kernel (DC at (n/2, n/2)),
// row-major n x n.
struct FrequencyResponse {
  int size = 0;
  std::vector<double> magnitude;

  double at(int u, int v) const { return magnitude[static_cast<std::size_t>(v) * size + u]; }
};

FrequencyResponse frequency_response(const Kernel2D& kernel, int fft_size);

template <typename T>
FrequencyResponse frequency_response(const LogBank<T>& bank, int scale_index, int fft_size);

// Radial distance (in bins) from DC of the maximum-magnitude bin.
double peak_radial_bin(const FrequencyResponse& response);

}  // namespace sfl
