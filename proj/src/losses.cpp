#include "sfl/losses.hpp"

#include <string>

namespace sfl {

void LossWeights::validate(int channels, int bands) const {
  if (pixel.size() != static_cast<std::size_t>(channels)) {
    throw ConfigError("w_pl has " + std::to_string(pixel.size()) + " entries, expected " +
                      std::to_string(channels));
  }
  if (subband.size() != static_cast<std::size_t>(bands)) {
    throw ConfigError("w_sfl has " + std::to_string(subband.size()) + " entries, expected " +
                      std::to_string(bands));
  }
  for (double w : pixel) {
    if (!(w >= 0.0)) throw ConfigError("w_pl entries must be non-negative");
  }
  for (double w : subband) {
    if (!(w >= 0.0)) throw ConfigError("w_sfl entries must be non-negative");
  }
}

namespace {

void require_weights(const std::vector<double>& w, int channels, const char* what) {
  if (w.size() != static_cast<std::size_t>(channels)) {
    throw ConfigError(std::string(what) + ": " + std::to_string(w.size()) +
                      " weights for " + std::to_string(channels) + " channels");
  }
}

void require_batch(int batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
}

}  // namespace

template <typename T>
std::vector<double> channel_half_mse(const Volume<T>& a, const Volume<T>& b) {
  require_same_shape(a, b, "loss");
  std::vector<double> out(a.channels(), 0.0);
  const double inv_area = 1.0 / static_cast<double>(a.plane_size());
  for (int c = 0; c < a.channels(); ++c) {
    const auto pa = a.plane(c);
    const auto pb = b.plane(c);
    double acc = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
      acc += d * d;
    }
    out[c] = 0.5 * inv_area * acc;
  }
  return out;
}

template <typename T>
double pixel_loss(const Volume<T>& recon, const Volume<T>& original,
                  const std::vector<double>& w_pl) {
  require_same_shape(recon, original, "pixel_loss");
  require_weights(w_pl, recon.channels(), "pixel_loss");
  const auto per_channel = channel_half_mse(recon, original);
  double e = 0.0;
  for (int c = 0; c < recon.channels(); ++c) e += w_pl[c] * per_channel[c];
  return e;
}

template <typename T>
SubbandLoss subband_loss(const Volume<T>& bank_recon, const Volume<T>& bank_orig,
                         const std::vector<double>& w_sfl) {
  require_same_shape(bank_recon, bank_orig, "sfl_loss");
  require_weights(w_sfl, bank_recon.channels(), "sfl_loss");
  SubbandLoss r;
  r.per_band = channel_half_mse(bank_recon, bank_orig);
  for (std::size_t c = 0; c < r.per_band.size(); ++c) r.weighted += w_sfl[c] * r.per_band[c];
  return r;
}

template <typename T>
SubbandLoss sfl_loss(const LogBank<T>& bank, const Volume<T>& recon, const Volume<T>& original,
                     const std::vector<double>& w_sfl) {
  require_same_shape(recon, original, "sfl_loss");
  return subband_loss(bank_forward(bank, recon), bank_forward(bank, original), w_sfl);
}

namespace {

template <typename T>
Volume<T> scaled_difference(const Volume<T>& a, const Volume<T>& b, const std::vector<double>& w,
                            int batch_size, const char* what) {
  require_same_shape(a, b, what);
  require_weights(w, a.channels(), what);
  require_batch(batch_size);
  Volume<T> out(a.channels(), a.width(), a.height());
  const double denom = static_cast<double>(batch_size) * static_cast<double>(a.plane_size());
  for (int c = 0; c < a.channels(); ++c) {
    const T scale = static_cast<T>(w[c] / denom);
    const auto pa = a.plane(c);
    const auto pb = b.plane(c);
    auto po = out.plane(c);
    for (std::size_t i = 0; i < pa.size(); ++i) po[i] = scale * (pa[i] - pb[i]);
  }
  return out;
}

}  // namespace

template <typename T>
Volume<T> sfl_output_gradient(const Volume<T>& bank_recon, const Volume<T>& bank_orig,
                              const std::vector<double>& w_sfl, int batch_size) {
  return scaled_difference(bank_recon, bank_orig, w_sfl, batch_size, "sfl_output_gradient");
}

template <typename T>
Volume<T> pl_output_term(const Volume<T>& recon, const Volume<T>& original,
                         const std::vector<double>& w_pl, int batch_size) {
  return scaled_difference(recon, original, w_pl, batch_size, "pl_output_term");
}

template <typename T>
Volume<T> pl_output_gradient(const Volume<T>& recon, const Volume<T>& original,
                             const Volume<T>& activation_input, Activation activation,
                             const std::vector<double>& w_pl, int batch_size) {
  require_same_shape(recon, activation_input, "pl_output_gradient");
  Volume<T> g = pl_output_term(recon, original, w_pl, batch_size);
  const auto z = activation_input.data();
  auto gd = g.data();
  for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= activate_derivative(z[i], activation);
  return g;
}

template <typename T>
Volume<T> fuse_gradients_at_L(const Volume<T>& sfl_back, const Volume<T>& pl_term,
                              const Volume<T>& activation_input, Activation activation) {
  require_same_shape(sfl_back, pl_term, "fuse_gradients_at_L");
  require_same_shape(sfl_back, activation_input, "fuse_gradients_at_L");
  Volume<T> out(sfl_back.channels(), sfl_back.width(), sfl_back.height());
  const auto a = sfl_back.data();
  const auto b = pl_term.data();
  const auto z = activation_input.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = (a[i] + b[i]) * activate_derivative(z[i], activation);
  }
  return out;
}

#define SFL_INSTANTIATE_LOSSES(T)                                                                \
  template std::vector<double> channel_half_mse(const Volume<T>&, const Volume<T>&);             \
  template double pixel_loss(const Volume<T>&, const Volume<T>&, const std::vector<double>&);    \
  template SubbandLoss subband_loss(const Volume<T>&, const Volume<T>&,                          \
                                    const std::vector<double>&);                                 \
  template SubbandLoss sfl_loss(const LogBank<T>&, const Volume<T>&, const Volume<T>&,           \
                                const std::vector<double>&);                                     \
  template Volume<T> sfl_output_gradient(const Volume<T>&, const Volume<T>&,                     \
                                         const std::vector<double>&, int);                       \
  template Volume<T> pl_output_term(const Volume<T>&, const Volume<T>&,                          \
                                    const std::vector<double>&, int);                            \
  template Volume<T> pl_output_gradient(const Volume<T>&, const Volume<T>&, const Volume<T>&,    \
                                        Activation, const std::vector<double>&, int);            \
  template Volume<T> fuse_gradients_at_L(const Volume<T>&, const Volume<T>&, const Volume<T>&,   \
                                         Activation);

SFL_INSTANTIATE_LOSSES(float)
SFL_INSTANTIATE_LOSSES(double)

#undef SFL_INSTANTIATE_LOSSES

}  // namespace sfl
