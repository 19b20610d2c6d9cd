#pragma once

#include <vector>

#include "sfl/conv.hpp"
#include "sfl/log_bank.hpp"
#include "sfl/volume.hpp"

namespace sfl {

struct LossWeights {
  std::vector<double> pixel{1.0, 1.0, 1.0};           // w_PL per output channel
  std::vector<double> subband = kDefaultSubbandWeights;  // w_SFL per band

  void validate(int channels, int bands) const;
};

// Per-band values are unweighted; `sfl_weighted` applies the subband weights.
struct LossReport {
  double e_pl = 0.0;
  std::vector<double> e_sfl_per_band;
  double e_sfl_weighted = 0.0;
  double e_total = 0.0;
};

struct SubbandLoss {
  std::vector<double> per_band;
  double weighted = 0.0;
};

// sum_c w(c) * 1/2 * mean_{x,y} (recon - original)^2 for one image.
template <typename T>
double pixel_loss(const Volume<T>& recon, const Volume<T>& original,
                  const std::vector<double>& w_pl);

// Per-channel 1/2 * mean squared difference, unweighted.
template <typename T>
std::vector<double> channel_half_mse(const Volume<T>& a, const Volume<T>& b);

// Subband loss from already filtered volumes.
template <typename T>
SubbandLoss subband_loss(const Volume<T>& bank_recon, const Volume<T>& bank_orig,
                         const std::vector<double>& w_sfl);

template <typename T>
SubbandLoss sfl_loss(const LogBank<T>& bank, const Volume<T>& recon, const Volume<T>& original,
                     const std::vector<double>& w_sfl);

// dE_SFL/do^{L+1} for one image of a batch of `batch_size`.
template <typename T>
Volume<T> sfl_output_gradient(const Volume<T>& bank_recon, const Volume<T>& bank_orig,
                              const std::vector<double>& w_sfl, int batch_size);

// w_PL(c) (recon - original) / (N_m W H), before the activation derivative.
template <typename T>
Volume<T> pl_output_term(const Volume<T>& recon, const Volume<T>& original,
                         const std::vector<double>& w_pl, int batch_size);

// dE_PL/do^L. `activation_input` is the argument of a^L, i.e. o^L plus the
// layer biases (equal to o^L when the biases are zero).
template <typename T>
Volume<T> pl_output_gradient(const Volume<T>& recon, const Volume<T>& original,
                             const Volume<T>& activation_input, Activation activation,
                             const std::vector<double>& w_pl, int batch_size);

// dE/do^L = (sfl_back + pl_term) * a'(activation_input).
template <typename T>
Volume<T> fuse_gradients_at_L(const Volume<T>& sfl_back, const Volume<T>& pl_term,
                              const Volume<T>& activation_input, Activation activation);

}  // namespace sfl
