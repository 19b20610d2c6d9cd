#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "sfl/errors.hpp"
#include "sfl/log_bank.hpp"

using namespace sfl;

namespace {

double channel_energy(const Volume<double>& v, int c) {
  double e = 0;
  for (double x : v.plane(c)) e += x * x;
  return e;
}

}  // namespace

TEST(KernelSize, OddCeilingOfEightSigma) {
  EXPECT_EQ(kernel_size(0.8), 7);
  EXPECT_EQ(kernel_size(1.6), 13);
  EXPECT_EQ(kernel_size(3.2), 27);
  EXPECT_EQ(kernel_size(1.0), 9);
  EXPECT_EQ(kernel_size(0.1), 1);
}

TEST(KernelSize, NonPositiveSigmaIsDomainError) {
  EXPECT_THROW(kernel_size(0.0), DomainError);
  EXPECT_THROW(kernel_size(-1.0), DomainError);
  EXPECT_THROW(make_log_kernel(0.0), DomainError);
}

TEST(LogKernel, CentreValue) {
  EXPECT_NEAR(log_value(0.8, 0, 0), -1.0 / (std::numbers::pi * 0.64), 1e-12);
  EXPECT_NEAR(log_value(0.8, 0, 0), -0.49736, 1e-5);
}

TEST(LogKernel, SignChangesOnZeroCrossingCircle) {
  for (double sigma : {0.8, 1.6, 3.2}) {
    const double r = sigma * std::numbers::sqrt2;
    EXPECT_LT(log_value(sigma, 0.99 * r, 0), 0.0);
    EXPECT_GT(log_value(sigma, 0, 1.01 * r), 0.0);
    EXPECT_NEAR(log_value(sigma, r / std::numbers::sqrt2, r / std::numbers::sqrt2), 0.0, 1e-15);
  }
}

TEST(LogKernel, DcCorrectedAndIsotropic) {
  for (double sigma : {0.8, 1.6, 3.2, 1.0, 2.3}) {
    const Kernel2D k = make_log_kernel(sigma);
    EXPECT_EQ(k.side, kernel_size(sigma));
    EXPECT_NEAR(k.sum(), 0.0, 1e-12);
    const double offset = k.at(0, 0) - log_value(sigma, 0, 0);
    for (int a = -k.half(); a <= k.half(); ++a) {
      for (int b = -k.half(); b <= k.half(); ++b) {
        EXPECT_NEAR(k.at(a, b) - log_value(sigma, a, b), offset, 1e-15);
        EXPECT_EQ(k.at(a, b), k.at(-b, a));
      }
    }
  }
}

TEST(BuildBank, DefaultLayout) {
  const auto bank = build_bank<float>(kDefaultScales, kDefaultSubbandWeights, 3);
  EXPECT_EQ(bank.layer.out_channels, 3);
  EXPECT_EQ(bank.layer.in_channels, 3);
  EXPECT_EQ(bank.layer.side(), 27);
  EXPECT_FALSE(bank.layer.trainable);
  EXPECT_EQ(bank.layer.activation, Activation::identity);
  EXPECT_EQ(bank.layer.stride, Stride::one);
  for (float b : bank.layer.biases) EXPECT_EQ(b, 0.0f);
}

TEST(BuildBank, KernelsReplicatedAcrossChannelsAndCentred) {
  const auto bank = build_bank<double>(kDefaultScales, kDefaultSubbandWeights, 3);
  for (int c = 0; c < 3; ++c) {
    const Kernel2D k = make_log_kernel(kDefaultScales[c]);
    for (int cp = 0; cp < 3; ++cp) {
      for (int a = -13; a <= 13; ++a) {
        for (int b = -13; b <= 13; ++b) {
          const bool inside = std::abs(a) <= k.half() && std::abs(b) <= k.half();
          EXPECT_EQ(bank.layer.weight(c, cp, a, b), inside ? k.at(a, b) : 0.0);
        }
      }
    }
  }
}

TEST(BuildBank, SingleScale) {
  const auto bank = build_bank<float>({1.0}, {1.0}, 1);
  EXPECT_EQ(bank.layer.out_channels, 1);
  EXPECT_EQ(bank.layer.side(), 9);
}

TEST(BuildBank, InvalidArgumentsAreConfigErrors) {
  EXPECT_THROW(build_bank<float>({0.8, 1.6}, {1.0}, 3), ConfigError);
  EXPECT_THROW(build_bank<float>({}, {}, 3), ConfigError);
  EXPECT_THROW(build_bank<float>({-0.8}, {1.0}, 3), ConfigError);
  EXPECT_THROW(build_bank<float>({1.6, 0.8}, {1.0, 1.0}, 3), ConfigError);
  EXPECT_THROW(build_bank<float>({0.8}, {0.0}, 3), ConfigError);
}

TEST(BankForward, ConstantImageGivesZero) {
  const auto bank = build_bank<double>(kDefaultScales, kDefaultSubbandWeights, 3);
  const auto r = bank_forward(bank, Volume<double>(3, 20, 15, 0.3));
  ASSERT_EQ(r.channels(), 3);
  ASSERT_EQ(r.extent(), (Extent{20, 15}));
  for (double x : r.data()) EXPECT_NEAR(x, 0.0, 1e-12);
}

TEST(BankForward, OffsetInvariant) {
  const auto bank = build_bank<double>(kDefaultScales, kDefaultSubbandWeights, 3);
  std::mt19937_64 rng(21);
  const auto img = oracle::random_volume<double>(rng, 3, 18, 22);
  auto shifted = img;
  for (double& x : shifted.data()) x += 0.25;
  const auto a = bank_forward(bank, img);
  const auto b = bank_forward(bank, shifted);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-6);
}

TEST(BankForward, Linear) {
  const auto bank = build_bank<float>(kDefaultScales, kDefaultSubbandWeights, 3);
  std::mt19937_64 rng(22);
  const auto x = oracle::random_volume<float>(rng, 3, 16, 12);
  const auto y = oracle::random_volume<float>(rng, 3, 16, 12);
  const float a = 0.7f, b = -1.3f;
  auto mix = x;
  for (std::size_t i = 0; i < mix.size(); ++i) mix.data()[i] = a * x.data()[i] + b * y.data()[i];
  const auto fm = bank_forward(bank, mix);
  const auto fx = bank_forward(bank, x);
  const auto fy = bank_forward(bank, y);
  for (std::size_t i = 0; i < fm.size(); ++i) {
    EXPECT_NEAR(fm.data()[i], a * fx.data()[i] + b * fy.data()[i], 1e-5);
  }
}

TEST(BankForward, MatchesReferenceConvolution) {
  const auto bank = build_bank<double>(kDefaultScales, kDefaultSubbandWeights, 3);
  std::mt19937_64 rng(23);
  const auto img = oracle::random_volume<double>(rng, 3, 9, 11);
  const auto got = bank_forward(bank, img);
  const auto want = oracle::conv_pre(img, bank.layer);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], 1e-12);
}

TEST(BankForward, SmallestScaleWinsAtItsPeakFrequency) {
  const auto bank = build_bank<double>(kDefaultScales, kDefaultSubbandWeights, 3);
  const double freq = std::numbers::sqrt2 / (2 * std::numbers::pi * 0.8);
  Volume<double> img(3, 96, 96);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 96; ++y)
      for (int x = 0; x < 96; ++x) img(c, x, y) = std::sin(2 * std::numbers::pi * freq * x);
  const auto r = bank_forward(bank, img);
  EXPECT_GT(channel_energy(r, 0), channel_energy(r, 1));
  EXPECT_GT(channel_energy(r, 0), channel_energy(r, 2));
}

TEST(BankForward, ChannelMismatchIsConfigError) {
  const auto bank = build_bank<float>(kDefaultScales, kDefaultSubbandWeights, 3);
  EXPECT_THROW(bank_forward(bank, Volume<float>(1, 8, 8)), ConfigError);
}

TEST(FrequencyResponse, MatchesDirectDft) {
  const Kernel2D k = make_log_kernel(1.6);
  const int n = 32;
  const auto r = frequency_response(k, n);
  ASSERT_EQ(r.size, n);
  for (int v = 0; v < n; v += 3) {
    for (int u = 0; u < n; u += 5) {
      std::complex<double> acc = 0;
      for (int a = -k.half(); a <= k.half(); ++a)
        for (int b = -k.half(); b <= k.half(); ++b) {
          const double phase =
              -2 * std::numbers::pi * ((u - n / 2) * a + (v - n / 2) * b) / static_cast<double>(n);
          acc += k.at(a, b) * std::polar(1.0, phase);
        }
      EXPECT_NEAR(r.at(u, v), std::abs(acc), 1e-9);
    }
  }
}

TEST(FrequencyResponse, ZeroAtDcAndRotationSymmetric) {
  const auto bank = build_bank<double>(kDefaultScales, kDefaultSubbandWeights, 3);
  for (int i = 0; i < 3; ++i) {
    const auto r = frequency_response(bank, i, 128);
    EXPECT_NEAR(r.at(64, 64), 0.0, 1e-9);
    for (int v = 1; v < 128; ++v)
      for (int u = 1; u < 128; ++u) {
        // 90-degree rotation about DC.
        const int ru = 64 - (v - 64), rv = 64 + (u - 64);
        if (ru < 1 || ru >= 128 || rv < 1 || rv >= 128) continue;
        ASSERT_NEAR(r.at(u, v), r.at(ru, rv), 1e-9);
      }
  }
}

TEST(FrequencyResponse, PeakNearContinuousBandCentre) {
  const auto bank = build_bank<double>(kDefaultScales, kDefaultSubbandWeights, 3);
  double previous = 1e9;
  for (int i = 0; i < 3; ++i) {
    const double sigma = kDefaultScales[i];
    const double peak = peak_radial_bin(frequency_response(bank, i, 128));
    EXPECT_LE(std::abs(peak - 128 * std::numbers::sqrt2 / (2 * std::numbers::pi * sigma)), 1.0)
        << "sigma " << sigma;
    EXPECT_LT(peak, previous);
    previous = peak;
  }
}

TEST(FrequencyResponse, TooSmallTransformIsConfigError) {
  EXPECT_THROW(frequency_response(make_log_kernel(3.2), 16), ConfigError);
}

TEST(BankChecksum, DetectsWeightChanges) {
  auto bank = build_bank<float>(kDefaultScales, kDefaultSubbandWeights, 3);
  const auto before = bank.checksum();
  EXPECT_EQ(before, build_bank<float>(kDefaultScales, kDefaultSubbandWeights, 3).checksum());
  bank.layer.weights[100] += 1e-6f;
  EXPECT_NE(before, bank.checksum());
}
