#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "sfl/checkpoint.hpp"
#include "sfl/errors.hpp"

using namespace sfl;
namespace fs = std::filesystem;

namespace {

std::vector<Volume<float>> images() {
  std::vector<Volume<float>> out;
  for (int i = 0; i < 2; ++i) {
    Volume<float> v(3, 18 + i, 17);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < v.height(); ++y)
        for (int x = 0; x < v.width(); ++x)
          v(c, x, y) = static_cast<float>(0.7 * std::sin(0.3 * x + c + i) * std::cos(0.2 * y));
    out.push_back(std::move(v));
  }
  return out;
}

ModelAndState<float> trained(int epochs, const TrainConfig& cfg) {
  auto ms = build_cae<float>(cfg.seed, cfg);
  const TrainingSet<float> set(images(), ms.model.bank);
  for (int e = 0; e < epochs; ++e) train_epoch(ms.model, ms.state, set, cfg);
  return ms;
}

TrainConfig config() {
  TrainConfig cfg;
  cfg.seed = 42;
  cfg.weights.pixel = {1.0, 0.5, 2.0};
  return cfg;
}

}  // namespace

TEST(Checkpoint, EncodeDecodeEncodeIsByteIdentical) {
  const auto cfg = config();
  const auto ms = trained(2, cfg);
  const auto bytes = encode_checkpoint(ms.model, ms.state, 2, cfg);
  const auto ck = decode_checkpoint(bytes);
  EXPECT_EQ(ck.epoch, 2u);
  EXPECT_EQ(ck.model.layers, ms.model.layers);
  EXPECT_EQ(ck.model.bank.layer, ms.model.bank.layer);
  EXPECT_EQ(ck.config.learning_rate, cfg.learning_rate);
  EXPECT_EQ(ck.config.momentum, cfg.momentum);
  EXPECT_EQ(ck.config.seed, cfg.seed);
  EXPECT_EQ(ck.config.weights.pixel, cfg.weights.pixel);
  EXPECT_EQ(ck.config.weights.subband, cfg.weights.subband);
  EXPECT_EQ(ck.config.scales, cfg.scales);
  for (std::size_t l = 0; l < ms.state.velocity.size(); ++l) {
    EXPECT_EQ(ck.state.velocity[l].weights, ms.state.velocity[l].weights);
    EXPECT_EQ(ck.state.velocity[l].biases, ms.state.velocity[l].biases);
  }
  EXPECT_EQ(encode_checkpoint(ck.model, ck.state, ck.epoch, ck.config), bytes);
}

TEST(Checkpoint, HeaderLayout) {
  const auto cfg = config();
  const auto ms = build_cae<float>(1, cfg);
  const auto bytes = encode_checkpoint(ms.model, ms.state, 0x01020304, cfg);
  ASSERT_GT(bytes.size(), 10u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SFLC");
  EXPECT_EQ(bytes[4], kCheckpointVersion & 0xff);
  EXPECT_EQ(bytes[5], kCheckpointVersion >> 8);
  EXPECT_EQ(bytes[6], 0x04);
  EXPECT_EQ(bytes[9], 0x01);
}

TEST(Checkpoint, SaveLoadSaveFilesMatch) {
  const fs::path dir = fs::temp_directory_path() / "sflcae_ckpt_roundtrip";
  fs::create_directories(dir);
  const auto cfg = config();
  const auto ms = trained(1, cfg);
  save_checkpoint(ms.model, ms.state, 1, cfg, dir / "a.sflc");
  const auto ck = load_checkpoint(dir / "a.sflc");
  save_checkpoint(ck.model, ck.state, ck.epoch, ck.config, dir / "b.sflc");
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  EXPECT_EQ(slurp(dir / "a.sflc"), slurp(dir / "b.sflc"));
  EXPECT_FALSE(fs::exists(dir / "a.sflc.tmp"));
  fs::remove_all(dir);
}

TEST(Checkpoint, EveryTruncationIsRejected) {
  const auto cfg = config();
  const auto ms = build_cae<float>(3, cfg, {2, 2, 2});
  const auto bytes = encode_checkpoint(ms.model, ms.state, 0, cfg);
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    EXPECT_THROW(decode_checkpoint(std::span(bytes).first(n)), CheckpointError) << n;
  }
}

TEST(Checkpoint, CorruptionIsRejected) {
  const auto cfg = config();
  const auto ms = build_cae<float>(4, cfg, {2, 2, 2});
  const auto bytes = encode_checkpoint(ms.model, ms.state, 0, cfg);

  auto expect_error = [](std::vector<std::uint8_t> b, const std::string& what) {
    try {
      decode_checkpoint(b);
      ADD_FAILURE() << "accepted corrupted checkpoint, expected: " << what;
    } catch (const CheckpointError& e) {
      EXPECT_NE(std::string(e.what()).find(what), std::string::npos) << e.what();
    }
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  expect_error(bad_magic, "magic");

  auto new_version = bytes;
  new_version[4] = kCheckpointVersion + 1;
  expect_error(new_version, "version");

  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  expect_error(flipped, "checksum");

  auto longer = bytes;
  longer.push_back(0);
  expect_error(longer, "trailing");
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.sflc"), IoError);
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  const auto cfg = config();
  auto straight = build_cae<float>(cfg.seed, cfg);
  const TrainingSet<float> set(images(), straight.model.bank);
  std::vector<LossReport> reports;
  for (int e = 0; e < 4; ++e) reports.push_back(train_epoch(straight.model, straight.state, set, cfg));

  auto partial = trained(2, cfg);
  auto ck = decode_checkpoint(encode_checkpoint(partial.model, partial.state, 2, cfg));
  for (int e = 2; e < 4; ++e) {
    const auto r = train_epoch(ck.model, ck.state, set, ck.config);
    EXPECT_EQ(r.e_pl, reports[e].e_pl);
    EXPECT_EQ(r.e_sfl_per_band, reports[e].e_sfl_per_band);
    EXPECT_EQ(r.e_total, reports[e].e_total);
  }
  EXPECT_EQ(ck.model.layers, straight.model.layers);
}
