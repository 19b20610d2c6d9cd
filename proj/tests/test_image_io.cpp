#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "sfl/errors.hpp"
#include "sfl/image_io.hpp"

using namespace sfl;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("sflcae_io_" + std::to_string(std::random_device{}()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

Image8 random_image(int w, int h, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image8 img;
  img.width = w;
  img.height = h;
  img.channels = channels;
  img.pixels.resize(static_cast<std::size_t>(w) * h * channels);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

std::string error_of(const fs::path& p) {
  try {
    read_pnm(p);
  } catch (const IoError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Pnm, ColorRoundTrip) {
  TempDir dir;
  const auto img = random_image(13, 7, 3, 1);
  write_pnm(img, dir.path() / "a.ppm");
  const auto back = read_pnm(dir.path() / "a.ppm");
  EXPECT_EQ(back.width, 13);
  EXPECT_EQ(back.height, 7);
  EXPECT_EQ(back.channels, 3);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Pnm, VolumeRoundTripIsExactOnEightBitValues) {
  TempDir dir;
  const auto img = random_image(9, 11, 3, 2);
  write_pnm(img, dir.path() / "a.ppm");
  const auto v = load_image(dir.path() / "a.ppm");
  save_image(v, dir.path() / "b.ppm");
  EXPECT_EQ(read_pnm(dir.path() / "b.ppm").pixels, img.pixels);
}

TEST(Pnm, GrayIsPromotedToThreeEqualChannels) {
  TempDir dir;
  const auto img = random_image(5, 4, 1, 3);
  write_pnm(img, dir.path() / "g.pgm");
  const auto v = load_image(dir.path() / "g.pgm");
  ASSERT_EQ(v.channels(), 3);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) {
      EXPECT_EQ(v(0, x, y), v(1, x, y));
      EXPECT_EQ(v(0, x, y), v(2, x, y));
      EXPECT_NEAR(v(0, x, y), img.at(x, y, 0) / 127.5 - 1.0, 1e-6);
    }
}

TEST(Pnm, SingleWhitePixelMapsToOne) {
  TempDir dir;
  write_bytes(dir.path() / "w.ppm", std::string("P6\n1 1\n255\n") + "\xff\xff\xff");
  const auto v = load_image(dir.path() / "w.ppm");
  for (float x : v.data()) EXPECT_EQ(x, 1.0f);
}

TEST(Pnm, AsciiVariantsAndSmallMaxval) {
  TempDir dir;
  write_bytes(dir.path() / "a.pgm", "P2\n# comment\n2 1\n15\n0 15\n");
  const auto g = read_pnm(dir.path() / "a.pgm");
  EXPECT_EQ(g.pixels, (std::vector<std::uint8_t>{0, 255}));
  write_bytes(dir.path() / "a.ppm", "P3 1 1 255 10 20 30");
  EXPECT_EQ(read_pnm(dir.path() / "a.ppm").pixels, (std::vector<std::uint8_t>{10, 20, 30}));
}

TEST(Pnm, ErrorsNameTheFile) {
  TempDir dir;
  const auto missing = dir.path() / "missing.ppm";
  EXPECT_NE(error_of(missing).find("missing.ppm"), std::string::npos);

  write_bytes(dir.path() / "x.png", "\x89PNG\r\n\x1a\n");
  EXPECT_NE(error_of(dir.path() / "x.png").find("unsupported"), std::string::npos);
  EXPECT_NE(error_of(dir.path() / "x.png").find("x.png"), std::string::npos);

  write_bytes(dir.path() / "z.ppm", "P6\n0 5\n255\n");
  EXPECT_NE(error_of(dir.path() / "z.ppm").find("zero-size"), std::string::npos);

  write_bytes(dir.path() / "t.ppm", "P6\n4 4\n255\nabc");
  EXPECT_NE(error_of(dir.path() / "t.ppm").find("truncated"), std::string::npos);

  write_bytes(dir.path() / "m.pgm", "P5\n1 1\n65535\n\x01\x02");
  EXPECT_NE(error_of(dir.path() / "m.pgm").find("8-bit"), std::string::npos);
}

TEST(Scaling, Endpoints) {
  Volume<double> v(1, 3, 1, std::vector<double>{0.0, 255.0, 127.5});
  const auto s = scale_to_unit(v);
  EXPECT_EQ(s(0, 0, 0), -1.0);
  EXPECT_EQ(s(0, 1, 0), 1.0);
  EXPECT_EQ(s(0, 2, 0), 0.0);
}

TEST(Scaling, BijectiveOnEightBitLattice) {
  Volume<float> v(1, 256, 1);
  for (int p = 0; p < 256; ++p) v(0, p, 0) = static_cast<float>(p);
  EXPECT_EQ(unscale(scale_to_unit(v)), v);
}

TEST(Scaling, UnscaleClampsAndRoundsHalfAway) {
  Volume<double> v(1, 3, 1, std::vector<double>{1.7, -3.0, 0.0});
  const auto u = unscale(v);
  EXPECT_EQ(u(0, 0, 0), 255.0);
  EXPECT_EQ(u(0, 1, 0), 0.0);
  EXPECT_EQ(u(0, 2, 0), 128.0);  // 127.5 rounds up
}

TEST(Resize, LargerSideRule) {
  EXPECT_EQ(larger_side_extent({600, 400}, 300), (Extent{300, 200}));
  EXPECT_EQ(larger_side_extent({400, 600}, 300), (Extent{200, 300}));
  EXPECT_EQ(larger_side_extent({300, 225}, 300), (Extent{300, 225}));
  EXPECT_EQ(larger_side_extent({100, 50}, 300), (Extent{300, 150}));
  EXPECT_EQ(larger_side_extent({1000, 1}, 10), (Extent{10, 1}));
  EXPECT_THROW(larger_side_extent({10, 10}, 0), ConfigError);
}

TEST(Resize, FixedPointAndBilinear) {
  std::mt19937_64 rng(4);
  const auto v = oracle::random_volume<double>(rng, 3, 300, 225);
  EXPECT_EQ(resize_larger_side(v, 300), v);
  const auto small = oracle::random_volume<double>(rng, 3, 10, 5);
  const auto up = resize_larger_side(small, 30);
  ASSERT_EQ(up.extent(), (Extent{30, 15}));
  const auto ref = oracle::upsample(small, 30, 15);
  for (std::size_t i = 0; i < up.size(); ++i) EXPECT_NEAR(up.data()[i], ref.data()[i], 1e-12);
}

TEST(Dataset, LexicographicOrderAndResize) {
  TempDir dir;
  write_pnm(random_image(40, 20, 3, 5), dir.path() / "b.ppm");
  write_pnm(random_image(10, 30, 1, 6), dir.path() / "a.pgm");
  write_pnm(random_image(8, 8, 3, 7), dir.path() / "c.ppm");
  write_bytes(dir.path() / "notes.txt", "ignored");
  const auto ds = load_dataset(dir.path(), 24);
  ASSERT_EQ(ds.items.size(), 3u);
  EXPECT_EQ(ds.items[0].name, "a");
  EXPECT_EQ(ds.items[1].name, "b");
  EXPECT_EQ(ds.items[2].name, "c");
  EXPECT_EQ(ds.items[0].volume.extent(), (Extent{8, 24}));
  EXPECT_EQ(ds.items[1].volume.extent(), (Extent{24, 12}));
  EXPECT_EQ(ds.items[2].volume.extent(), (Extent{24, 24}));
  for (const auto& item : ds.items) EXPECT_EQ(item.volume.channels(), 3);
  EXPECT_EQ(load_dataset(dir.path(), 0).items[1].volume.extent(), (Extent{40, 20}));
}

TEST(Dataset, EmptyDirectoryIsIoError) {
  TempDir dir;
  EXPECT_THROW(load_dataset(dir.path()), IoError);
  EXPECT_THROW(load_dataset(dir.path() / "nope"), IoError);
}

TEST(LossCsv, HeaderAndRowFormat) {
  EXPECT_EQ(loss_csv_header(kDefaultScales), "epoch,e_pl,sfl_0.8,sfl_1.6,sfl_3.2,e_total");
  LossReport r;
  r.e_pl = 0.123456789123;
  r.e_sfl_per_band = {1.0 / 3.0, 2e-12, 0.0};
  r.e_total = 12.5;
  EXPECT_EQ(loss_csv_row(7, r), "7,0.123456789,0.333333333,2e-12,0,12.5");
}

TEST(LossCsv, AppendKeepsSingleHeader) {
  TempDir dir;
  const auto p = dir.path() / "loss.csv";
  LossReport r;
  r.e_sfl_per_band = {0, 0, 0};
  { LossLog(p, kDefaultScales).write(1, r); }
  { LossLog(p, kDefaultScales, true).write(2, r); }
  std::ifstream in(p);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(text, "epoch,e_pl,sfl_0.8,sfl_1.6,sfl_3.2,e_total\n1,0,0,0,0,0\n2,0,0,0,0,0\n");
}
