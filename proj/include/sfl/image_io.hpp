#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sfl/losses.hpp"
#include "sfl/volume.hpp"

namespace sfl {

// 8-bit raster with interleaved channels (1 = gray, 3 = RGB), row-major.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int x, int y, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// Netpbm reader for P2, P3, P5 and P6 with maxval up to 255. Other maxvals are
// rescaled to 0..255.
Image8 read_pnm(const std::filesystem::path& path);

// Writes binary P5 (gray) or P6 (RGB) with maxval 255.
void write_pnm(const Image8& image, const std::filesystem::path& path);

// p / 127.5 - 1
template <typename T>
Volume<T> scale_to_unit(const Volume<T>& v);

// Clamp to [-1, 1], map back to [0, 255] and round half away from zero.
template <typename T>
Volume<T> unscale(const Volume<T>& v);

// Raw 8-bit values as a channel-major volume, gray promoted to 3 channels.
Volume<float> image_to_volume(const Image8& image);
Image8 volume_to_image(const Volume<float>& unit_range);

// 3-channel volume in [-1, 1].
Volume<float> load_image(const std::filesystem::path& path);

// Inverse of load_image; 1- and 3-channel volumes are accepted.
void save_image(const Volume<float>& unit_range, const std::filesystem::path& path);

// Extent whose larger side equals `target`, the other following the aspect ratio.
Extent larger_side_extent(Extent source, int target);

template <typename T>
Volume<T> resize_larger_side(const Volume<T>& v, int target);

struct DatasetItem {
  std::string name;  // file stem
  Volume<float> volume;
};

struct Dataset {
  std::vector<DatasetItem> items;
  int resize_target = 300;  // 0 keeps native sizes
};

bool is_image_file(const std::filesystem::path& path);

// Every .ppm/.pgm/.pnm in `dir`, ordered by file name.
Dataset load_dataset(const std::filesystem::path& dir, int resize_target = 300);

// "epoch,e_pl,sfl_<scale>...,e_total"
std::string loss_csv_header(const std::vector<double>& scales);
std::string loss_csv_row(int epoch, const LossReport& report);

// Formats a real with 9 significant digits.
std::string format_real(double v);
std::string format_scale(double sigma);

class LossLog {
 public:
  // Appends when `append` is set and the file already exists; otherwise truncates
  // and writes the header.
  LossLog(const std::filesystem::path& path, const std::vector<double>& scales,
          bool append = false);

  void write(int epoch, const LossReport& report);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace sfl
