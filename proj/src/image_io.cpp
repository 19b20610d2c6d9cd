#include "sfl/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <iterator>

#include "sfl/conv.hpp"

namespace sfl {

namespace {

class PnmParser {
 public:
  PnmParser(std::vector<char> bytes, std::filesystem::path path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::string magic() {
    if (bytes_.size() < 2) fail("file too short");
    pos_ = 2;
    return std::string(bytes_.data(), 2);
  }

  int header_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      fail("malformed header");
    }
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1L << 24)) fail("header value out of range");
      ++pos_;
    }
    return static_cast<int>(value);
  }

  // Exactly one whitespace byte separates the header from binary data.
  void end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      fail("malformed header");
    }
    ++pos_;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  const char* cursor() const { return bytes_.data() + pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw IoError(path_.string() + ": " + what);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::vector<char> bytes_;
  std::filesystem::path path_;
  std::size_t pos_ = 0;
};

std::uint8_t rescale_sample(int v, int maxval) {
  if (maxval == 255) return static_cast<std::uint8_t>(v);
  return static_cast<std::uint8_t>(std::lround(v * 255.0 / maxval));
}

}  // namespace

Image8 read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  PnmParser p(std::move(bytes), path);

  const std::string magic = p.magic();
  int channels = 0;
  bool binary = false;
  if (magic == "P5") {
    channels = 1, binary = true;
  } else if (magic == "P6") {
    channels = 3, binary = true;
  } else if (magic == "P2") {
    channels = 1;
  } else if (magic == "P3") {
    channels = 3;
  } else {
    p.fail("unsupported image format (expected a PPM or PGM file)");
  }
  Image8 img;
  img.width = p.header_int();
  img.height = p.header_int();
  const int maxval = p.header_int();
  if (img.width <= 0 || img.height <= 0) p.fail("zero-size image");
  if (maxval <= 0 || maxval > 255) p.fail("only 8-bit images (maxval 1..255) are supported");
  img.channels = channels;
  const std::size_t count = static_cast<std::size_t>(img.width) * img.height * channels;
  img.pixels.resize(count);

  if (binary) {
    p.end_of_header();
    if (p.remaining() < count) p.fail("truncated pixel data");
    const char* src = p.cursor();
    for (std::size_t i = 0; i < count; ++i) {
      const int v = static_cast<unsigned char>(src[i]);
      if (v > maxval) p.fail("sample exceeds maxval");
      img.pixels[i] = rescale_sample(v, maxval);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const int v = p.header_int();
      if (v > maxval) p.fail("sample exceeds maxval");
      img.pixels[i] = rescale_sample(v, maxval);
    }
  }
  return img;
}

void write_pnm(const Image8& image, const std::filesystem::path& path) {
  if (image.channels != 1 && image.channels != 3) {
    throw ConfigError("write_pnm: only 1- or 3-channel images can be written");
  }
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels) {
    throw ConfigError("write_pnm: inconsistent image buffer");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << (image.channels == 3 ? "P6" : "P5") << '\n'
      << image.width << ' ' << image.height << '\n'
      << 255 << '\n';
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

template <typename T>
Volume<T> scale_to_unit(const Volume<T>& v) {
  Volume<T> out = v;
  for (T& x : out.data()) x = static_cast<T>(static_cast<double>(x) / 127.5 - 1.0);
  return out;
}

template <typename T>
Volume<T> unscale(const Volume<T>& v) {
  Volume<T> out = v;
  for (T& x : out.data()) {
    const double clamped = std::clamp(static_cast<double>(x), -1.0, 1.0);
    x = static_cast<T>(std::round((clamped + 1.0) * 127.5));
  }
  return out;
}

Volume<float> image_to_volume(const Image8& image) {
  Volume<float> v(3, image.width, image.height);
  for (int c = 0; c < 3; ++c) {
    const int src_c = image.channels == 1 ? 0 : c;
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) v(c, x, y) = image.at(x, y, src_c);
    }
  }
  return v;
}

Image8 volume_to_image(const Volume<float>& unit_range) {
  if (unit_range.channels() != 1 && unit_range.channels() != 3) {
    throw ConfigError("save_image: expected a 1- or 3-channel volume, got " +
                      shape_string(unit_range));
  }
  const Volume<float> raw = unscale(unit_range);
  Image8 img;
  img.width = raw.width();
  img.height = raw.height();
  img.channels = raw.channels();
  img.pixels.resize(raw.size());
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        img.at(x, y, c) = static_cast<std::uint8_t>(raw(c, x, y));
      }
    }
  }
  return img;
}

Volume<float> load_image(const std::filesystem::path& path) {
  return scale_to_unit(image_to_volume(read_pnm(path)));
}

void save_image(const Volume<float>& unit_range, const std::filesystem::path& path) {
  write_pnm(volume_to_image(unit_range), path);
}

Extent larger_side_extent(Extent source, int target) {
  if (target < 1) throw ConfigError("resize target must be at least 1");
  const int larger = std::max(source.width, source.height);
  const int smaller = std::min(source.width, source.height);
  const int other =
      std::max(1, static_cast<int>(std::lround(static_cast<double>(target) * smaller / larger)));
  return source.width >= source.height ? Extent{target, other} : Extent{other, target};
}

template <typename T>
Volume<T> resize_larger_side(const Volume<T>& v, int target) {
  const Extent e = larger_side_extent(v.extent(), target);
  if (e == v.extent()) return v;
  return bilinear_resample(v, e.width, e.height);
}

bool is_image_file(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

Dataset load_dataset(const std::filesystem::path& dir, int resize_target) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw IoError(dir.string() + ": not a readable directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  if (files.empty()) throw IoError(dir.string() + ": no .ppm/.pgm/.pnm images found");

  Dataset ds;
  ds.resize_target = resize_target;
  for (const auto& f : files) {
    Volume<float> v = load_image(f);
    if (resize_target > 0) v = resize_larger_side(v, resize_target);
    ds.items.push_back({f.stem().string(), std::move(v)});
  }
  return ds;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string format_scale(double sigma) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", sigma);
  return buf;
}

std::string loss_csv_header(const std::vector<double>& scales) {
  std::string h = "epoch,e_pl";
  for (double s : scales) h += ",sfl_" + format_scale(s);
  h += ",e_total";
  return h;
}

std::string loss_csv_row(int epoch, const LossReport& report) {
  std::string row = std::to_string(epoch) + "," + format_real(report.e_pl);
  for (double v : report.e_sfl_per_band) row += "," + format_real(v);
  row += "," + format_real(report.e_total);
  return row;
}

LossLog::LossLog(const std::filesystem::path& path, const std::vector<double>& scales, bool append)
    : path_(path) {
  const bool reuse = append && std::filesystem::exists(path);
  out_.open(path, reuse ? std::ios::app : std::ios::trunc);
  if (!out_) throw IoError(path.string() + ": cannot open loss log");
  if (!reuse) out_ << loss_csv_header(scales) << '\n' << std::flush;
}

void LossLog::write(int epoch, const LossReport& report) {
  out_ << loss_csv_row(epoch, report) << '\n' << std::flush;
  if (!out_) throw IoError(path_.string() + ": write failed");
}

template Volume<float> scale_to_unit(const Volume<float>&);
template Volume<double> scale_to_unit(const Volume<double>&);
template Volume<float> unscale(const Volume<float>&);
template Volume<double> unscale(const Volume<double>&);
template Volume<float> resize_larger_side(const Volume<float>&, int);
template Volume<double> resize_larger_side(const Volume<double>&, int);

}  // namespace sfl
