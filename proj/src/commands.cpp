#include "sfl/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <system_error>

#include "sfl/checkpoint.hpp"
#include "sfl/errors.hpp"

namespace sfl {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) +
                    " (expected " + std::string(want) + ")");
}

template <typename N>
N parse_number(std::string_view key, std::string_view text, std::string_view want) {
  text = trim(text);
  N value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size() || text.empty()) {
    bad_value(key, text, want);
  }
  if constexpr (std::is_floating_point_v<N>) {
    if (!std::isfinite(value)) bad_value(key, text, want);
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  bad_value(key, text, "true or false");
}

template <typename N>
std::vector<N> parse_list(std::string_view key, std::string_view text, std::string_view want) {
  std::vector<N> out;
  text = trim(text);
  if (text.empty()) return out;
  while (true) {
    const auto comma = text.find(',');
    out.push_back(parse_number<N>(key, text.substr(0, comma), want));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

int run_guarded(std::ostream& log, const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitIo;
  }
}

std::string epoch_tag(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%05d", epoch);
  return buf;
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": cannot create directory: " + ec.message());
}

std::vector<double> unit_weights(std::size_t n) { return std::vector<double>(n, 1.0); }

void write_snapshots(const CaeModel<float>& model, const Dataset& data, const fs::path& dir) {
  make_dirs(dir);
  for (const auto& item : data.items) {
    save_image(reconstruct(model, item.volume), dir / (item.name + ".ppm"));
  }
}

}  // namespace

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.learning_rate = lr;
  t.momentum = momentum;
  t.init_std = init_std;
  t.max_epochs = epochs;
  t.mini_batch = batch_size;
  t.seed = seed;
  t.weights.pixel = w_pl;
  t.weights.subband = w_sfl;
  t.scales = scales;
  t.sfl_enabled = sfl_enabled;
  t.threads = threads;
  return t;
}

void RunConfig::validate() const {
  if (data_dir.empty()) throw ConfigError("data_dir is required");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  if (resize_target < 0) throw ConfigError("resize_target must be non-negative (0 keeps sizes)");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  if (batch_size < 0) throw ConfigError("batch_size must be non-negative");
  for (int e : snapshot_epochs) {
    if (e < 1) throw ConfigError("snapshot epochs must be positive");
  }
  if (scales.empty()) throw ConfigError("at least one scale is required");
  // Rejects bad scale sets before any data is read.
  (void)build_bank<float>(scales, w_sfl, kImageChannels);
  train_config().validate();
}

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys{
      "data_dir", "out_dir", "resize_target",    "lr",              "momentum",   "init_std",
      "epochs",   "seed",    "sfl_enabled",      "scales",          "w_sfl",      "w_pl",
      "checkpoint_every",    "snapshot_epochs",  "batch_size",      "threads",    "resume"};
  return keys;
}

void apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
  const std::string_view v = trim(value);
  if (key == "data_dir") {
    c.data_dir = v;
  } else if (key == "out_dir") {
    c.out_dir = v;
  } else if (key == "resize_target") {
    c.resize_target = parse_number<int>(key, v, "an integer");
  } else if (key == "lr") {
    c.lr = parse_number<double>(key, v, "a real number");
  } else if (key == "momentum") {
    c.momentum = parse_number<double>(key, v, "a real number");
  } else if (key == "init_std") {
    c.init_std = parse_number<double>(key, v, "a real number");
  } else if (key == "epochs") {
    c.epochs = parse_number<int>(key, v, "an integer");
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, v, "an unsigned integer");
  } else if (key == "sfl_enabled") {
    c.sfl_enabled = parse_bool(key, v);
  } else if (key == "scales") {
    c.scales = parse_list<double>(key, v, "comma-separated reals");
  } else if (key == "w_sfl") {
    c.w_sfl = parse_list<double>(key, v, "comma-separated reals");
  } else if (key == "w_pl") {
    c.w_pl = parse_list<double>(key, v, "comma-separated reals");
  } else if (key == "checkpoint_every") {
    c.checkpoint_every = parse_number<int>(key, v, "an integer");
  } else if (key == "snapshot_epochs") {
    c.snapshot_epochs = parse_list<int>(key, v, "comma-separated integers");
  } else if (key == "batch_size") {
    c.batch_size = parse_number<int>(key, v, "an integer");
  } else if (key == "threads") {
    c.threads = parse_number<int>(key, v, "an integer");
  } else if (key == "resume") {
    c.resume = v;
  } else {
    throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  }
}

void apply_config_text(RunConfig& config, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    try {
      apply_setting(config, trim(s.substr(0, eq)), s.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    apply_config_text(config, buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Image8 power_raster(const FrequencyResponse& response) {
  double peak = 0.0;
  for (double m : response.magnitude) peak = std::max(peak, m * m);
  Image8 img;
  img.width = img.height = response.size;
  img.channels = 1;
  img.pixels.resize(response.magnitude.size());
  for (std::size_t i = 0; i < response.magnitude.size(); ++i) {
    const double p = response.magnitude[i] * response.magnitude[i];
    img.pixels[i] = peak > 0.0 ? static_cast<std::uint8_t>(std::lround(255.0 * p / peak)) : 0;
  }
  return img;
}

Image8 quantized_response_raster(const Volume<double>& bank_output, int channel, int levels) {
  if (channel < 0 || channel >= bank_output.channels()) {
    throw ConfigError("quantized_response_raster: channel out of range");
  }
  if (levels < 2 || levels > 256) throw ConfigError("quantization needs 2..256 levels");
  const auto plane = bank_output.plane(channel);
  double peak = 0.0;
  for (double v : plane) peak = std::max(peak, v * v);
  Image8 img;
  img.width = bank_output.width();
  img.height = bank_output.height();
  img.channels = 1;
  img.pixels.assign(plane.size(), 0);
  // Round-off residue of a zero-sum kernel on flat input is not structure.
  if (peak <= 1e-12) return img;
  for (std::size_t i = 0; i < plane.size(); ++i) {
    const double u = plane[i] * plane[i] / peak;
    const int level = std::min(levels - 1, static_cast<int>(std::floor(u * levels)));
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(level * 255.0 / (levels - 1)));
  }
  return img;
}

int cmd_train(const RunConfig& config, std::ostream& log) {
  return run_guarded(log, [&] {
    config.validate();
    const TrainConfig tc = config.train_config();
    const Dataset data = load_dataset(config.data_dir, config.resize_target);
    log << "loaded " << data.items.size() << " images from " << config.data_dir << '\n';

    ModelAndState<float> ms;
    int start_epoch = 0;
    if (!config.resume.empty()) {
      Checkpoint ck = load_checkpoint(config.resume);
      if (ck.config.scales != tc.scales) {
        throw ConfigError("resume checkpoint was trained with different bank scales");
      }
      ms.model = std::move(ck.model);
      ms.state = std::move(ck.state);
      ms.model.bank = build_bank<float>(tc.scales, tc.weights.subband, kImageChannels);
      start_epoch = static_cast<int>(ck.epoch);
      log << "resuming from epoch " << start_epoch << '\n';
    } else {
      ms = build_cae<float>(tc.seed, tc);
    }

    const fs::path out = config.out_dir;
    const fs::path ck_dir = out / "checkpoints";
    make_dirs(ck_dir);

    std::vector<Volume<float>> images;
    images.reserve(data.items.size());
    for (const auto& item : data.items) images.push_back(item.volume);
    const TrainingSet<float> set(std::move(images), ms.model.bank);

    LossLog loss_log(out / "loss.csv", tc.scales, start_epoch > 0);
    for (int epoch = start_epoch + 1; epoch <= config.epochs; ++epoch) {
      const LossReport report = train_epoch(ms.model, ms.state, set, tc);
      loss_log.write(epoch, report);
      if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
        save_checkpoint(ms.model, ms.state, static_cast<std::uint32_t>(epoch), tc,
                        ck_dir / (epoch_tag(epoch) + ".sflc"));
      }
      if (std::find(config.snapshot_epochs.begin(), config.snapshot_epochs.end(), epoch) !=
          config.snapshot_epochs.end()) {
        write_snapshots(ms.model, data, out / "snapshots" / epoch_tag(epoch));
      }
    }
    const int final_epoch = std::max(start_epoch, config.epochs);
    save_checkpoint(ms.model, ms.state, static_cast<std::uint32_t>(final_epoch), tc,
                    ck_dir / "final.sflc");
    log << "finished at epoch " << final_epoch << '\n';
  });
}

int cmd_reconstruct(const fs::path& checkpoint, const fs::path& image, const fs::path& out,
                    std::ostream& log) {
  return run_guarded(log, [&] {
    const Checkpoint ck = load_checkpoint(checkpoint);
    const Volume<float> input = load_image(image);
    save_image(reconstruct(ck.model, input), out);
    log << "wrote " << out.string() << " (" << input.width() << "x" << input.height() << ")\n";
  });
}

int cmd_subbands(const fs::path& image_a, const fs::path& image_b, const fs::path& out_csv,
                 const std::vector<double>& scales, std::ostream& log) {
  return run_guarded(log, [&] {
    const auto bank = build_bank<double>(scales, unit_weights(scales.size()), kImageChannels);
    const Volume<double> a = load_image(image_a).cast<double>();
    const Volume<double> b = load_image(image_b).cast<double>();
    if (!a.same_shape(b)) {
      throw ConfigError("image sizes differ: " + shape_string(a) + " vs " + shape_string(b));
    }
    const SubbandLoss loss = subband_loss(bank_forward(bank, a), bank_forward(bank, b),
                                          bank.subband_weights);
    std::ofstream out(out_csv, std::ios::trunc);
    if (!out) throw IoError(out_csv.string() + ": cannot open for writing");
    for (std::size_t i = 0; i < scales.size(); ++i) {
      out << (i ? "," : "") << "sfl_" << format_scale(scales[i]);
    }
    out << '\n';
    for (std::size_t i = 0; i < loss.per_band.size(); ++i) {
      out << (i ? "," : "") << format_real(loss.per_band[i]);
    }
    out << '\n';
    if (!out) throw IoError(out_csv.string() + ": write failed");
  });
}

int cmd_dump_bank(const std::optional<fs::path>& image, const fs::path& out_dir,
                  const std::vector<double>& scales, int fft_size, std::ostream& log) {
  return run_guarded(log, [&] {
    const auto bank = build_bank<double>(scales, unit_weights(scales.size()), kImageChannels);
    make_dirs(out_dir);
    if (!image) {
      for (int i = 0; i < bank.bands(); ++i) {
        const fs::path p =
            out_dir / ("frequency_response_sigma_" + format_scale(scales[i]) + ".pgm");
        write_pnm(power_raster(frequency_response(bank, i, fft_size)), p);
        log << "wrote " << p.string() << '\n';
      }
      return;
    }
    const Volume<double> response = bank_forward(bank, load_image(*image).cast<double>());
    for (int i = 0; i < bank.bands(); ++i) {
      const fs::path p = out_dir / ("subband_sigma_" + format_scale(scales[i]) + ".pgm");
      write_pnm(quantized_response_raster(response, i), p);
      log << "wrote " << p.string() << '\n';
    }
  });
}

}  // namespace sfl
