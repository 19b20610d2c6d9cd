#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "sfl/image_io.hpp"
#include "sfl/log_bank.hpp"
#include "sfl/model.hpp"

namespace sfl {

// Process exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitIo = 1, kExitUsage = 2 };

struct RunConfig {
  std::string data_dir;
  std::string out_dir = "run";
  int resize_target = 300;  // 0 keeps native sizes
  double lr = 0.02;
  double momentum = 0.5;
  double init_std = 0.02;
  int epochs = 2000;
  std::uint64_t seed = 0;
  bool sfl_enabled = true;
  std::vector<double> scales = kDefaultScales;
  std::vector<double> w_sfl = kDefaultSubbandWeights;
  std::vector<double> w_pl{1.0, 1.0, 1.0};
  int checkpoint_every = 100;  // 0 disables periodic checkpoints
  std::vector<int> snapshot_epochs{100, 500, 1000, 1500, 2000};
  int batch_size = 0;  // 0 = full batch
  int threads = 1;
  std::string resume;  // checkpoint to continue from

  TrainConfig train_config() const;
  // Throws ConfigError on any invalid field.
  void validate() const;
};

// Keys accepted in config files and as --key overrides.
const std::vector<std::string>& run_config_keys();

// Throws ConfigError for unknown keys or unparsable values.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

// key=value lines; '#' starts a comment; blank lines are ignored.
void apply_config_text(RunConfig& config, std::string_view text);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

// Frequency response as an 8-bit gray raster, power (magnitude squared)
// normalized so the maximum maps to 255.
Image8 power_raster(const FrequencyResponse& response);

// Squares one bank output channel and quantizes it to `levels` uniform gray
// levels spanning [0, 255]. A channel with no energy maps to level 0.
Image8 quantized_response_raster(const Volume<double>& bank_output, int channel, int levels = 10);

// All commands report progress and errors on `log` and return an ExitCode.
int cmd_train(const RunConfig& config, std::ostream& log);
int cmd_reconstruct(const std::filesystem::path& checkpoint, const std::filesystem::path& image,
                    const std::filesystem::path& out, std::ostream& log);
int cmd_subbands(const std::filesystem::path& image_a, const std::filesystem::path& image_b,
                 const std::filesystem::path& out_csv, const std::vector<double>& scales,
                 std::ostream& log);
int cmd_dump_bank(const std::optional<std::filesystem::path>& image,
                  const std::filesystem::path& out_dir, const std::vector<double>& scales,
                  int fft_size, std::ostream& log);

}  // namespace sfl
