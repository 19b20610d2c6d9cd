#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sfl/commands.hpp"
#include "sfl/errors.hpp"

namespace {

std::vector<double> parse_scales(const std::string& text) {
  sfl::RunConfig scratch;
  sfl::apply_setting(scratch, "scales", text);
  return scratch.scales;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convolutional autoencoder trainer with a spatial frequency loss"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "train a model on a directory of PPM/PGM images");
  std::string config_path;
  train->add_option("--config", config_path, "key=value configuration file");
  std::map<std::string, std::string> overrides;
  for (const auto& key : sfl::run_config_keys()) {
    train->add_option("--" + key, overrides[key], "override '" + key + "'");
  }

  auto* recon = app.add_subcommand("reconstruct", "reconstruct an image with a checkpoint");
  std::string ck_path, image_path, out_path;
  recon->add_option("checkpoint", ck_path)->required();
  recon->add_option("image", image_path)->required();
  recon->add_option("output", out_path)->required();

  auto* subbands = app.add_subcommand("subbands", "per-band spatial frequency loss between images");
  std::string image_a, image_b, csv_path;
  std::string scales_text = "0.8,1.6,3.2";
  subbands->add_option("image_a", image_a)->required();
  subbands->add_option("image_b", image_b)->required();
  subbands->add_option("output_csv", csv_path)->required();
  subbands->add_option("--scales", scales_text, "comma-separated LoG scales");

  auto* dump = app.add_subcommand("dump-bank", "write filter-bank frequency responses or subbands");
  std::string dump_image, dump_out;
  int fft_size = 128;
  dump->add_option("--image", dump_image, "write quantized subbands of this image instead");
  dump->add_option("--out", dump_out, "output directory")->required();
  dump->add_option("--scales", scales_text, "comma-separated LoG scales");
  dump->add_option("--fft-size", fft_size, "transform size of the frequency responses");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return sfl::kExitUsage;
  }

  try {
    if (*train) {
      sfl::RunConfig config;
      if (!config_path.empty()) sfl::apply_config_file(config, config_path);
      for (const auto& key : sfl::run_config_keys()) {
        if (train->count("--" + key) > 0) sfl::apply_setting(config, key, overrides[key]);
      }
      return sfl::cmd_train(config, std::cerr);
    }
    if (*recon) return sfl::cmd_reconstruct(ck_path, image_path, out_path, std::cerr);
    if (*subbands) {
      return sfl::cmd_subbands(image_a, image_b, csv_path, parse_scales(scales_text), std::cerr);
    }
    if (*dump) {
      std::optional<std::filesystem::path> image;
      if (!dump_image.empty()) image = dump_image;
      return sfl::cmd_dump_bank(image, dump_out, parse_scales(scales_text), fft_size, std::cerr);
    }
  } catch (const sfl::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return sfl::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return sfl::kExitIo;
  }
  return sfl::kExitUsage;
}
