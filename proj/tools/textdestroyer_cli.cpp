// Command-line front end: run, batch, fixture, config.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "textdestroyer/config.hpp"
#include "textdestroyer/fixtures.hpp"
#include "textdestroyer/image_io.hpp"
#include "textdestroyer/pipeline.hpp"
#include "textdestroyer/storage.hpp"

namespace td = textdestroyer;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailures = 1;
constexpr int kExitConfig = 2;

struct PipelineFlags {
  std::vector<std::pair<std::string, CLI::Option*>> values;
  std::vector<std::pair<std::string, std::string>> storage;
  std::vector<std::string> overrides;
  std::string config_file;
  bool dump_attention = false;
  bool dump_latents = false;
  bool dry_run = false;
};

void add_pipeline_flags(CLI::App* app, PipelineFlags& flags, bool batch) {
  static const std::vector<std::pair<std::string, std::string>> bindings{
      {"--input", "input"},   {"--output-dir", "output_dir"}, {"--mask", "mask"},
      {"--backend", "backend"}, {"--steps", "steps"},         {"--gamma", "gamma"},
      {"--k1", "k1"},         {"--k2", "k2"},                 {"--kv-steps", "kv_steps"},
      {"--kv-layers", "kv_layers"}, {"--replace-step", "replace_step"}, {"--seed", "seed"},
      {"--jobs", "jobs"},
  };
  flags.storage.reserve(bindings.size());
  for (const auto& [flag, key] : bindings) {
    if (!batch && flag == "--jobs") continue;
    flags.storage.emplace_back(key, "");
    std::string help = "config key " + key;
    if (batch && flag == "--input") help = "input directory of PNG images";
    if (batch && flag == "--mask") help = "directory of user masks named like the inputs";
    flags.values.emplace_back(key, app->add_option(flag, flags.storage.back().second, help));
  }
  app->add_option("--config", flags.config_file, "config file; its keys override flags");
  app->add_option("--set", flags.overrides, "extra key=value config entries");
  app->add_flag("--dump-attention", flags.dump_attention, "write per-word attention heatmaps");
  app->add_flag("--dump-latents", flags.dump_latents, "write the inversion trajectory and restoration latents");
  app->add_flag("--dry-run", flags.dry_run, "localize and write masks only");
}

td::PipelineConfig build_config(const PipelineFlags& flags) {
  td::PipelineConfig config;
  for (std::size_t i = 0; i < flags.values.size(); ++i) {
    if (flags.values[i].second->count() > 0) {
      td::apply_config_value(config, flags.storage[i].first, flags.storage[i].second);
    }
  }
  for (const std::string& entry : flags.overrides) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos) throw td::ConfigError("--set expects key=value, got '" + entry + "'");
    td::apply_config_value(config, entry.substr(0, eq), entry.substr(eq + 1));
  }
  if (flags.dump_attention) config.dump_attention = true;
  if (flags.dump_latents) config.dump_latents = true;
  if (flags.dry_run) config.dry_run = true;
  if (!flags.config_file.empty()) {
    std::string text;
    try {
      text = td::storage::read_text(flags.config_file);
    } catch (const std::exception& e) {
      throw td::ConfigError(std::string("cannot read config file: ") + e.what());
    }
    td::apply_config_text(config, text);
  }
  config.validate();
  return config;
}

int write_fixtures(const std::string& out_dir, int count, std::uint64_t seed, int size) {
  const std::filesystem::path root = out_dir;
  std::filesystem::create_directories(root / "truth");
  for (int i = 0; i < count; ++i) {
    const td::GlyphFixture fx = td::make_glyph_fixture(seed + static_cast<std::uint64_t>(i), size, size);
    char name[32];
    std::snprintf(name, sizeof name, "fixture_%03d.png", i);
    td::write_png(root / name, fx.image);
    td::write_mask_png(root / "truth" / name, fx.truth);
  }
  std::cout << "wrote " << count << " fixtures to " << root.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free scene text removal with a diffusion backend"};
  app.require_subcommand(1);

  PipelineFlags run_flags;
  CLI::App* run_cmd = app.add_subcommand("run", "process one image");
  add_pipeline_flags(run_cmd, run_flags, false);

  PipelineFlags batch_flags;
  CLI::App* batch_cmd = app.add_subcommand("batch", "process every PNG of a directory");
  add_pipeline_flags(batch_cmd, batch_flags, true);

  std::string fixture_dir;
  int fixture_count = 10;
  std::uint64_t fixture_seed = 1;
  int fixture_size = 96;
  CLI::App* fixture_cmd = app.add_subcommand("fixture", "write synthetic glyph images and their truth masks");
  fixture_cmd->add_option("--output-dir", fixture_dir, "destination directory")->required();
  fixture_cmd->add_option("--count", fixture_count, "number of images")->check(CLI::PositiveNumber);
  fixture_cmd->add_option("--seed", fixture_seed, "first seed");
  fixture_cmd->add_option("--size", fixture_size, "image side length")->check(CLI::Range(32, 4096));

  PipelineFlags config_flags;
  CLI::App* config_cmd = app.add_subcommand("config", "print the effective configuration");
  add_pipeline_flags(config_cmd, config_flags, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*fixture_cmd) return write_fixtures(fixture_dir, fixture_count, fixture_seed, fixture_size);
    if (*config_cmd) {
      std::cout << td::serialize(build_config(config_flags));
      return kExitOk;
    }
    if (*run_cmd) {
      const td::PipelineConfig config = build_config(run_flags);
      try {
        const td::RunResult r = td::run(config);
        std::cout << r.report().dump(2) << "\n";
        return kExitOk;
      } catch (const td::ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailures;
      }
    }
    if (*batch_cmd) {
      const td::PipelineConfig config = build_config(batch_flags);
      if (config.input.empty()) throw td::ConfigError("batch needs --input <directory>");
      const td::BatchResult result = td::batch(config, config.input);
      std::cout << result.report()["summary"].dump(2) << "\n";
      return result.any_failed() ? kExitFailures : kExitOk;
    }
  } catch (const td::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailures;
  }
  return kExitConfig;
}
