#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "textdestroyer/config.hpp"
#include "textdestroyer/destroyer.hpp"
#include "textdestroyer/localization.hpp"
#include "textdestroyer/metrics.hpp"

namespace textdestroyer {

/// Builds the configured backend. "adapter" has no in-tree implementation and raises
/// ConfigError (see docs/adapter_contract.md).
std::unique_ptr<DenoiserBackend> make_backend(const PipelineConfig& config);

struct RunResult {
  std::string name;
  bool ok = true;
  std::string error;
  // Digest of the result-affecting configuration.
  std::string config_digest;
  bool dry_run = false;
  bool text_found = false;
  bool user_mask = false;
  Image output;
  HierMask masks;
  Map2D aggregated;
  std::map<std::string, Map2D> token_maps;
  // Latent-resolution mask whose decoded footprint may change (dilated m3, or the user mask).
  Mask footprint_latent;
  std::optional<MetricReport> full;
  std::optional<MetricReport> background;
  RestoreReport restore;
  DiffusionTrajectory trajectory;
  std::vector<LatentTensor> snapshots;
  std::vector<std::string> warnings;
  // Wall-clock seconds per stage; kept out of the report so reports stay reproducible.
  std::map<std::string, double> timings;

  nlohmann::json report() const;
};

/// Localize, destroy and restore one image in memory. With no text found the output is
/// the input unchanged.
RunResult run_image(const PipelineConfig& config, const Image& input, const std::optional<Mask>& user_mask,
                    DenoiserBackend& backend);

/// Writes output.png, m1/m2/m3.png, the attention heatmap(s), report.json and
/// timings.json into `dir`.
void write_artifacts(const PipelineConfig& config, const RunResult& result, const std::filesystem::path& dir);

/// Reads config.input (and config.mask), runs, and writes artifacts to config.output_dir.
RunResult run(const PipelineConfig& config);

struct BatchResult {
  std::vector<RunResult> runs;
  bool any_failed() const;
  nlohmann::json report() const;
};

/// Runs every *.png of `input_dir` (sorted by name) with up to config.jobs workers, each
/// with its own backend. Outputs go to <output_dir>/<stem>/ plus an aggregate report.json.
/// A per-image failure is recorded and the batch continues.
BatchResult batch(const PipelineConfig& config, const std::filesystem::path& input_dir);

}  // namespace textdestroyer
