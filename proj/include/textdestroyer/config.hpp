#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "textdestroyer/attention.hpp"
#include "textdestroyer/diffusion.hpp"
#include "textdestroyer/toy_backend.hpp"

namespace textdestroyer {

struct ToyConfig {
  ToyMode mode = ToyMode::kLinearEps;
  double lambda = 0.1;
  double kv_coupling = 1.0;
  double attention_noise = 0.1;
  int downsample_factor = 4;
  ToyCodec codec = ToyCodec::kSpaceToDepth;
  int native_size = 64;
  double contrast_floor = 16.0;
  // Optional glyph-likelihood mask for the toy backend (PNG path).
  std::string glyph_mask;

  bool operator==(const ToyConfig&) const = default;
};

/// Every pipeline knob. Defaults are the reported settings: 50 DDIM steps, gamma 1.5,
/// k1 = 5, k2 = 9, K/V combination over steps 45..1 in the first and last two
/// self-attention layers, latent replacement at step 2, prompt "text letter character".
struct PipelineConfig {
  int steps = 50;
  int train_steps = kDefaultTrainSteps;
  double beta_start = kDefaultBetaRange.first;
  double beta_end = kDefaultBetaRange.second;
  DdimForm ddim_form = DdimForm::kAsWritten;
  double gamma = 1.5;
  int k1 = 5;
  int k2 = 9;
  StepWindow kv_steps{1, 45};
  std::string kv_layers = "front1+back2";
  std::optional<int> replace_step = 2;
  std::vector<std::string> prompt = kDefaultPromptWords;
  std::uint64_t seed = 0;
  std::string backend = "toy";
  int stage2_k = 2;
  // Steps of the per-crop inversions; 0 follows `steps`.
  int crop_steps = 0;
  double box_padding = 0.1;
  int min_box_latent_area = 4;
  double sigma_floor = 1e-6;
  bool edit_prompted = false;
  ToyConfig toy;
  std::string input;
  std::string output_dir;
  std::string mask;
  bool dump_attention = false;
  bool dump_latents = false;
  bool dry_run = false;
  int jobs = 1;

  bool operator==(const PipelineConfig&) const = default;

  // Throws ConfigError describing the first invalid field.
  void validate() const;
  int effective_crop_steps() const { return crop_steps == 0 ? steps : crop_steps; }
};

/// One `key = value` line per field in a fixed order; serialize(parse(s)) == s for any
/// serialized s.
std::string serialize(const PipelineConfig& config);
PipelineConfig parse_config(const std::string& text);
/// Applies only the keys present in `text` on top of `config`.
void apply_config_text(PipelineConfig& config, const std::string& text);
void apply_config_value(PipelineConfig& config, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

/// "1-45", "45-1", "15-0" (a trailing 0 names the clean latent and clamps to 1) or "none".
StepWindow parse_step_window(const std::string& text);
std::string format_step_window(const StepWindow& window);

/// Layer policies: "frontN+backM", "all", "none", or ids and ranges like "0,14,15" or "0-4,10-15".
std::set<int> resolve_kv_layers(const std::string& policy, int num_layers);

ToyBackendSpec make_toy_spec(const PipelineConfig& config);
Schedule make_pipeline_schedule(const PipelineConfig& config, int num_steps);

}  // namespace textdestroyer
