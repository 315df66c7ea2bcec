#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "textdestroyer/attention.hpp"
#include "textdestroyer/backend.hpp"
#include "textdestroyer/diffusion.hpp"
#include "textdestroyer/localization.hpp"

namespace textdestroyer {

struct DestructionConfig {
  StepWindow kv_step_window{1, 45};
  // Resolved self-attention layer ids.
  std::set<int> kv_layers;
  std::optional<int> replace_step = 2;
  int k2 = 9;
  std::uint64_t noise_seed = 0;
  double sigma_floor = 1e-6;
  // Replacement uses the undilated user mask (m1) instead of dilate(m3_latent, k2).
  bool user_mask_mode = false;
  // When non-empty the edited pass is conditioned on these words.
  std::vector<std::string> edit_prompt;

  // Throws ConfigError for windows or replace steps outside [1, T] and bad kernels.
  void validate(int num_steps) const;
};

/// Per-channel mean and variance over the whole latent; cells under the mask are
/// redrawn from N(mean, variance) with a seeded generator. Channels whose variance is at
/// or below sigma_floor are filled with their mean. Cells outside the mask are copied.
LatentTensor noise_fill(const LatentTensor& z, const Mask& latent_mask, std::uint64_t seed,
                        double sigma_floor = 1e-6);

/// z_src where mask is 0, z_edit where it is 1.
LatentTensor latent_replace(const LatentTensor& z_edit, const LatentTensor& z_src, const Mask& mask);

struct RestoreOptions {
  bool keep_snapshots = false;
  // Extra observers for the edited pass.
  const ObserverSet* edit_observers = nullptr;
};

struct RestoreReport {
  bool short_circuit = false;
  std::vector<int> kv_steps;
  std::optional<int> replaced_at;
};

struct RestoreResult {
  Image image;
  RestoreReport report;
  LatentTensor destroyed;       // z'_T after noise_fill
  LatentTensor after_replace;   // z'_{replace_step} right after replacement (empty if none happened)
  LatentTensor final_latent;    // z'_0
  // snapshots[t] = z'_t when keep_snapshots is set.
  std::vector<LatentTensor> snapshots;
};

/// Twin-pass restoration. Per step t = T..1 the source pass predicts on the stored Z[t]
/// and records K/V inside the window; the edited pass denoises z'_t, substituting source
/// K/V outside m3 at the configured layers. At replace_step, before that step's update,
/// z'_t takes Z[t] outside the dilated mask. An empty m3 returns decode(Z[0]).
RestoreResult restore(const DiffusionTrajectory& trajectory, const HierMask& mask, DenoiserBackend& backend,
                      const Schedule& schedule, const DestructionConfig& config, const RestoreOptions& options = {});

}  // namespace textdestroyer
