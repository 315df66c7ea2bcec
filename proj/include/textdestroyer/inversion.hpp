#pragma once

#include "textdestroyer/backend.hpp"
#include "textdestroyer/diffusion.hpp"

namespace textdestroyer {

struct InversionOptions {
  // false: attention comes from a prompted prediction and the latent update from a separate
  // unprompted one (two backend calls per step). true: the prompted prediction drives both,
  // as in the per-crop inversions.
  bool update_with_prompted_prediction = false;
};

/// DDIM inversion of z0 through every schedule step. Z[0] = z0 and Z[t+1] is one invert
/// step from Z[t] using the noise predicted at (Z[t], t). Observers see attention records
/// of each step when a prompt is supplied. Backend failures are rethrown as BackendError
/// carrying the step index.
DiffusionTrajectory invert_trajectory(const LatentTensor& z0, DenoiserBackend& backend, const Schedule& schedule,
                                      const TokenizedPrompt* prompt, const ObserverSet& observers,
                                      InversionOptions options = {});

}  // namespace textdestroyer
