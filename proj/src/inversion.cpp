#include "textdestroyer/inversion.hpp"

namespace textdestroyer {

DiffusionTrajectory invert_trajectory(const LatentTensor& z0, DenoiserBackend& backend, const Schedule& schedule,
                                      const TokenizedPrompt* prompt, const ObserverSet& observers,
                                      InversionOptions options) {
  if (!z0.all_finite()) throw ContractViolation("invert_trajectory: source latent has non-finite entries");
  std::vector<LatentTensor> entries;
  entries.reserve(schedule.num_steps + 1);
  entries.push_back(z0);
  const ObserverSet none;
  for (int t = 0; t < schedule.num_steps; ++t) {
    const LatentTensor& z = entries.back();
    LatentTensor eps;
    try {
      if (prompt != nullptr) {
        LatentTensor prompted = backend.predict_noise(z, t, prompt, observers, nullptr);
        eps = options.update_with_prompted_prediction ? std::move(prompted)
                                                      : backend.predict_noise(z, t, nullptr, none, nullptr);
      } else {
        eps = backend.predict_noise(z, t, nullptr, observers, nullptr);
      }
    } catch (const BackendError&) {
      throw;
    } catch (const std::exception& e) {
      throw BackendError(t, e.what());
    }
    LatentTensor next = ddim_invert_step(z, eps, t + 1, schedule);
    if (!next.all_finite()) throw BackendError(t, "inversion produced non-finite latents");
    entries.push_back(std::move(next));
  }
  return DiffusionTrajectory(std::move(entries), schedule.hash());
}

}  // namespace textdestroyer
