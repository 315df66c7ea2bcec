#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "textdestroyer/tensor.hpp"

namespace textdestroyer {

/// Which coefficient set the DDIM step pair uses.
///
/// kAsWritten: denoise is z_{t-1} = sqrt(a_{t-1}/a_t) z_t + (s_{t-1} - s_t) eps with
/// s = sqrt(1/a - 1); inversion is its exact algebraic inverse.
/// kStandard: the textbook DDIM pair, where the eps term of the denoise step also carries
/// a factor sqrt(a_{t-1}). Pretrained latent-diffusion adapters need this one.
/// Both pairs are exact inverses of each other for a fixed eps.
enum class DdimForm { kAsWritten, kStandard };

const char* to_string(DdimForm form);
DdimForm ddim_form_from_string(const std::string& name);

struct Schedule {
  int num_steps = 0;
  // Cumulative products, alpha_bar[0] == 1, strictly decreasing.
  std::vector<double> alpha_bar;
  // Backend-native timestep for every pipeline index 0..T.
  std::vector<int> native_timesteps;
  DdimForm form = DdimForm::kAsWritten;

  double at(int t) const;
  // Stable hex digest of the schedule, recorded in trajectory manifests.
  std::string hash() const;
};

inline constexpr std::pair<double, double> kDefaultBetaRange{0.00085, 0.012};
inline constexpr int kDefaultTrainSteps = 1000;

// Linear betas over num_steps, then the running product of (1 - beta).
Schedule make_schedule(int num_steps, std::pair<double, double> beta_range);

// A train_steps-long linear schedule subsampled evenly to num_steps pipeline steps.
Schedule make_subsampled_schedule(int num_steps, int train_steps = kDefaultTrainSteps,
                                  std::pair<double, double> beta_range = kDefaultBetaRange,
                                  DdimForm form = DdimForm::kAsWritten);

LatentTensor forward_diffuse(const LatentTensor& z0, int t, const LatentTensor& noise, const Schedule& s);
LatentTensor ddim_denoise_step(const LatentTensor& z_t, const LatentTensor& eps, int t, const Schedule& s);
LatentTensor ddim_invert_step(const LatentTensor& z_prev, const LatentTensor& eps, int t, const Schedule& s);

/// Affine coefficients of one step: out = latent * z_scale + eps * eps_scale.
struct StepCoefficients {
  double z_scale = 1.0;
  double eps_scale = 0.0;
};
StepCoefficients denoise_coefficients(const Schedule& s, int t);
StepCoefficients invert_coefficients(const Schedule& s, int t);

/// Latents Z[0..T] saved during inversion; entries[t] is the latent at pipeline step t.
class DiffusionTrajectory {
 public:
  DiffusionTrajectory() = default;
  DiffusionTrajectory(std::vector<LatentTensor> entries, std::string schedule_hash);

  int num_steps() const { return static_cast<int>(entries_.size()) - 1; }
  const LatentTensor& at(int t) const;
  const std::vector<LatentTensor>& entries() const { return entries_; }
  const std::string& schedule_hash() const { return schedule_hash_; }
  bool empty() const { return entries_.empty(); }

  // Directory of z_XXX.bin little-endian float64 arrays plus manifest.json.
  void save(const std::filesystem::path& dir) const;
  static DiffusionTrajectory load(const std::filesystem::path& dir);

 private:
  std::vector<LatentTensor> entries_;
  std::string schedule_hash_;
};

}  // namespace textdestroyer
