#include "textdestroyer/destroyer.hpp"

#include <random>

namespace textdestroyer {

void DestructionConfig::validate(int num_steps) const {
  if (!kv_step_window.empty() && (kv_step_window.first < 1 || kv_step_window.last > num_steps)) {
    throw ConfigError("kv step window [" + std::to_string(kv_step_window.first) + ", " +
                      std::to_string(kv_step_window.last) + "] outside [1, " + std::to_string(num_steps) + "]");
  }
  if (replace_step && (*replace_step < 1 || *replace_step > num_steps)) {
    throw ConfigError("replace step " + std::to_string(*replace_step) + " outside [1, " + std::to_string(num_steps) +
                      "]");
  }
  if (k2 < 1 || k2 % 2 == 0) throw ConfigError("k2 must be odd and positive");
  if (!(sigma_floor > 0.0)) throw ConfigError("sigma_floor must be positive");
}

LatentTensor noise_fill(const LatentTensor& z, const Mask& latent_mask, std::uint64_t seed, double sigma_floor) {
  const Shape3 s = z.shape();
  if (latent_mask.height() != s.height || latent_mask.width() != s.width) {
    throw ContractViolation("noise_fill: mask is not at latent resolution");
  }
  LatentTensor out = z;
  if (mask_area(latent_mask) == 0) return out;
  std::mt19937_64 rng(seed);
  const auto n = static_cast<double>(s.plane());
  for (int c = 0; c < s.channels; ++c) {
    const auto plane = z.channel(c);
    double mean = 0.0;
    for (double v : plane) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : plane) var += (v - mean) * (v - mean);
    var /= n;
    auto dst = out.channel(c);
    if (var <= sigma_floor) {
      for (std::size_t i = 0; i < dst.size(); ++i) {
        if (latent_mask.storage()[i]) dst[i] = mean;
      }
      continue;
    }
    std::normal_distribution<double> normal(mean, std::sqrt(var));
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (latent_mask.storage()[i]) dst[i] = normal(rng);
    }
  }
  return out;
}

LatentTensor latent_replace(const LatentTensor& z_edit, const LatentTensor& z_src, const Mask& mask) {
  require_same_shape(z_edit, z_src, "latent_replace");
  const Shape3 s = z_edit.shape();
  if (mask.height() != s.height || mask.width() != s.width) {
    throw ContractViolation("latent_replace: mask is not at latent resolution");
  }
  if (!is_binary(mask)) throw ContractViolation("latent_replace: mask is not binary");
  LatentTensor out = z_src;
  for (int c = 0; c < s.channels; ++c) {
    auto dst = out.channel(c);
    const auto edit = z_edit.channel(c);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (mask.storage()[i]) dst[i] = edit[i];
    }
  }
  return out;
}

RestoreResult restore(const DiffusionTrajectory& trajectory, const HierMask& mask, DenoiserBackend& backend,
                      const Schedule& schedule, const DestructionConfig& config, const RestoreOptions& options) {
  const int T = schedule.num_steps;
  if (trajectory.num_steps() != T) {
    throw IntegrityError("trajectory holds " + std::to_string(trajectory.num_steps()) + " steps, schedule has " +
                         std::to_string(T));
  }
  if (!trajectory.schedule_hash().empty() && trajectory.schedule_hash() != schedule.hash()) {
    throw IntegrityError("trajectory was recorded with a different schedule");
  }
  config.validate(T);
  RestoreResult result;
  if (mask_area(mask.m3_latent) == 0) {
    result.report.short_circuit = true;
    result.final_latent = trajectory.at(0);
    result.image = backend.decode(result.final_latent);
    return result;
  }
  if (!config.kv_step_window.empty() && !config.kv_layers.empty() && !backend.capabilities().self_attention_hookable) {
    throw ConfigError("backend '" + backend.name() + "' cannot inject self-attention K/V");
  }

  const Mask replace_mask =
      config.user_mask_mode ? max_pool(mask.m1, backend.downsample_factor()) : dilate(mask.m3_latent, config.k2);
  std::optional<TokenizedPrompt> prompt;
  if (!config.edit_prompt.empty()) prompt = backend.tokenize(config.edit_prompt);

  const std::vector<LayerInfo> layers = backend.self_attention_layers();
  KVStore source;
  const InjectionPlan plan =
      make_injection_plan(config.kv_step_window, config.kv_layers, mask.m3_latent, layers, source);
  const ObserverSet none;
  const ObserverSet& edit_observers = options.edit_observers ? *options.edit_observers : none;

  LatentTensor z = noise_fill(trajectory.at(T), mask.m3_latent, config.noise_seed, config.sigma_floor);
  result.destroyed = z;
  if (options.keep_snapshots) result.snapshots.assign(T + 1, LatentTensor{});
  for (int t = T; t >= 1; --t) {
    if (options.keep_snapshots) result.snapshots[t] = z;
    if (config.replace_step && t == *config.replace_step) {
      z = latent_replace(z, trajectory.at(t), replace_mask);
      result.after_replace = z;
      result.report.replaced_at = t;
    }
    const bool inject = config.kv_step_window.contains(t) && !config.kv_layers.empty();
    try {
      if (inject) {
        KVRecorder recorder(config.kv_layers);
        backend.predict_noise(trajectory.at(t), t, prompt ? &*prompt : nullptr, {&recorder}, nullptr);
        const int steps[] = {t};
        source = store_kv(recorder, steps);
        result.report.kv_steps.push_back(t);
      }
      const LatentTensor eps =
          backend.predict_noise(z, t, prompt ? &*prompt : nullptr, edit_observers, inject ? &plan : nullptr);
      z = ddim_denoise_step(z, eps, t, schedule);
    } catch (const BackendError&) {
      throw;
    } catch (const ConfigError&) {
      throw;
    } catch (const IntegrityError&) {
      throw;
    } catch (const std::exception& e) {
      throw BackendError(t, e.what());
    }
    if (!z.all_finite()) throw BackendError(t, "restoration produced non-finite latents");
  }
  if (options.keep_snapshots) result.snapshots[0] = z;
  result.final_latent = z;
  result.image = backend.decode(z);
  return result;
}

}  // namespace textdestroyer
