#include "textdestroyer/backend.hpp"

#include <algorithm>

namespace textdestroyer {

Shape3 DenoiserBackend::latent_shape(int image_height, int image_width) const {
  const int f = downsample_factor();
  if (image_height % f != 0 || image_width % f != 0) {
    throw ContractViolation("image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                            " is not divisible by the downsample factor " + std::to_string(f));
  }
  return {latent_channels(), image_height / f, image_width / f};
}

LatentTensor DenoiserBackend::predict_noise(const LatentTensor& z, int t, const TokenizedPrompt* prompt,
                                            const ObserverSet& observers, const InjectionPlan* injection) {
  if (z.shape().channels != latent_channels()) {
    throw ContractViolation("latent has " + std::to_string(z.shape().channels) + " channels, backend expects " +
                            std::to_string(latent_channels()));
  }
  if (injection != nullptr) {
    if (!capabilities().self_attention_hookable) {
      throw ConfigError(name() + " cannot apply self-attention injection");
    }
    const auto layers = self_attention_layers();
    for (int id : injection->layer_set) {
      bool known = std::any_of(layers.begin(), layers.end(), [id](const LayerInfo& l) { return l.id == id; });
      if (!known) throw ConfigError("injection plan references unknown layer id " + std::to_string(id));
    }
    injection->validate_step(t);
  }
  if (prompt != nullptr) prompt->validate();
  return predict(z, t, prompt, observers, injection);
}

}  // namespace textdestroyer
