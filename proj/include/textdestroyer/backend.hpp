#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "textdestroyer/attention.hpp"
#include "textdestroyer/prompt.hpp"
#include "textdestroyer/tensor.hpp"

namespace textdestroyer {

struct Capabilities {
  bool cross_attention_observable = false;
  bool self_attention_hookable = false;
};

/// The denoiser every pipeline stage talks to.
///
/// Timesteps are pipeline indices 0..T; mapping them to native model timesteps is
/// the implementation's job. Self-attention layers are numbered 0..L-1 in network
/// forward order. An instance serves one denoising pass at a time.
class DenoiserBackend {
 public:
  virtual ~DenoiserBackend() = default;

  virtual std::string name() const = 0;
  virtual int latent_channels() const = 0;
  virtual int downsample_factor() const = 0;
  virtual Capabilities capabilities() const = 0;
  // Square side length the backend expects for magnified crops.
  virtual int native_input_size() const = 0;
  virtual std::vector<LayerInfo> self_attention_layers() const = 0;
  virtual std::vector<LayerInfo> cross_attention_layers() const = 0;

  virtual TokenizedPrompt tokenize(std::span<const std::string> words) const = 0;
  virtual LatentTensor encode(const Image& image) const = 0;
  virtual Image decode(const LatentTensor& z) const = 0;

  Shape3 latent_shape(int image_height, int image_width) const;

  /// Noise prediction at (z, t). Fires cross-attention records when a prompt is given
  /// and applies the injection plan's K/V substitution at its layers and steps.
  /// Validates the plan against the backend before delegating to predict().
  LatentTensor predict_noise(const LatentTensor& z, int t, const TokenizedPrompt* prompt,
                             const ObserverSet& observers, const InjectionPlan* injection);

 protected:
  virtual LatentTensor predict(const LatentTensor& z, int t, const TokenizedPrompt* prompt,
                               const ObserverSet& observers, const InjectionPlan* injection) = 0;
};

}  // namespace textdestroyer
