#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "textdestroyer/backend.hpp"

namespace textdestroyer {

enum class ToyMode { kZeroEps, kLinearEps };

enum class ToyCodec {
  // Each f x f RGB block becomes 3*f*f channels; decode(encode(x)) == x.
  kSpaceToDepth,
  // Block means: channels 0..2 hold RGB, further channels the channel-average.
  // Exact only on block-constant images.
  kAreaAverage,
};

const char* to_string(ToyMode mode);
ToyMode toy_mode_from_string(const std::string& name);
const char* to_string(ToyCodec codec);
ToyCodec toy_codec_from_string(const std::string& name);

struct ToyBackendSpec {
  ToyMode mode = ToyMode::kLinearEps;
  // eps = lambda * z in linear mode.
  double lambda = 0.1;
  // Scale of the self-attention branch. The branch contributes only the change that
  // K/V injection makes, so un-injected predictions stay exactly lambda * z.
  double kv_coupling = 1.0;
  // When set and the decoded input has the mask's size, tracked-token attention is built
  // from it; otherwise from the input's luma contrast against its median.
  std::optional<Mask> glyph_mask;
  std::uint64_t attention_noise_seed = 0;
  double attention_noise = 0.1;
  int downsample_factor = 4;
  ToyCodec codec = ToyCodec::kSpaceToDepth;
  int area_channels = 4;
  int native_input_size = 64;
  int attention_dim = 8;
  // One entry per attention layer, in forward order: latent-grid pooling factor.
  std::vector<int> layer_downscales{1, 1, 2, 2, 4, 4, 8, 4, 4, 4, 2, 2, 2, 1, 1, 1};
  // Words longer than this split into several sub-tokens.
  int max_token_chars = 8;
  // Luma contrast (8-bit levels) at which synthetic attention reaches full strength.
  double contrast_floor = 16.0;
};

/// Deterministic analytic denoiser with synthetic attention, for desk-scale runs.
///
/// Noise prediction is zero or lambda * z. Cross-attention logits for tracked words are
/// a glyph-likelihood map plus seeded noise shared with the end token; the end token is
/// seeded noise only. Self-attention layers pool the latent, project it with fixed seeded
/// weights and run softmax attention. Under injection, the change in attention output at
/// query rows inside the injection mask feeds back into the prediction through kv_coupling;
/// rows outside the mask keep lambda * z.
class ToyBackend final : public DenoiserBackend {
 public:
  explicit ToyBackend(ToyBackendSpec spec = {});

  const ToyBackendSpec& spec() const { return spec_; }

  std::string name() const override { return "toy"; }
  int latent_channels() const override;
  int downsample_factor() const override { return spec_.downsample_factor; }
  Capabilities capabilities() const override { return {true, true}; }
  int native_input_size() const override { return spec_.native_input_size; }
  std::vector<LayerInfo> self_attention_layers() const override { return layers_; }
  std::vector<LayerInfo> cross_attention_layers() const override { return layers_; }

  TokenizedPrompt tokenize(std::span<const std::string> words) const override;
  LatentTensor encode(const Image& image) const override;
  Image decode(const LatentTensor& z) const override;

  // Pixel-space round-trip error bound of the codec for already-quantised inputs.
  static constexpr double kDecodeTolerance = 1e-6;

 protected:
  LatentTensor predict(const LatentTensor& z, int t, const TokenizedPrompt* prompt, const ObserverSet& observers,
                       const InjectionPlan* injection) override;

 private:
  struct LayerWeights {
    Matrix query;   // c x d
    Matrix key;     // c x d
    Matrix value;   // c x d
    Matrix output;  // d x c
  };

  Image decode_unclamped(const LatentTensor& z) const;
  Map2D glyph_likelihood(const LatentTensor& z, double* strength) const;
  void emit_cross_attention(const LatentTensor& z, int t, const TokenizedPrompt& prompt,
                            const ObserverSet& observers) const;

  ToyBackendSpec spec_;
  std::vector<LayerInfo> layers_;
  std::vector<LayerWeights> weights_;
};

}  // namespace textdestroyer
