#pragma once

#include <filesystem>
#include <initializer_list>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "textdestroyer/prompt.hpp"
#include "textdestroyer/tensor.hpp"

namespace textdestroyer {

inline constexpr const char* kEndToken = "end";

/// One attention layer of a backend. Its spatial grid is the latent grid
/// pooled by `downscale` (ceil division).
struct LayerInfo {
  int id = 0;
  int downscale = 1;
  int dim = 0;
};

struct LayerGrid {
  int height = 0;
  int width = 0;
  int tokens() const { return height * width; }
};

LayerGrid layer_grid(int latent_height, int latent_width, int downscale);

// ---------------------------------------------------------------------------
// Observation hooks fired by DenoiserBackend::predict_noise.

/// Raw Q.K^T logits between every spatial query and one prompt token.
struct CrossAttentionRecord {
  int step;
  int layer;
  int token_position;
  const Map2D& logits;
};

/// Keys and values a self-attention layer actually attended over.
/// `injected` is true when some rows came from a KV injection plan.
struct SelfAttentionRecord {
  int step;
  int layer;
  LayerGrid grid;
  const Matrix& keys;
  const Matrix& values;
  bool injected;
};

class AttentionObserver {
 public:
  virtual ~AttentionObserver() = default;
  virtual bool wants_cross_attention() const { return false; }
  virtual bool wants_self_attention(int /*step*/, int /*layer*/) const { return false; }
  virtual void on_cross_attention(const CrossAttentionRecord&) {}
  virtual void on_self_attention(const SelfAttentionRecord&) {}
};

/// Non-owning list of observers; callers keep the observers alive for the call.
class ObserverSet {
 public:
  ObserverSet() = default;
  ObserverSet(std::initializer_list<AttentionObserver*> observers) : observers_(observers) {}

  void add(AttentionObserver* observer) { observers_.push_back(observer); }
  bool empty() const { return observers_.empty(); }
  bool wants_cross_attention() const;
  bool wants_self_attention(int step, int layer) const;
  void notify(const CrossAttentionRecord& record) const;
  void notify(const SelfAttentionRecord& record) const;

 private:
  std::vector<AttentionObserver*> observers_;
};

// ---------------------------------------------------------------------------
// Token-level cross-attention maps.

/// Per-word stacks of (step, layer) maps, plus the end-token stack under kEndToken.
class TokenMapStack {
 public:
  using StepLayer = std::pair<int, int>;
  using Stack = std::map<StepLayer, Map2D>;

  void add(const std::string& token, int step, int layer, Map2D map);
  const std::map<std::string, Stack>& per_token() const { return per_token_; }
  std::vector<std::string> tracked_words() const;
  // Distinct steps observed.
  std::size_t step_count() const;
  bool empty() const { return per_token_.empty(); }

  // Every (step, layer) exists for every token including "end"; values are finite.
  void validate() const;

 private:
  std::map<std::string, Stack> per_token_;
};

/// Gathers cross-attention records for the prompt's tracked words and end token.
/// Sub-token maps of one word are averaged into a single per-word map.
class CrossAttentionCollector : public AttentionObserver {
 public:
  explicit CrossAttentionCollector(const TokenizedPrompt& prompt);

  bool wants_cross_attention() const override { return true; }
  void on_cross_attention(const CrossAttentionRecord& record) override;

  TokenMapStack take();

 private:
  struct Accumulator {
    Map2D sum;
    int count = 0;
  };
  std::map<int, std::string> position_to_token_;
  std::map<std::string, std::map<TokenMapStack::StepLayer, Accumulator>> acc_;
};

/// Per (step, layer): sum of tracked-word maps minus gamma times the end map, all
/// bilinearly resized to height x width; then the mean over every (step, layer).
Map2D aggregate_maps_raw(const TokenMapStack& stack, double gamma, int height, int width);
// aggregate_maps_raw followed by min-max normalisation to [0, 1] (a flat map becomes all zeros).
Map2D aggregate_maps(const TokenMapStack& stack, double gamma, int height, int width);
Map2D normalize_min_max(const Map2D& map);

// 8-bit single-channel rendering of a map after min-max normalisation.
Image heatmap_image(const Map2D& map);

// ---------------------------------------------------------------------------
// Self-attention K/V records and injection.

struct KVRecord {
  LayerGrid grid;
  Matrix keys;
  Matrix values;
};

class KVStore {
 public:
  using Key = std::pair<int, int>;  // (step, layer)

  void insert(int step, int layer, KVRecord record);
  const KVRecord* find(int step, int layer) const;
  bool contains(int step, int layer) const { return find(step, layer) != nullptr; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::map<Key, KVRecord>& records() const { return records_; }

  // Manifest plus one keys/values array pair per record.
  void save(const std::filesystem::path& dir) const;
  static KVStore load(const std::filesystem::path& dir);

 private:
  std::map<Key, KVRecord> records_;
};

/// Records un-injected K/V of the configured layers during a pass.
class KVRecorder : public AttentionObserver {
 public:
  explicit KVRecorder(std::set<int> layers) : layers_(std::move(layers)) {}

  bool wants_self_attention(int /*step*/, int layer) const override { return layers_.contains(layer); }
  void on_self_attention(const SelfAttentionRecord& record) override;

  const std::set<int>& layers() const { return layers_; }
  const KVStore& records() const { return store_; }

 private:
  std::set<int> layers_;
  KVStore store_;
};

/// Validates that the recorder holds exactly one record per (step, configured layer)
/// and returns them as a store. Missing records raise IntegrityError.
KVStore store_kv(const KVRecorder& recorder, std::span<const int> steps);

struct StepWindow {
  int first = 1;
  int last = 45;

  bool empty() const { return first > last; }
  bool contains(int t) const { return first <= t && t <= last; }
  bool operator==(const StepWindow&) const = default;
  static StepWindow none() { return {1, 0}; }
};

/// Masked K/V substitution for the edited pass.
struct InjectionPlan {
  StepWindow step_window;
  std::set<int> layer_set;
  // Flattened binary mask at each layer's resolution: 1 keeps the edited row, 0 takes the source row.
  std::map<int, std::vector<std::uint8_t>> mask_per_layer;
  const KVStore* source = nullptr;

  bool applies(int step, int layer) const { return step_window.contains(step) && layer_set.contains(layer); }
  // Throws IntegrityError when a record needed at `step` is missing or a mask length does not match.
  void validate_step(int step) const;
};

/// Builds per-layer masks from a latent-resolution mask by nearest-neighbour resizing.
InjectionPlan make_injection_plan(StepWindow window, const std::set<int>& layers, const Mask& latent_mask,
                                  std::span<const LayerInfo> layer_infos, const KVStore& source);

/// K = K_src * (1 - mask) + K_edit * mask (rows selected, so outputs are bit-identical
/// to one input row); likewise for V.
std::pair<Matrix, Matrix> combine_kv(const Matrix& k_edit, const Matrix& v_edit, const Matrix& k_src,
                                     const Matrix& v_src, std::span<const std::uint8_t> mask);

}  // namespace textdestroyer
