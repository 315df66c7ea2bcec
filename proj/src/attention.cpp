#include "textdestroyer/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "textdestroyer/image_ops.hpp"
#include "textdestroyer/storage.hpp"

namespace textdestroyer {

void TokenizedPrompt::validate() const {
  int last_tracked = -1;
  for (const auto& word : words) {
    auto it = tracked_positions.find(word);
    if (it == tracked_positions.end() || it->second.empty()) {
      throw ContractViolation("tracked word '" + word + "' resolves to no token position");
    }
    for (int p : it->second) last_tracked = std::max(last_tracked, p);
  }
  if (end_position <= last_tracked) throw ContractViolation("end token must follow every tracked token");
  if (end_position >= static_cast<int>(tokens.size())) throw ContractViolation("end position outside token list");
}

LayerGrid layer_grid(int latent_height, int latent_width, int downscale) {
  if (downscale <= 0) throw ContractViolation("layer downscale must be positive");
  return {(latent_height + downscale - 1) / downscale, (latent_width + downscale - 1) / downscale};
}

bool ObserverSet::wants_cross_attention() const {
  return std::any_of(observers_.begin(), observers_.end(), [](auto* o) { return o->wants_cross_attention(); });
}

bool ObserverSet::wants_self_attention(int step, int layer) const {
  return std::any_of(observers_.begin(), observers_.end(),
                     [&](auto* o) { return o->wants_self_attention(step, layer); });
}

void ObserverSet::notify(const CrossAttentionRecord& record) const {
  for (auto* o : observers_) {
    if (o->wants_cross_attention()) o->on_cross_attention(record);
  }
}

void ObserverSet::notify(const SelfAttentionRecord& record) const {
  for (auto* o : observers_) {
    if (o->wants_self_attention(record.step, record.layer)) o->on_self_attention(record);
  }
}

// ---------------------------------------------------------------------------

void TokenMapStack::add(const std::string& token, int step, int layer, Map2D map) {
  per_token_[token][{step, layer}] = std::move(map);
}

std::vector<std::string> TokenMapStack::tracked_words() const {
  std::vector<std::string> words;
  for (const auto& [token, _] : per_token_) {
    if (token != kEndToken) words.push_back(token);
  }
  return words;
}

std::size_t TokenMapStack::step_count() const {
  std::set<int> steps;
  for (const auto& [token, stack] : per_token_) {
    for (const auto& [key, _] : stack) steps.insert(key.first);
  }
  return steps.size();
}

void TokenMapStack::validate() const {
  if (per_token_.empty()) throw ContractViolation("token map stack is empty");
  auto end_it = per_token_.find(kEndToken);
  if (end_it == per_token_.end()) throw ContractViolation("token map stack has no end-token maps");
  if (tracked_words().empty()) throw ContractViolation("token map stack has no tracked words");
  const Stack& reference = end_it->second;
  if (reference.empty()) throw ContractViolation("token map stack holds no (step, layer) maps");
  for (const auto& [token, stack] : per_token_) {
    if (stack.size() != reference.size()) {
      throw ContractViolation("token '" + token + "' is missing (step, layer) maps");
    }
    for (const auto& [key, map] : stack) {
      if (!reference.contains(key)) throw ContractViolation("token '" + token + "' has an unmatched (step, layer)");
      if (map.empty()) throw ContractViolation("empty attention map for token '" + token + "'");
      for (double v : map.data()) {
        if (!std::isfinite(v)) throw ContractViolation("non-finite attention value for token '" + token + "'");
      }
    }
  }
}

CrossAttentionCollector::CrossAttentionCollector(const TokenizedPrompt& prompt) {
  prompt.validate();
  for (const auto& [word, positions] : prompt.tracked_positions) {
    for (int p : positions) position_to_token_[p] = word;
  }
  position_to_token_[prompt.end_position] = kEndToken;
}

void CrossAttentionCollector::on_cross_attention(const CrossAttentionRecord& record) {
  auto it = position_to_token_.find(record.token_position);
  if (it == position_to_token_.end()) return;
  Accumulator& a = acc_[it->second][{record.step, record.layer}];
  if (a.count == 0) {
    a.sum = record.logits;
  } else {
    if (!a.sum.same_size(record.logits)) throw ContractViolation("sub-token maps differ in size");
    for (std::size_t i = 0; i < a.sum.size(); ++i) a.sum.storage()[i] += record.logits.storage()[i];
  }
  ++a.count;
}

TokenMapStack CrossAttentionCollector::take() {
  TokenMapStack stack;
  for (auto& [token, per_key] : acc_) {
    for (auto& [key, a] : per_key) {
      for (auto& v : a.sum.storage()) v /= a.count;
      stack.add(token, key.first, key.second, std::move(a.sum));
    }
  }
  acc_.clear();
  return stack;
}

Map2D aggregate_maps_raw(const TokenMapStack& stack, double gamma, int height, int width) {
  if (gamma < 0.0) throw ContractViolation("gamma must be non-negative");
  stack.validate();
  const auto words = stack.tracked_words();
  const auto& end_stack = stack.per_token().at(kEndToken);
  Map2D mean(height, width);
  for (const auto& [key, end_map] : end_stack) {
    Map2D combined = resize_bilinear(end_map, height, width);
    for (auto& v : combined.storage()) v *= -gamma;
    for (const auto& w : words) {
      Map2D m = resize_bilinear(stack.per_token().at(w).at(key), height, width);
      for (std::size_t i = 0; i < m.size(); ++i) combined.storage()[i] += m.storage()[i];
    }
    for (std::size_t i = 0; i < mean.size(); ++i) mean.storage()[i] += combined.storage()[i];
  }
  const double n = static_cast<double>(end_stack.size());
  for (auto& v : mean.storage()) v /= n;
  return mean;
}

Map2D normalize_min_max(const Map2D& map) {
  Map2D out = map;
  if (map.empty()) return out;
  auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
  const double span = *hi - *lo;
  const double base = *lo;
  for (auto& v : out.storage()) v = span > 0.0 ? (v - base) / span : 0.0;
  return out;
}

Map2D aggregate_maps(const TokenMapStack& stack, double gamma, int height, int width) {
  return normalize_min_max(aggregate_maps_raw(stack, gamma, height, width));
}

Image heatmap_image(const Map2D& map) {
  const Map2D norm = normalize_min_max(map);
  Image out(map.height(), map.width(), 1);
  for (std::size_t i = 0; i < norm.size(); ++i) out.pixels[i] = std::round(norm.storage()[i] * 255.0);
  return out;
}

// ---------------------------------------------------------------------------

void KVStore::insert(int step, int layer, KVRecord record) {
  if (record.keys.rows != record.grid.tokens() || record.values.rows != record.grid.tokens()) {
    throw IntegrityError("KV record rows do not match the layer's spatial tokens");
  }
  records_[{step, layer}] = std::move(record);
}

const KVRecord* KVStore::find(int step, int layer) const {
  auto it = records_.find({step, layer});
  return it == records_.end() ? nullptr : &it->second;
}

void KVStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["kind"] = "kv_store";
  manifest["dtype"] = "float64-le";
  auto entries = nlohmann::json::array();
  for (const auto& [key, rec] : records_) {
    char stem[48];
    std::snprintf(stem, sizeof stem, "s%03d_l%02d", key.first, key.second);
    storage::write_f64(dir / (std::string(stem) + "_k.bin"), rec.keys.values);
    storage::write_f64(dir / (std::string(stem) + "_v.bin"), rec.values.values);
    entries.push_back({{"step", key.first},
                       {"layer", key.second},
                       {"grid", {rec.grid.height, rec.grid.width}},
                       {"key_dim", rec.keys.cols},
                       {"value_dim", rec.values.cols},
                       {"stem", stem}});
  }
  manifest["records"] = entries;
  storage::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

KVStore KVStore::load(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(storage::read_text(dir / "manifest.json"));
  } catch (const std::exception& e) {
    throw IntegrityError("bad KV manifest: " + std::string(e.what()));
  }
  if (manifest.value("kind", "") != "kv_store") throw IntegrityError("manifest is not a KV store");
  KVStore store;
  for (const auto& e : manifest.at("records")) {
    KVRecord rec;
    const auto grid = e.at("grid").get<std::vector<int>>();
    rec.grid = {grid.at(0), grid.at(1)};
    const int kd = e.at("key_dim").get<int>();
    const int vd = e.at("value_dim").get<int>();
    const std::string stem = e.at("stem").get<std::string>();
    rec.keys = Matrix(rec.grid.tokens(), kd);
    rec.values = Matrix(rec.grid.tokens(), vd);
    rec.keys.values = storage::read_f64(dir / (stem + "_k.bin"), rec.keys.values.size());
    rec.values.values = storage::read_f64(dir / (stem + "_v.bin"), rec.values.values.size());
    store.insert(e.at("step").get<int>(), e.at("layer").get<int>(), std::move(rec));
  }
  return store;
}

void KVRecorder::on_self_attention(const SelfAttentionRecord& record) {
  if (record.injected || !layers_.contains(record.layer)) return;
  store_.insert(record.step, record.layer, KVRecord{record.grid, record.keys, record.values});
}

KVStore store_kv(const KVRecorder& recorder, std::span<const int> steps) {
  KVStore out;
  for (int step : steps) {
    for (int layer : recorder.layers()) {
      const KVRecord* rec = recorder.records().find(step, layer);
      if (rec == nullptr) {
        throw IntegrityError("missing KV record for step " + std::to_string(step) + ", layer " +
                             std::to_string(layer));
      }
      out.insert(step, layer, *rec);
    }
  }
  return out;
}

void InjectionPlan::validate_step(int step) const {
  if (!step_window.contains(step)) return;
  for (int layer : layer_set) {
    const KVRecord* rec = source == nullptr ? nullptr : source->find(step, layer);
    if (rec == nullptr) {
      throw IntegrityError("injection plan needs a KV record for step " + std::to_string(step) + ", layer " +
                           std::to_string(layer));
    }
    auto it = mask_per_layer.find(layer);
    if (it == mask_per_layer.end() || static_cast<int>(it->second.size()) != rec->grid.tokens()) {
      throw IntegrityError("injection mask for layer " + std::to_string(layer) + " does not match its tokens");
    }
  }
}

InjectionPlan make_injection_plan(StepWindow window, const std::set<int>& layers, const Mask& latent_mask,
                                  std::span<const LayerInfo> layer_infos, const KVStore& source) {
  InjectionPlan plan;
  plan.step_window = window;
  plan.layer_set = layers;
  plan.source = &source;
  for (int id : layers) {
    auto it = std::find_if(layer_infos.begin(), layer_infos.end(), [id](const LayerInfo& l) { return l.id == id; });
    if (it == layer_infos.end()) throw ConfigError("unknown self-attention layer id " + std::to_string(id));
    const LayerGrid grid = layer_grid(latent_mask.height(), latent_mask.width(), it->downscale);
    const Mask resized = resize_nearest(latent_mask, grid.height, grid.width);
    plan.mask_per_layer[id] = resized.storage();
  }
  return plan;
}

std::pair<Matrix, Matrix> combine_kv(const Matrix& k_edit, const Matrix& v_edit, const Matrix& k_src,
                                     const Matrix& v_src, std::span<const std::uint8_t> mask) {
  if (k_edit.rows != k_src.rows || k_edit.cols != k_src.cols || v_edit.rows != v_src.rows ||
      v_edit.cols != v_src.cols || k_edit.rows != v_edit.rows) {
    throw ContractViolation("combine_kv: edited and source K/V shapes differ");
  }
  if (static_cast<int>(mask.size()) != k_edit.rows) {
    throw ContractViolation("combine_kv: mask length does not match the number of tokens");
  }
  Matrix k = k_src;
  Matrix v = v_src;
  for (int r = 0; r < k.rows; ++r) {
    if (mask[r] > 1) throw ContractViolation("combine_kv: mask must be binary");
    if (mask[r] == 0) continue;
    std::copy_n(k_edit.values.begin() + static_cast<long>(r) * k.cols, k.cols,
                k.values.begin() + static_cast<long>(r) * k.cols);
    std::copy_n(v_edit.values.begin() + static_cast<long>(r) * v.cols, v.cols,
                v.values.begin() + static_cast<long>(r) * v.cols);
  }
  return {std::move(k), std::move(v)};
}

}  // namespace textdestroyer
