#include "textdestroyer/toy_backend.hpp"

#include <algorithm>
#include <cmath>

#include "textdestroyer/image_ops.hpp"

namespace textdestroyer {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243F6A8885A308D3ULL;
  for (auto p : parts) h = splitmix(h ^ splitmix(p));
  return h;
}

// Uniform in [-1, 1) from a hash.
double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0; }

constexpr std::uint64_t kWeightSalt = 0x7765696768747321ULL;
constexpr std::uint64_t kSharedNoiseSalt = 0x7368617265640001ULL;
constexpr std::uint64_t kTokenNoiseSalt = 0x746f6b656e000002ULL;

Matrix seeded_matrix(int rows, int cols, double scale, std::uint64_t layer, std::uint64_t which) {
  Matrix m(rows, cols);
  // Uniform(-1, 1) has variance 1/3; sqrt(3) brings it to unit variance.
  const double s = scale * std::sqrt(3.0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = s * unit(mix({kWeightSalt, layer, which, std::uint64_t(r), std::uint64_t(c)}));
  }
  return m;
}

// tokens x channels, block means of the latent.
Matrix pool_tokens(const LatentTensor& z, int downscale, LayerGrid grid) {
  const Shape3 s = z.shape();
  Matrix f(grid.tokens(), s.channels);
  std::vector<int> count(grid.tokens(), 0);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) ++count[(y / downscale) * grid.width + x / downscale];
  }
  for (int c = 0; c < s.channels; ++c) {
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) f((y / downscale) * grid.width + x / downscale, c) += z.at(c, y, x);
    }
  }
  for (int r = 0; r < f.rows; ++r) {
    for (int c = 0; c < f.cols; ++c) f(r, c) /= count[r];
  }
  return f;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const double av = a(i, k);
      if (av == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out(i, j) += av * b(k, j);
    }
  }
  return out;
}

Matrix softmax_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
  Matrix out(q.rows, v.cols);
  std::vector<double> scores(k.rows);
  for (int i = 0; i < q.rows; ++i) {
    double peak = -INFINITY;
    for (int j = 0; j < k.rows; ++j) {
      double s = 0.0;
      for (int d = 0; d < q.cols; ++d) s += q(i, d) * k(j, d);
      scores[j] = s * scale;
      peak = std::max(peak, scores[j]);
    }
    double total = 0.0;
    for (auto& s : scores) {
      s = std::exp(s - peak);
      total += s;
    }
    for (int j = 0; j < k.rows; ++j) {
      const double w = scores[j] / total;
      for (int d = 0; d < v.cols; ++d) out(i, d) += w * v(j, d);
    }
  }
  return out;
}

double median(std::vector<double> values) {
  auto mid = values.begin() + static_cast<long>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

}  // namespace

const char* to_string(ToyMode mode) { return mode == ToyMode::kZeroEps ? "zero_eps" : "linear_eps"; }

ToyMode toy_mode_from_string(const std::string& name) {
  if (name == "zero_eps") return ToyMode::kZeroEps;
  if (name == "linear_eps") return ToyMode::kLinearEps;
  throw ConfigError("unknown toy mode '" + name + "'");
}

const char* to_string(ToyCodec codec) {
  return codec == ToyCodec::kSpaceToDepth ? "space_to_depth" : "area_average";
}

ToyCodec toy_codec_from_string(const std::string& name) {
  if (name == "space_to_depth") return ToyCodec::kSpaceToDepth;
  if (name == "area_average") return ToyCodec::kAreaAverage;
  throw ConfigError("unknown toy codec '" + name + "'");
}

ToyBackend::ToyBackend(ToyBackendSpec spec) : spec_(std::move(spec)) {
  if (spec_.downsample_factor < 1) throw ConfigError("toy downsample factor must be >= 1");
  if (spec_.codec == ToyCodec::kAreaAverage && spec_.area_channels < 1) {
    throw ConfigError("toy area codec needs at least one channel");
  }
  if (spec_.attention_dim < 1) throw ConfigError("toy attention dim must be >= 1");
  if (spec_.native_input_size < spec_.downsample_factor || spec_.native_input_size % spec_.downsample_factor != 0) {
    throw ConfigError("toy native input size must be a positive multiple of the downsample factor");
  }
  if (spec_.max_token_chars < 1) throw ConfigError("toy max_token_chars must be >= 1");
  const int c = latent_channels();
  for (std::size_t i = 0; i < spec_.layer_downscales.size(); ++i) {
    const int d = spec_.layer_downscales[i];
    if (d < 1) throw ConfigError("toy layer downscale must be >= 1");
    const auto id = static_cast<std::uint64_t>(i);
    layers_.push_back({static_cast<int>(i), d, spec_.attention_dim});
    const double in_scale = 1.0 / std::sqrt(static_cast<double>(c));
    const double out_scale = 1.0 / std::sqrt(static_cast<double>(spec_.attention_dim));
    weights_.push_back({seeded_matrix(c, spec_.attention_dim, in_scale, id, 0),
                        seeded_matrix(c, spec_.attention_dim, in_scale, id, 1),
                        seeded_matrix(c, spec_.attention_dim, in_scale, id, 2),
                        seeded_matrix(spec_.attention_dim, c, out_scale, id, 3)});
  }
}

int ToyBackend::latent_channels() const {
  const int f = spec_.downsample_factor;
  return spec_.codec == ToyCodec::kSpaceToDepth ? 3 * f * f : spec_.area_channels;
}

TokenizedPrompt ToyBackend::tokenize(std::span<const std::string> words) const {
  TokenizedPrompt p;
  p.tokens.push_back(49406);  // start of text
  for (const auto& word : words) {
    if (word.empty()) throw ConfigError("prompt words must be non-empty");
    p.words.push_back(word);
    for (std::size_t i = 0; i < word.size(); i += spec_.max_token_chars) {
      const std::string piece = word.substr(i, spec_.max_token_chars);
      std::uint64_t h = 0;
      for (unsigned char ch : piece) h = h * 131 + ch;
      p.tracked_positions[word].push_back(static_cast<int>(p.tokens.size()));
      p.tokens.push_back(static_cast<int>(splitmix(h) % 49000) + 256);
    }
  }
  p.end_position = static_cast<int>(p.tokens.size());
  p.tokens.push_back(49407);  // end of text
  return p;
}

LatentTensor ToyBackend::encode(const Image& image) const {
  if (image.channels != 3 && image.channels != 1) throw ContractViolation("toy encode expects RGB or gray input");
  const Shape3 shape = latent_shape(image.height, image.width);
  const int f = spec_.downsample_factor;
  auto px = [&](int y, int x, int c) { return image.at(y, x, image.channels == 3 ? c : 0) / 127.5 - 1.0; };
  LatentTensor z(shape);
  for (int y = 0; y < shape.height; ++y) {
    for (int x = 0; x < shape.width; ++x) {
      if (spec_.codec == ToyCodec::kSpaceToDepth) {
        for (int dy = 0; dy < f; ++dy) {
          for (int dx = 0; dx < f; ++dx) {
            for (int c = 0; c < 3; ++c) z.at((dy * f + dx) * 3 + c, y, x) = px(y * f + dy, x * f + dx, c);
          }
        }
        continue;
      }
      double rgb[3] = {0, 0, 0};
      for (int dy = 0; dy < f; ++dy) {
        for (int dx = 0; dx < f; ++dx) {
          for (int c = 0; c < 3; ++c) rgb[c] += px(y * f + dy, x * f + dx, c);
        }
      }
      for (auto& v : rgb) v /= f * f;
      const double gray = (rgb[0] + rgb[1] + rgb[2]) / 3.0;
      for (int c = 0; c < shape.channels; ++c) z.at(c, y, x) = (shape.channels >= 3 && c < 3) ? rgb[c] : gray;
    }
  }
  return z;
}

Image ToyBackend::decode_unclamped(const LatentTensor& z) const {
  const Shape3 s = z.shape();
  if (s.channels != latent_channels()) throw ContractViolation("toy decode: unexpected channel count");
  const int f = spec_.downsample_factor;
  Image out(s.height * f, s.width * f, 3);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const int ly = y / f, lx = x / f;
      for (int c = 0; c < 3; ++c) {
        double v = 0.0;
        if (spec_.codec == ToyCodec::kSpaceToDepth) {
          v = z.at(((y % f) * f + (x % f)) * 3 + c, ly, lx);
        } else {
          v = z.at(s.channels >= 3 ? c : 0, ly, lx);
        }
        out.at(y, x, c) = (v + 1.0) * 127.5;
      }
    }
  }
  return out;
}

Image ToyBackend::decode(const LatentTensor& z) const {
  Image out = decode_unclamped(z);
  for (auto& v : out.pixels) v = std::clamp(v, 0.0, 255.0);
  return out;
}

Map2D ToyBackend::glyph_likelihood(const LatentTensor& z, double* strength) const {
  const Image decoded = decode_unclamped(z);
  if (spec_.glyph_mask && spec_.glyph_mask->height() == decoded.height &&
      spec_.glyph_mask->width() == decoded.width) {
    *strength = 1.0;
    return mask_to_map(*spec_.glyph_mask);
  }
  Map2D y = luma(decoded);
  const double med = median(y.storage());
  double peak = 0.0;
  for (auto& v : y.storage()) {
    v = std::abs(v - med);
    peak = std::max(peak, v);
  }
  *strength = std::min(1.0, peak / spec_.contrast_floor);
  if (peak > 0.0) {
    for (auto& v : y.storage()) v /= peak;
  }
  return y;
}

void ToyBackend::emit_cross_attention(const LatentTensor& z, int t, const TokenizedPrompt& prompt,
                                      const ObserverSet& observers) const {
  double strength = 0.0;
  const Map2D glyph = glyph_likelihood(z, &strength);
  const double noise = spec_.attention_noise * strength;
  std::vector<bool> tracked(prompt.tokens.size(), false);
  for (const auto& [_, positions] : prompt.tracked_positions) {
    for (int p : positions) tracked[p] = true;
  }
  const std::uint64_t seed = spec_.attention_noise_seed;
  for (const auto& layer : layers_) {
    const Map2D pooled = area_pool(glyph, spec_.downsample_factor * layer.downscale);
    const auto lid = static_cast<std::uint64_t>(layer.id);
    const auto step = static_cast<std::uint64_t>(t);
    for (int p = 0; p < static_cast<int>(prompt.tokens.size()); ++p) {
      Map2D logits(pooled.height(), pooled.width());
      const bool is_end = p == prompt.end_position;
      for (std::size_t i = 0; i < logits.size(); ++i) {
        const auto cell = static_cast<std::uint64_t>(i);
        const double own = unit(mix({seed, kTokenNoiseSalt, step, lid, std::uint64_t(p), cell}));
        double v = noise * own;
        if (tracked[p] || is_end) v += noise * unit(mix({seed, kSharedNoiseSalt, step, lid, cell}));
        if (tracked[p]) v += pooled.storage()[i];
        logits.storage()[i] = v;
      }
      observers.notify(CrossAttentionRecord{t, layer.id, p, logits});
    }
  }
}

LatentTensor ToyBackend::predict(const LatentTensor& z, int t, const TokenizedPrompt* prompt,
                                 const ObserverSet& observers, const InjectionPlan* injection) {
  const Shape3 s = z.shape();
  LatentTensor eps(s);
  const bool linear = spec_.mode == ToyMode::kLinearEps;
  if (linear) {
    auto e = eps.data();
    auto zd = z.data();
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = spec_.lambda * zd[i];
  }
  if (prompt != nullptr && observers.wants_cross_attention()) emit_cross_attention(z, t, *prompt, observers);

  for (const auto& layer : layers_) {
    const bool inject = injection != nullptr && injection->applies(t, layer.id);
    const bool observe = observers.wants_self_attention(t, layer.id);
    if (!inject && !observe) continue;
    const LayerGrid grid = layer_grid(s.height, s.width, layer.downscale);
    const LayerWeights& w = weights_[layer.id];
    const Matrix features = pool_tokens(z, layer.downscale, grid);
    const Matrix keys = matmul(features, w.key);
    const Matrix values = matmul(features, w.value);
    if (!inject) {
      observers.notify(SelfAttentionRecord{t, layer.id, grid, keys, values, false});
      continue;
    }
    const KVRecord& src = *injection->source->find(t, layer.id);
    auto [k2, v2] = combine_kv(keys, values, src.keys, src.values, injection->mask_per_layer.at(layer.id));
    observers.notify(SelfAttentionRecord{t, layer.id, grid, k2, v2, true});
    if (!linear || spec_.kv_coupling == 0.0) continue;

    const Matrix queries = matmul(features, w.query);
    const Matrix injected = softmax_attention(queries, k2, v2);
    const Matrix plain = softmax_attention(queries, keys, values);
    Matrix delta(injected.rows, injected.cols);
    for (std::size_t i = 0; i < delta.values.size(); ++i) delta.values[i] = injected.values[i] - plain.values[i];
    const Matrix back = matmul(delta, w.output);
    const std::vector<std::uint8_t>& keep = injection->mask_per_layer.at(layer.id);
    for (int c = 0; c < s.channels; ++c) {
      for (int y = 0; y < s.height; ++y) {
        for (int x = 0; x < s.width; ++x) {
          const int token = (y / layer.downscale) * grid.width + x / layer.downscale;
          if (!keep[token]) continue;
          if (const double d = back(token, c); d != 0.0) eps.at(c, y, x) += spec_.kv_coupling * d;
        }
      }
    }
  }
  return eps;
}

}  // namespace textdestroyer
