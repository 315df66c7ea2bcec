#include "textdestroyer/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "textdestroyer/image_io.hpp"

namespace textdestroyer {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw ConfigError(key + ": value must be finite");
  }
  return value;
}

template <typename T>
std::string format_number(T value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::string format_bool(bool v) { return v ? "true" : "false"; }

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) out += (i ? " " : "") + words[i];
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

#define TD_NUMBER_FIELD(name, member)                                                                   \
  Field {                                                                                            \
    name, [](const PipelineConfig& c) { return format_number(c.member); },                           \
        [](PipelineConfig& c, const std::string& v) { c.member = parse_number<decltype(c.member)>(name, v); } \
  }
#define TD_BOOL_FIELD(name, member)                                                                  \
  Field {                                                                                            \
    name, [](const PipelineConfig& c) { return format_bool(c.member); },                             \
        [](PipelineConfig& c, const std::string& v) { c.member = parse_bool(name, v); }             \
  }
#define TD_STRING_FIELD(name, member)                                                                \
  Field {                                                                                            \
    name, [](const PipelineConfig& c) { return c.member; },                                          \
        [](PipelineConfig& c, const std::string& v) { c.member = v; }                                \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      TD_NUMBER_FIELD("steps", steps),
      TD_NUMBER_FIELD("train_steps", train_steps),
      TD_NUMBER_FIELD("beta_start", beta_start),
      TD_NUMBER_FIELD("beta_end", beta_end),
      Field{"ddim_form", [](const PipelineConfig& c) { return std::string(to_string(c.ddim_form)); },
            [](PipelineConfig& c, const std::string& v) {
              try {
                c.ddim_form = ddim_form_from_string(v);
              } catch (const Error& e) {
                throw ConfigError(std::string("ddim_form: ") + e.what());
              }
            }},
      TD_NUMBER_FIELD("gamma", gamma),
      TD_NUMBER_FIELD("k1", k1),
      TD_NUMBER_FIELD("k2", k2),
      Field{"kv_steps", [](const PipelineConfig& c) { return format_step_window(c.kv_steps); },
            [](PipelineConfig& c, const std::string& v) { c.kv_steps = parse_step_window(v); }},
      TD_STRING_FIELD("kv_layers", kv_layers),
      Field{"replace_step",
            [](const PipelineConfig& c) {
              return c.replace_step ? format_number(*c.replace_step) : std::string("none");
            },
            [](PipelineConfig& c, const std::string& v) {
              if (v == "none") {
                c.replace_step.reset();
              } else {
                c.replace_step = parse_number<int>("replace_step", v);
              }
            }},
      Field{"prompt", [](const PipelineConfig& c) { return join_words(c.prompt); },
            [](PipelineConfig& c, const std::string& v) { c.prompt = split_words(v); }},
      TD_NUMBER_FIELD("seed", seed),
      TD_STRING_FIELD("backend", backend),
      TD_NUMBER_FIELD("stage2_k", stage2_k),
      TD_NUMBER_FIELD("crop_steps", crop_steps),
      TD_NUMBER_FIELD("box_padding", box_padding),
      TD_NUMBER_FIELD("min_box_latent_area", min_box_latent_area),
      TD_NUMBER_FIELD("sigma_floor", sigma_floor),
      TD_BOOL_FIELD("edit_prompted", edit_prompted),
      Field{"toy.mode", [](const PipelineConfig& c) { return std::string(to_string(c.toy.mode)); },
            [](PipelineConfig& c, const std::string& v) { c.toy.mode = toy_mode_from_string(v); }},
      TD_NUMBER_FIELD("toy.lambda", toy.lambda),
      TD_NUMBER_FIELD("toy.kv_coupling", toy.kv_coupling),
      TD_NUMBER_FIELD("toy.attention_noise", toy.attention_noise),
      TD_NUMBER_FIELD("toy.downsample_factor", toy.downsample_factor),
      Field{"toy.codec", [](const PipelineConfig& c) { return std::string(to_string(c.toy.codec)); },
            [](PipelineConfig& c, const std::string& v) { c.toy.codec = toy_codec_from_string(v); }},
      TD_NUMBER_FIELD("toy.native_size", toy.native_size),
      TD_NUMBER_FIELD("toy.contrast_floor", toy.contrast_floor),
      TD_STRING_FIELD("toy.glyph_mask", toy.glyph_mask),
      TD_STRING_FIELD("input", input),
      TD_STRING_FIELD("output_dir", output_dir),
      TD_STRING_FIELD("mask", mask),
      TD_BOOL_FIELD("dump_attention", dump_attention),
      TD_BOOL_FIELD("dump_latents", dump_latents),
      TD_BOOL_FIELD("dry_run", dry_run),
      TD_NUMBER_FIELD("jobs", jobs),
  };
  return table;
}

#undef TD_NUMBER_FIELD
#undef TD_BOOL_FIELD
#undef TD_STRING_FIELD

const Field& field(const std::string& key) {
  for (const Field& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void require_odd(const char* name, int k) {
  if (k < 1 || k % 2 == 0) throw ConfigError(std::string(name) + " must be odd and positive, got " + std::to_string(k));
}

std::pair<int, int> parse_range(const std::string& text) {
  const auto dash = text.find('-', 1);
  if (dash == std::string::npos) {
    const int v = parse_number<int>("range", trim(text));
    return {v, v};
  }
  return {parse_number<int>("range", trim(text.substr(0, dash))), parse_number<int>("range", trim(text.substr(dash + 1)))};
}

}  // namespace

void PipelineConfig::validate() const {
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (train_steps < steps) throw ConfigError("train_steps must be >= steps");
  if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0)) {
    throw ConfigError("betas must satisfy 0 < beta_start < beta_end < 1");
  }
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be non-negative");
  require_odd("k1", k1);
  require_odd("k2", k2);
  if (!kv_steps.empty() && (kv_steps.first < 1 || kv_steps.last > steps)) {
    throw ConfigError("kv_steps " + format_step_window(kv_steps) + " outside [1, " + std::to_string(steps) + "]");
  }
  if (replace_step && (*replace_step < 1 || *replace_step > steps)) {
    throw ConfigError("replace_step " + std::to_string(*replace_step) + " outside [1, " + std::to_string(steps) + "]");
  }
  if (prompt.empty()) throw ConfigError("prompt needs at least one word");
  if (backend != "toy" && backend != "adapter") throw ConfigError("backend must be 'toy' or 'adapter'");
  if (stage2_k < 2) throw ConfigError("stage2_k must be >= 2");
  if (crop_steps < 0 || crop_steps > train_steps) throw ConfigError("crop_steps must be in [0, train_steps]");
  if (box_padding < 0.0) throw ConfigError("box_padding must be non-negative");
  if (min_box_latent_area < 1) throw ConfigError("min_box_latent_area must be >= 1");
  if (!(sigma_floor > 0.0)) throw ConfigError("sigma_floor must be positive");
  if (toy.downsample_factor < 1) throw ConfigError("toy.downsample_factor must be >= 1");
  if (toy.native_size < toy.downsample_factor || toy.native_size % toy.downsample_factor != 0) {
    throw ConfigError("toy.native_size must be a positive multiple of toy.downsample_factor");
  }
  if (!(toy.contrast_floor > 0.0)) throw ConfigError("toy.contrast_floor must be positive");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  resolve_kv_layers(kv_layers, 1 << 16);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.push_back(f.key);
  return keys;
}

std::string serialize(const PipelineConfig& config) {
  std::string out = "# textdestroyer pipeline configuration\n";
  for (const Field& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

void apply_config_value(PipelineConfig& config, const std::string& key, const std::string& value) {
  field(key).set(config, value);
}

void apply_config_text(PipelineConfig& config, const std::string& text) {
  std::istringstream in(text);
  std::set<std::string> seen;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(body.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    try {
      apply_config_value(config, key, trim(body.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig config;
  apply_config_text(config, text);
  return config;
}

StepWindow parse_step_window(const std::string& text) {
  const std::string t = trim(text);
  if (t == "none") return StepWindow::none();
  auto [a, b] = parse_range(t);
  if (a < 0 || b < 0) throw ConfigError("kv_steps: negative step in '" + t + "'");
  StepWindow w{std::max(1, std::min(a, b)), std::max(a, b)};
  if (w.empty()) throw ConfigError("kv_steps: '" + t + "' selects no denoising step");
  return w;
}

std::string format_step_window(const StepWindow& window) {
  if (window.empty()) return "none";
  return format_number(window.first) + "-" + format_number(window.last);
}

std::set<int> resolve_kv_layers(const std::string& policy, int num_layers) {
  const std::string p = trim(policy);
  std::set<int> out;
  if (p == "none") return out;
  auto check = [&](int id) {
    if (id < 0 || id >= num_layers) {
      throw ConfigError("kv_layers: layer " + std::to_string(id) + " outside [0, " + std::to_string(num_layers - 1) +
                        "]");
    }
    out.insert(id);
  };
  if (p == "all") {
    for (int i = 0; i < num_layers; ++i) out.insert(i);
    return out;
  }
  if (p.rfind("front", 0) == 0) {
    const auto plus = p.find("+back");
    if (plus == std::string::npos) throw ConfigError("kv_layers: expected 'frontN+backM', got '" + p + "'");
    const int front = parse_number<int>("kv_layers", p.substr(5, plus - 5));
    const int back = parse_number<int>("kv_layers", p.substr(plus + 5));
    if (front < 0 || back < 0 || front + back > num_layers) {
      throw ConfigError("kv_layers: '" + p + "' needs more than " + std::to_string(num_layers) + " layers");
    }
    for (int i = 0; i < front; ++i) out.insert(i);
    for (int i = num_layers - back; i < num_layers; ++i) out.insert(i);
    return out;
  }
  std::stringstream in(p);
  for (std::string part; std::getline(in, part, ',');) {
    if (trim(part).empty()) throw ConfigError("kv_layers: empty entry in '" + p + "'");
    auto [a, b] = parse_range(trim(part));
    if (a > b) std::swap(a, b);
    for (int id = a; id <= b; ++id) check(id);
  }
  if (out.empty()) throw ConfigError("kv_layers: '" + p + "' selects nothing; use 'none'");
  return out;
}

ToyBackendSpec make_toy_spec(const PipelineConfig& config) {
  ToyBackendSpec spec;
  spec.mode = config.toy.mode;
  spec.lambda = config.toy.lambda;
  spec.kv_coupling = config.toy.kv_coupling;
  spec.attention_noise = config.toy.attention_noise;
  spec.attention_noise_seed = config.seed;
  spec.downsample_factor = config.toy.downsample_factor;
  spec.codec = config.toy.codec;
  spec.native_input_size = config.toy.native_size;
  spec.contrast_floor = config.toy.contrast_floor;
  if (!config.toy.glyph_mask.empty()) spec.glyph_mask = read_mask_png(config.toy.glyph_mask);
  return spec;
}

Schedule make_pipeline_schedule(const PipelineConfig& config, int num_steps) {
  return make_subsampled_schedule(num_steps, config.train_steps, {config.beta_start, config.beta_end}, config.ddim_form);
}

}  // namespace textdestroyer
