#include "textdestroyer/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <thread>

#include "textdestroyer/image_io.hpp"
#include "textdestroyer/storage.hpp"
#include "textdestroyer/toy_backend.hpp"

namespace textdestroyer {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

nlohmann::json metric_json(const std::optional<MetricReport>& m) {
  if (!m) return nullptr;
  return {{"psnr_db", m->psnr_db}, {"mssim", m->mssim}, {"region", to_string(m->region)}};
}

std::string config_digest(const PipelineConfig& config) {
  PipelineConfig c = config;
  // IO locations do not change results.
  c.input.clear();
  c.output_dir.clear();
  c.mask.clear();
  c.jobs = 1;
  const std::string text = serialize(c);
  return storage::fnv1a_hex({reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

}  // namespace

std::unique_ptr<DenoiserBackend> make_backend(const PipelineConfig& config) {
  if (config.backend == "toy") return std::make_unique<ToyBackend>(make_toy_spec(config));
  if (config.backend == "adapter") {
    throw ConfigError("backend 'adapter' needs an external implementation of the denoiser contract; none is built in");
  }
  throw ConfigError("unknown backend '" + config.backend + "'");
}

nlohmann::json RunResult::report() const {
  nlohmann::json j;
  j["image"] = name;
  j["status"] = ok ? "ok" : "failed";
  if (!ok) j["error"] = error;
  j["config_digest"] = config_digest;
  j["dry_run"] = dry_run;
  j["user_mask"] = user_mask;
  j["text_found"] = text_found;
  j["masks"] = {{"m1_area", mask_area(masks.m1)},
                {"m2_area", mask_area(masks.m2)},
                {"m3_area", mask_area(masks.m3)},
                {"m3_latent_area", mask_area(masks.m3_latent)}};
  nlohmann::json boxes = nlohmann::json::array();
  for (const Box& b : masks.boxes) boxes.push_back({b.x0, b.y0, b.x1, b.y1});
  j["boxes"] = boxes;
  j["restore"] = {{"short_circuit", restore.short_circuit},
                  {"kv_steps", restore.kv_steps},
                  {"replace_step", restore.replaced_at ? nlohmann::json(*restore.replaced_at) : nlohmann::json()}};
  j["metrics"] = {{"full_image", metric_json(full)}, {"background_only", metric_json(background)}};
  j["warnings"] = warnings;
  return j;
}

RunResult run_image(const PipelineConfig& config, const Image& input, const std::optional<Mask>& user_mask,
                    DenoiserBackend& backend) {
  config.validate();
  RunResult r;
  r.config_digest = config_digest(config);
  r.dry_run = config.dry_run;
  r.user_mask = user_mask.has_value();
  const std::set<int> kv_layers =
      resolve_kv_layers(config.kv_layers, static_cast<int>(backend.self_attention_layers().size()));

  LocalizationConfig lc;
  lc.schedule = make_pipeline_schedule(config, config.steps);
  lc.crop_schedule = make_pipeline_schedule(config, config.effective_crop_steps());
  lc.prompt_words = config.prompt;
  lc.gamma = config.gamma;
  lc.k1 = config.k1;
  lc.stage2_k = config.stage2_k;
  lc.box_padding = config.box_padding;
  lc.min_box_latent_area = config.min_box_latent_area;
  lc.seed = config.seed;

  auto start = Clock::now();
  LocalizationResult loc = localize(input, backend, lc, user_mask);
  r.timings["localize"] = seconds_since(start);
  r.masks = std::move(loc.masks);
  r.text_found = loc.text_found;
  r.aggregated = std::move(loc.aggregated);
  r.token_maps = std::move(loc.token_maps);
  r.warnings = std::move(loc.warnings);
  r.trajectory = std::move(loc.trajectory);
  if (config.dry_run) return r;

  if (!r.text_found) {
    r.output = input;
    r.restore.short_circuit = true;
    r.footprint_latent = Mask(r.masks.m3_latent.height(), r.masks.m3_latent.width(), 0);
  } else {
    DestructionConfig dc;
    dc.kv_step_window = config.kv_steps;
    dc.kv_layers = kv_layers;
    dc.replace_step = config.replace_step;
    dc.k2 = config.k2;
    dc.noise_seed = config.seed;
    dc.sigma_floor = config.sigma_floor;
    dc.user_mask_mode = r.user_mask;
    if (config.edit_prompted) dc.edit_prompt = config.prompt;
    RestoreOptions options;
    options.keep_snapshots = config.dump_latents;
    start = Clock::now();
    RestoreResult restored = restore(r.trajectory, r.masks, backend, lc.schedule, dc, options);
    r.timings["restore"] = seconds_since(start);
    r.output = quantize(restored.image);
    r.restore = restored.report;
    r.snapshots = std::move(restored.snapshots);
    r.footprint_latent = r.user_mask ? max_pool(r.masks.m1, backend.downsample_factor())
                                     : dilate(r.masks.m3_latent, config.k2);
  }

  start = Clock::now();
  const Image reference = quantize(input);
  r.full = evaluate(reference, r.output);
  const Mask footprint = upsample_nearest(r.footprint_latent, backend.downsample_factor());
  if (mask_area(footprint) == footprint.size()) {
    r.warnings.push_back("metrics: the restoration footprint covers the whole image");
  } else {
    try {
      r.background = evaluate_background(reference, r.output, footprint);
    } catch (const ContractViolation& e) {
      r.warnings.push_back(std::string("metrics: ") + e.what());
    }
  }
  r.timings["metrics"] = seconds_since(start);
  return r;
}

void write_artifacts(const PipelineConfig& config, const RunResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  if (!result.masks.m1.empty()) {
    write_mask_png(dir / "m1.png", result.masks.m1);
    write_mask_png(dir / "m2.png", result.masks.m2);
    write_mask_png(dir / "m3.png", result.masks.m3);
  }
  if (!result.aggregated.empty()) write_png(dir / "attention.png", heatmap_image(result.aggregated));
  if (config.dump_attention) {
    for (const auto& [word, map] : result.token_maps) write_png(dir / ("attention_" + word + ".png"), heatmap_image(map));
  }
  if (config.dump_latents) {
    if (!result.trajectory.empty()) result.trajectory.save(dir / "trajectory");
    if (!result.snapshots.empty()) DiffusionTrajectory(result.snapshots, "").save(dir / "restore_latents");
  }
  if (!result.output.pixels.empty()) write_png(dir / "output.png", result.output);
  storage::write_text(dir / "report.json", result.report().dump(2) + "\n");
  nlohmann::json timings(result.timings);
  storage::write_text(dir / "timings.json", timings.dump(2) + "\n");
}

RunResult run(const PipelineConfig& config) {
  config.validate();
  if (config.input.empty()) throw ConfigError("no input image given");
  if (config.output_dir.empty()) throw ConfigError("no output directory given");
  auto backend = make_backend(config);
  auto start = Clock::now();
  const Image input = read_png(config.input);
  std::optional<Mask> user_mask;
  if (!config.mask.empty()) user_mask = read_mask_png(config.mask);
  const double read_seconds = seconds_since(start);
  RunResult r = run_image(config, input, user_mask, *backend);
  r.name = std::filesystem::path(config.input).filename().string();
  r.timings["read"] = read_seconds;
  start = Clock::now();
  write_artifacts(config, r, config.output_dir);
  r.timings["write"] = seconds_since(start);
  storage::write_text(std::filesystem::path(config.output_dir) / "timings.json",
                      nlohmann::json(r.timings).dump(2) + "\n");
  return r;
}

bool BatchResult::any_failed() const {
  return std::any_of(runs.begin(), runs.end(), [](const RunResult& r) { return !r.ok; });
}

nlohmann::json BatchResult::report() const {
  nlohmann::json images = nlohmann::json::array();
  int failed = 0;
  int measured = 0;
  int background_measured = 0;
  double psnr_sum = 0.0, mssim_sum = 0.0, bg_psnr_sum = 0.0, bg_mssim_sum = 0.0;
  nlohmann::json table = nlohmann::json::array();
  for (const RunResult& r : runs) {
    images.push_back(r.report());
    if (!r.ok) {
      ++failed;
      continue;
    }
    nlohmann::json row = {{"image", r.name}};
    if (r.full) {
      ++measured;
      psnr_sum += r.full->psnr_db;
      mssim_sum += r.full->mssim;
      row["psnr_db"] = r.full->psnr_db;
      row["mssim"] = r.full->mssim;
    }
    if (r.background) {
      ++background_measured;
      bg_psnr_sum += r.background->psnr_db;
      bg_mssim_sum += r.background->mssim;
      row["background_psnr_db"] = r.background->psnr_db;
      row["background_mssim"] = r.background->mssim;
    }
    table.push_back(row);
  }
  auto mean = [](double sum, int n) { return n ? nlohmann::json(sum / n) : nlohmann::json(); };
  return {{"images", images},
          {"table", table},
          {"summary",
           {{"count", runs.size()},
            {"failed", failed},
            {"mean_psnr_db", mean(psnr_sum, measured)},
            {"mean_mssim", mean(mssim_sum, measured)},
            {"mean_background_psnr_db", mean(bg_psnr_sum, background_measured)},
            {"mean_background_mssim", mean(bg_mssim_sum, background_measured)}}}};
}

BatchResult batch(const PipelineConfig& config, const std::filesystem::path& input_dir) {
  config.validate();
  if (!std::filesystem::is_directory(input_dir)) throw IoError("not a directory: " + input_dir.string());
  if (config.output_dir.empty()) throw ConfigError("no output directory given");
  // Fail fast on backend configuration before spawning workers.
  make_backend(config);

  std::vector<std::filesystem::path> inputs;
  for (const auto& entry : std::filesystem::directory_iterator(input_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") inputs.push_back(entry.path());
  }
  std::sort(inputs.begin(), inputs.end());

  const std::filesystem::path out_root = config.output_dir;
  std::filesystem::create_directories(out_root);
  BatchResult result;
  result.runs.resize(inputs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    auto backend = make_backend(config);
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      const auto& path = inputs[i];
      RunResult& r = result.runs[i];
      try {
        const Image input = read_png(path);
        std::optional<Mask> user_mask;
        if (!config.mask.empty()) {
          const auto candidate = std::filesystem::path(config.mask) / path.filename();
          if (std::filesystem::exists(candidate)) user_mask = read_mask_png(candidate);
        }
        r = run_image(config, input, user_mask, *backend);
      } catch (const std::exception& e) {
        r = RunResult{};
        r.ok = false;
        r.error = e.what();
      }
      r.name = path.filename().string();
      try {
        write_artifacts(config, r, out_root / path.stem());
      } catch (const std::exception& e) {
        r.ok = false;
        r.error = std::string("writing artifacts: ") + e.what();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(config.jobs, static_cast<int>(inputs.size())));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  storage::write_text(out_root / "report.json", result.report().dump(2) + "\n");
  nlohmann::json timings = nlohmann::json::object();
  for (const RunResult& r : result.runs) timings[r.name] = r.timings;
  storage::write_text(out_root / "timings.json", timings.dump(2) + "\n");
  return result;
}

}  // namespace textdestroyer
