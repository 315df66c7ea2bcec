#include "textdestroyer/diffusion.hpp"

#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "textdestroyer/storage.hpp"

namespace textdestroyer {

namespace {

void validate_range(int num_steps, std::pair<double, double> beta_range) {
  if (num_steps < 1) throw ConfigError("schedule needs at least one step");
  auto [lo, hi] = beta_range;
  if (!(lo > 0.0 && lo <= hi && hi < 1.0)) {
    throw ConfigError("beta range must satisfy 0 < beta_min <= beta_max < 1");
  }
}

std::vector<double> linear_betas(int n, std::pair<double, double> beta_range) {
  std::vector<double> betas(n);
  for (int i = 0; i < n; ++i) {
    double frac = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    betas[i] = beta_range.first + (beta_range.second - beta_range.first) * frac;
  }
  return betas;
}

void require_step(const Schedule& s, int t, const char* what) {
  if (t < 1 || t > s.num_steps) {
    throw ContractViolation(std::string(what) + ": timestep " + std::to_string(t) + " outside [1, " +
                            std::to_string(s.num_steps) + "]");
  }
}

// sqrt(1/a - 1)
double noise_ratio(double alpha_bar) { return std::sqrt(1.0 / alpha_bar - 1.0); }

LatentTensor affine(const LatentTensor& z, const LatentTensor& eps, StepCoefficients k) {
  LatentTensor out(z.shape(), z.space());
  auto o = out.data();
  auto a = z.data();
  auto e = eps.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = k.z_scale * a[i] + k.eps_scale * e[i];
  return out;
}

}  // namespace

const char* to_string(DdimForm form) { return form == DdimForm::kAsWritten ? "as_written" : "standard"; }

DdimForm ddim_form_from_string(const std::string& name) {
  if (name == "as_written") return DdimForm::kAsWritten;
  if (name == "standard") return DdimForm::kStandard;
  throw ConfigError("unknown ddim form '" + name + "' (expected as_written or standard)");
}

double Schedule::at(int t) const {
  if (t < 0 || t > num_steps) throw ContractViolation("schedule index " + std::to_string(t) + " out of range");
  return alpha_bar[t];
}

std::string Schedule::hash() const {
  std::vector<unsigned char> bytes(sizeof(int) + alpha_bar.size() * sizeof(double) + 1);
  std::memcpy(bytes.data(), &num_steps, sizeof(int));
  std::memcpy(bytes.data() + sizeof(int), alpha_bar.data(), alpha_bar.size() * sizeof(double));
  bytes.back() = static_cast<unsigned char>(form);
  return storage::fnv1a_hex(bytes);
}

Schedule make_schedule(int num_steps, std::pair<double, double> beta_range) {
  validate_range(num_steps, beta_range);
  Schedule s;
  s.num_steps = num_steps;
  s.alpha_bar.assign(num_steps + 1, 1.0);
  s.native_timesteps.resize(num_steps + 1);
  const auto betas = linear_betas(num_steps, beta_range);
  for (int t = 1; t <= num_steps; ++t) {
    s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - betas[t - 1]);
    s.native_timesteps[t] = t;
  }
  return s;
}

Schedule make_subsampled_schedule(int num_steps, int train_steps, std::pair<double, double> beta_range,
                                  DdimForm form) {
  validate_range(num_steps, beta_range);
  if (train_steps < num_steps) throw ConfigError("train_steps must be >= num_steps");
  const auto betas = linear_betas(train_steps, beta_range);
  std::vector<double> train_alpha_bar(train_steps);
  double acc = 1.0;
  for (int k = 0; k < train_steps; ++k) {
    acc *= 1.0 - betas[k];
    train_alpha_bar[k] = acc;
  }
  const int stride = train_steps / num_steps;
  Schedule s;
  s.num_steps = num_steps;
  s.form = form;
  s.alpha_bar.assign(num_steps + 1, 1.0);
  s.native_timesteps.assign(num_steps + 1, 0);
  for (int t = 1; t <= num_steps; ++t) {
    s.native_timesteps[t] = t * stride - 1;
    s.alpha_bar[t] = train_alpha_bar[s.native_timesteps[t]];
  }
  return s;
}

LatentTensor forward_diffuse(const LatentTensor& z0, int t, const LatentTensor& noise, const Schedule& s) {
  require_same_shape(z0, noise, "forward_diffuse");
  require_step(s, t, "forward_diffuse");
  const double a = s.alpha_bar[t];
  return affine(z0, noise, {std::sqrt(a), std::sqrt(1.0 - a)});
}

StepCoefficients denoise_coefficients(const Schedule& s, int t) {
  require_step(s, t, "ddim_denoise_step");
  const double a_t = s.alpha_bar[t];
  const double a_prev = s.alpha_bar[t - 1];
  const double diff = noise_ratio(a_prev) - noise_ratio(a_t);
  const double eps_scale = s.form == DdimForm::kStandard ? std::sqrt(a_prev) * diff : diff;
  return {std::sqrt(a_prev / a_t), eps_scale};
}

StepCoefficients invert_coefficients(const Schedule& s, int t) {
  require_step(s, t, "ddim_invert_step");
  const double a_t = s.alpha_bar[t];
  const double a_prev = s.alpha_bar[t - 1];
  const double diff = noise_ratio(a_t) - noise_ratio(a_prev);
  const double ratio = std::sqrt(a_t / a_prev);
  const double eps_scale = s.form == DdimForm::kStandard ? std::sqrt(a_t) * diff : ratio * diff;
  return {ratio, eps_scale};
}

LatentTensor ddim_denoise_step(const LatentTensor& z_t, const LatentTensor& eps, int t, const Schedule& s) {
  require_same_shape(z_t, eps, "ddim_denoise_step");
  return affine(z_t, eps, denoise_coefficients(s, t));
}

LatentTensor ddim_invert_step(const LatentTensor& z_prev, const LatentTensor& eps, int t, const Schedule& s) {
  require_same_shape(z_prev, eps, "ddim_invert_step");
  return affine(z_prev, eps, invert_coefficients(s, t));
}

DiffusionTrajectory::DiffusionTrajectory(std::vector<LatentTensor> entries, std::string schedule_hash)
    : entries_(std::move(entries)), schedule_hash_(std::move(schedule_hash)) {
  if (entries_.size() < 2) throw IntegrityError("trajectory needs at least two entries");
  for (const auto& e : entries_) {
    if (!(e.shape() == entries_.front().shape())) throw IntegrityError("trajectory entries differ in shape");
  }
}

const LatentTensor& DiffusionTrajectory::at(int t) const {
  if (t < 0 || t >= static_cast<int>(entries_.size())) {
    throw IntegrityError("trajectory has no entry for step " + std::to_string(t));
  }
  return entries_[t];
}

void DiffusionTrajectory::save(const std::filesystem::path& dir) const {
  if (entries_.empty()) throw IntegrityError("cannot save an empty trajectory");
  std::filesystem::create_directories(dir);
  const Shape3 shape = entries_.front().shape();
  nlohmann::json manifest;
  manifest["kind"] = "trajectory";
  manifest["num_steps"] = num_steps();
  manifest["shape"] = {shape.channels, shape.height, shape.width};
  manifest["dtype"] = "float64-le";
  manifest["schedule_hash"] = schedule_hash_;
  auto files = nlohmann::json::array();
  for (std::size_t t = 0; t < entries_.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "z_%03zu.bin", t);
    storage::write_f64(dir / name, entries_[t].data());
    files.push_back(name);
  }
  manifest["files"] = files;
  storage::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

DiffusionTrajectory DiffusionTrajectory::load(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(storage::read_text(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("bad trajectory manifest: " + std::string(e.what()));
  } catch (const IoError& e) {
    throw IntegrityError(e.what());
  }
  if (manifest.value("kind", "") != "trajectory" || manifest.value("dtype", "") != "float64-le") {
    throw IntegrityError("manifest in " + dir.string() + " is not a float64 trajectory");
  }
  const auto dims = manifest.at("shape").get<std::vector<int>>();
  if (dims.size() != 3) throw IntegrityError("trajectory shape must have three dims");
  const Shape3 shape{dims[0], dims[1], dims[2]};
  const auto files = manifest.at("files").get<std::vector<std::string>>();
  if (static_cast<int>(files.size()) != manifest.at("num_steps").get<int>() + 1) {
    throw IntegrityError("trajectory manifest lists " + std::to_string(files.size()) + " files for " +
                         std::to_string(manifest.at("num_steps").get<int>()) + " steps");
  }
  std::vector<LatentTensor> entries;
  entries.reserve(files.size());
  for (const auto& f : files) entries.emplace_back(shape, storage::read_f64(dir / f, shape.size()));
  return DiffusionTrajectory(std::move(entries), manifest.at("schedule_hash").get<std::string>());
}

}  // namespace textdestroyer
