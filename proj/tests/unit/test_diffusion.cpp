#include <cmath>
#include <random>

#include "doctest.h"
#include "textdestroyer/diffusion.hpp"
#include "textdestroyer/inversion.hpp"
#include "textdestroyer/toy_backend.hpp"

using namespace textdestroyer;

namespace {

Schedule two_step(double a1, double a2, DdimForm form = DdimForm::kAsWritten) {
  Schedule s;
  s.num_steps = 2;
  s.alpha_bar = {1.0, a1, a2};
  s.native_timesteps = {0, 1, 2};
  s.form = form;
  return s;
}

LatentTensor scalar(double v) { return LatentTensor({1, 1, 1}, {v}); }

LatentTensor random_latent(Shape3 shape, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  LatentTensor z(shape);
  for (double& v : z.data()) v = n(rng);
  return z;
}

// Denoise step written out directly from the update rule.
double literal_denoise(double z, double eps, double a_t, double a_prev) {
  return std::sqrt(a_prev / a_t) * z + (std::sqrt(1.0 / a_prev - 1.0) - std::sqrt(1.0 / a_t - 1.0)) * eps;
}

}  // namespace

TEST_CASE("linear schedule") {
  const Schedule s = make_schedule(10, {0.1, 0.2});
  CHECK(s.alpha_bar[0] == 1.0);
  CHECK(s.alpha_bar[1] == doctest::Approx(0.9));
  CHECK(s.alpha_bar[10] == doctest::Approx(0.9 * 0.8888888888888888 * 0.8777777777777778 * 0.8666666666666667 *
                                           0.8555555555555556 * 0.8444444444444444 * 0.8333333333333334 *
                                           0.8222222222222222 * 0.8111111111111111 * 0.8));
  for (int t = 1; t <= 10; ++t) CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
  CHECK_THROWS_AS(make_schedule(0, {0.1, 0.2}), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, {0.2, 0.1}), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, {0.0, 0.1}), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, {0.1, 1.0}), ConfigError);
}

TEST_CASE("subsampled schedule maps pipeline steps onto the training grid") {
  const Schedule s = make_subsampled_schedule(50);
  CHECK(s.num_steps == 50);
  CHECK(s.native_timesteps[1] == 19);
  CHECK(s.native_timesteps[50] == 999);
  double acc = 1.0;
  for (int k = 0; k < 1000; ++k) {
    const double beta = 0.00085 + (0.012 - 0.00085) * k / 999.0;
    acc *= 1.0 - beta;
    if (k == 19) CHECK(s.alpha_bar[1] == doctest::Approx(acc).epsilon(1e-12));
    if (k == 999) CHECK(s.alpha_bar[50] == doctest::Approx(acc).epsilon(1e-12));
  }
  CHECK(s.hash() == make_subsampled_schedule(50).hash());
  CHECK(s.hash() != make_subsampled_schedule(25).hash());
  CHECK(s.hash() != make_subsampled_schedule(50, 1000, kDefaultBetaRange, DdimForm::kStandard).hash());
}

TEST_CASE("denoise and invert worked examples") {
  const Schedule s = two_step(0.64, 0.25);
  const double down = ddim_denoise_step(scalar(1.0), scalar(0.5), 2, s).data()[0];
  CHECK(down == doctest::Approx(1.10897).epsilon(1e-5));
  CHECK(down == doctest::Approx(literal_denoise(1.0, 0.5, 0.25, 0.64)).epsilon(1e-15));
  CHECK(ddim_invert_step(scalar(1.1089746), scalar(0.5), 2, s).data()[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("standard form matches the textbook update") {
  const Schedule s = two_step(0.64, 0.25, DdimForm::kStandard);
  const double z = 0.7, eps = -0.3;
  // Predict x0, then re-noise to the previous level.
  const double x0 = (z - std::sqrt(1 - 0.25) * eps) / std::sqrt(0.25);
  const double expect = std::sqrt(0.64) * x0 + std::sqrt(1 - 0.64) * eps;
  CHECK(ddim_denoise_step(scalar(z), scalar(eps), 2, s).data()[0] == doctest::Approx(expect).epsilon(1e-14));
  const double back = ddim_invert_step(scalar(expect), scalar(eps), 2, s).data()[0];
  CHECK(back == doctest::Approx(z).epsilon(1e-14));
}

TEST_CASE("invert then denoise is an exact inverse for both forms") {
  std::mt19937_64 rng(7);
  for (DdimForm form : {DdimForm::kAsWritten, DdimForm::kStandard}) {
    const Schedule s = make_subsampled_schedule(50, 1000, kDefaultBetaRange, form);
    for (int trial = 0; trial < 50; ++trial) {
      const LatentTensor z = random_latent({2, 3, 3}, rng);
      const LatentTensor eps = random_latent({2, 3, 3}, rng);
      const int t = 1 + trial % 50;
      const LatentTensor back = ddim_denoise_step(ddim_invert_step(z, eps, t, s), eps, t, s);
      for (std::size_t i = 0; i < z.size(); ++i) CHECK(back.data()[i] == doctest::Approx(z.data()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("step contracts") {
  const Schedule s = make_subsampled_schedule(10);
  const LatentTensor z({1, 2, 2});
  CHECK_THROWS_AS(ddim_denoise_step(z, z, 0, s), ContractViolation);
  CHECK_THROWS_AS(ddim_denoise_step(z, z, 11, s), ContractViolation);
  CHECK_THROWS_AS(ddim_invert_step(z, LatentTensor({1, 2, 3}), 1, s), ContractViolation);
}

TEST_CASE("forward diffusion") {
  const Schedule s = two_step(0.64, 0.25);
  CHECK(forward_diffuse(scalar(2.0), 2, scalar(1.0), s).data()[0] == doctest::Approx(0.5 * 2.0 + std::sqrt(0.75)));
}

TEST_CASE("zero-eps toy round trip over 50 steps") {
  ToyBackendSpec spec;
  spec.mode = ToyMode::kZeroEps;
  ToyBackend backend(spec);
  const Schedule s = make_subsampled_schedule(50);
  std::mt19937_64 rng(3);
  const LatentTensor z0 = random_latent(backend.latent_shape(16, 16), rng);
  const DiffusionTrajectory traj = invert_trajectory(z0, backend, s, nullptr, {});
  CHECK(traj.num_steps() == 50);
  LatentTensor z = traj.at(50);
  for (int t = 50; t >= 1; --t) z = ddim_denoise_step(z, backend.predict_noise(z, t, nullptr, {}, nullptr), t, s);
  double worst = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) worst = std::max(worst, std::abs(z.data()[i] - z0.data()[i]));
  CHECK(worst < 1e-6);
}

TEST_CASE("linear-eps toy: each step inverts exactly given the inversion's noise") {
  ToyBackend backend;
  const Schedule s = make_subsampled_schedule(50);
  std::mt19937_64 rng(4);
  const LatentTensor z0 = random_latent(backend.latent_shape(8, 8), rng);
  const DiffusionTrajectory traj = invert_trajectory(z0, backend, s, nullptr, {});
  for (int t = 1; t <= 50; ++t) {
    const LatentTensor eps = backend.predict_noise(traj.at(t - 1), t - 1, nullptr, {}, nullptr);
    const LatentTensor back = ddim_denoise_step(traj.at(t), eps, t, s);
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back.data()[i] == doctest::Approx(traj.at(t - 1).data()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("trajectory persistence") {
  std::mt19937_64 rng(5);
  std::vector<LatentTensor> entries;
  for (int i = 0; i < 4; ++i) entries.push_back(random_latent({2, 3, 4}, rng));
  const DiffusionTrajectory traj(entries, "abc");
  const auto dir = std::filesystem::temp_directory_path() / "td_traj_test";
  std::filesystem::remove_all(dir);
  traj.save(dir);
  const DiffusionTrajectory loaded = DiffusionTrajectory::load(dir);
  CHECK(loaded.num_steps() == 3);
  CHECK(loaded.schedule_hash() == "abc");
  for (int t = 0; t <= 3; ++t) CHECK(loaded.at(t) == traj.at(t));
  CHECK_THROWS_AS(loaded.at(4), IntegrityError);
  std::filesystem::remove(dir / "z_002.bin");
  CHECK_THROWS_AS(DiffusionTrajectory::load(dir), IntegrityError);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(DiffusionTrajectory::load(dir), IntegrityError);
}
