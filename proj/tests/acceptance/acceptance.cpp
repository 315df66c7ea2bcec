// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "textdestroyer/attention.hpp"
#include "textdestroyer/config.hpp"
#include "textdestroyer/destroyer.hpp"
#include "textdestroyer/diffusion.hpp"
#include "textdestroyer/fixtures.hpp"
#include "textdestroyer/inversion.hpp"
#include "textdestroyer/localization.hpp"
#include "textdestroyer/metrics.hpp"
#include "textdestroyer/pipeline.hpp"
#include "textdestroyer/toy_backend.hpp"

namespace td = textdestroyer;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failure messages; the first few are kept for the report line.
struct Checker {
  int failures = 0;
  std::vector<std::string> messages;
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures;
    if (messages.size() < 3) messages.push_back(what);
  }
  Outcome outcome(const std::string& summary) const {
    Outcome o{failures == 0, summary};
    for (const auto& m : messages) o.detail += "; " + m;
    return o;
  }
};

td::LatentTensor random_latent(td::Shape3 shape, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  td::LatentTensor z(shape);
  for (double& v : z.data()) v = n(rng);
  return z;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + TD_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

td::Mask block(int h, int w, int y0, int x0, int y1, int x1) {
  td::Mask m(h, w, 0);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) m(y, x) = 1;
  }
  return m;
}

// 1 ------------------------------------------------------------------------

Outcome ddim_algebra() {
  Checker check;
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> steps(2, 100);
  std::uniform_real_distribution<double> beta_lo(1e-4, 5e-3), beta_span(1e-3, 5e-2);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int T = steps(rng);
    const double lo = beta_lo(rng);
    td::Schedule s = td::make_schedule(T, {lo, lo + beta_span(rng)});
    s.form = trial % 2 ? td::DdimForm::kStandard : td::DdimForm::kAsWritten;
    const int t = std::uniform_int_distribution<int>(1, T)(rng);
    const td::LatentTensor z = random_latent({2, 3, 3}, rng);
    const td::LatentTensor eps = random_latent({2, 3, 3}, rng);
    const td::LatentTensor back = td::ddim_denoise_step(td::ddim_invert_step(z, eps, t, s), eps, t, s);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double rel = std::abs(back.data()[i] - z.data()[i]) / std::max(std::abs(z.data()[i]), 1e-3);
      worst = std::max(worst, rel);
    }
  }
  check.expect(worst <= 1e-9, "tuple relative error " + std::to_string(worst));

  td::ToyBackendSpec spec;
  spec.mode = td::ToyMode::kZeroEps;
  td::ToyBackend backend(spec);
  const td::Schedule s = td::make_subsampled_schedule(50);
  const td::LatentTensor z0 = random_latent(backend.latent_shape(32, 32), rng);
  const td::DiffusionTrajectory traj = td::invert_trajectory(z0, backend, s, nullptr, {});
  td::LatentTensor z = traj.at(50);
  for (int t = 50; t >= 1; --t) z = td::ddim_denoise_step(z, backend.predict_noise(z, t, nullptr, {}, nullptr), t, s);
  double round_trip = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) round_trip = std::max(round_trip, std::abs(z.data()[i] - z0.data()[i]));
  check.expect(round_trip <= 1e-6, "50-step round trip " + std::to_string(round_trip));
  const double elapsed = seconds_since(start);
  check.expect(elapsed < 5.0, "runtime " + std::to_string(elapsed) + " s");
  char buf[160];
  std::snprintf(buf, sizeof buf, "max rel err %.2e over 1000 tuples, round trip %.2e, %.2f s", worst, round_trip,
                elapsed);
  return check.outcome(buf);
}

// 2 ------------------------------------------------------------------------

// Bilinear weights written as a tent kernel over half-pixel-centred source positions.
double tent_sample(const td::Map2D& src, int y, int x, int h, int w) {
  const double fy = std::clamp((y + 0.5) * src.height() / h - 0.5, 0.0, src.height() - 1.0);
  const double fx = std::clamp((x + 0.5) * src.width() / w - 0.5, 0.0, src.width() - 1.0);
  double acc = 0.0;
  for (int i = 0; i < src.height(); ++i) {
    const double wy = std::max(0.0, 1.0 - std::abs(fy - i));
    if (wy == 0.0) continue;
    for (int j = 0; j < src.width(); ++j) {
      const double wx = std::max(0.0, 1.0 - std::abs(fx - j));
      acc += wy * wx * src(i, j);
    }
  }
  return acc;
}

td::Map2D brute_force_aggregate(const std::vector<std::vector<td::Map2D>>& words, const std::vector<td::Map2D>& end,
                                double gamma, int h, int w) {
  td::Map2D out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double total = 0.0;
      for (std::size_t e = 0; e < end.size(); ++e) {
        double cell = -gamma * tent_sample(end[e], y, x, h, w);
        for (const auto& word : words) cell += tent_sample(word[e], y, x, h, w);
        total += cell;
      }
      out(y, x) = total / static_cast<double>(end.size());
    }
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : out.storage()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double& v : out.storage()) v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
  return out;
}

Outcome aggregation() {
  Checker check;
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n_words = trial % 10 == 0 ? 1 : 1 + static_cast<int>(rng() % 3);
    const int n_steps = 1 + static_cast<int>(rng() % 3);
    const int n_layers = 1 + static_cast<int>(rng() % 4);
    const double gamma = trial % 7 == 0 ? 0.0 : 3.0 * u(rng);
    const int h = 4 + static_cast<int>(rng() % 12), w = 4 + static_cast<int>(rng() % 12);
    std::vector<int> sides;
    for (int l = 0; l < n_layers; ++l) sides.push_back(1 + static_cast<int>(rng() % 16));
    td::TokenMapStack stack;
    std::vector<std::vector<td::Map2D>> words(n_words);
    std::vector<td::Map2D> end;
    auto random_map = [&](int side) {
      td::Map2D m(side, side);
      for (double& v : m.storage()) v = u(rng);
      return m;
    };
    for (int s = 0; s < n_steps; ++s) {
      for (int l = 0; l < n_layers; ++l) {
        for (int k = 0; k < n_words; ++k) {
          words[k].push_back(random_map(sides[l]));
          stack.add("word" + std::to_string(k), s, l, words[k].back());
        }
        end.push_back(random_map(sides[l]));
        stack.add(td::kEndToken, s, l, end.back());
      }
    }
    const td::Map2D got = td::aggregate_maps(stack, gamma, h, w);
    const td::Map2D want = brute_force_aggregate(words, end, gamma, h, w);
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got.storage()[i] - want.storage()[i]));
  }
  check.expect(worst <= 1e-12, "max abs difference " + std::to_string(worst));

  td::TokenMapStack single;
  single.add("text", 0, 0, td::Map2D(1, 1, 2.0));
  single.add("letter", 0, 0, td::Map2D(1, 1, 1.0));
  single.add("character", 0, 0, td::Map2D(1, 1, 3.0));
  single.add(td::kEndToken, 0, 0, td::Map2D(1, 1, 2.0));
  check.expect(std::abs(td::aggregate_maps_raw(single, 1.5, 1, 1)(0, 0) - 3.0) <= 1e-12, "worked example");
  char buf[96];
  std::snprintf(buf, sizeof buf, "100 random stacks, max abs diff %.2e", worst);
  return check.outcome(buf);
}

// 3 ------------------------------------------------------------------------

double partition_sse(const std::vector<double>& v, const std::vector<int>& labels, int k) {
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (labels[i] == c) {
        sum += v[i];
        ++n;
      }
    }
    if (n == 0) return std::numeric_limits<double>::infinity();
    const double mean = sum / n;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (labels[i] == c) total += (v[i] - mean) * (v[i] - mean);
    }
  }
  return total;
}

// Relabels by order of first appearance so label permutations compare equal.
std::vector<int> canonical(const std::vector<int>& labels) {
  std::vector<int> map(labels.size() + 1, -1), out(labels.size());
  int next = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (map[labels[i]] < 0) map[labels[i]] = next++;
    out[i] = map[labels[i]];
  }
  return out;
}

struct Exhaustive {
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<int>> argmins;
};

Exhaustive exhaustive_partition(const std::vector<double>& v, int k) {
  Exhaustive e;
  std::vector<int> labels(v.size(), 0);
  const double tie = 1e-9;
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int used) {
    if (i == v.size()) {
      if (used != k) return;
      const double s = partition_sse(v, labels, k);
      if (s < e.best - tie) {
        e.best = s;
        e.argmins = {labels};
      } else if (s <= e.best + tie) {
        e.argmins.push_back(labels);
      }
      return;
    }
    // Restricted growth strings enumerate each set partition once.
    for (int c = 0; c <= std::min(used, k - 1); ++c) {
      labels[i] = c;
      rec(i + 1, std::max(used, c + 1));
    }
  };
  rec(0, 0);
  return e;
}

Outcome clustering() {
  Checker check;
  const auto start = Clock::now();
  int cases = 0, unique_optimum = 0, degenerate = 0;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    std::mt19937_64 rng(seed);
    for (int n = 1; n <= 12; ++n) {
      for (int rep = 0; rep < 25; ++rep) {
        std::vector<double> v(n);
        if (rep % 2 == 0) {
          std::uniform_int_distribution<int> small(0, 6);
          for (double& x : v) x = small(rng);
        } else {
          std::normal_distribution<double> g(0.0, 1.0);
          for (double& x : v) x = g(rng);
        }
        std::vector<double> sorted = v;
        std::sort(sorted.begin(), sorted.end());
        const bool distinct_enough = std::unique(sorted.begin(), sorted.end()) - sorted.begin() >= 2;
        if (!distinct_enough) {
          bool threw = false;
          try {
            td::kmeans(v, 2);
          } catch (const td::DegenerateClustering&) {
            threw = true;
          }
          check.expect(threw, "degenerate multiset did not raise");
          ++degenerate;
          continue;
        }
        ++cases;
        const auto got = canonical(td::kmeans(v, 2, seed).assignments);
        const Exhaustive ex = exhaustive_partition(v, 2);
        bool match = false;
        for (const auto& a : ex.argmins) match |= canonical(a) == got;
        if (ex.argmins.size() == 1) ++unique_optimum;
        check.expect(match, "k=2 partition differs from the exhaustive optimum at n=" + std::to_string(n));
      }
    }
  }
  // Three well-separated groups of varied size and spread.
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    std::mt19937_64 rng(seed + 10);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> v;
      std::vector<int> truth;
      const double centres[3] = {0.0, 10.0, 25.0};
      for (int g = 0; g < 3; ++g) {
        const int size = 2 + static_cast<int>(rng() % 3);
        std::uniform_real_distribution<double> jitter(-1.5, 1.5);
        for (int i = 0; i < size; ++i) {
          v.push_back(centres[g] + jitter(rng));
          truth.push_back(g);
        }
      }
      std::vector<std::size_t> order(v.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<double> shuffled;
      std::vector<int> shuffled_truth;
      for (std::size_t i : order) {
        shuffled.push_back(v[i]);
        shuffled_truth.push_back(truth[i]);
      }
      const auto got = canonical(td::kmeans(shuffled, 3, seed).assignments);
      check.expect(got == canonical(shuffled_truth), "k=3 groups not recovered");
      const Exhaustive ex = exhaustive_partition(shuffled, 3);
      bool match = false;
      for (const auto& a : ex.argmins) match |= canonical(a) == got;
      check.expect(match, "k=3 partition differs from the exhaustive optimum");
      ++cases;
    }
  }
  const double elapsed = seconds_since(start);
  check.expect(elapsed < 30.0, "runtime " + std::to_string(elapsed) + " s");
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d multisets (%d with a unique optimum, %d degenerate rejected), %.2f s", cases,
                unique_optimum, degenerate, elapsed);
  return check.outcome(buf);
}

// 4 ------------------------------------------------------------------------

Outcome mask_pipeline() {
  Checker check;
  const int sizes[][2] = {{96, 96}, {128, 128}, {96, 160}, {112, 96}, {80, 128}};
  double min_iou = 1.0, sum_iou = 0.0;
  for (int i = 0; i < 10; ++i) {
    const int h = sizes[i % 5][0], w = sizes[i % 5][1];
    const td::GlyphFixture fx = td::make_glyph_fixture(1000 + i, h, w);
    td::PipelineConfig config;
    config.dry_run = true;
    td::ToyBackendSpec spec = td::make_toy_spec(config);
    spec.glyph_mask = fx.truth;
    td::ToyBackend backend(spec);
    const td::RunResult r = td::run_image(config, fx.image, std::nullopt, backend);
    const double iou = td::mask_iou(r.masks.m3, fx.truth);
    min_iou = std::min(min_iou, iou);
    sum_iou += iou;
    check.expect(iou >= 0.7, "fixture " + std::to_string(i) + " IoU " + std::to_string(iou));
    check.expect(td::mask_subset(r.masks.m3, r.masks.m1), "fixture " + std::to_string(i) + " m3 not inside m1");
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "10 fixtures, m3 IoU min %.3f mean %.3f", min_iou, sum_iou / 10.0);
  return check.outcome(buf);
}

// 5 ------------------------------------------------------------------------

Outcome destruction() {
  Checker check;
  td::ToyBackend backend;
  const td::GlyphFixture fx = td::make_glyph_fixture(55, 160, 160);
  const td::Schedule s = td::make_subsampled_schedule(50);
  const td::DiffusionTrajectory traj = td::invert_trajectory(backend.encode(fx.image), backend, s, nullptr, {});
  const td::LatentTensor& zT = traj.at(50);
  const td::Mask mask = block(40, 40, 10, 10, 30, 30);
  const td::LatentTensor destroyed = td::noise_fill(zT, mask, 7);

  // Noise fill keeps each channel's mean, so values are centred per channel before pooling;
  // the raw pooled coefficient is reported alongside.
  std::vector<double> a, b, raw_a, raw_b;
  bool outside_identical = true;
  for (int c = 0; c < zT.shape().channels; ++c) {
    double ma = 0, mb = 0;
    int n = 0;
    for (int y = 0; y < 40; ++y) {
      for (int x = 0; x < 40; ++x) {
        if (mask(y, x)) {
          ma += destroyed.at(c, y, x);
          mb += zT.at(c, y, x);
          ++n;
        } else {
          outside_identical &= destroyed.at(c, y, x) == zT.at(c, y, x);
        }
      }
    }
    ma /= n;
    mb /= n;
    for (int y = 0; y < 40; ++y) {
      for (int x = 0; x < 40; ++x) {
        if (!mask(y, x)) continue;
        a.push_back(destroyed.at(c, y, x) - ma);
        b.push_back(zT.at(c, y, x) - mb);
        raw_a.push_back(destroyed.at(c, y, x));
        raw_b.push_back(zT.at(c, y, x));
      }
    }
  }
  auto pearson = [](const std::vector<double>& u, const std::vector<double>& v) {
    double mu = 0, mv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      mu += u[i];
      mv += v[i];
    }
    mu /= u.size();
    mv /= v.size();
    double suv = 0, suu = 0, svv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      suv += (u[i] - mu) * (v[i] - mv);
      suu += (u[i] - mu) * (u[i] - mu);
      svv += (v[i] - mv) * (v[i] - mv);
    }
    return suv / std::sqrt(suu * svv);
  };
  const double rho = pearson(a, b);
  const double raw_rho = pearson(raw_a, raw_b);
  check.expect(a.size() >= 10000, "only " + std::to_string(a.size()) + " masked cells");
  check.expect(std::abs(rho) < 0.05, "correlation " + std::to_string(rho));
  check.expect(outside_identical, "cells outside the mask changed");

  td::LatentTensor flat({3, 8, 8});
  for (double& v : flat.data()) v = -0.75;
  bool constant_ok = true;
  try {
    const td::LatentTensor filled = td::noise_fill(flat, td::Mask(8, 8, 1), 3);
    for (double v : filled.data()) constant_ok &= v == -0.75;
  } catch (const std::exception&) {
    constant_ok = false;
  }
  check.expect(constant_ok, "zero-variance latent not filled with its mean");
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "rho %.4f over %zu cells (channel-centred; raw pooled %.4f), outside bit-identical, sigma=0 constant fill",
                rho, a.size(), raw_rho);
  return check.outcome(buf);
}

// 6 ------------------------------------------------------------------------

Outcome restoration() {
  Checker check;
  const td::GlyphFixture fx = td::make_glyph_fixture(66);
  const td::PipelineConfig defaults;
  double worst_decode = 0.0;
  for (td::ToyMode mode : {td::ToyMode::kLinearEps, td::ToyMode::kZeroEps}) {
    td::ToyBackendSpec spec = td::make_toy_spec(defaults);
    spec.mode = mode;
    spec.glyph_mask = fx.truth;
    td::ToyBackend backend(spec);
    td::LocalizationConfig lc;
    lc.schedule = td::make_subsampled_schedule(50);
    lc.crop_schedule = lc.schedule;
    const td::LocalizationResult loc = td::localize(fx.image, backend, lc);
    td::DestructionConfig dc;
    dc.kv_layers = td::resolve_kv_layers(defaults.kv_layers, 16);
    const td::RestoreResult r = td::restore(loc.trajectory, loc.masks, backend, lc.schedule, dc);
    const td::Mask dilated = td::dilate(loc.masks.m3_latent, dc.k2);
    bool identical = r.report.replaced_at == 2;
    for (int c = 0; c < r.after_replace.shape().channels; ++c) {
      for (int y = 0; y < dilated.height(); ++y) {
        for (int x = 0; x < dilated.width(); ++x) {
          if (!dilated(y, x)) identical &= r.after_replace.at(c, y, x) == loc.trajectory.at(2).at(c, y, x);
        }
      }
    }
    check.expect(identical, std::string("latents after replacement differ (") + td::to_string(mode) + ")");
    if (mode == td::ToyMode::kZeroEps) {
      const td::Mask footprint = td::upsample_nearest(dilated, 4);
      for (int y = 0; y < 96; ++y) {
        for (int x = 0; x < 96; ++x) {
          if (footprint(y, x)) continue;
          for (int c = 0; c < 3; ++c) {
            worst_decode = std::max(worst_decode, std::abs(r.image.at(y, x, c) - fx.image.at(y, x, c)));
          }
        }
      }
      check.expect(worst_decode <= td::ToyBackend::kDecodeTolerance,
                   "decoded background delta " + std::to_string(worst_decode));
    } else {
      // The linear toy is not exactly invertible over the full chain; its quantized background must still match.
      check.expect(td::psnr_background(fx.image, td::quantize(r.image), td::upsample_nearest(dilated, 4)) ==
                       td::kPsnrCap,
                   "quantized background differs (linear toy)");
    }
  }

  td::PipelineConfig config;
  td::ToyBackend backend(td::make_toy_spec(config));
  const td::Image blank(64, 64, 3, 150.0);
  const td::RunResult r = td::run_image(config, blank, std::nullopt, backend);
  check.expect(r.ok && !r.text_found && r.full && r.full->psnr_db == td::kPsnrCap, "empty m3 is not an identity");
  const td::RunResult empty_user = td::run_image(config, fx.image, td::Mask(96, 96, 0), backend);
  check.expect(empty_user.ok && empty_user.full && empty_user.full->psnr_db == td::kPsnrCap,
               "empty user mask is not an identity");
  char buf[128];
  std::snprintf(buf, sizeof buf, "replacement bit-identical, decoded background delta %.2e, empty-m3 PSNR %.0f dB",
                worst_decode, r.full ? r.full->psnr_db : 0.0);
  return check.outcome(buf);
}

// 7 ------------------------------------------------------------------------

Outcome kv_contracts() {
  Checker check;
  td::ToyBackend backend;
  std::mt19937_64 rng(77);
  const td::Shape3 shape = backend.latent_shape(64, 64);
  const td::LatentTensor src = random_latent(shape, rng);
  const td::LatentTensor edit = random_latent(shape, rng);
  const std::set<int> layers = td::resolve_kv_layers("all", 16);
  td::KVRecorder recorder(layers);
  backend.predict_noise(src, 10, nullptr, {&recorder}, nullptr);
  const int steps[] = {10};
  const td::KVStore store = td::store_kv(recorder, steps);
  const auto infos = backend.self_attention_layers();
  const td::LatentTensor plain = backend.predict_noise(edit, 10, nullptr, {}, nullptr);

  const td::InjectionPlan ones = td::make_injection_plan({1, 45}, layers, td::Mask(16, 16, 1), infos, store);
  check.expect(backend.predict_noise(edit, 10, nullptr, {}, &ones) == plain, "all-ones injection changed the output");

  struct Capture : td::AttentionObserver {
    std::map<int, std::pair<td::Matrix, td::Matrix>> seen;
    bool wants_self_attention(int, int) const override { return true; }
    void on_self_attention(const td::SelfAttentionRecord& r) override { seen[r.layer] = {r.keys, r.values}; }
  } capture;
  const td::InjectionPlan zeros = td::make_injection_plan({1, 45}, layers, td::Mask(16, 16, 0), infos, store);
  backend.predict_noise(edit, 10, nullptr, {&capture}, &zeros);
  bool source_kv = capture.seen.size() == 16;
  for (const auto& [layer, kv] : capture.seen) {
    source_kv &= kv.first == store.find(10, layer)->keys && kv.second == store.find(10, layer)->values;
  }
  check.expect(source_kv, "all-zeros injection did not use the source K/V");

  const td::GlyphFixture fx = td::make_glyph_fixture(7);
  std::vector<std::pair<std::string, td::Image>> outputs;
  auto ablation = [&](const std::string& name, const std::string& key, const std::string& value) {
    td::PipelineConfig config;
    if (!key.empty()) td::apply_config_value(config, key, value);
    try {
      td::ToyBackend b(td::make_toy_spec(config));
      const td::RunResult r = td::run_image(config, fx.image, std::nullopt, b);
      check.expect(r.ok && r.text_found, name + " did not complete");
      outputs.emplace_back(name, r.output);
    } catch (const std::exception& e) {
      check.expect(false, name + " raised " + e.what());
    }
  };
  ablation("default", "", "");
  ablation("w/o KV combination", "kv_layers", "none");
  ablation("KV layer 0-15", "kv_layers", "0-15");
  ablation("KV step 15-0", "kv_steps", "15-0");
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    for (std::size_t j = i + 1; j < outputs.size(); ++j) {
      check.expect(!(outputs[i].second == outputs[j].second),
                   outputs[i].first + " and " + outputs[j].first + " gave identical images");
    }
  }
  return check.outcome("no-op and source-record contracts hold; 3 ablations plus default pairwise distinct");
}

// 8 ------------------------------------------------------------------------

Outcome metrics() {
  Checker check;
  const double opposite = td::psnr(td::Image(32, 32, 3, 0.0), td::Image(32, 32, 3, 255.0));
  const double unit = td::psnr(td::Image(32, 32, 3, 100.0), td::Image(32, 32, 3, 101.0));
  const double expected_unit = 20.0 * std::log10(255.0);
  const td::GlyphFixture fx = td::make_glyph_fixture(8);
  const double self = td::mssim(fx.image, fx.image);
  check.expect(std::abs(opposite) <= 1e-6, "opposite extremes " + std::to_string(opposite));
  check.expect(std::abs(unit - expected_unit) <= 1e-6, "unit offset " + std::to_string(unit));
  check.expect(std::abs(unit - 48.13) <= 0.005, "unit offset not 48.13 dB");
  check.expect(std::abs(self - 1.0) <= 1e-6, "mssim(a,a) " + std::to_string(self));
  char buf[128];
  std::snprintf(buf, sizeof buf, "psnr %.6f dB and %.6f dB, mssim(a,a) %.9f", opposite, unit, self);
  return check.outcome(buf);
}

// 9 ------------------------------------------------------------------------

Outcome determinism() {
  Checker check;
  const fs::path root = fs::temp_directory_path() / "td_acceptance_determinism";
  fs::remove_all(root);
  check.expect(run_cli("fixture --output-dir \"" + (root / "in").string() + "\" --count 3 --seed 900") == 0,
               "fixture generation failed");
  for (const char* run : {"a", "b"}) {
    const int code = run_cli("batch --input \"" + (root / "in").string() + "\" --output-dir \"" +
                             (root / run).string() + "\" --seed 5 --jobs 2");
    check.expect(code == 0, std::string("batch run ") + run + " exited with " + std::to_string(code));
  }
  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file() || entry.path().filename() == "timings.json") continue;
    const fs::path rel = fs::relative(entry.path(), root / "a");
    ++compared;
    check.expect(fs::exists(root / "b" / rel) && read_bytes(entry.path()) == read_bytes(root / "b" / rel),
                 rel.string() + " differs");
  }
  check.expect(compared >= 3 * 5 + 1, "too few artifacts compared: " + std::to_string(compared));
  fs::remove_all(root);
  return check.outcome("two CLI batch runs, " + std::to_string(compared) + " artifacts byte-identical");
}

// 10 -----------------------------------------------------------------------

Outcome default_config() {
  Checker check;
  const td::PipelineConfig c;
  const std::string golden = read_bytes(fs::path(TD_TEST_DATA_DIR) / "default_config.txt");
  check.expect(!golden.empty() && td::serialize(c) == golden, "serialized defaults differ from the golden file");
  const td::PipelineConfig parsed = td::parse_config(golden);
  check.expect(parsed == c, "golden file does not parse back to the defaults");
  check.expect(parsed.steps == 50, "T");
  check.expect(parsed.gamma == 1.5, "gamma");
  check.expect(parsed.k1 == 5, "k1");
  check.expect(parsed.k2 == 9, "k2");
  check.expect(parsed.kv_steps.first == 1 && parsed.kv_steps.last == 45, "kv window");
  check.expect(parsed.replace_step == 2, "replace_step");
  check.expect(parsed.prompt == std::vector<std::string>{"text", "letter", "character"}, "prompt");
  check.expect(td::resolve_kv_layers(parsed.kv_layers, 16) == std::set<int>{0, 14, 15}, "kv layers");
  return check.outcome("golden file matches T=50, gamma=1.5, k1=5, k2=9, kv [1,45], replace 2, prompt");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"ddim_algebra", ddim_algebra},   {"aggregation", aggregation},   {"clustering_oracle", clustering},
      {"mask_pipeline", mask_pipeline}, {"destruction", destruction},   {"restoration_exactness", restoration},
      {"kv_contracts", kv_contracts},   {"metrics", metrics},           {"determinism", determinism},
      {"default_config", default_config},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
