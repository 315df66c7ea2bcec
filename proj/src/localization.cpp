#include "textdestroyer/localization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "textdestroyer/inversion.hpp"

namespace textdestroyer {

namespace {

void require_k(int k) {
  if (k < 1) throw ContractViolation("kmeans: k must be positive");
}

}  // namespace

ClusterResult kmeans(std::span<const double> values, int k, std::uint64_t /*seed*/) {
  require_k(k);
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  // Distinct values with multiplicities.
  std::vector<double> uniq;
  std::vector<double> weight;
  std::vector<std::size_t> uniq_of(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = values[order[i]];
    if (!std::isfinite(v)) throw ContractViolation("kmeans: non-finite input");
    if (uniq.empty() || v != uniq.back()) {
      uniq.push_back(v);
      weight.push_back(0.0);
    }
    weight.back() += 1.0;
    uniq_of[order[i]] = uniq.size() - 1;
  }
  const std::size_t u = uniq.size();
  if (u < static_cast<std::size_t>(k)) {
    throw DegenerateClustering("kmeans: " + std::to_string(u) + " distinct values for k = " + std::to_string(k));
  }

  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  std::vector<double> pw(u + 1, 0.0), ps(u + 1, 0.0), pq(u + 1, 0.0);
  for (std::size_t i = 0; i < u; ++i) {
    const double x = uniq[i] - mean;
    pw[i + 1] = pw[i] + weight[i];
    ps[i + 1] = ps[i] + weight[i] * x;
    pq[i + 1] = pq[i] + weight[i] * x * x;
  }
  // SSE of distinct values [i, j).
  auto cost = [&](std::size_t i, std::size_t j) {
    const double w = pw[j] - pw[i];
    const double s = ps[j] - ps[i];
    return std::max(0.0, (pq[j] - pq[i]) - s * s / w);
  };

  const double inf = std::numeric_limits<double>::infinity();
  // best[m][j]: min SSE of the first j distinct values in m clusters; split[m][j]: start of the last one.
  std::vector<std::vector<double>> best(k + 1, std::vector<double>(u + 1, inf));
  std::vector<std::vector<std::size_t>> split(k + 1, std::vector<std::size_t>(u + 1, 0));
  best[0][0] = 0.0;
  for (int m = 1; m <= k; ++m) {
    for (std::size_t j = m; j <= u; ++j) {
      for (std::size_t i = m - 1; i < j; ++i) {
        if (best[m - 1][i] == inf) continue;
        const double c = best[m - 1][i] + cost(i, j);
        if (c < best[m][j]) {
          best[m][j] = c;
          split[m][j] = i;
        }
      }
    }
  }

  // Segment bounds in ascending order, then relabel so label 0 is the highest.
  std::vector<std::size_t> starts(k + 1);
  starts[k] = u;
  for (int m = k; m >= 1; --m) starts[m - 1] = split[m][starts[m]];
  std::vector<int> label_of_uniq(u);
  ClusterResult result;
  result.centers.resize(k);
  for (int m = 0; m < k; ++m) {
    const int label = k - 1 - m;
    for (std::size_t i = starts[m]; i < starts[m + 1]; ++i) label_of_uniq[i] = label;
    const double w = pw[starts[m + 1]] - pw[starts[m]];
    result.centers[label] = {mean + (ps[starts[m + 1]] - ps[starts[m]]) / w};
  }
  result.assignments.resize(n);
  for (std::size_t i = 0; i < n; ++i) result.assignments[i] = label_of_uniq[uniq_of[i]];
  return result;
}

ClusterResult kmeans_vectors(const Matrix& points, int k, std::uint64_t seed) {
  require_k(k);
  const int n = points.rows;
  const int d = points.cols;
  if (d == 1) {
    return kmeans(points.values, k, seed);
  }
  for (double v : points.values) {
    if (!std::isfinite(v)) throw ContractViolation("kmeans: non-finite input");
  }
  {
    std::set<std::vector<double>> distinct;
    for (int i = 0; i < n && distinct.size() < static_cast<std::size_t>(k); ++i) {
      distinct.emplace(points.row(i).begin(), points.row(i).end());
    }
    if (distinct.size() < static_cast<std::size_t>(k)) {
      throw DegenerateClustering("kmeans: fewer than " + std::to_string(k) + " distinct points");
    }
  }

  auto dist2 = [&](int i, const std::vector<double>& c) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      const double diff = points(i, j) - c[j];
      s += diff * diff;
    }
    return s;
  };

  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> centers;
  const int i0 = std::uniform_int_distribution<int>(0, n - 1)(rng);
  centers.emplace_back(points.row(i0).begin(), points.row(i0).end());
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], dist2(i, centers.back()));
      total += nearest[i];
    }
    // D^2 sampling; total > 0 because at least k distinct points exist.
    double r = std::uniform_real_distribution<double>(0.0, total)(rng);
    int chosen = -1;
    for (int i = 0; i < n; ++i) {
      if (nearest[i] <= 0.0) continue;
      chosen = i;
      r -= nearest[i];
      if (r < 0.0) break;
    }
    centers.emplace_back(points.row(chosen).begin(), points.row(chosen).end());
  }

  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < kMaxLloydIterations; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = dist2(i, centers[0]);
      for (int c = 1; c < k; ++c) {
        const double dc = dist2(i, centers[c]);
        if (dc < best_d) {
          best_d = dc;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (int j = 0; j < d; ++j) sums[assign[i]][j] += points(i, j);
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Re-seed an empty cluster at the point farthest from its center.
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double di = dist2(i, centers[assign[i]]);
          if (di > far_d) {
            far_d = di;
            far = i;
          }
        }
        centers[c].assign(points.row(far).begin(), points.row(far).end());
        continue;
      }
      for (int j = 0; j < d; ++j) centers[c][j] = sums[c][j] / counts[c];
    }
  }

  // Order clusters by descending coordinate sum; ties by first member index.
  std::vector<int> first_member(k, n);
  for (int i = n - 1; i >= 0; --i) first_member[assign[i]] = i;
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](int c) { return std::accumulate(centers[c].begin(), centers[c].end(), 0.0); };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double ka = key(a), kb = key(b);
    if (ka != kb) return ka > kb;
    return first_member[a] < first_member[b];
  });
  std::vector<int> relabel(k);
  ClusterResult result;
  for (int pos = 0; pos < k; ++pos) {
    relabel[order[pos]] = pos;
    result.centers.push_back(centers[order[pos]]);
  }
  result.assignments.resize(n);
  for (int i = 0; i < n; ++i) result.assignments[i] = relabel[assign[i]];
  return result;
}

SegmentOutcome segment_stage1(const Map2D& aggregated, std::uint64_t seed, int upscale) {
  SegmentOutcome out;
  ClusterResult clusters;
  try {
    clusters = kmeans(aggregated.data(), 3, seed);
  } catch (const DegenerateClustering&) {
    out.degenerate = true;
    out.mask = Mask(aggregated.height() * upscale, aggregated.width() * upscale, 0);
    return out;
  }
  Mask latent(aggregated.height(), aggregated.width(), 0);
  for (std::size_t i = 0; i < latent.size(); ++i) latent.storage()[i] = clusters.assignments[i] <= 1 ? 1 : 0;
  out.mask = upsample_nearest(latent, upscale);
  return out;
}

SegmentOutcome segment_stage2(const Map2D& sub_aggregated, int height, int width, std::uint64_t seed, int k) {
  if (k < 2) throw ConfigError("stage-2 cluster count must be at least 2");
  const Map2D resized = resize_bilinear(sub_aggregated, height, width);
  SegmentOutcome out;
  try {
    const ClusterResult clusters = kmeans(resized.data(), k, seed);
    out.mask = Mask(height, width, 0);
    for (std::size_t i = 0; i < out.mask.size(); ++i) {
      out.mask.storage()[i] = clusters.assignments[i] < k - 1 ? 1 : 0;
    }
  } catch (const DegenerateClustering&) {
    out.degenerate = true;
    out.mask = Mask(height, width, 1);
  }
  return out;
}

SegmentOutcome segment_stage3(const Image& sub_image, const Mask& reference, std::uint64_t seed) {
  if (reference.height() != sub_image.height || reference.width() != sub_image.width) {
    throw ContractViolation("segment_stage3: reference mask does not match the crop");
  }
  const int n = sub_image.height * sub_image.width;
  Matrix points(n, sub_image.channels);
  points.values = sub_image.pixels;
  SegmentOutcome out;
  out.mask = Mask(sub_image.height, sub_image.width, 0);
  ClusterResult clusters;
  try {
    clusters = kmeans_vectors(points, 2, seed);
  } catch (const DegenerateClustering&) {
    out.degenerate = true;
    return out;
  }
  std::size_t count[2] = {0, 0};
  std::size_t overlap[2] = {0, 0};
  for (int i = 0; i < n; ++i) {
    const int c = clusters.assignments[i];
    ++count[c];
    if (reference.storage()[i]) ++overlap[c];
  }
  int text = 0;
  if (overlap[0] + overlap[1] == 0) {
    text = count[1] < count[0] ? 1 : 0;
  } else {
    text = overlap[0] <= overlap[1] ? 0 : 1;
  }
  for (int i = 0; i < n; ++i) out.mask.storage()[i] = clusters.assignments[i] == text ? 1 : 0;
  return out;
}

std::vector<Box> extract_boxes(const Mask& mask, long min_area) { return connected_component_boxes(mask, min_area); }

std::vector<Crop> crop_regions(const Image& image, std::span<const Box> boxes, double padding, int native_size,
                               std::vector<std::string>* warnings) {
  if (padding < 0.0) throw ConfigError("box padding must be non-negative");
  if (native_size <= 0) throw ContractViolation("crop_regions: native size must be positive");
  std::vector<Crop> crops;
  for (const Box& box : boxes) {
    if (box.empty()) {
      if (warnings) warnings->push_back("skipped zero-area box");
      continue;
    }
    const int px = static_cast<int>(std::lround(padding * box.width()));
    const int py = static_cast<int>(std::lround(padding * box.height()));
    Crop c;
    c.box = box;
    c.padded = {std::max(0, box.x0 - px), std::max(0, box.y0 - py), std::min(image.width, box.x1 + px),
                std::min(image.height, box.y1 + py)};
    c.original = crop(image, c.padded);
    c.magnified = resize_bicubic(c.original, native_size, native_size);
    crops.push_back(std::move(c));
  }
  return crops;
}

void paste_back(Image& dst, const Crop& crop, const Image& magnified) {
  if (magnified == crop.magnified) {
    paste(dst, crop.original, crop.padded);
    return;
  }
  paste(dst, resize_bicubic(magnified, crop.padded.height(), crop.padded.width()), crop.padded);
}

Mask place_union(int height, int width, std::span<const PlacedMask> parts) {
  Mask out(height, width, 0);
  for (const PlacedMask& p : parts) {
    if (p.mask.height() != p.region.height() || p.mask.width() != p.region.width()) {
      throw ContractViolation("place_union: sub-mask does not match its region");
    }
    for (int y = 0; y < p.mask.height(); ++y) {
      for (int x = 0; x < p.mask.width(); ++x) {
        if (p.mask(y, x)) out(p.region.y0 + y, p.region.x0 + x) = 1;
      }
    }
  }
  return out;
}

std::pair<Mask, Mask> finalize_mask(const Mask& m1, std::span<const PlacedMask> parts, int downsample) {
  Mask m3 = mask_and(m1, place_union(m1.height(), m1.width(), parts));
  Mask latent = max_pool(m3, downsample);
  return {std::move(m3), std::move(latent)};
}

std::map<std::string, Map2D> token_mean_maps(const TokenMapStack& stack, int height, int width) {
  std::map<std::string, Map2D> out;
  for (const auto& [word, maps] : stack.per_token()) {
    Map2D mean(height, width, 0.0);
    for (const auto& [key, map] : maps) {
      const Map2D r = resize_bilinear(map, height, width);
      for (std::size_t i = 0; i < mean.size(); ++i) mean.storage()[i] += r.storage()[i];
    }
    if (!maps.empty()) {
      for (double& v : mean.storage()) v /= static_cast<double>(maps.size());
    }
    out.emplace(word, std::move(mean));
  }
  return out;
}

LocalizationResult localize(const Image& image, DenoiserBackend& backend, const LocalizationConfig& config,
                            const std::optional<Mask>& user_mask) {
  const int f = backend.downsample_factor();
  const Shape3 latent = backend.latent_shape(image.height, image.width);
  const TokenizedPrompt prompt = backend.tokenize(config.prompt_words);
  LocalizationResult result;
  result.user_mask_mode = user_mask.has_value();

  const LatentTensor z0 = backend.encode(image);
  long min_area = static_cast<long>(config.min_box_latent_area) * f * f;
  if (user_mask) {
    if (user_mask->height() != image.height || user_mask->width() != image.width) {
      throw ContractViolation("user mask is " + std::to_string(user_mask->width()) + "x" +
                              std::to_string(user_mask->height()) + ", image is " + std::to_string(image.width) +
                              "x" + std::to_string(image.height));
    }
    if (!is_binary(*user_mask)) throw ContractViolation("user mask is not binary");
    result.trajectory = invert_trajectory(z0, backend, config.schedule, nullptr, {});
    result.masks.m1 = *user_mask;
    min_area = 1;
  } else {
    CrossAttentionCollector collector(prompt);
    result.trajectory = invert_trajectory(z0, backend, config.schedule, &prompt, {&collector});
    const TokenMapStack stack = collector.take();
    stack.validate();
    result.aggregated = aggregate_maps(stack, config.gamma, latent.height, latent.width);
    result.token_maps = token_mean_maps(stack, latent.height, latent.width);
    SegmentOutcome s1 = segment_stage1(result.aggregated, config.seed, f);
    result.masks.m1 = std::move(s1.mask);
    if (s1.degenerate) result.warnings.push_back("stage 1: attention map is flat, no text found");
  }

  const Mask empty(image.height, image.width, 0);
  result.masks.m2 = empty;
  result.masks.m3 = empty;
  result.masks.m3_latent = Mask(latent.height, latent.width, 0);
  if (mask_area(result.masks.m1) == 0) return result;

  result.masks.boxes = extract_boxes(result.masks.m1, min_area);
  if (result.masks.boxes.empty()) {
    result.warnings.push_back("stage 1: every text component is below the minimum box area");
    return result;
  }
  const std::vector<Crop> crops =
      crop_regions(image, result.masks.boxes, config.box_padding, backend.native_input_size(), &result.warnings);

  std::vector<PlacedMask> stage2;
  for (std::size_t i = 0; i < crops.size(); ++i) {
    const Crop& c = crops[i];
    const LatentTensor zc = backend.encode(c.magnified);
    CrossAttentionCollector collector(prompt);
    invert_trajectory(zc, backend, config.crop_schedule, &prompt, {&collector}, {.update_with_prompted_prediction = true});
    const TokenMapStack stack = collector.take();
    const Map2D agg = aggregate_maps(stack, config.gamma, zc.shape().height, zc.shape().width);
    SegmentOutcome s2 = segment_stage2(agg, c.padded.height(), c.padded.width(), config.seed, config.stage2_k);
    if (s2.degenerate) result.warnings.push_back("stage 2: crop " + std::to_string(i) + " attention is flat");
    stage2.push_back({c.padded, std::move(s2.mask)});
  }
  const Mask m2_core = mask_and(result.masks.m1, place_union(image.height, image.width, stage2));
  result.masks.m2 = dilate(m2_core, config.k1);

  const Mask reference = mask_minus(result.masks.m1, result.masks.m2);
  std::vector<PlacedMask> stage3;
  for (std::size_t i = 0; i < crops.size(); ++i) {
    const Crop& c = crops[i];
    SegmentOutcome s3 = segment_stage3(c.original, crop(reference, c.padded), config.seed);
    if (s3.degenerate) result.warnings.push_back("stage 3: crop " + std::to_string(i) + " has uniform pixels");
    stage3.push_back({c.padded, std::move(s3.mask)});
  }
  auto [m3, m3_latent] = finalize_mask(result.masks.m1, stage3, f);
  result.masks.m3 = std::move(m3);
  result.masks.m3_latent = std::move(m3_latent);
  result.text_found = mask_area(result.masks.m3) > 0;
  if (!result.text_found) result.warnings.push_back("stage 3: no text pixels inside the coarse mask");
  return result;
}

}  // namespace textdestroyer
