#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "textdestroyer/attention.hpp"
#include "textdestroyer/backend.hpp"
#include "textdestroyer/diffusion.hpp"
#include "textdestroyer/image_ops.hpp"

namespace textdestroyer {

/// Cluster labels per element; label 0 has the highest center.
struct ClusterResult {
  std::vector<int> assignments;
  // centers[label] is a point of the input's dimension, sorted descending by
  // value (by coordinate sum for vectors).
  std::vector<std::vector<double>> centers;

  int k() const { return static_cast<int>(centers.size()); }
};

/// Exact minimum-SSE k-means for scalar values (optimal contiguous split of the sorted
/// values). Throws DegenerateClustering with fewer than k distinct values.
ClusterResult kmeans(std::span<const double> values, int k, std::uint64_t seed = 0);

/// Lloyd iterations from seeded k-means++ centers, for rows of `points`, until the
/// assignment stops changing or 300 iterations.
ClusterResult kmeans_vectors(const Matrix& points, int k, std::uint64_t seed);

inline constexpr int kMaxLloydIterations = 300;

struct SegmentOutcome {
  Mask mask;
  bool degenerate = false;
};

/// 3-means over the latent-resolution map; the two brightest clusters form the mask,
/// upsampled by `upscale` with nearest-neighbour. Degenerate input gives an empty mask.
SegmentOutcome segment_stage1(const Map2D& aggregated, std::uint64_t seed, int upscale);

/// Bilinearly resizes a crop's aggregated map to height x width and clusters it with
/// k-means; the k-1 brightest clusters form the mask (the top one for k = 2).
/// Degenerate input keeps the whole crop.
SegmentOutcome segment_stage2(const Map2D& sub_aggregated, int height, int width, std::uint64_t seed, int k = 2);

/// 2-means over the crop's RGB pixels. The cluster overlapping the background
/// reference less is text; on a tie the brighter cluster wins, and with an empty
/// reference the cluster with fewer pixels wins. Degenerate input gives an empty mask.
SegmentOutcome segment_stage3(const Image& sub_image, const Mask& reference, std::uint64_t seed);

std::vector<Box> extract_boxes(const Mask& mask, long min_area);

struct Crop {
  Box box;       // connected-component box
  Box padded;    // box grown by the padding fraction, clamped to the image
  Image original;
  Image magnified;  // native_size x native_size bicubic resample of `original`
};

/// Crops around each box; zero-area boxes are skipped and reported in `warnings`.
std::vector<Crop> crop_regions(const Image& image, std::span<const Box> boxes, double padding, int native_size,
                               std::vector<std::string>* warnings = nullptr);

/// Writes a (possibly edited) magnified crop back over its padded box. An untouched
/// crop restores the original pixels exactly.
void paste_back(Image& dst, const Crop& crop, const Image& magnified);

struct PlacedMask {
  Box region;  // where `mask` sits in image coordinates
  Mask mask;
};

Mask place_union(int height, int width, std::span<const PlacedMask> parts);

/// m3 = m1 AND union(parts); m3_latent = max-pool of m3 by `downsample`.
std::pair<Mask, Mask> finalize_mask(const Mask& m1, std::span<const PlacedMask> parts, int downsample);

struct HierMask {
  Mask m1;
  Mask m2;
  Mask m3;
  Mask m3_latent;
  std::vector<Box> boxes;
};

struct LocalizationConfig {
  Schedule schedule;
  // Schedule for the per-crop inversions.
  Schedule crop_schedule;
  std::vector<std::string> prompt_words = kDefaultPromptWords;
  double gamma = 1.5;
  int k1 = 5;
  int stage2_k = 2;
  double box_padding = 0.1;
  // Components smaller than this many latent cells are dropped.
  int min_box_latent_area = 4;
  std::uint64_t seed = 0;
};

struct LocalizationResult {
  DiffusionTrajectory trajectory;
  HierMask masks;
  bool text_found = false;
  bool user_mask_mode = false;
  Map2D aggregated;                        // stage-1 map (empty with a user mask)
  std::map<std::string, Map2D> token_maps;  // per-word mean maps at latent resolution
  std::vector<std::string> warnings;
};

/// Hierarchical text localization. Without a user mask: prompted inversion, stage-1
/// clustering of the aggregated attention, per-crop re-inversion (stage 2) and pixel
/// clustering (stage 3). With a user mask, the plain inversion only records latents and
/// the user mask becomes m1.
LocalizationResult localize(const Image& image, DenoiserBackend& backend, const LocalizationConfig& config,
                            const std::optional<Mask>& user_mask = std::nullopt);

std::map<std::string, Map2D> token_mean_maps(const TokenMapStack& stack, int height, int width);

}  // namespace textdestroyer
