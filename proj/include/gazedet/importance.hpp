#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gazedet/attention.hpp"
#include "gazedet/image.hpp"

namespace gazedet {

// Binary per-patch mask marking the gaze region of interest.
struct GazeRoiMask {
  std::vector<uint8_t> present;
  size_t count() const;
};

// Column means of a square attention map: score[j] = (1/L) sum_i map[i][j].
std::vector<double> attn_score(std::span<const double> map, size_t rows, size_t cols);

enum class ImportanceMode { PostSoftmax, PreSoftmax };

// Dataset-level head importance over one layer's attention maps. The mode
// picks which matrices feed the average: post-softmax attention is
// row-stochastic, which makes this collapse to exactly 1/L for every head;
// the pre-softmax logits are the reading that can produce head-dependent
// values.
std::vector<double> head_importance_prob(std::span<const AttentionMaps> maps_per_image,
                                         ImportanceMode mode);

// Square RoI of side roi_side centered on the gaze point; a patch is set when
// its cell overlaps the RoI with positive area.
GazeRoiMask gaze_roi_mask(const GazeRecord& rec, const PatchGrid& grid, double roi_side = 0.15);

// w = sum_i scores[i] * G(i)
double gaze_alignment_weight(std::span<const double> scores, const GazeRoiMask& mask);

// beta * i_prob + gamma * mean_w_gaze
double gaze_head_importance(double i_prob, double mean_w_gaze, double beta, double gamma);

struct HeadStats {
  int layer = 0;
  int head = 0;
  double i_prob = 0;
  double mean_w_gaze = 0;
  double i_gaze = 0;
};

struct HeadReport {
  std::vector<HeadStats> heads;
  size_t dataset_size = 0;
  size_t n_patches = 0;
  double beta = 0.7;
  double gamma = 0.3;
};

// Aggregates per-image encoder attention into the per-head report.
// maps_per_image[x][layer] holds the AttentionMaps captured on image x;
// masks[x] is that image's gaze RoI mask.
HeadReport build_head_report(const std::vector<std::vector<AttentionMaps>>& maps_per_image,
                             std::span<const GazeRoiMask> masks, double beta, double gamma,
                             ImportanceMode mode = ImportanceMode::PostSoftmax);

void write_head_report_csv(const std::filesystem::path& path, const HeadReport& report);

// One sample of the beta/gamma tuning fixture: per-head patch score vectors,
// the gaze RoI mask, and a reference human-attention patch mask.
struct TuneSample {
  std::vector<std::vector<double>> head_scores;  // [head][L]
  GazeRoiMask gaze_mask;
  std::vector<uint8_t> human_mask;
};

struct TuneRow {
  double beta = 0;
  double gamma = 0;
  double mean_iou = 0;
};

struct TuneResult {
  double beta = 0;
  double gamma = 0;
  double mean_iou = 0;
  std::vector<TuneRow> table;
};

// For each candidate pair, builds gaze-aware importance heatmaps
// (heat[j] = sum_h i_gaze_h * scores_h[j], thresholded at its mean), scores
// them against the human masks by IoU, and returns the best pair with the
// full table.
TuneResult tune_beta_gamma(std::span<const TuneSample> samples,
                           std::span<const std::pair<double, double>> candidates);

void write_tuning_csv(const std::filesystem::path& path, std::span<const TuneRow> rows);

// Colors the patches whose score clears the given percentile (default 60)
// onto a copy of the frame.
Image head_overlay(const Image& frame, std::span<const double> scores, const PatchGrid& grid,
                   double percentile, const std::array<double, 3>& color);

}  // namespace gazedet
