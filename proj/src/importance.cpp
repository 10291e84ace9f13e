#include "gazedet/importance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace gazedet {

size_t GazeRoiMask::count() const {
  size_t n = 0;
  for (uint8_t v : present) n += v ? 1 : 0;
  return n;
}

std::vector<double> attn_score(std::span<const double> map, size_t rows, size_t cols) {
  if (rows != cols) throw std::invalid_argument("attn_score: map must be square");
  if (map.size() != rows * cols) throw std::invalid_argument("attn_score: size mismatch");
  std::vector<double> score(cols, 0.0);
  for (size_t i = 0; i < rows; ++i)
    for (size_t j = 0; j < cols; ++j) score[j] += map[i * cols + j];
  const double inv = 1.0 / static_cast<double>(rows);
  for (double& s : score) s *= inv;
  return score;
}

std::vector<double> head_importance_prob(std::span<const AttentionMaps> maps_per_image,
                                         ImportanceMode mode) {
  if (maps_per_image.empty()) throw std::logic_error("head_importance_prob: empty dataset");
  const size_t n_heads = maps_per_image[0].post_softmax.size();
  std::vector<double> importance(n_heads, 0.0);
  for (const AttentionMaps& maps : maps_per_image) {
    const auto& mats = mode == ImportanceMode::PostSoftmax ? maps.post_softmax : maps.pre_softmax;
    if (mats.size() != n_heads) {
      throw std::invalid_argument("head_importance_prob: inconsistent head count");
    }
    const size_t L = maps.cols;
    for (size_t h = 0; h < n_heads; ++h) {
      const std::vector<double> scores = attn_score(mats[h], maps.rows, L);
      double m = 0.0;
      for (double s : scores) m += s;
      importance[h] += m / static_cast<double>(L);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(maps_per_image.size());
  for (double& v : importance) v *= inv_n;
  return importance;
}

GazeRoiMask gaze_roi_mask(const GazeRecord& rec, const PatchGrid& grid, double roi_side) {
  if (!rec.valid) throw std::logic_error("gaze_roi_mask: invalid gaze record");
  if (roi_side <= 0.0 || roi_side > 1.0) {
    throw std::invalid_argument("gaze_roi_mask: roi_side out of range");
  }
  const double rx0 = rec.g_xy[0] - roi_side / 2.0;
  const double rx1 = rec.g_xy[0] + roi_side / 2.0;
  const double ry0 = rec.g_xy[1] - roi_side / 2.0;
  const double ry1 = rec.g_xy[1] + roi_side / 2.0;

  GazeRoiMask mask;
  mask.present.assign(grid.count(), 0);
  for (size_t r = 0; r < grid.rows; ++r) {
    const double cy0 = static_cast<double>(r) / grid.rows;
    const double cy1 = static_cast<double>(r + 1) / grid.rows;
    for (size_t c = 0; c < grid.cols; ++c) {
      const double cx0 = static_cast<double>(c) / grid.cols;
      const double cx1 = static_cast<double>(c + 1) / grid.cols;
      const bool overlap = std::min(rx1, cx1) > std::max(rx0, cx0) &&
                           std::min(ry1, cy1) > std::max(ry0, cy0);
      if (overlap) mask.present[r * grid.cols + c] = 1;
    }
  }
  return mask;
}

double gaze_alignment_weight(std::span<const double> scores, const GazeRoiMask& mask) {
  if (scores.size() != mask.present.size()) {
    throw std::invalid_argument("gaze_alignment_weight: length mismatch");
  }
  double w = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (mask.present[i]) w += scores[i];
  }
  return w;
}

double gaze_head_importance(double i_prob, double mean_w_gaze, double beta, double gamma) {
  if (beta < 0 || gamma < 0) {
    throw std::invalid_argument("gaze_head_importance: coefficients must be non-negative");
  }
  return beta * i_prob + gamma * mean_w_gaze;
}

HeadReport build_head_report(const std::vector<std::vector<AttentionMaps>>& maps_per_image,
                             std::span<const GazeRoiMask> masks, double beta, double gamma,
                             ImportanceMode mode) {
  if (maps_per_image.empty()) throw std::logic_error("build_head_report: empty dataset");
  if (masks.size() != maps_per_image.size()) {
    throw std::invalid_argument("build_head_report: mask count mismatch");
  }
  const size_t n_layers = maps_per_image[0].size();
  HeadReport report;
  report.beta = beta;
  report.gamma = gamma;
  report.dataset_size = maps_per_image.size();
  report.n_patches = maps_per_image[0].empty() ? 0 : maps_per_image[0][0].cols;

  for (size_t layer = 0; layer < n_layers; ++layer) {
    const size_t n_heads = maps_per_image[0][layer].post_softmax.size();
    const size_t L = maps_per_image[0][layer].cols;
    for (size_t h = 0; h < n_heads; ++h) {
      double i_prob = 0.0;
      double mean_w = 0.0;
      for (size_t x = 0; x < maps_per_image.size(); ++x) {
        const AttentionMaps& maps = maps_per_image[x][layer];
        const std::vector<double>& raw =
            mode == ImportanceMode::PostSoftmax ? maps.post_softmax[h] : maps.pre_softmax[h];
        const std::vector<double> scores = attn_score(raw, L, L);
        double m = 0.0;
        for (double s : scores) m += s;
        i_prob += m / static_cast<double>(L);
        // the gaze weight always reads post-softmax scores
        const std::vector<double> post_scores =
            mode == ImportanceMode::PostSoftmax ? scores
                                                : attn_score(maps.post_softmax[h], L, L);
        mean_w += gaze_alignment_weight(post_scores, masks[x]);
      }
      const double inv_n = 1.0 / static_cast<double>(maps_per_image.size());
      i_prob *= inv_n;
      mean_w *= inv_n;
      HeadStats stats;
      stats.layer = static_cast<int>(layer);
      stats.head = static_cast<int>(h);
      stats.i_prob = i_prob;
      stats.mean_w_gaze = mean_w;
      stats.i_gaze = gaze_head_importance(i_prob, mean_w, beta, gamma);
      report.heads.push_back(stats);
    }
  }
  return report;
}

void write_head_report_csv(const std::filesystem::path& path, const HeadReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_head_report_csv: cannot open " + path.string());
  out << "layer,head,i_prob,mean_w_gaze,i_gaze\n";
  out.precision(12);
  for (const HeadStats& h : report.heads) {
    out << h.layer << ',' << h.head << ',' << h.i_prob << ',' << h.mean_w_gaze << ',' << h.i_gaze
        << '\n';
  }
}

namespace {

double binary_iou(std::span<const uint8_t> a, std::span<const uint8_t> b) {
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const bool av = a[i] != 0, bv = b[i] != 0;
    inter += (av && bv) ? 1 : 0;
    uni += (av || bv) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

TuneResult tune_beta_gamma(std::span<const TuneSample> samples,
                           std::span<const std::pair<double, double>> candidates) {
  if (candidates.empty()) throw std::logic_error("tune_beta_gamma: no candidate pairs");
  if (samples.empty()) throw std::logic_error("tune_beta_gamma: no samples");

  const size_t n_heads = samples[0].head_scores.size();
  const size_t L = samples[0].head_scores.empty() ? 0 : samples[0].head_scores[0].size();

  // dataset-level ingredients of the importance blend
  std::vector<double> i_prob(n_heads, 0.0), mean_w(n_heads, 0.0);
  for (const TuneSample& s : samples) {
    for (size_t h = 0; h < n_heads; ++h) {
      double m = 0.0;
      for (double v : s.head_scores[h]) m += v;
      i_prob[h] += m / static_cast<double>(L);
      mean_w[h] += gaze_alignment_weight(s.head_scores[h], s.gaze_mask);
    }
  }
  for (size_t h = 0; h < n_heads; ++h) {
    i_prob[h] /= static_cast<double>(samples.size());
    mean_w[h] /= static_cast<double>(samples.size());
  }

  TuneResult result;
  for (const auto& [beta, gamma] : candidates) {
    std::vector<double> i_gaze(n_heads);
    for (size_t h = 0; h < n_heads; ++h) {
      i_gaze[h] = gaze_head_importance(i_prob[h], mean_w[h], beta, gamma);
    }
    double iou_sum = 0.0;
    for (const TuneSample& s : samples) {
      std::vector<double> heat(L, 0.0);
      for (size_t h = 0; h < n_heads; ++h)
        for (size_t j = 0; j < L; ++j) heat[j] += i_gaze[h] * s.head_scores[h][j];
      double mean_heat = 0.0;
      for (double v : heat) mean_heat += v;
      mean_heat /= static_cast<double>(L);
      std::vector<uint8_t> thresholded(L, 0);
      for (size_t j = 0; j < L; ++j) thresholded[j] = heat[j] > mean_heat ? 1 : 0;
      iou_sum += binary_iou(thresholded, s.human_mask);
    }
    const double mean_iou = iou_sum / static_cast<double>(samples.size());
    result.table.push_back({beta, gamma, mean_iou});
    if (result.table.size() == 1 || mean_iou > result.mean_iou) {
      result.beta = beta;
      result.gamma = gamma;
      result.mean_iou = mean_iou;
    }
  }
  return result;
}

void write_tuning_csv(const std::filesystem::path& path, std::span<const TuneRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_tuning_csv: cannot open " + path.string());
  out << "beta,gamma,mean_iou\n";
  out.precision(12);
  for (const TuneRow& r : rows) out << r.beta << ',' << r.gamma << ',' << r.mean_iou << '\n';
}

Image head_overlay(const Image& frame, std::span<const double> scores, const PatchGrid& grid,
                   double percentile, const std::array<double, 3>& color) {
  if (scores.size() != grid.count()) {
    throw std::invalid_argument("head_overlay: score length does not match grid");
  }
  if (percentile < 0 || percentile > 100) {
    throw std::invalid_argument("head_overlay: percentile out of range");
  }
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const size_t idx = std::min<size_t>(
      sorted.size() - 1, static_cast<size_t>(percentile / 100.0 * sorted.size()));
  const double threshold = sorted[idx];

  Image out = frame;
  for (size_t r = 0; r < grid.rows; ++r) {
    for (size_t c = 0; c < grid.cols; ++c) {
      if (scores[r * grid.cols + c] < threshold) continue;
      const int x0 = static_cast<int>(static_cast<double>(c) / grid.cols * frame.width);
      const int x1 = static_cast<int>(static_cast<double>(c + 1) / grid.cols * frame.width);
      const int y0 = static_cast<int>(static_cast<double>(r) / grid.rows * frame.height);
      const int y1 = static_cast<int>(static_cast<double>(r + 1) / grid.rows * frame.height);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
          for (int ch = 0; ch < 3; ++ch)
            out.at(x, y, ch) = 0.5 * out.at(x, y, ch) + 0.5 * color[ch];
    }
  }
  return out;
}

}  // namespace gazedet
