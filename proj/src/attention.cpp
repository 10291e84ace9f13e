#include "gazedet/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace gazedet {

PatchGrid patch_centers(size_t rows, size_t cols) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("patch_centers: empty grid");
  PatchGrid grid;
  grid.rows = rows;
  grid.cols = cols;
  grid.centers.reserve(rows * cols);
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c)
      grid.centers.push_back({(c + 0.5) / static_cast<double>(cols),
                              (r + 0.5) / static_cast<double>(rows)});
  return grid;
}

void AttentionConfig::validate() const {
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw std::invalid_argument("AttentionConfig: d_model must be divisible by n_heads");
  }
  if (alpha < 0) throw std::invalid_argument("AttentionConfig: alpha must be non-negative");
}

Tensor base_attention_logits(const Tensor& q, const Tensor& k) {
  if (q.cols() != k.cols()) {
    throw std::invalid_argument("base_attention_logits: key dimension mismatch");
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return scale(matmul(q, transpose(k)), inv_sqrt_dk);
}

std::vector<double> gaze_bias(const GazeRecord& rec, const PatchGrid& grid) {
  if (!rec.valid) throw std::logic_error("gaze_bias: invalid gaze record");
  std::array<double, 2> dir2d{0.0, 0.0};
  const bool use_dir = rec.has_direction && project2d(rec.g_hat, dir2d);

  std::vector<double> bias(grid.count());
  for (size_t j = 0; j < grid.count(); ++j) {
    const double dx = grid.centers[j][0] - rec.g_xy[0];
    const double dy = grid.centers[j][1] - rec.g_xy[1];
    const double dist2 = dx * dx + dy * dy;
    const double dist = std::sqrt(dist2);
    double dir_factor = 1.0;
    if (use_dir && dist >= 1e-9) {
      const double ux = dx / dist, uy = dy / dist;
      dir_factor = 1.0 + std::fabs(dir2d[0] * ux + dir2d[1] * uy);
    }
    bias[j] = dir_factor / (1.0 + dist2);
  }
  return bias;
}

Tensor apply_gaze_bias(const Tensor& logits, const std::vector<double>& bias, double alpha) {
  if (alpha == 0.0) return logits;
  if (bias.size() != logits.cols()) {
    throw std::invalid_argument("apply_gaze_bias: bias length mismatch");
  }
  std::vector<double> scaled(bias.size());
  for (size_t j = 0; j < bias.size(); ++j) scaled[j] = alpha * bias[j];
  return add_row(logits, Tensor({bias.size()}, std::move(scaled)));
}

namespace {

// Shared core. bias == nullptr means no gaze injection.
Tensor attention_core(const Tensor& q_src, const Tensor& kv_src, const MhaWeights& w,
                      const AttentionConfig& cfg, const std::vector<double>* bias,
                      AttentionMaps* maps_out) {
  cfg.validate();
  if (q_src.cols() != cfg.d_model || kv_src.cols() != cfg.d_model) {
    throw std::invalid_argument("attention: input width does not match d_model");
  }
  const size_t dk = cfg.head_dim();
  const Tensor q_all = add_row(matmul(q_src, w.wq), w.bq);
  const Tensor k_all = add_row(matmul(kv_src, w.wk), w.bk);
  const Tensor v_all = add_row(matmul(kv_src, w.wv), w.bv);

  if (maps_out) {
    maps_out->rows = q_src.rows();
    maps_out->cols = kv_src.rows();
    maps_out->pre_softmax.clear();
    maps_out->post_softmax.clear();
  }

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(cfg.n_heads);
  for (size_t h = 0; h < cfg.n_heads; ++h) {
    const Tensor qh = slice_cols(q_all, h * dk, (h + 1) * dk);
    const Tensor kh = slice_cols(k_all, h * dk, (h + 1) * dk);
    const Tensor vh = slice_cols(v_all, h * dk, (h + 1) * dk);
    Tensor logits = base_attention_logits(qh, kh);
    if (bias) logits = apply_gaze_bias(logits, *bias, cfg.alpha);
    const Tensor attn = softmax_rows(logits);
    if (maps_out) {
      maps_out->pre_softmax.emplace_back(logits.data().begin(), logits.data().end());
      maps_out->post_softmax.emplace_back(attn.data().begin(), attn.data().end());
    }
    head_outputs.push_back(matmul(attn, vh));
  }
  const Tensor concat = cfg.n_heads == 1 ? head_outputs[0] : concat_cols(head_outputs);
  return add_row(matmul(concat, w.wo), w.bo);
}

}  // namespace

Tensor mha_forward(const Tensor& x, const MhaWeights& w, const GazeRecord* rec,
                   const PatchGrid& grid, const AttentionConfig& cfg, AttentionMaps* maps_out) {
  if (rec != nullptr && cfg.alpha != 0.0) {
    if (grid.count() != x.rows()) {
      throw std::invalid_argument("mha_forward: grid does not match token count");
    }
    const std::vector<double> bias = gaze_bias(*rec, grid);
    return attention_core(x, x, w, cfg, &bias, maps_out);
  }
  return attention_core(x, x, w, cfg, nullptr, maps_out);
}

Tensor mha_cross(const Tensor& queries, const Tensor& memory, const MhaWeights& w,
                 const AttentionConfig& cfg, AttentionMaps* maps_out) {
  return attention_core(queries, memory, w, cfg, nullptr, maps_out);
}

std::vector<double> mean_head_scores(const AttentionMaps& maps) {
  const size_t r = maps.rows, c = maps.cols;
  std::vector<double> heat(c, 0.0);
  if (maps.post_softmax.empty()) return heat;
  for (const auto& map : maps.post_softmax) {
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < c; ++j) heat[j] += map[i * c + j];
  }
  const double inv = 1.0 / (static_cast<double>(r) * maps.post_softmax.size());
  for (double& v : heat) v *= inv;
  return heat;
}

}  // namespace gazedet
