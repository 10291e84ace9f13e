#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "gazedet/gaze_pipeline.hpp"
#include "gazedet/numerics.hpp"

namespace gazedet {

// Patch tokenization grid. Centers are in normalized image coordinates,
// scan order row by row.
struct PatchGrid {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<std::array<double, 2>> centers;
  size_t count() const { return rows * cols; }
};

PatchGrid patch_centers(size_t rows, size_t cols);

struct AttentionConfig {
  size_t n_heads = 4;
  size_t d_model = 32;
  double alpha = 0.7;  // gaze-bias strength; 0 disables the gaze path
  size_t head_dim() const { return d_model / n_heads; }
  void validate() const;
};

// Per-head attention matrices captured during a forward pass. post_softmax
// rows are stochastic; pre_softmax holds the logits that fed the softmax
// (including the gaze bias when one was applied). Row-major L x L.
struct AttentionMaps {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<std::vector<double>> pre_softmax;
  std::vector<std::vector<double>> post_softmax;
};

struct MhaWeights {
  Tensor wq, wk, wv, wo;  // [d_model x d_model]
  Tensor bq, bk, bv, bo;  // [d_model]
};

// Scaled dot-product logits: A[i][j] = q_i . k_j / sqrt(d_k).
Tensor base_attention_logits(const Tensor& q, const Tensor& k);

// Column bias over patches:
//   bias[j] = 1 / (1 + |g - c_j|^2) * (1 + |ghat2d . u_j|)
// with u_j the unit offset from the gaze point to the patch center. The
// direction factor is 1 at the gaze point itself and whenever the record
// carries no usable direction. Values lie in (0, 2].
std::vector<double> gaze_bias(const GazeRecord& rec, const PatchGrid& grid);

// logits'[i][j] = logits[i][j] + alpha * bias[j], applied before softmax.
// alpha == 0 returns the input tensor unchanged.
Tensor apply_gaze_bias(const Tensor& logits, const std::vector<double>& bias, double alpha);

// Multi-head self-attention over x [L x d_model]. When rec is non-null and
// alpha > 0, the gaze bias is added to every head's logits. maps_out, when
// non-null, receives the per-head attention matrices.
Tensor mha_forward(const Tensor& x, const MhaWeights& w, const GazeRecord* rec,
                   const PatchGrid& grid, const AttentionConfig& cfg,
                   AttentionMaps* maps_out = nullptr);

// Cross-attention: queries [M x d_model] attend to memory [L x d_model].
// No gaze bias; gaze describes image patches, not decoder queries.
Tensor mha_cross(const Tensor& queries, const Tensor& memory, const MhaWeights& w,
                 const AttentionConfig& cfg, AttentionMaps* maps_out = nullptr);

// Column-score heat vector of a post-softmax map (mean over heads), used by
// heatmap rendering and alignment metrics.
std::vector<double> mean_head_scores(const AttentionMaps& maps);

}  // namespace gazedet
