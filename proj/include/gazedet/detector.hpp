#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gazedet/attention.hpp"
#include "gazedet/box.hpp"
#include "gazedet/gaze_pipeline.hpp"
#include "gazedet/numerics.hpp"

namespace gazedet {

struct DetectorConfig {
  int image_size = 64;
  int patch_size = 8;
  int d_model = 32;
  int n_heads = 4;
  int n_encoder_layers = 2;
  int n_decoder_layers = 1;
  int n_queries = 8;
  int n_classes = 6;
  int ffn_dim = 64;

  double alpha = 0.7;  // gaze-bias strength; 0 = gaze-agnostic baseline
  bool use_direction = true;  // direction factor of the bias (ablation switch)
  // per-encoder-layer gaze bias enable; empty = every layer
  std::vector<int> gaze_layers;

  // box scaling S = l1*attn + l2/p + l3/d
  double lambda1 = 0.5, lambda2 = 0.3, lambda3 = 0.5;
  bool use_roi_scale = true;
  bool pupil_direct = false;  // l2*p instead of l2/p

  // matching / loss weights
  double w_cls = 1.0, w_l1 = 5.0, w_giou = 2.0;
  double no_object_weight = 0.1;

  double pseudo_box_size = 0.25;

  double learning_rate = 1e-3;
  int batch_size = 8;

  void validate() const;
  int grid_side() const { return image_size / patch_size; }
  int n_patches() const { return grid_side() * grid_side(); }
  int patch_dim() const { return patch_size * patch_size * 3; }
  int no_object_class() const { return n_classes; }
  AttentionConfig attention_config() const {
    return AttentionConfig{static_cast<size_t>(n_heads), static_cast<size_t>(d_model), alpha};
  }
  bool gaze_enabled_for_layer(int layer) const;
};

struct EncoderLayerWeights {
  MhaWeights mha;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct DecoderLayerWeights {
  MhaWeights cross;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct DetectorWeights {
  Tensor patch_proj, patch_bias;  // patch_dim x d_model, d_model
  Tensor pos_embed;               // L x d_model
  std::vector<EncoderLayerWeights> encoder;
  Tensor enc_ln_g, enc_ln_b;
  Tensor queries;  // n_queries x d_model
  std::vector<DecoderLayerWeights> decoder;
  Tensor dec_ln_g, dec_ln_b;
  Tensor cls_w, cls_b;                     // d_model x (C+1)
  Tensor box_w1, box_b1, box_w2, box_b2;   // box head MLP -> 4

  // Stable (name, tensor) view over every parameter, in a fixed order.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
};

DetectorWeights init_weights(const DetectorConfig& cfg, Rng& rng);

// Flatten non-overlapping patches, project, add the learned position
// embedding. frame has shape {H, W, 3}.
Tensor patch_embed(const Tensor& frame, const DetectorWeights& w, const DetectorConfig& cfg);

struct DetectorOutput {
  Tensor class_logits;  // n_queries x (n_classes + 1)
  Tensor boxes;         // n_queries x 4, sigmoid-bounded [cx, cy, w, h]
  std::vector<AttentionMaps> encoder_maps;  // one per encoder layer
};

// rec == nullptr (or cfg.alpha == 0) runs the gaze-free baseline path.
DetectorOutput forward(const Tensor& frame, const GazeRecord* rec, const DetectorWeights& w,
                       const DetectorConfig& cfg, bool want_maps = true);

// Generalized IoU in [-1, 1].
double giou(const Box& a, const Box& b);

// Minimum-cost assignment on a [n_queries x n_gt] matrix, n_gt <= n_queries.
// Returns, per ground-truth column, the matched query row.
std::vector<int> hungarian_match(const std::vector<std::vector<double>>& cost);

struct MatchWeights {
  double w_cls = 1.0, w_l1 = 5.0, w_giou = 2.0;
};

// cost[q][g] = w_cls * (-prob of gt class) + w_l1 * |box_q - box_g|_1
//            + w_giou * (-giou)
std::vector<std::vector<double>> match_cost(const Tensor& class_logits, const Tensor& boxes,
                                            std::span<const GroundTruthObject> gt,
                                            const MatchWeights& mw);

// Classification CE over every query (unmatched queries target the no-object
// class, down-weighted) plus mean L1 and (1 - GIoU) terms over matched pairs.
Tensor detr_loss(const DetectorOutput& out, std::span<const GroundTruthObject> gt,
                 const std::vector<int>& assignment, const DetectorConfig& cfg);

// Box rescaling: S = l1*attn + l2/p + l3/d against the reference
// S at p = d = 1, ratio clamped to [0.5, 2], center preserved, re-clipped.
Box roi_scale(const Box& box, double attn_score, double p, double d, double lambda1,
              double lambda2, double lambda3, bool pupil_direct = false);

// Mean attention heat over patches whose centers fall inside the box
// (nearest patch when none do), averaged across heads of the given map.
double mean_attention_in_box(const AttentionMaps& maps, const PatchGrid& grid, const Box& box);

// All per-query detections (argmax over real classes), RoI-scaled when a
// valid record is supplied and cfg.use_roi_scale holds. is_object marks
// queries whose overall argmax is not the no-object class.
struct DecodedDetection {
  Detection det;
  bool is_object = false;
};
std::vector<DecodedDetection> decode_detections(const DetectorOutput& out,
                                                const DetectorConfig& cfg, const GazeRecord* rec);

// Highest-confidence object query; ties go to the lowest index; when every
// query prefers no-object, falls back to the best real-class probability.
Detection select_top_detection(std::span<const DecodedDetection> decoded);

// Fixed-size square centered on the gaze point, clipped to the unit square.
Box pseudo_box(const GazeRecord& rec, double size);

struct TrainSample {
  Tensor frame;  // {H, W, 3}
  GazeRecord gaze;
  std::vector<GroundTruthObject> gt;
};

struct TrainResult {
  DetectorWeights weights;
  std::vector<double> train_loss;  // one entry per epoch
  std::vector<double> val_loss;
};

struct DivergenceError : std::runtime_error {
  size_t step;
  explicit DivergenceError(size_t s)
      : std::runtime_error("training diverged (non-finite loss) at step " + std::to_string(s)),
        step(s) {}
};

// Mini-batch adaptive-moment training, deterministic given the seed.
TrainResult train(std::span<const TrainSample> train_set, std::span<const TrainSample> val_set,
                  const DetectorConfig& cfg, int epochs, uint64_t seed);

// Checkpoint: JSON with a format version, the config echo, and named tensors.
void save_checkpoint(const std::filesystem::path& path, const DetectorWeights& w,
                     const DetectorConfig& cfg);
std::pair<DetectorWeights, DetectorConfig> load_checkpoint(const std::filesystem::path& path);

}  // namespace gazedet
