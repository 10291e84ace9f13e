#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gazedet/box.hpp"
#include "gazedet/detector.hpp"
#include "gazedet/importance.hpp"

namespace gazedet {

double iou(const Box& a, const Box& b);

struct ImageDetections {
  std::string frame_id;
  std::vector<Detection> detections;
};

struct ImageGroundTruth {
  std::string frame_id;
  std::vector<GroundTruthObject> objects;
};

struct ClassAp {
  int class_id = 0;
  double ap = 0.0;
  int n_gt = 0;
};

// COCO-style mAP at a single IoU threshold: per class, detections sorted by
// confidence (ties by image order then detection index), greedy matching
// against unmatched same-class ground truth, 101-point interpolated AP,
// averaged over classes with at least one ground truth.
double map_at(std::span<const ImageDetections> preds, std::span<const ImageGroundTruth> gts,
              double iou_thresh, std::vector<ClassAp>* per_class = nullptr);

// (accuracy, macro F1); classes absent from both predictions and truth are
// excluded from the macro average.
std::pair<double, double> classification_metrics(std::span<const int> predicted,
                                                 std::span<const int> truth);

// Label of the highest-confidence detection containing the gaze point;
// falls back to the overall top detection when none contains it. Returns
// nullopt for an empty detection list.
std::optional<int> gaze_label_assign(std::span<const Detection> detections,
                                     const GazeRecord& rec);

// Cosine similarity between a patch heat vector and the binary RoI mask.
double attention_alignment(std::span<const double> heat, const GazeRoiMask& mask);

struct EvalResult {
  double map_50 = 0;
  double map_75 = 0;
  double accuracy = 0;
  double macro_f1 = 0;
  double attention_alignment = 0;
  std::vector<ClassAp> per_class;
};

void write_results_json(const std::filesystem::path& path, const EvalResult& result);

// Full evaluation of a trained model on labeled samples. target_labels[i]
// is the attended-object class of samples[i]. Classification follows the
// top-confidence protocol; detection metrics use every object query.
EvalResult evaluate(std::span<const TrainSample> samples, std::span<const int> target_labels,
                    const DetectorWeights& weights, const DetectorConfig& cfg,
                    double roi_side = 0.15);

enum class AblationKind { Components, Alpha, Lambda };

struct AblationRow {
  std::string label;
  double accuracy = 0;
  double attention_alignment = 0;
  double mean_iou_gaze = 0;  // IoU of the selected box against the gazed object
  bool ok = true;
  std::string error;
};

// Trains/evaluates one model per grid cell with a shared seed and split.
// Components and alpha sweeps retrain; the lambda sweep reuses one trained
// gaze model because the scaling only acts at inference. A failing cell is
// recorded in its row and the run continues.
std::vector<AblationRow> run_ablation(std::span<const TrainSample> train_set,
                                      std::span<const TrainSample> test_set,
                                      std::span<const int> test_labels,
                                      const DetectorConfig& base_cfg, AblationKind kind,
                                      int epochs, uint64_t seed);

void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows,
                        AblationKind kind);

// the standard sweep grids used by the ablation commands
std::vector<double> alpha_sweep_values();                      // 0 .. 2.0
std::vector<std::array<double, 3>> lambda_sweep_values();      // seven triples
std::vector<std::pair<double, double>> beta_gamma_candidates();  // four pairs

}  // namespace gazedet
