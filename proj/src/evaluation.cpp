#include "gazedet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace gazedet {

using nlohmann::json;

double iou(const Box& a, const Box& b) {
  const double ix0 = std::max(a.x0(), b.x0());
  const double iy0 = std::max(a.y0(), b.y0());
  const double ix1 = std::min(a.x1(), b.x1());
  const double iy1 = std::min(a.y1(), b.y1());
  const double inter = std::max(0.0, ix1 - ix0) * std::max(0.0, iy1 - iy0);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

struct FlatDetection {
  size_t image;
  size_t index;  // order within the image, the query-index tie key
  double confidence;
  Box box;
};

// 101-point interpolated AP from a ranked TP/FP sequence.
double interpolated_ap(const std::vector<char>& tp, int n_gt) {
  if (n_gt == 0) return 0.0;
  std::vector<double> precision, recall;
  int cum_tp = 0, cum_fp = 0;
  for (char t : tp) {
    cum_tp += t ? 1 : 0;
    cum_fp += t ? 0 : 1;
    precision.push_back(static_cast<double>(cum_tp) / (cum_tp + cum_fp));
    recall.push_back(static_cast<double>(cum_tp) / n_gt);
  }
  double ap = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    double best = 0.0;
    for (size_t i = 0; i < recall.size(); ++i) {
      if (recall[i] >= level) best = std::max(best, precision[i]);
    }
    ap += best;
  }
  return ap / 101.0;
}

}  // namespace

double map_at(std::span<const ImageDetections> preds, std::span<const ImageGroundTruth> gts,
              double iou_thresh, std::vector<ClassAp>* per_class) {
  std::set<int> class_ids;
  for (const auto& img : gts)
    for (const auto& o : img.objects) class_ids.insert(o.class_id);
  for (const auto& img : preds)
    for (const auto& d : img.detections) class_ids.insert(d.class_id);

  if (per_class) per_class->clear();
  double ap_sum = 0.0;
  int classes_with_gt = 0;

  for (int cls : class_ids) {
    int n_gt = 0;
    for (const auto& img : gts)
      for (const auto& o : img.objects) n_gt += o.class_id == cls ? 1 : 0;

    std::vector<FlatDetection> dets;
    for (size_t i = 0; i < preds.size(); ++i) {
      for (size_t k = 0; k < preds[i].detections.size(); ++k) {
        const Detection& d = preds[i].detections[k];
        if (d.class_id == cls) dets.push_back({i, k, d.confidence, d.box});
      }
    }
    std::stable_sort(dets.begin(), dets.end(), [](const FlatDetection& a, const FlatDetection& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      if (a.image != b.image) return a.image < b.image;
      return a.index < b.index;
    });

    // greedy matching against unmatched same-class ground truth
    std::map<size_t, std::vector<char>> matched;  // image -> gt used flags
    std::vector<char> tp;
    tp.reserve(dets.size());
    for (const FlatDetection& d : dets) {
      const ImageGroundTruth* img_gt = nullptr;
      for (const auto& g : gts) {
        if (g.frame_id == preds[d.image].frame_id) {
          img_gt = &g;
          break;
        }
      }
      bool hit = false;
      if (img_gt) {
        auto& used = matched[d.image];
        used.resize(img_gt->objects.size(), 0);
        double best_iou = 0.0;
        int best_g = -1;
        for (size_t g = 0; g < img_gt->objects.size(); ++g) {
          if (img_gt->objects[g].class_id != cls || used[g]) continue;
          const double v = iou(d.box, img_gt->objects[g].box);
          if (v >= iou_thresh && v > best_iou) {
            best_iou = v;
            best_g = static_cast<int>(g);
          }
        }
        if (best_g >= 0) {
          used[best_g] = 1;
          hit = true;
        }
      }
      tp.push_back(hit ? 1 : 0);
    }

    const double ap = interpolated_ap(tp, n_gt);
    if (per_class) per_class->push_back({cls, ap, n_gt});
    if (n_gt > 0) {
      ap_sum += ap;
      ++classes_with_gt;
    }
  }
  return classes_with_gt == 0 ? 0.0 : ap_sum / classes_with_gt;
}

std::pair<double, double> classification_metrics(std::span<const int> predicted,
                                                 std::span<const int> truth) {
  if (predicted.size() != truth.size() || predicted.empty()) {
    throw std::logic_error("classification_metrics: inputs must be non-empty and equal length");
  }
  size_t correct = 0;
  std::set<int> classes;
  for (size_t i = 0; i < truth.size(); ++i) {
    correct += predicted[i] == truth[i] ? 1 : 0;
    classes.insert(truth[i]);
    classes.insert(predicted[i]);
  }
  const double accuracy = static_cast<double>(correct) / truth.size();

  double f1_sum = 0.0;
  for (int cls : classes) {
    int tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < truth.size(); ++i) {
      const bool p = predicted[i] == cls, t = truth[i] == cls;
      tp += (p && t) ? 1 : 0;
      fp += (p && !t) ? 1 : 0;
      fn += (!p && t) ? 1 : 0;
    }
    const double denom = 2.0 * tp + fp + fn;
    f1_sum += denom > 0 ? 2.0 * tp / denom : 0.0;
  }
  return {accuracy, f1_sum / static_cast<double>(classes.size())};
}

std::optional<int> gaze_label_assign(std::span<const Detection> detections,
                                     const GazeRecord& rec) {
  if (!rec.valid) throw std::logic_error("gaze_label_assign: invalid gaze record");
  if (detections.empty()) return std::nullopt;
  int best_containing = -1;
  int best_overall = 0;
  for (size_t i = 0; i < detections.size(); ++i) {
    if (detections[i].confidence > detections[best_overall].confidence) {
      best_overall = static_cast<int>(i);
    }
    if (detections[i].box.contains(rec.g_xy[0], rec.g_xy[1])) {
      if (best_containing < 0 ||
          detections[i].confidence > detections[best_containing].confidence) {
        best_containing = static_cast<int>(i);
      }
    }
  }
  return detections[best_containing >= 0 ? best_containing : best_overall].class_id;
}

double attention_alignment(std::span<const double> heat, const GazeRoiMask& mask) {
  if (heat.size() != mask.present.size()) {
    throw std::invalid_argument("attention_alignment: length mismatch");
  }
  double hh = 0.0, mm = 0.0, hm = 0.0;
  for (size_t i = 0; i < heat.size(); ++i) {
    const double m = mask.present[i] ? 1.0 : 0.0;
    hh += heat[i] * heat[i];
    mm += m * m;
    hm += heat[i] * m;
  }
  if (hh <= 0.0 || mm <= 0.0) {
    throw std::invalid_argument("attention_alignment: zero vector");
  }
  return hm / (std::sqrt(hh) * std::sqrt(mm));
}

void write_results_json(const std::filesystem::path& path, const EvalResult& result) {
  json j;
  j["map_50"] = result.map_50;
  j["map_75"] = result.map_75;
  j["accuracy"] = result.accuracy;
  j["macro_f1"] = result.macro_f1;
  j["attention_alignment"] = result.attention_alignment;
  json pc = json::array();
  for (const ClassAp& c : result.per_class) {
    pc.push_back({{"class_id", c.class_id}, {"ap", c.ap}, {"n_gt", c.n_gt}});
  }
  j["per_class"] = std::move(pc);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_results_json: cannot open " + path.string());
  out << j.dump(2) << '\n';
}

EvalResult evaluate(std::span<const TrainSample> samples, std::span<const int> target_labels,
                    const DetectorWeights& weights, const DetectorConfig& cfg, double roi_side) {
  if (samples.size() != target_labels.size()) {
    throw std::invalid_argument("evaluate: label count mismatch");
  }
  const PatchGrid grid = patch_centers(cfg.grid_side(), cfg.grid_side());

  std::vector<ImageDetections> preds;
  std::vector<ImageGroundTruth> gts;
  std::vector<int> predicted, truth;
  double align_sum = 0.0;
  size_t align_count = 0;

  for (size_t i = 0; i < samples.size(); ++i) {
    const TrainSample& s = samples[i];
    const GazeRecord* rec = s.gaze.valid ? &s.gaze : nullptr;
    const DetectorOutput out = forward(s.frame, rec, weights, cfg);
    const auto decoded = decode_detections(out, cfg, rec);

    ImageDetections id;
    id.frame_id = std::to_string(i);
    for (const DecodedDetection& d : decoded) {
      if (d.is_object) id.detections.push_back(d.det);
    }
    preds.push_back(std::move(id));

    ImageGroundTruth ig;
    ig.frame_id = std::to_string(i);
    ig.objects.assign(s.gt.begin(), s.gt.end());
    gts.push_back(std::move(ig));

    predicted.push_back(select_top_detection(decoded).class_id);
    truth.push_back(target_labels[i]);

    if (rec && !out.encoder_maps.empty()) {
      const GazeRoiMask mask = gaze_roi_mask(*rec, grid, roi_side);
      if (mask.count() > 0) {
        align_sum += attention_alignment(mean_head_scores(out.encoder_maps.back()), mask);
        ++align_count;
      }
    }
  }

  EvalResult result;
  result.map_50 = map_at(preds, gts, 0.50, &result.per_class);
  result.map_75 = map_at(preds, gts, 0.75);
  const auto [acc, f1] = classification_metrics(predicted, truth);
  result.accuracy = acc;
  result.macro_f1 = f1;
  result.attention_alignment = align_count ? align_sum / align_count : 0.0;
  return result;
}

std::vector<double> alpha_sweep_values() { return {0.0, 0.1, 0.2, 0.5, 0.7, 1.0, 2.0}; }

std::vector<std::array<double, 3>> lambda_sweep_values() {
  return {{0.5, 0.2, 0.2}, {0.5, 0.2, 0.3}, {0.5, 0.2, 0.5}, {0.5, 0.3, 0.5},
          {0.5, 0.5, 0.5}, {0.7, 0.3, 0.5}, {0.3, 0.3, 0.5}};
}

std::vector<std::pair<double, double>> beta_gamma_candidates() {
  return {{1.0, 0.0}, {0.9, 0.1}, {0.7, 0.3}, {0.5, 0.5}};
}

namespace {

double mean_iou_with_gazed_object(std::span<const TrainSample> samples,
                                  const DetectorWeights& weights, const DetectorConfig& cfg) {
  double sum = 0.0;
  size_t count = 0;
  for (const TrainSample& s : samples) {
    if (s.gt.empty() || !s.gaze.valid) continue;
    const DetectorOutput out = forward(s.frame, &s.gaze, weights, cfg);
    const auto decoded = decode_detections(out, cfg, &s.gaze);
    const Detection top = select_top_detection(decoded);
    sum += iou(top.box, s.gt.front().box);
    ++count;
  }
  return count ? sum / count : 0.0;
}

AblationRow eval_row(const std::string& label, std::span<const TrainSample> test_set,
                     std::span<const int> test_labels, const DetectorWeights& weights,
                     const DetectorConfig& cfg) {
  AblationRow row;
  row.label = label;
  const EvalResult r = evaluate(test_set, test_labels, weights, cfg);
  row.accuracy = r.accuracy;
  row.attention_alignment = r.attention_alignment;
  row.mean_iou_gaze = mean_iou_with_gazed_object(test_set, weights, cfg);
  return row;
}

}  // namespace

std::vector<AblationRow> run_ablation(std::span<const TrainSample> train_set,
                                      std::span<const TrainSample> test_set,
                                      std::span<const int> test_labels,
                                      const DetectorConfig& base_cfg, AblationKind kind,
                                      int epochs, uint64_t seed) {
  std::vector<AblationRow> rows;

  auto run_cell = [&](const std::string& label, const DetectorConfig& cfg,
                      const DetectorWeights* pretrained) {
    AblationRow row;
    row.label = label;
    try {
      if (pretrained) {
        row = eval_row(label, test_set, test_labels, *pretrained, cfg);
      } else {
        const TrainResult tr = train(train_set, {}, cfg, epochs, seed);
        row = eval_row(label, test_set, test_labels, tr.weights, cfg);
      }
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  };

  switch (kind) {
    case AblationKind::Components: {
      DetectorConfig none = base_cfg;
      none.alpha = 0.0;
      none.use_roi_scale = false;
      run_cell("none", none, nullptr);

      DetectorConfig pos = base_cfg;
      pos.use_direction = false;
      pos.use_roi_scale = false;
      run_cell("g_xy", pos, nullptr);

      DetectorConfig pos_dir = base_cfg;
      pos_dir.use_roi_scale = false;
      run_cell("g_xy+dir", pos_dir, nullptr);

      DetectorConfig full = base_cfg;
      run_cell("g_xy+dir+p+d", full, nullptr);
      break;
    }
    case AblationKind::Alpha: {
      for (double a : alpha_sweep_values()) {
        DetectorConfig cfg = base_cfg;
        cfg.alpha = a;
        run_cell(std::to_string(a), cfg, nullptr);
      }
      break;
    }
    case AblationKind::Lambda: {
      // lambdas act at inference only; one trained gaze model serves all rows
      try {
        const TrainResult tr = train(train_set, {}, base_cfg, epochs, seed);
        for (const auto& lam : lambda_sweep_values()) {
          DetectorConfig cfg = base_cfg;
          cfg.lambda1 = lam[0];
          cfg.lambda2 = lam[1];
          cfg.lambda3 = lam[2];
          run_cell(std::to_string(lam[0]) + "/" + std::to_string(lam[1]) + "/" +
                       std::to_string(lam[2]),
                   cfg, &tr.weights);
        }
      } catch (const std::exception& e) {
        AblationRow row;
        row.label = "lambda";
        row.ok = false;
        row.error = e.what();
        rows.push_back(std::move(row));
      }
      break;
    }
  }
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows,
                        AblationKind kind) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_ablation_csv: cannot open " + path.string());
  switch (kind) {
    case AblationKind::Components:
      out << "model,accuracy\n";
      break;
    case AblationKind::Alpha:
      out << "alpha,accuracy,attention_alignment\n";
      break;
    case AblationKind::Lambda:
      out << "lambda1/lambda2/lambda3,accuracy,mean_iou_gaze\n";
      break;
  }
  out.precision(12);
  for (const AblationRow& r : rows) {
    if (!r.ok) {
      out << r.label << ",error:" << r.error << '\n';
      continue;
    }
    switch (kind) {
      case AblationKind::Components:
        out << r.label << ',' << r.accuracy << '\n';
        break;
      case AblationKind::Alpha:
        out << r.label << ',' << r.accuracy << ',' << r.attention_alignment << '\n';
        break;
      case AblationKind::Lambda:
        out << r.label << ',' << r.accuracy << ',' << r.mean_iou_gaze << '\n';
        break;
    }
  }
}

}  // namespace gazedet
