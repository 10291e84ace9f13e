#include "gazedet/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gazedet/dataset.hpp"
#include "gazedet/evaluation.hpp"
#include "gazedet/importance.hpp"

namespace gazedet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

KV read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("config file not found: " + path.string());
  KV kv;
  std::string line;
  while (std::getline(in, line)) {
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = value;
  }
  return kv;
}

namespace {

std::string get_str(const KV& kv, const std::string& key, const std::string& fallback) {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

double get_num(const KV& kv, const std::string& key, double fallback) {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stod(it->second);
}

int64_t get_int(const KV& kv, const std::string& key, int64_t fallback) {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stoll(it->second);
}

bool get_bool(const KV& kv, const std::string& key, bool fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  return it->second == "1" || it->second == "true" || it->second == "yes";
}

fs::path require_out_dir(const KV& kv) {
  const std::string out = get_str(kv, "out", "");
  if (out.empty()) throw IoError("missing required option: out");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
  // verify writability up front
  const fs::path probe = fs::path(out) / ".write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw IoError("output directory not writable: " + out);
  }
  fs::remove(probe, ec);
  return out;
}

fs::path require_artifact(const KV& kv, const std::string& key) {
  const std::string p = get_str(kv, key, "");
  if (p.empty() || !fs::exists(p)) {
    throw MissingArtifactError("missing artifact for option '" + key + "': " + p);
  }
  return p;
}

void write_resolved_config(const fs::path& dir, const KV& resolved) {
  std::ofstream out(dir / "resolved_config.txt");
  if (!out) throw IoError("cannot write resolved config in " + dir.string());
  for (const auto& [k, v] : resolved) out << k << " = " << v << '\n';
}

SceneConfig scene_config_from(const KV& kv) {
  SceneConfig cfg;
  cfg.image_size = static_cast<int>(get_int(kv, "image_size", cfg.image_size));
  cfg.patch_size = static_cast<int>(get_int(kv, "patch_size", cfg.patch_size));
  cfg.n_classes = static_cast<int>(get_int(kv, "classes", cfg.n_classes));
  cfg.min_objects = static_cast<int>(get_int(kv, "min_objects", cfg.min_objects));
  cfg.max_objects = static_cast<int>(get_int(kv, "max_objects", cfg.max_objects));
  cfg.gaze_noise_std = get_num(kv, "gaze_noise", cfg.gaze_noise_std);
  cfg.distractor_heavy = get_bool(kv, "distractor", cfg.distractor_heavy);
  cfg.seed = static_cast<uint64_t>(get_int(kv, "seed", 0));
  return cfg;
}

DetectorConfig detector_config_from(const KV& kv) {
  DetectorConfig cfg;
  cfg.image_size = static_cast<int>(get_int(kv, "image_size", cfg.image_size));
  cfg.patch_size = static_cast<int>(get_int(kv, "patch_size", cfg.patch_size));
  cfg.d_model = static_cast<int>(get_int(kv, "d_model", cfg.d_model));
  cfg.n_heads = static_cast<int>(get_int(kv, "heads", cfg.n_heads));
  cfg.n_encoder_layers = static_cast<int>(get_int(kv, "encoder_layers", cfg.n_encoder_layers));
  cfg.n_decoder_layers = static_cast<int>(get_int(kv, "decoder_layers", cfg.n_decoder_layers));
  cfg.n_queries = static_cast<int>(get_int(kv, "queries", cfg.n_queries));
  cfg.n_classes = static_cast<int>(get_int(kv, "classes", cfg.n_classes));
  cfg.ffn_dim = static_cast<int>(get_int(kv, "ffn_dim", cfg.ffn_dim));
  cfg.alpha = get_num(kv, "alpha", cfg.alpha);
  cfg.use_direction = get_bool(kv, "use_direction", cfg.use_direction);
  cfg.lambda1 = get_num(kv, "lambda1", cfg.lambda1);
  cfg.lambda2 = get_num(kv, "lambda2", cfg.lambda2);
  cfg.lambda3 = get_num(kv, "lambda3", cfg.lambda3);
  cfg.use_roi_scale = get_bool(kv, "use_roi_scale", cfg.use_roi_scale);
  cfg.pupil_direct = get_bool(kv, "pupil_direct", cfg.pupil_direct);
  cfg.w_cls = get_num(kv, "w_cls", cfg.w_cls);
  cfg.w_l1 = get_num(kv, "w_l1", cfg.w_l1);
  cfg.w_giou = get_num(kv, "w_giou", cfg.w_giou);
  cfg.no_object_weight = get_num(kv, "no_object_weight", cfg.no_object_weight);
  cfg.learning_rate = get_num(kv, "lr", cfg.learning_rate);
  cfg.batch_size = static_cast<int>(get_int(kv, "batch", cfg.batch_size));
  return cfg;
}

KV echo_detector_config(const DetectorConfig& c) {
  KV kv;
  kv["image_size"] = std::to_string(c.image_size);
  kv["patch_size"] = std::to_string(c.patch_size);
  kv["d_model"] = std::to_string(c.d_model);
  kv["heads"] = std::to_string(c.n_heads);
  kv["encoder_layers"] = std::to_string(c.n_encoder_layers);
  kv["decoder_layers"] = std::to_string(c.n_decoder_layers);
  kv["queries"] = std::to_string(c.n_queries);
  kv["classes"] = std::to_string(c.n_classes);
  kv["ffn_dim"] = std::to_string(c.ffn_dim);
  kv["alpha"] = std::to_string(c.alpha);
  kv["use_direction"] = c.use_direction ? "1" : "0";
  kv["lambda1"] = std::to_string(c.lambda1);
  kv["lambda2"] = std::to_string(c.lambda2);
  kv["lambda3"] = std::to_string(c.lambda3);
  kv["use_roi_scale"] = c.use_roi_scale ? "1" : "0";
  kv["pupil_direct"] = c.pupil_direct ? "1" : "0";
  kv["w_cls"] = std::to_string(c.w_cls);
  kv["w_l1"] = std::to_string(c.w_l1);
  kv["w_giou"] = std::to_string(c.w_giou);
  kv["no_object_weight"] = std::to_string(c.no_object_weight);
  kv["lr"] = std::to_string(c.learning_rate);
  kv["batch"] = std::to_string(c.batch_size);
  return kv;
}

const LoadedSplit& pick_split(const LoadedDataset& ds, const std::string& name) {
  if (name == "train") return ds.train;
  if (name == "val") return ds.val;
  if (name == "test") return ds.test;
  throw IoError("unknown split: " + name);
}

// Upscaled patch-heat image; values divided by norm_max before the colormap.
Image render_heat(const std::vector<double>& heat, const PatchGrid& grid, int image_size,
                  double norm_max, bool jet) {
  Image img(image_size, image_size);
  for (int y = 0; y < image_size; ++y) {
    for (int x = 0; x < image_size; ++x) {
      const size_t r = std::min<size_t>(grid.rows - 1,
                                        static_cast<size_t>(y) * grid.rows / image_size);
      const size_t c = std::min<size_t>(grid.cols - 1,
                                        static_cast<size_t>(x) * grid.cols / image_size);
      const double v = norm_max > 0 ? heat[r * grid.cols + c] / norm_max : 0.0;
      if (jet) {
        const auto rgb = jet_color(v);
        for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = rgb[ch];
      } else {
        for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

}  // namespace

int cmd_synth(const KV& opts) {
  const fs::path out = require_out_dir(opts);
  const SceneConfig cfg = scene_config_from(opts);
  const size_t n = static_cast<size_t>(get_int(opts, "n", 100));
  const DatasetSummary summary = generate_dataset(cfg, n, out);

  KV resolved;
  resolved["command"] = "synth";
  resolved["n"] = std::to_string(n);
  resolved["seed"] = std::to_string(cfg.seed);
  resolved["image_size"] = std::to_string(cfg.image_size);
  resolved["patch_size"] = std::to_string(cfg.patch_size);
  resolved["classes"] = std::to_string(cfg.n_classes);
  resolved["min_objects"] = std::to_string(cfg.min_objects);
  resolved["max_objects"] = std::to_string(cfg.max_objects);
  resolved["gaze_noise"] = std::to_string(cfg.gaze_noise_std);
  resolved["distractor"] = cfg.distractor_heavy ? "1" : "0";
  resolved["out"] = out.string();
  write_resolved_config(out, resolved);

  std::cout << "synth: " << summary.n_train << "/" << summary.n_val << "/" << summary.n_test
            << " samples in " << out.string() << "\n";
  return 0;
}

int cmd_train(const KV& opts) {
  const fs::path data = require_artifact(opts, "data");
  const fs::path out = require_out_dir(opts);
  DetectorConfig cfg = detector_config_from(opts);
  const int epochs = static_cast<int>(get_int(opts, "epochs", 10));
  const uint64_t seed = static_cast<uint64_t>(get_int(opts, "seed", 0));

  const LoadedDataset ds = load_dataset(data, cfg.image_size);
  const TrainResult result = train(ds.train.samples, ds.val.samples, cfg, epochs, seed);

  save_checkpoint(out / "checkpoint.json", result.weights, cfg);
  {
    std::ofstream curve(out / "loss_curve.csv");
    if (!curve) throw IoError("cannot write loss curve");
    curve << "epoch,train_loss,val_loss\n";
    curve.precision(12);
    for (size_t e = 0; e < result.train_loss.size(); ++e) {
      curve << e << ',' << result.train_loss[e] << ',' << result.val_loss[e] << '\n';
    }
  }
  KV resolved = echo_detector_config(cfg);
  resolved["command"] = "train";
  resolved["data"] = data.string();
  resolved["out"] = out.string();
  resolved["epochs"] = std::to_string(epochs);
  resolved["seed"] = std::to_string(seed);
  write_resolved_config(out, resolved);

  std::cout << "train: " << epochs << " epochs, final train loss "
            << (result.train_loss.empty() ? 0.0 : result.train_loss.back()) << "\n";
  return 0;
}

namespace {

std::pair<DetectorWeights, DetectorConfig> load_checkpoint_opt(const KV& opts) {
  const fs::path ckpt = require_artifact(opts, "checkpoint");
  return load_checkpoint(ckpt);
}

}  // namespace

int cmd_eval(const KV& opts) {
  const fs::path data = require_artifact(opts, "data");
  const fs::path out = require_out_dir(opts);
  auto [weights, cfg] = load_checkpoint_opt(opts);
  // inference-time overrides
  cfg.alpha = get_num(opts, "alpha", cfg.alpha);
  cfg.use_roi_scale = get_bool(opts, "use_roi_scale", cfg.use_roi_scale);
  cfg.lambda1 = get_num(opts, "lambda1", cfg.lambda1);
  cfg.lambda2 = get_num(opts, "lambda2", cfg.lambda2);
  cfg.lambda3 = get_num(opts, "lambda3", cfg.lambda3);
  const std::string split_name = get_str(opts, "split", "test");
  const double roi_side = get_num(opts, "roi_side", 0.15);

  const LoadedDataset ds = load_dataset(data, cfg.image_size);
  const LoadedSplit& split = pick_split(ds, split_name);

  const EvalResult result = evaluate(split.samples, split.labels, weights, cfg, roi_side);
  write_results_json(out / "results.json", result);

  {
    std::ofstream dump(out / "predictions.jsonl");
    if (!dump) throw IoError("cannot write predictions dump");
    for (size_t i = 0; i < split.samples.size(); ++i) {
      const TrainSample& s = split.samples[i];
      const GazeRecord* rec = s.gaze.valid ? &s.gaze : nullptr;
      const DetectorOutput o = forward(s.frame, rec, weights, cfg);
      const auto decoded = decode_detections(o, cfg, rec);
      json dets = json::array();
      for (const DecodedDetection& d : decoded) {
        if (!d.is_object) continue;
        dets.push_back({{"class_id", d.det.class_id},
                        {"confidence", d.det.confidence},
                        {"box", {d.det.box.cx, d.det.box.cy, d.det.box.w, d.det.box.h}}});
      }
      json line;
      line["frame_id"] = split.frame_ids[i];
      line["detections"] = std::move(dets);
      dump << line.dump() << '\n';
    }
  }

  KV resolved = echo_detector_config(cfg);
  resolved["command"] = "eval";
  resolved["data"] = data.string();
  resolved["split"] = split_name;
  resolved["roi_side"] = std::to_string(roi_side);
  resolved["out"] = out.string();
  write_resolved_config(out, resolved);

  std::cout << "eval[" << split_name << "]: accuracy " << result.accuracy << ", map@0.5 "
            << result.map_50 << ", map@0.75 " << result.map_75 << "\n";
  return 0;
}

int cmd_attn_map(const KV& opts) {
  const fs::path data = require_artifact(opts, "data");
  const fs::path out = require_out_dir(opts);
  auto [weights, cfg] = load_checkpoint_opt(opts);
  cfg.alpha = get_num(opts, "alpha", cfg.alpha);
  const std::string frame_id = get_str(opts, "frame", "");
  const bool jet = get_str(opts, "colormap", "jet") == "jet";

  const LoadedDataset ds = load_dataset(data, cfg.image_size);
  const LoadedSplit* split = nullptr;
  size_t index = 0;
  for (const LoadedSplit* s : {&ds.test, &ds.val, &ds.train}) {
    const auto it = std::find(s->frame_ids.begin(), s->frame_ids.end(), frame_id);
    if (it != s->frame_ids.end()) {
      split = s;
      index = static_cast<size_t>(it - s->frame_ids.begin());
      break;
    }
  }
  if (!split) throw MissingArtifactError("frame not found in any split: " + frame_id);

  const TrainSample& sample = split->samples[index];
  const GazeRecord* rec = sample.gaze.valid ? &sample.gaze : nullptr;
  const DetectorOutput with_gaze = forward(sample.frame, rec, weights, cfg);
  const DetectorOutput without = forward(sample.frame, nullptr, weights, cfg);
  const PatchGrid grid = patch_centers(cfg.grid_side(), cfg.grid_side());

  for (size_t layer = 0; layer < with_gaze.encoder_maps.size(); ++layer) {
    const AttentionMaps& post_maps = with_gaze.encoder_maps[layer];
    const AttentionMaps& pre_maps = without.encoder_maps[layer];
    for (size_t head = 0; head < post_maps.post_softmax.size(); ++head) {
      const auto heat_pre = attn_score(pre_maps.post_softmax[head], pre_maps.rows, pre_maps.cols);
      const auto heat_post =
          attn_score(post_maps.post_softmax[head], post_maps.rows, post_maps.cols);
      // joint normalization keeps the pre/post pair pixel-comparable
      double norm = 0.0;
      for (double v : heat_pre) norm = std::max(norm, v);
      for (double v : heat_post) norm = std::max(norm, v);
      const std::string stem =
          frame_id + "_" + std::to_string(layer) + "_" + std::to_string(head) + "_";
      write_png(out / (stem + "pre.png"),
                render_heat(heat_pre, grid, cfg.image_size, norm, jet));
      write_png(out / (stem + "post.png"),
                render_heat(heat_post, grid, cfg.image_size, norm, jet));
    }
  }

  KV resolved = echo_detector_config(cfg);
  resolved["command"] = "attn_map";
  resolved["frame"] = frame_id;
  resolved["colormap"] = jet ? "jet" : "gray";
  resolved["out"] = out.string();
  write_resolved_config(out, resolved);

  std::cout << "attn_map: wrote " << with_gaze.encoder_maps.size() << " layers x "
            << (with_gaze.encoder_maps.empty() ? 0 : with_gaze.encoder_maps[0].post_softmax.size())
            << " heads for frame " << frame_id << "\n";
  return 0;
}

int cmd_heads(const KV& opts) {
  const fs::path data = require_artifact(opts, "data");
  const fs::path out = require_out_dir(opts);
  auto [weights, cfg] = load_checkpoint_opt(opts);
  const double beta = get_num(opts, "beta", 0.7);
  const double gamma = get_num(opts, "gamma", 0.3);
  const double roi_side = get_num(opts, "roi_side", 0.15);
  const double threshold = get_num(opts, "threshold", 60.0);  // percentile
  const std::string mode_name = get_str(opts, "mode", "post");
  const ImportanceMode mode =
      mode_name == "pre" ? ImportanceMode::PreSoftmax : ImportanceMode::PostSoftmax;
  const std::string split_name = get_str(opts, "split", "test");

  const LoadedDataset ds = load_dataset(data, cfg.image_size);
  const LoadedSplit& split = pick_split(ds, split_name);
  if (split.samples.empty()) throw MissingArtifactError("split has no samples: " + split_name);
  const PatchGrid grid = patch_centers(cfg.grid_side(), cfg.grid_side());

  std::vector<std::vector<AttentionMaps>> maps_per_image;
  std::vector<GazeRoiMask> masks;
  for (const TrainSample& s : split.samples) {
    if (!s.gaze.valid) continue;
    const DetectorOutput o = forward(s.frame, &s.gaze, weights, cfg);
    maps_per_image.push_back(o.encoder_maps);
    masks.push_back(gaze_roi_mask(s.gaze, grid, roi_side));
  }
  if (maps_per_image.empty()) throw MissingArtifactError("no valid gaze records in split");

  const HeadReport report = build_head_report(maps_per_image, masks, beta, gamma, mode);
  write_head_report_csv(out / "heads.csv", report);

  // overlays for the first frame, one file per layer/head
  const std::vector<std::array<double, 3>> palette = {
      {0.9, 0.15, 0.15}, {0.15, 0.3, 0.9}, {0.15, 0.8, 0.2}, {0.9, 0.8, 0.15},
      {0.8, 0.2, 0.8},   {0.2, 0.8, 0.8},
  };
  const TrainSample& first = split.samples.front();
  Image frame_img(cfg.image_size, cfg.image_size);
  for (int y = 0; y < cfg.image_size; ++y)
    for (int x = 0; x < cfg.image_size; ++x)
      for (int c = 0; c < 3; ++c)
        frame_img.at(x, y, c) =
            first.frame.at((static_cast<size_t>(y) * cfg.image_size + x) * 3 + c);
  for (size_t layer = 0; layer < maps_per_image[0].size(); ++layer) {
    const AttentionMaps& maps = maps_per_image[0][layer];
    for (size_t head = 0; head < maps.post_softmax.size(); ++head) {
      const auto scores = attn_score(maps.post_softmax[head], maps.rows, maps.cols);
      const Image overlay =
          head_overlay(frame_img, scores, grid, threshold, palette[head % palette.size()]);
      write_png(out / ("overlay_" + split.frame_ids.front() + "_" + std::to_string(layer) + "_" +
                       std::to_string(head) + ".png"),
                overlay);
    }
  }

  KV resolved = echo_detector_config(cfg);
  resolved["command"] = "heads";
  resolved["beta"] = std::to_string(beta);
  resolved["gamma"] = std::to_string(gamma);
  resolved["mode"] = mode_name;
  resolved["roi_side"] = std::to_string(roi_side);
  resolved["threshold"] = std::to_string(threshold);
  resolved["split"] = split_name;
  resolved["out"] = out.string();
  write_resolved_config(out, resolved);

  std::cout << "heads: " << report.heads.size() << " heads over " << report.dataset_size
            << " images\n";
  return 0;
}

int cmd_ablate(const KV& opts) {
  const std::string which = get_str(opts, "which", "");
  const fs::path data = require_artifact(opts, "data");
  const fs::path out = require_out_dir(opts);
  DetectorConfig cfg = detector_config_from(opts);
  const int epochs = static_cast<int>(get_int(opts, "epochs", 6));
  const uint64_t seed = static_cast<uint64_t>(get_int(opts, "seed", 0));

  // a supplied checkpoint fixes the model geometry before the data loads
  DetectorWeights ckpt_weights;
  bool have_ckpt = false;
  if (opts.count("checkpoint")) {
    auto [w, ckpt_cfg] = load_checkpoint_opt(opts);
    ckpt_weights = std::move(w);
    cfg = ckpt_cfg;
    have_ckpt = true;
  }

  const LoadedDataset ds = load_dataset(data, cfg.image_size);

  if (which == "components" || which == "alpha" || which == "lambda") {
    const AblationKind kind = which == "components" ? AblationKind::Components
                              : which == "alpha"    ? AblationKind::Alpha
                                                    : AblationKind::Lambda;
    const auto rows = run_ablation(ds.train.samples, ds.test.samples, ds.test.labels, cfg, kind,
                                   epochs, seed);
    write_ablation_csv(out / ("ablation_" + which + ".csv"), rows, kind);
    std::cout << "ablate " << which << ": " << rows.size() << " rows\n";
  } else if (which == "beta_gamma") {
    // the human-attention fixture: per-head scores from a trained gaze model,
    // reference masks recomputed from the attended-object boxes
    DetectorWeights weights = have_ckpt
                                  ? std::move(ckpt_weights)
                                  : train(ds.train.samples, {}, cfg, epochs, seed).weights;
    const PatchGrid grid = patch_centers(cfg.grid_side(), cfg.grid_side());
    std::vector<TuneSample> fixture;
    for (const TrainSample& s : ds.test.samples) {
      if (!s.gaze.valid || s.gt.empty()) continue;
      const DetectorOutput o = forward(s.frame, &s.gaze, weights, cfg);
      TuneSample t;
      for (const AttentionMaps& maps : o.encoder_maps) {
        for (const auto& head_map : maps.post_softmax) {
          t.head_scores.push_back(attn_score(head_map, maps.rows, maps.cols));
        }
      }
      t.gaze_mask = gaze_roi_mask(s.gaze, grid, get_num(opts, "roi_side", 0.15));
      t.human_mask.assign(grid.count(), 0);
      const Box& tb = s.gt.front().box;
      for (size_t r = 0; r < grid.rows; ++r) {
        for (size_t c = 0; c < grid.cols; ++c) {
          const double cx0 = static_cast<double>(c) / grid.cols;
          const double cx1 = static_cast<double>(c + 1) / grid.cols;
          const double cy0 = static_cast<double>(r) / grid.rows;
          const double cy1 = static_cast<double>(r + 1) / grid.rows;
          if (std::min(tb.x1(), cx1) > std::max(tb.x0(), cx0) &&
              std::min(tb.y1(), cy1) > std::max(tb.y0(), cy0)) {
            t.human_mask[r * grid.cols + c] = 1;
          }
        }
      }
      fixture.push_back(std::move(t));
    }
    if (fixture.empty()) throw MissingArtifactError("no usable fixture samples in test split");
    const auto candidates = beta_gamma_candidates();
    const TuneResult result = tune_beta_gamma(fixture, candidates);
    write_tuning_csv(out / "ablation_beta_gamma.csv", result.table);
    std::cout << "ablate beta_gamma: best (" << result.beta << ", " << result.gamma
              << ") mean IoU " << result.mean_iou << "\n";
  } else {
    std::cerr << "unknown ablation: " << which << "\n";
    return 1;
  }

  KV resolved = echo_detector_config(cfg);
  resolved["command"] = "ablate";
  resolved["which"] = which;
  resolved["epochs"] = std::to_string(epochs);
  resolved["seed"] = std::to_string(seed);
  resolved["out"] = out.string();
  write_resolved_config(out, resolved);
  return 0;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"gaze-guided detector toolkit"};
  app.require_subcommand(1);

  struct SubSpec {
    std::string name;
    std::vector<std::string> keys;
    int (*fn)(const KV&);
  };
  const std::vector<SubSpec> subs = {
      {"synth",
       {"out", "n", "seed", "image_size", "patch_size", "classes", "min_objects", "max_objects",
        "gaze_noise", "distractor"},
       &cmd_synth},
      {"train",
       {"data", "out", "epochs", "seed", "alpha", "image_size", "patch_size", "d_model", "heads",
        "encoder_layers", "decoder_layers", "queries", "classes", "ffn_dim", "use_direction",
        "lambda1", "lambda2", "lambda3", "use_roi_scale", "pupil_direct", "w_cls", "w_l1",
        "w_giou", "no_object_weight", "lr", "batch"},
       &cmd_train},
      {"eval",
       {"data", "checkpoint", "out", "split", "alpha", "roi_side", "use_roi_scale", "lambda1",
        "lambda2", "lambda3"},
       &cmd_eval},
      {"attn-map", {"data", "checkpoint", "out", "frame", "alpha", "colormap"}, &cmd_attn_map},
      {"heads",
       {"data", "checkpoint", "out", "beta", "gamma", "mode", "roi_side", "threshold", "split"},
       &cmd_heads},
      {"ablate",
       {"which", "data", "out", "epochs", "seed", "alpha", "checkpoint", "roi_side", "classes",
        "image_size", "patch_size", "d_model", "heads", "queries", "batch", "lr"},
       &cmd_ablate},
  };

  struct SubState {
    CLI::App* cmd = nullptr;
    std::string config_path;
    std::map<std::string, std::string> values;
    const SubSpec* spec = nullptr;
  };
  std::vector<SubState> states(subs.size());
  for (size_t i = 0; i < subs.size(); ++i) {
    states[i].spec = &subs[i];
    CLI::App* cmd = app.add_subcommand(subs[i].name);
    states[i].cmd = cmd;
    cmd->add_option("--config", states[i].config_path, "flat key=value configuration file");
    for (const std::string& key : subs[i].keys) {
      states[i].values[key] = {};
      cmd->add_option("--" + key, states[i].values[key]);
    }
    if (subs[i].name == "ablate") {
      cmd->add_option("which_pos", states[i].values["which"],
                      "components|alpha|lambda|beta_gamma");
    }
  }

  try {
    std::vector<const char*> argv;
    argv.push_back("gazedet");
    for (const std::string& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  for (SubState& st : states) {
    if (!st.cmd->parsed()) continue;
    KV resolved;
    if (!st.config_path.empty()) {
      try {
        resolved = read_config_file(st.config_path);
      } catch (const MissingArtifactError& e) {
        std::cerr << e.what() << "\n";
        return 3;
      }
    }
    for (const auto& [key, value] : st.values) {
      if (st.cmd->count("--" + key) > 0 || (key == "which" && !value.empty())) {
        resolved[key] = value;
      }
    }
    try {
      return st.spec->fn(resolved);
    } catch (const MissingArtifactError& e) {
      std::cerr << e.what() << "\n";
      return 3;
    } catch (const DivergenceError& e) {
      std::cerr << e.what() << "\n";
      return 4;
    } catch (const IoError& e) {
      std::cerr << e.what() << "\n";
      return 2;
    } catch (const std::filesystem::filesystem_error& e) {
      std::cerr << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << e.what() << "\n";
      return 1;
    }
  }
  return 1;
}

}  // namespace gazedet::cli
