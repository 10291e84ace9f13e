#include "gazedet/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>

namespace gazedet {

void SceneConfig::validate() const {
  if (n_classes < 2) throw std::invalid_argument("SceneConfig: need at least 2 classes");
  if (gaze_noise_std < 0) throw std::invalid_argument("SceneConfig: negative gaze noise");
  if (min_objects < 1 || max_objects < min_objects) {
    throw std::invalid_argument("SceneConfig: bad objects_per_scene range");
  }
  if (!(depth_min_m < depth_max_m) || !(pupil_min_mm < pupil_max_mm)) {
    throw std::invalid_argument("SceneConfig: degenerate calibration ranges");
  }
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
    throw std::invalid_argument("SceneConfig: image_size must be divisible by patch_size");
  }
}

namespace {

enum class ShapeKind { Rect, Disc, Bar };

struct ClassStyle {
  ShapeKind shape;
  std::array<double, 3> color;
};

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) {
    r = c; g = x;
  } else if (hp < 2) {
    r = x; g = c;
  } else if (hp < 3) {
    g = c; b = x;
  } else if (hp < 4) {
    g = x; b = c;
  } else if (hp < 5) {
    r = x; b = c;
  } else {
    r = c; b = x;
  }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

ClassStyle class_style(int class_id, int n_classes) {
  ClassStyle s;
  s.shape = static_cast<ShapeKind>(class_id % 3);
  s.color = hsv_to_rgb(static_cast<double>(class_id) / n_classes, 0.85, 0.9);
  return s;
}

bool boxes_disjoint(const Box& a, const Box& b, double margin) {
  return a.x1() + margin <= b.x0() || b.x1() + margin <= a.x0() ||
         a.y1() + margin <= b.y0() || b.y1() + margin <= a.y0();
}

void render_object(Image& img, const SceneObject& obj, int n_classes, bool salient) {
  const ClassStyle style = class_style(obj.class_id, n_classes);
  const int W = img.width, H = img.height;
  const int x0 = std::clamp(static_cast<int>(obj.box.x0() * W), 0, W - 1);
  const int x1 = std::clamp(static_cast<int>(obj.box.x1() * W), 0, W);
  const int y0 = std::clamp(static_cast<int>(obj.box.y0() * H), 0, H - 1);
  const int y1 = std::clamp(static_cast<int>(obj.box.y1() * H), 0, H);
  const double cx = obj.box.cx * W, cy = obj.box.cy * H;
  const double rx = obj.box.w * W / 2.0, ry = obj.box.h * H / 2.0;

  auto color = style.color;
  if (salient) {
    for (double& v : color) v = std::min(1.0, v * 1.2 + 0.1);
  }

  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      bool inside = false;
      switch (style.shape) {
        case ShapeKind::Rect:
          inside = true;
          break;
        case ShapeKind::Disc: {
          const double dx = (x + 0.5 - cx) / rx;
          const double dy = (y + 0.5 - cy) / ry;
          inside = dx * dx + dy * dy <= 1.0;
          break;
        }
        case ShapeKind::Bar:
          // horizontal band through the middle third of the box
          inside = std::fabs(y + 0.5 - cy) <= ry / 3.0;
          break;
      }
      if (!inside) continue;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[c];
    }
  }
  if (salient) {
    // white outline makes the distractor pop
    for (int x = x0; x < x1; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(x, y0, c) = 1.0;
        if (y1 - 1 > y0) img.at(x, y1 - 1, c) = 1.0;
      }
    }
    for (int y = y0; y < y1; ++y) {
      for (int c = 0; c < 3; ++c) {
        img.at(x0, y, c) = 1.0;
        if (x1 - 1 > x0) img.at(x1 - 1, y, c) = 1.0;
      }
    }
  }
}

}  // namespace

SceneSample generate_scene(const SceneConfig& cfg, Rng& rng) {
  cfg.validate();
  SceneSample sample;
  sample.frame = Image(cfg.image_size, cfg.image_size, 0.12);
  // faint background speckle
  for (double& v : sample.frame.pixels) v += rng.uniform(-0.02, 0.02);

  const int min_objects = cfg.distractor_heavy ? std::max(2, cfg.min_objects) : cfg.min_objects;
  const int n_objects = rng.uniform_int(min_objects, std::max(min_objects, cfg.max_objects));
  const int n_regular = cfg.distractor_heavy ? n_objects - 1 : n_objects;

  auto place = [&](double lo, double hi) -> bool {
    for (int attempt = 0; attempt < 100; ++attempt) {
      Box b;
      b.w = rng.uniform(lo, hi);
      b.h = rng.uniform(lo, hi);
      b.cx = rng.uniform(b.w / 2.0, 1.0 - b.w / 2.0);
      b.cy = rng.uniform(b.h / 2.0, 1.0 - b.h / 2.0);
      bool clash = false;
      for (const SceneObject& other : sample.objects) {
        if (!boxes_disjoint(b, other.box, 0.02)) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
      SceneObject obj;
      obj.class_id = rng.uniform_int(0, cfg.n_classes - 1);
      obj.box = b;
      obj.depth_m = rng.uniform(cfg.depth_min_m, cfg.depth_max_m);
      sample.objects.push_back(obj);
      return true;
    }
    return false;
  };

  // the distractor stays away from the gaze: far from the target and off the
  // frame-center-to-target ray, so the gaze features stay decisive
  auto away_from_distractor = [&](const Box& target, const Box& distractor) {
    const double dx = target.cx - distractor.cx, dy = target.cy - distractor.cy;
    if (std::sqrt(dx * dx + dy * dy) < 0.35) return false;
    const double tx = target.cx - 0.5, ty = target.cy - 0.5;
    const double bx = distractor.cx - 0.5, by = distractor.cy - 0.5;
    const double tn = std::sqrt(tx * tx + ty * ty);
    const double bn = std::sqrt(bx * bx + by * by);
    if (tn < 0.05 || bn < 1e-9) return true;  // no meaningful ray
    const double cosang = (tx * bx + ty * by) / (tn * bn);
    return std::fabs(cosang) < 0.82;  // at least ~35 degrees off the ray
  };

  for (int scene_attempt = 0;; ++scene_attempt) {
    if (scene_attempt >= 100) {
      throw std::runtime_error("generate_scene: placement failed after 100 attempts");
    }
    sample.objects.clear();
    if (cfg.distractor_heavy && !place(0.30, 0.45)) continue;  // distractor first
    const double regular_hi = cfg.distractor_heavy ? 0.20 : 0.30;
    bool regulars_ok = true;
    for (int i = 0; i < n_regular; ++i) {
      if (!place(0.12, regular_hi)) {
        regulars_ok = sample.objects.size() >= (cfg.distractor_heavy ? 2u : 1u);
        break;
      }
    }
    if (!regulars_ok) continue;

    if (cfg.distractor_heavy) {
      std::vector<int> candidates;
      for (size_t i = 1; i < sample.objects.size(); ++i) {
        if (away_from_distractor(sample.objects[i].box, sample.objects[0].box)) {
          candidates.push_back(static_cast<int>(i));
        }
      }
      if (candidates.empty()) continue;  // re-roll the scene
      sample.target_index = candidates[rng.uniform_int(0, static_cast<int>(candidates.size()) - 1)];
    } else {
      sample.target_index = rng.uniform_int(0, static_cast<int>(sample.objects.size()) - 1);
    }
    break;
  }

  for (size_t i = 0; i < sample.objects.size(); ++i) {
    render_object(sample.frame, sample.objects[i], cfg.n_classes,
                  cfg.distractor_heavy && i == 0);
  }

  sample.gaze = simulate_gaze(sample, cfg, rng);

  // human-attention mask: patches overlapping the target box
  const int side = cfg.image_size / cfg.patch_size;
  const Box& tb = sample.objects[sample.target_index].box;
  sample.human_mask.assign(static_cast<size_t>(side) * side, 0);
  for (int r = 0; r < side; ++r) {
    const double cy0 = static_cast<double>(r) / side, cy1 = static_cast<double>(r + 1) / side;
    for (int c = 0; c < side; ++c) {
      const double cx0 = static_cast<double>(c) / side, cx1 = static_cast<double>(c + 1) / side;
      const bool overlap =
          std::min(tb.x1(), cx1) > std::max(tb.x0(), cx0) &&
          std::min(tb.y1(), cy1) > std::max(tb.y0(), cy0);
      if (overlap) sample.human_mask[static_cast<size_t>(r) * side + c] = 1;
    }
  }
  return sample;
}

GazeRecord simulate_gaze(const SceneSample& sample, const SceneConfig& cfg, Rng& rng) {
  const SceneObject& target = sample.objects.at(sample.target_index);
  GazeRecord rec;
  // truncated at 3 sigma, which keeps the gaze near the target by contract
  auto noise = [&rng, &cfg]() {
    if (cfg.gaze_noise_std == 0.0) return 0.0;
    double v;
    do {
      v = rng.normal(0.0, cfg.gaze_noise_std);
    } while (std::fabs(v) > 3.0 * cfg.gaze_noise_std);
    return v;
  };
  rec.g_xy = {std::clamp(target.box.cx + noise(), 0.0, 1.0),
              std::clamp(target.box.cy + noise(), 0.0, 1.0)};
  rec.d = std::clamp((target.depth_m - cfg.depth_min_m) / (cfg.depth_max_m - cfg.depth_min_m),
                     0.0, 1.0);
  // smaller targets demand more focus -> larger pupil
  const double size = std::clamp((target.box.w + target.box.h) / 2.0, 0.10, 0.45);
  const double rel = (0.45 - size) / (0.45 - 0.10);
  rec.p = std::clamp(0.2 + 0.7 * rel + rng.normal(0.0, 0.05), 0.0, 1.0);

  const double ux = rec.g_xy[0] - 0.5, uy = rec.g_xy[1] - 0.5;
  const double un = std::sqrt(ux * ux + uy * uy);
  if (un < 1e-9) {
    rec.g_hat = {0.0, 0.0, 1.0};
    rec.has_direction = false;
  } else {
    rec.g_hat = normalized(Vec3{ux / un, uy / un, 1.0});
    rec.has_direction = true;
  }
  rec.valid = true;
  return rec;
}

std::vector<SceneSample> generate_scenes(const SceneConfig& cfg, size_t n) {
  Rng root(cfg.seed);
  std::vector<SceneSample> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    Rng scene_rng = root.child("scene", i);
    out.push_back(generate_scene(cfg, scene_rng));
  }
  return out;
}

namespace {

constexpr int64_t kFrameIntervalNs = 33'333'333;  // 30 fps

std::string frame_name(size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05zu", i);
  return buf;
}

}  // namespace

DatasetSummary generate_dataset(const SceneConfig& cfg, size_t n_samples,
                                const std::filesystem::path& out_dir) {
  cfg.validate();
  if (n_samples < 10) throw std::invalid_argument("generate_dataset: need at least 10 samples");

  const size_t n_train = n_samples * 70 / 100;
  const size_t n_val = n_samples * 15 / 100;
  const size_t n_test = n_samples - n_train - n_val;

  SceneConfig attempt_cfg = cfg;
  std::vector<SceneSample> samples;
  std::vector<size_t> order(n_samples);
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 10) {
      throw std::runtime_error("generate_dataset: unable to balance classes after 10 attempts");
    }
    attempt_cfg.seed = attempt == 0 ? cfg.seed : Rng(cfg.seed).child("regen", attempt).seed();
    samples = generate_scenes(attempt_cfg, n_samples);

    for (size_t i = 0; i < n_samples; ++i) order[i] = i;
    Rng split_rng = Rng(attempt_cfg.seed).child("split");
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1],
                order[static_cast<size_t>(split_rng.uniform_int(0, static_cast<int>(i) - 1))]);
    }

    std::map<int, size_t> test_counts;
    for (size_t i = n_train + n_val; i < n_samples; ++i) {
      const SceneSample& s = samples[order[i]];
      test_counts[s.objects[s.target_index].class_id]++;
    }
    bool balanced = true;
    for (int c = 0; c < cfg.n_classes; ++c) {
      if (test_counts[c] < 3) {
        balanced = false;
        break;
      }
    }
    if (balanced) break;
  }

  std::filesystem::create_directories(out_dir / "frames");

  std::vector<FrameEntry> entries(n_samples);
  std::vector<RawGazeSample> raw;
  raw.reserve(n_samples * 3);
  const CalibrationRange cal{cfg.pupil_min_mm, cfg.pupil_max_mm, cfg.depth_min_m, cfg.depth_max_m};

  for (size_t i = 0; i < n_samples; ++i) {
    const SceneSample& s = samples[i];
    const std::string name = frame_name(i);
    const std::string rel_path = "frames/" + name + ".ppm";
    write_ppm(out_dir / rel_path, s.frame);

    FrameEntry e;
    e.frame_id = name;
    e.timestamp_ns = static_cast<int64_t>(i) * kFrameIntervalNs;
    e.image_path = rel_path;
    e.label = s.objects[s.target_index].class_id;
    e.box = s.objects[s.target_index].box;
    entries[i] = std::move(e);

    // invert the normalization so the CSV round-trips through the pipeline
    const double W = cfg.image_size, H = cfg.image_size;
    const double depth_m = cfg.depth_min_m + s.gaze.d * (cfg.depth_max_m - cfg.depth_min_m);
    const double pupil_mm = cfg.pupil_min_mm + s.gaze.p * (cfg.pupil_max_mm - cfg.pupil_min_mm);
    for (int64_t off : {-5'000'000ll, 0ll, 5'000'000ll}) {
      RawGazeSample r;
      r.timestamp_ns = entries[i].timestamp_ns + off;
      r.gaze_px = std::array<double, 2>{s.gaze.g_xy[0] * W, s.gaze.g_xy[1] * H};
      r.depth_m = depth_m;
      r.pupil_l_mm = pupil_mm;
      r.pupil_r_mm = pupil_mm;
      if (s.gaze.has_direction) {
        r.dir_l = s.gaze.g_hat;
        r.dir_r = s.gaze.g_hat;
      }
      raw.push_back(std::move(r));
    }
  }

  SplitManifest split;
  split.seed = attempt_cfg.seed;
  std::vector<FrameEntry> train_entries, val_entries, test_entries;
  for (size_t i = 0; i < n_samples; ++i) {
    const FrameEntry& e = entries[order[i]];
    if (i < n_train) {
      split.train_ids.push_back(e.frame_id);
      train_entries.push_back(e);
    } else if (i < n_train + n_val) {
      split.val_ids.push_back(e.frame_id);
      val_entries.push_back(e);
    } else {
      split.test_ids.push_back(e.frame_id);
      test_entries.push_back(e);
    }
  }
  auto by_id = [](const FrameEntry& a, const FrameEntry& b) { return a.frame_id < b.frame_id; };
  std::sort(train_entries.begin(), train_entries.end(), by_id);
  std::sort(val_entries.begin(), val_entries.end(), by_id);
  std::sort(test_entries.begin(), test_entries.end(), by_id);
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.val_ids.begin(), split.val_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());

  write_frame_manifest(out_dir / "manifest_train.json", train_entries);
  write_frame_manifest(out_dir / "manifest_val.json", val_entries);
  write_frame_manifest(out_dir / "manifest_test.json", test_entries);
  write_gaze_csv(out_dir / "gaze.csv", raw);
  write_calibration(out_dir / "calibration.json", cal);
  write_split_manifest(out_dir / "split.json", split);

  return {n_train, n_val, n_test, out_dir};
}

}  // namespace gazedet
