#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gazedet/box.hpp"
#include "gazedet/gaze_pipeline.hpp"
#include "gazedet/image.hpp"
#include "gazedet/rng.hpp"

namespace gazedet {

struct SceneConfig {
  int image_size = 64;
  int patch_size = 8;  // grid used for the human-attention patch masks
  int n_classes = 6;
  int min_objects = 1;
  int max_objects = 4;
  double gaze_noise_std = 0.02;  // normalized units
  double depth_min_m = 0.5;
  double depth_max_m = 5.0;
  double pupil_min_mm = 2.0;
  double pupil_max_mm = 8.0;
  // Places one oversized high-contrast object away from the gaze target so
  // that only the gaze signal disambiguates the supervised object.
  bool distractor_heavy = false;
  uint64_t seed = 0;

  void validate() const;
};

struct SceneObject {
  int class_id = 0;
  Box box;
  double depth_m = 1.0;
};

struct SceneSample {
  Image frame;
  std::vector<SceneObject> objects;
  int target_index = 0;  // the attended object
  GazeRecord gaze;
  std::vector<uint8_t> human_mask;  // patches overlapping the target box
};

// Non-occluding shapes with class-distinctive appearance; the target is
// picked uniformly (never the distractor in distractor-heavy mode).
SceneSample generate_scene(const SceneConfig& cfg, Rng& rng);

// Gaze centered on the target with truncated Gaussian noise; depth follows
// the target, pupil grows for smaller targets, direction points from the
// frame center toward the gaze point.
GazeRecord simulate_gaze(const SceneSample& sample, const SceneConfig& cfg, Rng& rng);

// In-memory batch; sample i is generated from the seed-derived stream i.
std::vector<SceneSample> generate_scenes(const SceneConfig& cfg, size_t n);

struct DatasetSummary {
  size_t n_train = 0;
  size_t n_val = 0;
  size_t n_test = 0;
  std::filesystem::path dir;
};

// Writes frames (PPM), per-split frame manifests, the raw gaze CSV, the
// calibration ranges, and the 70:15:15 split manifest. Regenerates with a
// derived seed when any class has fewer than 3 test samples; gives up after
// 10 attempts.
DatasetSummary generate_dataset(const SceneConfig& cfg, size_t n_samples,
                                const std::filesystem::path& out_dir);

}  // namespace gazedet
