#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gazedet/detector.hpp"
#include "gazedet/synth_data.hpp"

namespace gazedet {

Tensor image_to_tensor(const Image& img);

// Trainable view of an in-memory scene: the attended object is the single
// supervised ground truth, matching the manifest contract.
TrainSample to_train_sample(const SceneSample& s);

struct LoadedSplit {
  std::vector<TrainSample> samples;
  std::vector<int> labels;  // -1 when the manifest row has no label
  std::vector<std::string> frame_ids;
};

struct LoadedDataset {
  LoadedSplit train, val, test;
  CalibrationRange calibration;
  SplitManifest split;
};

// Reads the manifests, frames, calibration, and raw gaze CSV written by
// generate_dataset, pushing every frame through the alignment and
// normalization pipeline. Frames are resized to image_size when needed.
LoadedDataset load_dataset(const std::filesystem::path& dir, int image_size);

}  // namespace gazedet
