#include "gazedet/dataset.hpp"

#include <algorithm>
#include <stdexcept>

namespace gazedet {

Tensor image_to_tensor(const Image& img) {
  return Tensor({static_cast<size_t>(img.height), static_cast<size_t>(img.width), 3},
                std::vector<double>(img.pixels.begin(), img.pixels.end()));
}

TrainSample to_train_sample(const SceneSample& s) {
  TrainSample t;
  t.frame = image_to_tensor(s.frame);
  t.gaze = s.gaze;
  const SceneObject& target = s.objects.at(s.target_index);
  t.gt.push_back({target.class_id, target.box});
  return t;
}

namespace {

constexpr int64_t kDefaultWindowNs = 16'666'666;  // half a 30 fps frame interval

LoadedSplit load_split(const std::filesystem::path& dir, const std::string& manifest_name,
                       const std::vector<RawGazeSample>& raw, const CalibrationRange& cal,
                       int image_size) {
  const auto entries = read_frame_manifest(dir / manifest_name);
  std::vector<int64_t> times;
  times.reserve(entries.size());
  for (const FrameEntry& e : entries) times.push_back(e.timestamp_ns);
  if (!std::is_sorted(times.begin(), times.end())) {
    throw std::runtime_error("load_split: manifest not sorted by timestamp: " + manifest_name);
  }
  const auto aligned = align_gaze_to_frames(raw, times, kDefaultWindowNs);

  LoadedSplit split;
  for (size_t i = 0; i < entries.size(); ++i) {
    const FrameEntry& e = entries[i];
    Image img = read_ppm(dir / e.image_path);
    GazeRecord rec = make_gaze_record(aligned[i], {static_cast<double>(img.width),
                                                   static_cast<double>(img.height)}, cal);
    if (img.width != image_size || img.height != image_size) {
      auto [resized, remapped] = resize_with_gaze(img, rec, image_size, image_size);
      img = std::move(resized);
      rec = remapped;
    }
    TrainSample s;
    s.frame = image_to_tensor(img);
    s.gaze = rec;
    if (e.label && e.box) s.gt.push_back({*e.label, *e.box});
    split.samples.push_back(std::move(s));
    split.labels.push_back(e.label ? *e.label : -1);
    split.frame_ids.push_back(e.frame_id);
  }
  return split;
}

}  // namespace

LoadedDataset load_dataset(const std::filesystem::path& dir, int image_size) {
  LoadedDataset ds;
  ds.calibration = read_calibration(dir / "calibration.json");
  ds.split = read_split_manifest(dir / "split.json");
  const auto raw = read_gaze_csv(dir / "gaze.csv");
  ds.train = load_split(dir, "manifest_train.json", raw, ds.calibration, image_size);
  ds.val = load_split(dir, "manifest_val.json", raw, ds.calibration, image_size);
  ds.test = load_split(dir, "manifest_test.json", raw, ds.calibration, image_size);
  return ds;
}

}  // namespace gazedet
