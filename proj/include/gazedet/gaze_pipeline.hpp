#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gazedet/box.hpp"
#include "gazedet/image.hpp"
#include "gazedet/rng.hpp"

namespace gazedet {

struct Vec3 {
  double x = 0, y = 0, z = 0;
  double norm() const;
};
Vec3 normalized(const Vec3& v);

// One eye-tracker sample. Any field except the timestamp may be missing.
struct RawGazeSample {
  int64_t timestamp_ns = 0;
  std::optional<std::array<double, 2>> gaze_px;
  std::optional<double> depth_m;
  std::optional<double> pupil_l_mm;
  std::optional<double> pupil_r_mm;
  std::optional<Vec3> dir_l;
  std::optional<Vec3> dir_r;
};

// Per-frame normalized gaze features. d and p default to 1 when the raw
// stream lacks them, which makes box scaling a no-op for that frame.
struct GazeRecord {
  std::array<double, 2> g_xy{0.5, 0.5};  // [0,1]^2
  double d = 1.0;                        // [0,1], 0 = nearest
  double p = 1.0;                        // [0,1]
  Vec3 g_hat{0, 0, 1};                   // unit vector
  bool has_direction = false;
  bool valid = false;
};

// Per-subject pupil bounds and per-video depth bounds.
struct CalibrationRange {
  double pupil_min_mm = 2.0;
  double pupil_max_mm = 8.0;
  double depth_min_m = 0.5;
  double depth_max_m = 5.0;
};

// thrown by encode_direction when the two eye vectors cancel
struct DegenerateDirectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per frame time, the field-wise mean of all samples within +-window_ns.
// Frames with no sample in the window come back as nullopt. Samples must be
// sorted by timestamp.
std::vector<std::optional<RawGazeSample>> align_gaze_to_frames(
    std::span<const RawGazeSample> samples, std::span<const int64_t> frame_times_ns,
    int64_t window_ns);

std::array<double, 2> normalize_position(std::array<double, 2> gaze_px,
                                         std::array<double, 2> frame_size);
double normalize_depth(double depth_m, const CalibrationRange& range);
double normalize_pupil(double pupil_l_mm, double pupil_r_mm, const CalibrationRange& range);
Vec3 encode_direction(const Vec3& dir_l, const Vec3& dir_r);

// Full assembly of one aligned sample into a GazeRecord. A missing position
// invalidates the record; missing depth/pupil fall back to 1; a missing or
// degenerate direction clears has_direction.
GazeRecord make_gaze_record(const std::optional<RawGazeSample>& aggregated,
                            std::array<double, 2> frame_size, const CalibrationRange& cal);

// Planar projection of the gaze direction used by the attention bias: drop z
// and renormalize. Returns false when the planar part is numerically zero.
bool project2d(const Vec3& g_hat, std::array<double, 2>& out);

// Shift the gaze point along the projected direction, scaled by depth.
// delta ~ Uniform(0, delta_max). Everything but g_xy is unchanged.
GazeRecord augment_gaze_shift(const GazeRecord& rec, Rng& rng, double delta_max = 0.02);

struct FrameTransform {
  enum class Kind { Crop, Rotate, ColorJitter };
  Kind kind = Kind::ColorJitter;
  // crop: normalized sub-rectangle, re-sampled back to the source size
  double crop_x0 = 0.0, crop_y0 = 0.0, crop_w = 1.0, crop_h = 1.0;
  // rotate: degrees about the frame center
  double angle_deg = 0.0;
  // color jitter: per-frame brightness offset and contrast factor
  double brightness = 0.0, contrast = 1.0;
};

struct AugmentBounds {
  double min_crop_area = 0.60;
  double max_rotation_deg = 15.0;
  double max_brightness = 0.2;
  double contrast_lo = 0.8, contrast_hi = 1.25;
};

// Applies one transform to the frame and, for geometric transforms, the same
// map to the gaze point. Returns nullopt (the drop signal) when the mapped
// gaze leaves the frame. Out-of-bounds parameters throw.
std::optional<std::pair<Image, GazeRecord>> augment_frame(const Image& frame,
                                                          const GazeRecord& rec,
                                                          const FrameTransform& transform,
                                                          const AugmentBounds& bounds = {});

// Random in-bounds transform of the given kind.
FrameTransform sample_transform(FrameTransform::Kind kind, const AugmentBounds& bounds, Rng& rng);

// Resize to target size. Aspect changes are letterboxed and the gaze point is
// remapped by the same affine; matching aspect reduces to a plain resize that
// leaves normalized coordinates unchanged.
std::pair<Image, GazeRecord> resize_with_gaze(const Image& frame, const GazeRecord& rec,
                                              int target_w, int target_h);

// ---- on-disk formats -------------------------------------------------------

// CSV columns: timestamp_ns,gaze_x_px,gaze_y_px,depth_m,pupil_l_mm,
// pupil_r_mm,dir_l_x,dir_l_y,dir_l_z,dir_r_x,dir_r_y,dir_r_z
// An empty cell means the field is missing.
std::vector<RawGazeSample> read_gaze_csv(const std::filesystem::path& path);
void write_gaze_csv(const std::filesystem::path& path, std::span<const RawGazeSample> samples);

struct FrameEntry {
  std::string frame_id;
  int64_t timestamp_ns = 0;
  std::string image_path;
  std::optional<int> label;
  std::optional<Box> box;  // normalized [cx, cy, w, h]
};

std::vector<FrameEntry> read_frame_manifest(const std::filesystem::path& path);
void write_frame_manifest(const std::filesystem::path& path, std::span<const FrameEntry> entries);

// 70:15:15 partition together with the seed that produced it.
struct SplitManifest {
  uint64_t seed = 0;
  std::vector<std::string> train_ids, val_ids, test_ids;
};
SplitManifest read_split_manifest(const std::filesystem::path& path);
void write_split_manifest(const std::filesystem::path& path, const SplitManifest& split);

CalibrationRange read_calibration(const std::filesystem::path& path);
void write_calibration(const std::filesystem::path& path, const CalibrationRange& cal);

}  // namespace gazedet
