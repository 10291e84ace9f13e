#include "gazedet/gaze_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace gazedet {

using nlohmann::json;

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Vec3 normalized(const Vec3& v) {
  const double n = v.norm();
  return {v.x / n, v.y / n, v.z / n};
}

std::vector<std::optional<RawGazeSample>> align_gaze_to_frames(
    std::span<const RawGazeSample> samples, std::span<const int64_t> frame_times_ns,
    int64_t window_ns) {
  if (window_ns <= 0) throw std::logic_error("align_gaze_to_frames: window must be positive");
  for (size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].timestamp_ns < samples[i - 1].timestamp_ns) {
      throw std::logic_error("align_gaze_to_frames: samples not sorted by timestamp");
    }
  }

  std::vector<std::optional<RawGazeSample>> out;
  out.reserve(frame_times_ns.size());
  for (int64_t t : frame_times_ns) {
    const auto first = std::lower_bound(
        samples.begin(), samples.end(), t - window_ns,
        [](const RawGazeSample& s, int64_t v) { return s.timestamp_ns < v; });
    const size_t lo = static_cast<size_t>(first - samples.begin());
    size_t hi = lo;
    while (hi < samples.size() && samples[hi].timestamp_ns <= t + window_ns) ++hi;
    if (hi == lo) {
      out.push_back(std::nullopt);
      continue;
    }

    RawGazeSample agg;
    agg.timestamp_ns = t;
    // field-wise means over the samples that carry each field
    double px = 0, py = 0, depth = 0, pl = 0, pr = 0;
    Vec3 dl{}, dr{};
    size_t n_pos = 0, n_depth = 0, n_pl = 0, n_pr = 0, n_dl = 0, n_dr = 0;
    for (size_t i = lo; i < hi; ++i) {
      const RawGazeSample& s = samples[i];
      if (s.gaze_px) {
        px += (*s.gaze_px)[0];
        py += (*s.gaze_px)[1];
        ++n_pos;
      }
      if (s.depth_m) {
        depth += *s.depth_m;
        ++n_depth;
      }
      if (s.pupil_l_mm) {
        pl += *s.pupil_l_mm;
        ++n_pl;
      }
      if (s.pupil_r_mm) {
        pr += *s.pupil_r_mm;
        ++n_pr;
      }
      if (s.dir_l) {
        dl.x += s.dir_l->x;
        dl.y += s.dir_l->y;
        dl.z += s.dir_l->z;
        ++n_dl;
      }
      if (s.dir_r) {
        dr.x += s.dir_r->x;
        dr.y += s.dir_r->y;
        dr.z += s.dir_r->z;
        ++n_dr;
      }
    }
    if (n_pos) agg.gaze_px = std::array<double, 2>{px / n_pos, py / n_pos};
    if (n_depth) agg.depth_m = depth / n_depth;
    if (n_pl) agg.pupil_l_mm = pl / n_pl;
    if (n_pr) agg.pupil_r_mm = pr / n_pr;
    if (n_dl) agg.dir_l = Vec3{dl.x / n_dl, dl.y / n_dl, dl.z / n_dl};
    if (n_dr) agg.dir_r = Vec3{dr.x / n_dr, dr.y / n_dr, dr.z / n_dr};
    out.push_back(agg);
  }
  return out;
}

std::array<double, 2> normalize_position(std::array<double, 2> gaze_px,
                                         std::array<double, 2> frame_size) {
  if (frame_size[0] <= 0 || frame_size[1] <= 0) {
    throw std::invalid_argument("normalize_position: frame size must be positive");
  }
  return {std::clamp(gaze_px[0] / frame_size[0], 0.0, 1.0),
          std::clamp(gaze_px[1] / frame_size[1], 0.0, 1.0)};
}

double normalize_depth(double depth_m, const CalibrationRange& range) {
  if (!(range.depth_min_m < range.depth_max_m)) {
    throw std::invalid_argument("normalize_depth: degenerate calibration range");
  }
  return std::clamp((depth_m - range.depth_min_m) / (range.depth_max_m - range.depth_min_m), 0.0,
                    1.0);
}

double normalize_pupil(double pupil_l_mm, double pupil_r_mm, const CalibrationRange& range) {
  if (!(range.pupil_min_mm < range.pupil_max_mm)) {
    throw std::invalid_argument("normalize_pupil: degenerate calibration range");
  }
  const double mean_mm = (pupil_l_mm + pupil_r_mm) / 2.0;
  return std::clamp((mean_mm - range.pupil_min_mm) / (range.pupil_max_mm - range.pupil_min_mm),
                    0.0, 1.0);
}

Vec3 encode_direction(const Vec3& dir_l, const Vec3& dir_r) {
  const double nl = dir_l.norm();
  const double nr = dir_r.norm();
  if (nl < 1e-12 || nr < 1e-12) {
    throw std::invalid_argument("encode_direction: zero direction vector");
  }
  const Vec3 sum{dir_l.x / nl + dir_r.x / nr, dir_l.y / nl + dir_r.y / nr,
                 dir_l.z / nl + dir_r.z / nr};
  if (sum.norm() < 1e-9) {
    throw DegenerateDirectionError("encode_direction: eye directions cancel");
  }
  return normalized(sum);
}

GazeRecord make_gaze_record(const std::optional<RawGazeSample>& aggregated,
                            std::array<double, 2> frame_size, const CalibrationRange& cal) {
  GazeRecord rec;
  if (!aggregated || !aggregated->gaze_px) return rec;  // invalid
  rec.g_xy = normalize_position(*aggregated->gaze_px, frame_size);
  rec.d = aggregated->depth_m ? normalize_depth(*aggregated->depth_m, cal) : 1.0;
  if (aggregated->pupil_l_mm && aggregated->pupil_r_mm) {
    rec.p = normalize_pupil(*aggregated->pupil_l_mm, *aggregated->pupil_r_mm, cal);
  } else if (aggregated->pupil_l_mm || aggregated->pupil_r_mm) {
    const double one = aggregated->pupil_l_mm ? *aggregated->pupil_l_mm : *aggregated->pupil_r_mm;
    rec.p = normalize_pupil(one, one, cal);
  }
  if (aggregated->dir_l && aggregated->dir_r) {
    try {
      rec.g_hat = encode_direction(*aggregated->dir_l, *aggregated->dir_r);
      rec.has_direction = true;
    } catch (const DegenerateDirectionError&) {
      rec.has_direction = false;
    }
  }
  rec.valid = true;
  return rec;
}

bool project2d(const Vec3& g_hat, std::array<double, 2>& out) {
  const double n = std::sqrt(g_hat.x * g_hat.x + g_hat.y * g_hat.y);
  if (n < 1e-9) return false;
  out = {g_hat.x / n, g_hat.y / n};
  return true;
}

GazeRecord augment_gaze_shift(const GazeRecord& rec, Rng& rng, double delta_max) {
  if (!rec.valid) throw std::logic_error("augment_gaze_shift: invalid gaze record");
  const double delta = rng.uniform(0.0, delta_max);
  GazeRecord out = rec;
  std::array<double, 2> dir2d;
  if (!rec.has_direction || !project2d(rec.g_hat, dir2d)) return out;
  out.g_xy[0] = std::clamp(rec.g_xy[0] + delta * rec.d * dir2d[0], 0.0, 1.0);
  out.g_xy[1] = std::clamp(rec.g_xy[1] + delta * rec.d * dir2d[1], 0.0, 1.0);
  return out;
}

namespace {

// positive angles rotate content so that a point left of center moves down
std::array<double, 2> rotate_point(std::array<double, 2> p, double angle_deg) {
  const double th = angle_deg * M_PI / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double dx = p[0] - 0.5, dy = p[1] - 0.5;
  return {0.5 + dx * c + dy * s, 0.5 - dx * s + dy * c};
}

bool inside_unit(std::array<double, 2> p) {
  return p[0] >= 0.0 && p[0] <= 1.0 && p[1] >= 0.0 && p[1] <= 1.0;
}

}  // namespace

std::optional<std::pair<Image, GazeRecord>> augment_frame(const Image& frame,
                                                          const GazeRecord& rec,
                                                          const FrameTransform& transform,
                                                          const AugmentBounds& bounds) {
  GazeRecord out_rec = rec;
  Image out_img(frame.width, frame.height);

  switch (transform.kind) {
    case FrameTransform::Kind::Crop: {
      const double area = transform.crop_w * transform.crop_h;
      if (area < bounds.min_crop_area - 1e-12 || transform.crop_w <= 0 || transform.crop_h <= 0 ||
          transform.crop_x0 < 0 || transform.crop_y0 < 0 ||
          transform.crop_x0 + transform.crop_w > 1 + 1e-12 ||
          transform.crop_y0 + transform.crop_h > 1 + 1e-12) {
        throw std::invalid_argument("augment_frame: crop outside configured bounds");
      }
      const std::array<double, 2> g{(rec.g_xy[0] - transform.crop_x0) / transform.crop_w,
                                    (rec.g_xy[1] - transform.crop_y0) / transform.crop_h};
      if (!inside_unit(g)) return std::nullopt;
      out_rec.g_xy = g;
      for (int y = 0; y < out_img.height; ++y) {
        for (int x = 0; x < out_img.width; ++x) {
          const double sx = (transform.crop_x0 + (x + 0.5) / out_img.width * transform.crop_w) *
                                frame.width - 0.5;
          const double sy = (transform.crop_y0 + (y + 0.5) / out_img.height * transform.crop_h) *
                                frame.height - 0.5;
          const auto rgb = sample_bilinear(frame, sx, sy);
          for (int c = 0; c < 3; ++c) out_img.at(x, y, c) = rgb[c];
        }
      }
      break;
    }
    case FrameTransform::Kind::Rotate: {
      if (std::fabs(transform.angle_deg) > bounds.max_rotation_deg + 1e-12) {
        throw std::invalid_argument("augment_frame: rotation outside configured bounds");
      }
      const auto g = rotate_point(rec.g_xy, transform.angle_deg);
      if (!inside_unit(g)) return std::nullopt;
      out_rec.g_xy = g;
      for (int y = 0; y < out_img.height; ++y) {
        for (int x = 0; x < out_img.width; ++x) {
          // inverse map: rotate the output pixel back by -angle
          const std::array<double, 2> src = rotate_point(
              {(x + 0.5) / out_img.width, (y + 0.5) / out_img.height}, -transform.angle_deg);
          if (!inside_unit(src)) continue;  // leave black
          const auto rgb =
              sample_bilinear(frame, src[0] * frame.width - 0.5, src[1] * frame.height - 0.5);
          for (int c = 0; c < 3; ++c) out_img.at(x, y, c) = rgb[c];
        }
      }
      break;
    }
    case FrameTransform::Kind::ColorJitter: {
      if (std::fabs(transform.brightness) > bounds.max_brightness + 1e-12 ||
          transform.contrast < bounds.contrast_lo - 1e-12 ||
          transform.contrast > bounds.contrast_hi + 1e-12) {
        throw std::invalid_argument("augment_frame: color jitter outside configured bounds");
      }
      out_img = frame;
      for (double& v : out_img.pixels) {
        v = std::clamp((v - 0.5) * transform.contrast + 0.5 + transform.brightness, 0.0, 1.0);
      }
      break;
    }
  }
  return std::make_pair(std::move(out_img), out_rec);
}

FrameTransform sample_transform(FrameTransform::Kind kind, const AugmentBounds& bounds, Rng& rng) {
  FrameTransform t;
  t.kind = kind;
  switch (kind) {
    case FrameTransform::Kind::Crop: {
      // uniform linear scale keeps the area bound satisfied
      const double s = std::sqrt(rng.uniform(bounds.min_crop_area, 1.0));
      t.crop_w = s;
      t.crop_h = s;
      t.crop_x0 = rng.uniform(0.0, 1.0 - s);
      t.crop_y0 = rng.uniform(0.0, 1.0 - s);
      break;
    }
    case FrameTransform::Kind::Rotate:
      t.angle_deg = rng.uniform(-bounds.max_rotation_deg, bounds.max_rotation_deg);
      break;
    case FrameTransform::Kind::ColorJitter:
      t.brightness = rng.uniform(-bounds.max_brightness, bounds.max_brightness);
      t.contrast = rng.uniform(bounds.contrast_lo, bounds.contrast_hi);
      break;
  }
  return t;
}

std::pair<Image, GazeRecord> resize_with_gaze(const Image& frame, const GazeRecord& rec,
                                              int target_w, int target_h) {
  if (target_w <= 0 || target_h <= 0) {
    throw std::invalid_argument("resize_with_gaze: target must be positive");
  }
  Image out(target_w, target_h);
  const double s = std::min(static_cast<double>(target_w) / frame.width,
                            static_cast<double>(target_h) / frame.height);
  const double content_w = frame.width * s;
  const double content_h = frame.height * s;
  const double off_x = (target_w - content_w) / 2.0;
  const double off_y = (target_h - content_h) / 2.0;
  for (int y = 0; y < target_h; ++y) {
    for (int x = 0; x < target_w; ++x) {
      const double sx = (x + 0.5 - off_x) / s - 0.5;
      const double sy = (y + 0.5 - off_y) / s - 0.5;
      if (sx < -0.5 || sy < -0.5 || sx > frame.width - 0.5 || sy > frame.height - 0.5) continue;
      const auto rgb = sample_bilinear(frame, sx, sy);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = rgb[c];
    }
  }
  GazeRecord out_rec = rec;
  const double gx_px = rec.g_xy[0] * frame.width * s + off_x;
  const double gy_px = rec.g_xy[1] * frame.height * s + off_y;
  out_rec.g_xy = {std::clamp(gx_px / target_w, 0.0, 1.0), std::clamp(gy_px / target_h, 0.0, 1.0)};
  return {std::move(out), out_rec};
}

// ---- on-disk formats -------------------------------------------------------

namespace {

std::optional<double> parse_cell(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  return std::stod(cell);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::vector<RawGazeSample> read_gaze_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_gaze_csv: cannot open " + path.string());
  std::vector<RawGazeSample> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("timestamp_ns", 0) == 0) continue;  // header
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    cells.resize(12);
    RawGazeSample s;
    s.timestamp_ns = std::stoll(cells[0]);
    const auto gx = parse_cell(cells[1]);
    const auto gy = parse_cell(cells[2]);
    if (gx && gy) s.gaze_px = std::array<double, 2>{*gx, *gy};
    s.depth_m = parse_cell(cells[3]);
    s.pupil_l_mm = parse_cell(cells[4]);
    s.pupil_r_mm = parse_cell(cells[5]);
    const auto lx = parse_cell(cells[6]), ly = parse_cell(cells[7]), lz = parse_cell(cells[8]);
    if (lx && ly && lz) s.dir_l = Vec3{*lx, *ly, *lz};
    const auto rx = parse_cell(cells[9]), ry = parse_cell(cells[10]), rz = parse_cell(cells[11]);
    if (rx && ry && rz) s.dir_r = Vec3{*rx, *ry, *rz};
    out.push_back(s);
  }
  return out;
}

void write_gaze_csv(const std::filesystem::path& path, std::span<const RawGazeSample> samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_gaze_csv: cannot open " + path.string());
  out << "timestamp_ns,gaze_x_px,gaze_y_px,depth_m,pupil_l_mm,pupil_r_mm,"
         "dir_l_x,dir_l_y,dir_l_z,dir_r_x,dir_r_y,dir_r_z\n";
  for (const RawGazeSample& s : samples) {
    out << s.timestamp_ns << ',';
    out << (s.gaze_px ? fmt((*s.gaze_px)[0]) : "") << ',';
    out << (s.gaze_px ? fmt((*s.gaze_px)[1]) : "") << ',';
    out << (s.depth_m ? fmt(*s.depth_m) : "") << ',';
    out << (s.pupil_l_mm ? fmt(*s.pupil_l_mm) : "") << ',';
    out << (s.pupil_r_mm ? fmt(*s.pupil_r_mm) : "") << ',';
    out << (s.dir_l ? fmt(s.dir_l->x) : "") << ',';
    out << (s.dir_l ? fmt(s.dir_l->y) : "") << ',';
    out << (s.dir_l ? fmt(s.dir_l->z) : "") << ',';
    out << (s.dir_r ? fmt(s.dir_r->x) : "") << ',';
    out << (s.dir_r ? fmt(s.dir_r->y) : "") << ',';
    out << (s.dir_r ? fmt(s.dir_r->z) : "") << '\n';
  }
}

std::vector<FrameEntry> read_frame_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_frame_manifest: cannot open " + path.string());
  json j;
  in >> j;
  std::vector<FrameEntry> out;
  for (const auto& e : j) {
    FrameEntry fe;
    fe.frame_id = e.at("frame_id").get<std::string>();
    fe.timestamp_ns = e.at("timestamp_ns").get<int64_t>();
    fe.image_path = e.at("image_path").get<std::string>();
    if (e.contains("label")) fe.label = e.at("label").get<int>();
    if (e.contains("box")) {
      const auto& b = e.at("box");
      fe.box = Box{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                   b.at(3).get<double>()};
    }
    out.push_back(std::move(fe));
  }
  return out;
}

void write_frame_manifest(const std::filesystem::path& path, std::span<const FrameEntry> entries) {
  json j = json::array();
  for (const FrameEntry& fe : entries) {
    json e;
    e["frame_id"] = fe.frame_id;
    e["timestamp_ns"] = fe.timestamp_ns;
    e["image_path"] = fe.image_path;
    if (fe.label) e["label"] = *fe.label;
    if (fe.box) e["box"] = {fe.box->cx, fe.box->cy, fe.box->w, fe.box->h};
    j.push_back(std::move(e));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_frame_manifest: cannot open " + path.string());
  out << j.dump(2) << '\n';
}

SplitManifest read_split_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_split_manifest: cannot open " + path.string());
  json j;
  in >> j;
  SplitManifest s;
  s.seed = j.at("seed").get<uint64_t>();
  s.train_ids = j.at("train").get<std::vector<std::string>>();
  s.val_ids = j.at("val").get<std::vector<std::string>>();
  s.test_ids = j.at("test").get<std::vector<std::string>>();
  return s;
}

void write_split_manifest(const std::filesystem::path& path, const SplitManifest& split) {
  json j;
  j["seed"] = split.seed;
  j["ratio"] = "70:15:15";
  j["train"] = split.train_ids;
  j["val"] = split.val_ids;
  j["test"] = split.test_ids;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_split_manifest: cannot open " + path.string());
  out << j.dump(2) << '\n';
}

CalibrationRange read_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_calibration: cannot open " + path.string());
  json j;
  in >> j;
  CalibrationRange c;
  c.pupil_min_mm = j.at("pupil_min_mm").get<double>();
  c.pupil_max_mm = j.at("pupil_max_mm").get<double>();
  c.depth_min_m = j.at("depth_min_m").get<double>();
  c.depth_max_m = j.at("depth_max_m").get<double>();
  return c;
}

void write_calibration(const std::filesystem::path& path, const CalibrationRange& cal) {
  json j;
  j["pupil_min_mm"] = cal.pupil_min_mm;
  j["pupil_max_mm"] = cal.pupil_max_mm;
  j["depth_min_m"] = cal.depth_min_m;
  j["depth_max_m"] = cal.depth_max_m;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_calibration: cannot open " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace gazedet
