#pragma once

// On-disk dataset format.
//
//   sensors/sensors.txt            sensor_id, model, width, height, params...
//   sensors/rigs.txt               rig_id, sensor_id, qw, qx, qy, qz, tx, ty, tz
//   sensors/trajectories.txt       timestamp, device_id, qw, qx, qy, qz, tx, ty, tz
//   sensors/records_camera.txt     timestamp, sensor_id, image_path
//   sensors/records_depth.txt      timestamp, sensor_id, depth_path
//   sensors/records_data/<depth_path>        float32 W*H, meters, 0 = invalid
//   sensors/records_data/<depth_path>.meta   width, height
//   reconstruction/keypoints/<type>/keypoints.txt               name, dtype, dsize
//   reconstruction/keypoints/<type>/<image_path>.kpt
//   reconstruction/descriptors/<type>/descriptors.txt
//   reconstruction/descriptors/<type>/<image_path>.desc
//   reconstruction/global_features/<type>/global_features.txt
//   reconstruction/global_features/<type>/<image_path>.gfeat
//   reconstruction/matches/<type>/<path_a>.overlapping/<path_b>.matches
//                                  float32 rows (idx_a, idx_b, score), path_a < path_b
//   reconstruction/points3d.txt    point_id, x, y, z[, r, g, b]
//   reconstruction/observations.txt point_id, keypoints_type, image_path, keypoint_idx
//
// Every text file starts with "# <name> version 1.0" and uses ", " separators.
// Binary arrays are little-endian float32, row-major.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "locmap/csv.hpp"
#include "locmap/errors.hpp"
#include "locmap/geometry.hpp"

namespace locmap {

namespace fs = std::filesystem;

using Timestamp = std::uint64_t;
using PointId = std::uint64_t;

/// (timestamp, sensor or rig id)
using RecordKey = std::pair<Timestamp, std::string>;

struct RigMember {
  std::string sensor_id;
  Pose rig_to_sensor;
};

struct Rig {
  std::string rig_id;
  std::vector<RigMember> members;

  const RigMember* Find(const std::string& sensor) const {
    for (const auto& m : members)
      if (m.sensor_id == sensor) return &m;
    return nullptr;
  }
};

using Trajectory = std::map<RecordKey, Pose>;

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // row-major, meters, 0 = invalid

  float At(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

  /// Depth at the nearest pixel, 0 when outside the image.
  float Nearest(const Point2& px) const {
    const long x = std::lround(std::floor(px.x()));
    const long y = std::lround(std::floor(px.y()));
    if (x < 0 || y < 0 || x >= width || y >= height) return 0.0f;
    return At(static_cast<int>(x), static_cast<int>(y));
  }

  bool operator==(const DepthImage&) const = default;
};

/// Row-major float32 array, one per image.
struct FeatureArray {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  std::span<const float> Row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }
  bool operator==(const FeatureArray&) const = default;
};

struct FeatureSet {
  std::string dtype = "float32";
  std::size_t dsize = 0;
  std::map<std::string, FeatureArray> images;

  bool operator==(const FeatureSet&) const = default;
};

struct KeypointMatch {
  std::uint32_t idx_a = 0;
  std::uint32_t idx_b = 0;
  float score = 0.0f;  // L2 descriptor distance, lower is better

  bool operator==(const KeypointMatch&) const = default;
};

using ImagePair = std::pair<std::string, std::string>;

struct FeatureStore {
  std::map<std::string, FeatureSet> keypoints;        // by keypoints type
  std::map<std::string, FeatureSet> descriptors;      // same type names
  std::map<std::string, FeatureSet> global_features;  // by descriptor type
  // keypoints type -> (path_a, path_b) with path_a < path_b -> matches
  std::map<std::string, std::map<ImagePair, std::vector<KeypointMatch>>> matches;

  bool operator==(const FeatureStore&) const = default;
};

struct Observation {
  std::string keypoints_type;
  std::string image_path;
  std::uint32_t keypoint_idx = 0;

  auto operator<=>(const Observation&) const = default;
};

struct MapPoint {
  Point3 xyz = Point3::Zero();
  std::optional<std::array<std::uint8_t, 3>> rgb;
};

struct ReconstructedMap {
  std::map<PointId, MapPoint> points;
  std::map<PointId, std::vector<Observation>> observations;

  std::size_t NumObservations() const {
    std::size_t n = 0;
    for (const auto& [id, obs] : observations) n += obs.size();
    return n;
  }
};

struct Dataset {
  std::vector<Camera> cameras;
  std::vector<Rig> rigs;
  Trajectory trajectories;
  std::map<RecordKey, std::string> image_records;
  std::map<RecordKey, std::string> depth_records;
  std::map<std::string, DepthImage> depth_maps;  // by depth_path
  FeatureStore features;
  std::optional<ReconstructedMap> map;

  const Camera* FindCamera(const std::string& id) const {
    for (const auto& c : cameras)
      if (c.sensor_id == id) return &c;
    return nullptr;
  }
  const Rig* FindRig(const std::string& id) const {
    for (const auto& r : rigs)
      if (r.rig_id == id) return &r;
    return nullptr;
  }
};

/// Image-path keyed view of a dataset's records; resolves rig-relative poses.
class ImageCatalog {
 public:
  struct Entry {
    Timestamp timestamp = 0;
    std::string sensor_id;
    const Camera* camera = nullptr;
  };

  explicit ImageCatalog(const Dataset& ds) : ds_(&ds) {
    for (const auto& [key, path] : ds.image_records)
      entries_[path] = Entry{key.first, key.second, ds.FindCamera(key.second)};
  }

  const Entry* Find(const std::string& image) const {
    auto it = entries_.find(image);
    return it == entries_.end() ? nullptr : &it->second;
  }

  const Camera& CameraOf(const std::string& image) const {
    const Entry* e = Find(image);
    if (!e || !e->camera) throw UnknownSensorRef("no camera for image " + image);
    return *e->camera;
  }

  /// World-to-camera pose from the trajectory, either stored for the sensor
  /// itself or for a rig containing it.
  std::optional<Pose> PoseOf(const std::string& image) const {
    const Entry* e = Find(image);
    if (!e) return std::nullopt;
    auto it = ds_->trajectories.find({e->timestamp, e->sensor_id});
    if (it != ds_->trajectories.end()) return it->second;
    for (const auto& rig : ds_->rigs) {
      const RigMember* m = rig.Find(e->sensor_id);
      if (!m) continue;
      auto rt = ds_->trajectories.find({e->timestamp, rig.rig_id});
      if (rt != ds_->trajectories.end()) return Compose(m->rig_to_sensor, rt->second);
    }
    return std::nullopt;
  }

  Pose RequirePose(const std::string& image) const {
    auto p = PoseOf(image);
    if (!p) throw MissingPose("no pose for image " + image);
    return *p;
  }

  std::vector<std::string> Images() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [path, e] : entries_) out.push_back(path);
    return out;
  }

  std::size_t size() const { return entries_.size(); }

 private:
  const Dataset* ds_;
  std::map<std::string, Entry> entries_;
};

namespace detail {

inline std::vector<std::string> PoseFields(const Pose& p) {
  const Pose c = p.Canonical();
  return {csv::FormatReal(c.rotation.w()),      csv::FormatReal(c.rotation.x()),
          csv::FormatReal(c.rotation.y()),      csv::FormatReal(c.rotation.z()),
          csv::FormatReal(c.translation.x()),   csv::FormatReal(c.translation.y()),
          csv::FormatReal(c.translation.z())};
}

/// Quaternions within 1e-9 of unit norm are kept verbatim; slightly
/// non-unit input (e.g. printed with few digits) is renormalized.
inline Pose ParsePose(const csv::Table& t, const csv::Row& row, std::size_t first) {
  Eigen::Quaterniond q(t.Real(row, first), t.Real(row, first + 1),
                       t.Real(row, first + 2), t.Real(row, first + 3));
  const Eigen::Vector3d tr(t.Real(row, first + 4), t.Real(row, first + 5),
                           t.Real(row, first + 6));
  const double n = q.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-3 || !tr.allFinite())
    t.Fail(row, "invalid pose (quaternion norm " + csv::FormatReal(n) + ")");
  if (std::abs(n - 1.0) > 1e-9) q.normalize();
  return {q, tr};
}

inline std::string Ts(Timestamp t) { return std::to_string(t); }

inline const char* FeatureListName(const std::string& kind) {
  if (kind == "keypoints") return "keypoints.txt";
  if (kind == "descriptors") return "descriptors.txt";
  return "global_features.txt";
}

inline const char* FeatureExtension(const std::string& kind) {
  if (kind == "keypoints") return ".kpt";
  if (kind == "descriptors") return ".desc";
  return ".gfeat";
}

inline bool EndsWith(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline std::map<std::string, FeatureSet> LoadFeatureKind(const fs::path& base,
                                                         const std::string& kind) {
  std::map<std::string, FeatureSet> out;
  if (!fs::is_directory(base)) return out;
  for (const auto& dir : fs::directory_iterator(base)) {
    if (!dir.is_directory()) continue;
    const std::string type = dir.path().filename().string();
    const fs::path list = dir.path() / FeatureListName(kind);
    const csv::Table t = csv::Table::Read(list);
    if (t.rows().size() != 1)
      throw MalformedCsv(list.string() + ": expected exactly one descriptor row");
    const csv::Row& row = t.rows().front();
    t.ExpectFields(row, 3, 3);
    FeatureSet set;
    if (t.Text(row, 0) != type) t.Fail(row, "name does not match directory");
    set.dtype = t.Text(row, 1);
    if (set.dtype != "float32") t.Fail(row, "unsupported dtype " + set.dtype);
    set.dsize = t.Integer<std::size_t>(row, 2);
    if (set.dsize == 0) t.Fail(row, "dsize must be positive");
    const std::string ext = FeatureExtension(kind);
    for (const auto& f : fs::recursive_directory_iterator(dir.path())) {
      if (!f.is_regular_file()) continue;
      const std::string rel = fs::relative(f.path(), dir.path()).generic_string();
      if (!EndsWith(rel, ext)) continue;
      FeatureArray arr;
      arr.data = csv::ReadFloats(f.path());
      arr.cols = set.dsize;
      if (arr.data.size() % set.dsize != 0)
        throw BinaryShapeMismatch(f.path().string() + ": " +
                                  std::to_string(arr.data.size()) +
                                  " floats is not a multiple of dsize " +
                                  std::to_string(set.dsize));
      arr.rows = arr.data.size() / set.dsize;
      set.images.emplace(rel.substr(0, rel.size() - ext.size()), std::move(arr));
    }
    out.emplace(type, std::move(set));
  }
  return out;
}

inline void SaveFeatureKind(const fs::path& base, const std::string& kind,
                            const std::map<std::string, FeatureSet>& sets) {
  for (const auto& [type, set] : sets) {
    const fs::path dir = base / type;
    csv::WriteTable(dir / FeatureListName(kind), kind,
                    {{type, set.dtype, std::to_string(set.dsize)}});
    for (const auto& [image, arr] : set.images)
      csv::WriteFloats(dir / (image + FeatureExtension(kind)), arr.data);
  }
}

}  // namespace detail

inline DepthImage LoadDepthMap(const fs::path& path) {
  const fs::path meta_path = path.string() + ".meta";
  const csv::Table meta = csv::Table::Read(meta_path);
  if (meta.rows().size() != 1)
    throw MalformedCsv(meta_path.string() + ": expected one row");
  const csv::Row& row = meta.rows().front();
  meta.ExpectFields(row, 2, 2);
  DepthImage img;
  img.width = meta.Integer<int>(row, 0);
  img.height = meta.Integer<int>(row, 1);
  if (img.width <= 0 || img.height <= 0) meta.Fail(row, "non-positive size");
  img.data = csv::ReadFloats(path);
  const std::size_t expected = static_cast<std::size_t>(img.width) * img.height;
  if (img.data.size() != expected)
    throw SizeMismatch(path.string() + ": payload has " +
                       std::to_string(img.data.size()) + " values, meta declares " +
                       std::to_string(img.width) + "x" + std::to_string(img.height));
  for (float d : img.data)
    if (!(d >= 0.0f))
      throw NegativeDepth(path.string() + ": negative or NaN depth value");
  return img;
}

inline void SaveDepthMap(const DepthImage& img, const fs::path& path) {
  if (img.data.size() != static_cast<std::size_t>(img.width) * img.height)
    throw SizeMismatch(path.string() + ": depth payload does not match size");
  csv::WriteFloats(path, img.data);
  csv::WriteTable(path.string() + ".meta", "depth_meta",
                  {{std::to_string(img.width), std::to_string(img.height)}});
}

/// Checks every dataset invariant; throws the matching error on the first
/// violation.
inline void ValidateDataset(const Dataset& ds) {
  std::set<std::string> sensor_ids;
  for (const auto& c : ds.cameras) {
    if (!sensor_ids.insert(c.sensor_id).second)
      throw InvariantViolation("duplicate sensor id " + c.sensor_id);
    if (auto v = c.Violation(); !v.empty())
      throw InvariantViolation("camera " + c.sensor_id + ": " + v);
  }
  std::set<std::string> rig_ids;
  for (const auto& r : ds.rigs) {
    if (!rig_ids.insert(r.rig_id).second)
      throw InvariantViolation("duplicate rig id " + r.rig_id);
    std::set<std::string> members;
    for (const auto& m : r.members) {
      if (!sensor_ids.count(m.sensor_id))
        throw UnknownSensorRef("rig " + r.rig_id + " references unknown sensor " +
                               m.sensor_id);
      if (!members.insert(m.sensor_id).second)
        throw InvariantViolation("rig " + r.rig_id + " lists sensor " +
                                 m.sensor_id + " twice");
    }
  }
  for (const auto& [key, pose] : ds.trajectories)
    if (!sensor_ids.count(key.second) && !rig_ids.count(key.second))
      throw UnknownSensorRef("trajectory references unknown device " + key.second);
  for (const auto& [key, path] : ds.image_records)
    if (!sensor_ids.count(key.second))
      throw UnknownSensorRef("camera record references unknown sensor " + key.second);
  for (const auto& [key, path] : ds.depth_records) {
    if (!sensor_ids.count(key.second))
      throw UnknownSensorRef("depth record references unknown sensor " + key.second);
    if (!ds.depth_maps.count(path))
      throw InvariantViolation("depth record without depth data: " + path);
  }

  const auto& f = ds.features;
  for (const auto& [type, set] : f.keypoints) {
    if (set.dsize < 2)
      throw InvariantViolation("keypoints " + type + ": dsize must be >= 2");
    for (const auto& [image, arr] : set.images)
      if (arr.cols != set.dsize || arr.data.size() != arr.rows * arr.cols)
        throw BinaryShapeMismatch("keypoints " + type + "/" + image);
  }
  for (const auto& [type, set] : f.descriptors) {
    auto kp = f.keypoints.find(type);
    for (const auto& [image, arr] : set.images) {
      if (arr.cols != set.dsize || arr.data.size() != arr.rows * arr.cols)
        throw BinaryShapeMismatch("descriptors " + type + "/" + image);
      if (kp == f.keypoints.end() || !kp->second.images.count(image) ||
          kp->second.images.at(image).rows != arr.rows)
        throw BinaryShapeMismatch("descriptors " + type + "/" + image +
                                  ": row count differs from keypoints");
    }
  }
  for (const auto& [type, set] : f.global_features)
    for (const auto& [image, arr] : set.images)
      if (arr.rows != 1 || arr.cols != set.dsize || arr.data.size() != set.dsize)
        throw BinaryShapeMismatch("global feature " + type + "/" + image +
                                  " must be a single row of dsize values");
  for (const auto& [type, pairs] : f.matches) {
    auto kp = f.keypoints.find(type);
    for (const auto& [pair, list] : pairs) {
      const std::string name = type + "/" + pair.first + ".overlapping/" + pair.second;
      if (!(pair.first < pair.second))
        throw InvariantViolation("match pair not in lexicographic order: " + name);
      if (kp == f.keypoints.end() || !kp->second.images.count(pair.first) ||
          !kp->second.images.count(pair.second))
        throw BinaryShapeMismatch(name + ": matches without keypoints");
      const std::size_t na = kp->second.images.at(pair.first).rows;
      const std::size_t nb = kp->second.images.at(pair.second).rows;
      for (const auto& m : list)
        if (m.idx_a >= na || m.idx_b >= nb)
          throw BinaryShapeMismatch(name + ": match index out of range");
    }
  }

  if (ds.map) {
    std::set<std::tuple<std::string, std::string, std::uint32_t>> used;
    for (const auto& [id, obs] : ds.map->observations) {
      if (!ds.map->points.count(id))
        throw DanglingObservation("observation of unknown point " + std::to_string(id));
      for (const auto& o : obs) {
        auto kp = f.keypoints.find(o.keypoints_type);
        if (kp == f.keypoints.end() || !kp->second.images.count(o.image_path) ||
            o.keypoint_idx >= kp->second.images.at(o.image_path).rows)
          throw DanglingObservation("point " + std::to_string(id) +
                                    " observes missing keypoint " + o.image_path +
                                    "#" + std::to_string(o.keypoint_idx));
        if (!used.emplace(o.keypoints_type, o.image_path, o.keypoint_idx).second)
          throw InvariantViolation("keypoint " + o.image_path + "#" +
                                   std::to_string(o.keypoint_idx) +
                                   " observes more than one point");
      }
    }
  }
}

inline Dataset LoadDataset(const fs::path& root) {
  const fs::path sensors = root / "sensors";
  if (!fs::exists(sensors / "sensors.txt"))
    throw IoError("missing mandatory file " + (sensors / "sensors.txt").string());
  Dataset ds;

  {
    const auto t = csv::Table::Read(sensors / "sensors.txt");
    for (const auto& row : t.rows()) {
      if (row.fields.size() < 4) t.Fail(row, "expected sensor_id, model, width, height, params");
      Camera cam;
      cam.sensor_id = t.Text(row, 0);
      const auto model = ParseCameraModel(t.Text(row, 1));
      if (!model)
        t.Fail(row, "unsupported camera model '" + row.fields[1] +
                        "' (only SIMPLE_PINHOLE and PINHOLE; distortion models are not supported)");
      cam.model = *model;
      cam.width = t.Integer<int>(row, 2);
      cam.height = t.Integer<int>(row, 3);
      for (std::size_t i = 4; i < row.fields.size(); ++i) cam.params.push_back(t.Real(row, i));
      if (auto v = cam.Violation(); !v.empty()) t.Fail(row, v);
      if (ds.FindCamera(cam.sensor_id)) t.Fail(row, "duplicate sensor id");
      ds.cameras.push_back(std::move(cam));
    }
  }
  if (fs::exists(sensors / "rigs.txt")) {
    const auto t = csv::Table::Read(sensors / "rigs.txt");
    std::map<std::string, Rig> rigs;
    for (const auto& row : t.rows()) {
      t.ExpectFields(row, 9, 9);
      Rig& rig = rigs[t.Text(row, 0)];
      rig.rig_id = row.fields[0];
      RigMember m{t.Text(row, 1), detail::ParsePose(t, row, 2)};
      if (!ds.FindCamera(m.sensor_id))
        throw UnknownSensorRef(t.path() + ":" + std::to_string(row.line) +
                               ": unknown sensor " + m.sensor_id);
      if (rig.Find(m.sensor_id)) t.Fail(row, "sensor listed twice in rig");
      rig.members.push_back(std::move(m));
    }
    for (auto& [id, rig] : rigs) ds.rigs.push_back(std::move(rig));
  }
  if (fs::exists(sensors / "trajectories.txt")) {
    const auto t = csv::Table::Read(sensors / "trajectories.txt");
    for (const auto& row : t.rows()) {
      t.ExpectFields(row, 9, 9);
      RecordKey key{t.Integer<Timestamp>(row, 0), t.Text(row, 1)};
      if (!ds.FindCamera(key.second) && !ds.FindRig(key.second))
        throw UnknownSensorRef(t.path() + ":" + std::to_string(row.line) +
                               ": unknown device " + key.second);
      if (!ds.trajectories.emplace(key, detail::ParsePose(t, row, 2)).second)
        t.Fail(row, "duplicate (timestamp, device_id)");
    }
  }
  auto load_records = [&](const char* file, std::map<RecordKey, std::string>& out) {
    if (!fs::exists(sensors / file)) return;
    const auto t = csv::Table::Read(sensors / file);
    for (const auto& row : t.rows()) {
      t.ExpectFields(row, 3, 3);
      RecordKey key{t.Integer<Timestamp>(row, 0), t.Text(row, 1)};
      if (!ds.FindCamera(key.second))
        throw UnknownSensorRef(t.path() + ":" + std::to_string(row.line) +
                               ": unknown sensor " + key.second);
      if (!out.emplace(key, t.Text(row, 2)).second)
        t.Fail(row, "duplicate (timestamp, sensor_id)");
    }
  };
  load_records("records_camera.txt", ds.image_records);
  load_records("records_depth.txt", ds.depth_records);
  for (const auto& [key, path] : ds.depth_records)
    ds.depth_maps.emplace(path, LoadDepthMap(sensors / "records_data" / path));

  const fs::path recon = root / "reconstruction";
  ds.features.keypoints = detail::LoadFeatureKind(recon / "keypoints", "keypoints");
  ds.features.descriptors = detail::LoadFeatureKind(recon / "descriptors", "descriptors");
  ds.features.global_features =
      detail::LoadFeatureKind(recon / "global_features", "global_features");

  if (fs::is_directory(recon / "matches")) {
    for (const auto& dir : fs::directory_iterator(recon / "matches")) {
      if (!dir.is_directory()) continue;
      auto& pairs = ds.features.matches[dir.path().filename().string()];
      for (const auto& f : fs::recursive_directory_iterator(dir.path())) {
        if (!f.is_regular_file()) continue;
        const std::string rel = fs::relative(f.path(), dir.path()).generic_string();
        if (!detail::EndsWith(rel, ".matches")) continue;
        const auto sep = rel.find(".overlapping/");
        if (sep == std::string::npos)
          throw BinaryShapeMismatch(f.path().string() + ": not a pair path");
        const std::string a = rel.substr(0, sep);
        const std::string b =
            rel.substr(sep + 13, rel.size() - sep - 13 - std::string_view(".matches").size());
        const auto raw = csv::ReadFloats(f.path());
        if (raw.size() % 3 != 0)
          throw BinaryShapeMismatch(f.path().string() + ": expected rows of 3 floats");
        std::vector<KeypointMatch> list;
        list.reserve(raw.size() / 3);
        for (std::size_t i = 0; i < raw.size(); i += 3) {
          if (!(raw[i] >= 0.0f) || !(raw[i + 1] >= 0.0f) ||
              raw[i] != std::floor(raw[i]) || raw[i + 1] != std::floor(raw[i + 1]))
            throw BinaryShapeMismatch(f.path().string() + ": non-integer match index");
          list.push_back({static_cast<std::uint32_t>(raw[i]),
                          static_cast<std::uint32_t>(raw[i + 1]), raw[i + 2]});
        }
        pairs.emplace(ImagePair{a, b}, std::move(list));
      }
    }
  }

  if (fs::exists(recon / "points3d.txt")) {
    ReconstructedMap map;
    const auto t = csv::Table::Read(recon / "points3d.txt");
    for (const auto& row : t.rows()) {
      if (row.fields.size() != 4 && row.fields.size() != 7)
        t.Fail(row, "expected point_id, x, y, z[, r, g, b]");
      MapPoint p;
      p.xyz = {t.Real(row, 1), t.Real(row, 2), t.Real(row, 3)};
      if (!p.xyz.allFinite()) t.Fail(row, "non-finite coordinates");
      if (row.fields.size() == 7) {
        std::array<std::uint8_t, 3> rgb{};
        for (int c = 0; c < 3; ++c) {
          const int v = t.Integer<int>(row, 4 + c);
          if (v < 0 || v > 255) t.Fail(row, "color out of range");
          rgb[c] = static_cast<std::uint8_t>(v);
        }
        p.rgb = rgb;
      }
      if (!map.points.emplace(t.Integer<PointId>(row, 0), p).second)
        t.Fail(row, "duplicate point id");
    }
    if (fs::exists(recon / "observations.txt")) {
      const auto o = csv::Table::Read(recon / "observations.txt");
      for (const auto& row : o.rows()) {
        o.ExpectFields(row, 4, 4);
        const PointId id = o.Integer<PointId>(row, 0);
        if (!map.points.count(id))
          throw DanglingObservation(o.path() + ":" + std::to_string(row.line) +
                                    ": unknown point " + std::to_string(id));
        map.observations[id].push_back(
            {o.Text(row, 1), o.Text(row, 2), o.Integer<std::uint32_t>(row, 3)});
      }
    }
    ds.map = std::move(map);
  }

  ValidateDataset(ds);
  return ds;
}

inline void SaveDataset(const Dataset& ds, const fs::path& root) {
  ValidateDataset(ds);
  const fs::path sensors = root / "sensors";

  std::vector<const Camera*> cams;
  for (const auto& c : ds.cameras) cams.push_back(&c);
  std::sort(cams.begin(), cams.end(),
            [](const Camera* a, const Camera* b) { return a->sensor_id < b->sensor_id; });
  std::vector<std::vector<std::string>> rows;
  for (const Camera* c : cams) {
    std::vector<std::string> r{c->sensor_id, CameraModelName(c->model),
                               std::to_string(c->width), std::to_string(c->height)};
    for (double p : c->params) r.push_back(csv::FormatReal(p));
    rows.push_back(std::move(r));
  }
  csv::WriteTable(sensors / "sensors.txt", "sensors", rows);

  if (!ds.rigs.empty()) {
    rows.clear();
    std::map<std::pair<std::string, std::string>, const Pose*> sorted;
    for (const auto& rig : ds.rigs)
      for (const auto& m : rig.members) sorted[{rig.rig_id, m.sensor_id}] = &m.rig_to_sensor;
    for (const auto& [key, pose] : sorted) {
      std::vector<std::string> r{key.first, key.second};
      for (auto& f : detail::PoseFields(*pose)) r.push_back(std::move(f));
      rows.push_back(std::move(r));
    }
    csv::WriteTable(sensors / "rigs.txt", "rigs", rows);
  }
  if (!ds.trajectories.empty()) {
    rows.clear();
    for (const auto& [key, pose] : ds.trajectories) {
      std::vector<std::string> r{detail::Ts(key.first), key.second};
      for (auto& f : detail::PoseFields(pose)) r.push_back(std::move(f));
      rows.push_back(std::move(r));
    }
    csv::WriteTable(sensors / "trajectories.txt", "trajectories", rows);
  }
  auto save_records = [&](const char* file, const char* name,
                          const std::map<RecordKey, std::string>& recs) {
    if (recs.empty()) return;
    std::vector<std::vector<std::string>> r;
    for (const auto& [key, path] : recs) r.push_back({detail::Ts(key.first), key.second, path});
    csv::WriteTable(sensors / file, name, r);
  };
  save_records("records_camera.txt", "records_camera", ds.image_records);
  save_records("records_depth.txt", "records_depth", ds.depth_records);
  for (const auto& [key, path] : ds.depth_records)
    SaveDepthMap(ds.depth_maps.at(path), sensors / "records_data" / path);

  const fs::path recon = root / "reconstruction";
  detail::SaveFeatureKind(recon / "keypoints", "keypoints", ds.features.keypoints);
  detail::SaveFeatureKind(recon / "descriptors", "descriptors", ds.features.descriptors);
  detail::SaveFeatureKind(recon / "global_features", "global_features",
                          ds.features.global_features);
  for (const auto& [type, pairs] : ds.features.matches) {
    for (const auto& [pair, list] : pairs) {
      std::vector<float> raw;
      raw.reserve(list.size() * 3);
      for (const auto& m : list) {
        if (m.idx_a >= (1u << 24) || m.idx_b >= (1u << 24))
          throw InvariantViolation("match index exceeds float32 integer range");
        raw.push_back(static_cast<float>(m.idx_a));
        raw.push_back(static_cast<float>(m.idx_b));
        raw.push_back(m.score);
      }
      csv::WriteFloats(recon / "matches" / type /
                           (pair.first + ".overlapping") / (pair.second + ".matches"),
                       raw);
    }
  }

  if (ds.map) {
    rows.clear();
    for (const auto& [id, p] : ds.map->points) {
      std::vector<std::string> r{std::to_string(id), csv::FormatReal(p.xyz.x()),
                                 csv::FormatReal(p.xyz.y()), csv::FormatReal(p.xyz.z())};
      if (p.rgb)
        for (auto c : *p.rgb) r.push_back(std::to_string(c));
      rows.push_back(std::move(r));
    }
    csv::WriteTable(recon / "points3d.txt", "points3d", rows);
    rows.clear();
    for (const auto& [id, obs] : ds.map->observations) {
      std::vector<Observation> sorted = obs;
      std::sort(sorted.begin(), sorted.end());
      for (const auto& o : sorted)
        rows.push_back({std::to_string(id), o.keypoints_type, o.image_path,
                        std::to_string(o.keypoint_idx)});
    }
    csv::WriteTable(recon / "observations.txt", "observations", rows);
  }
}

}  // namespace locmap
