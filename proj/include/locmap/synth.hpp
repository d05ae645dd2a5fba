#pragma once

// Synthetic scenes with known geometry: the ground truth for end-to-end tests.
//
// Points are drawn uniformly in a cube of side scene_extent_m centred on the
// origin, each with a random near-horizontal surface normal. Cameras sit on a
// horizontal ring around the cube and look inwards. A point is seen by a
// camera when it faces the camera (within visibility_cone_deg of its normal),
// projects into the image and wins the z-buffer at its own pixel, where every
// point is drawn as a disk of splat_radius_px.
//
// With a rig, n_map_cams and n_query_cams count rig frames; each frame holds
// one image per rig member.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "locmap/csv.hpp"
#include "locmap/datastore.hpp"
#include "locmap/errors.hpp"
#include "locmap/evaluation.hpp"
#include "locmap/geometry.hpp"
#include "locmap/random.hpp"

namespace locmap {

struct SynthConfig {
  struct RigSpec {
    int n_cams = 2;
    std::vector<double> baselines_m;  // x offset of members 1..n-1 in the rig frame
  };
  struct PoseNoise {
    double sigma_t_m = 0.0;
    double sigma_r_deg = 0.0;
  };

  std::uint64_t seed = 0;
  int n_points = 2000;
  int n_map_cams = 40;
  int n_query_cams = 10;
  double scene_extent_m = 10.0;
  double pixel_noise_sigma = 0.5;
  int descriptor_dim_local = 64;
  int descriptor_dim_global = 256;
  double outlier_fraction = 0.0;  // share of all keypoints of an image
  std::optional<RigSpec> rig;
  bool depth_render = false;
  std::optional<PoseNoise> pose_noise;  // applied to stored training poses

  int width = 1024;
  int height = 768;
  double focal_px = 800.0;
  double ring_radius_factor = 1.6;  // ring radius / scene extent
  double visibility_cone_deg = 70.0;
  double splat_radius_px = 2.0;
  double descriptor_noise = 0.1;  // norm of the per-view descriptor perturbation
  int n_global_types = 1;
  std::string keypoints_type = "synth";

  void Validate() const {
    if (n_points < 0 || n_map_cams < 0 || n_query_cams < 0)
      throw ConfigError("synth: counts must be non-negative");
    if (!(scene_extent_m > 0.0) || !(focal_px > 0.0) || width <= 0 || height <= 0)
      throw ConfigError("synth: extent, focal length and image size must be positive");
    if (!(pixel_noise_sigma >= 0.0) || !(descriptor_noise >= 0.0))
      throw ConfigError("synth: noise levels must be non-negative");
    if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0))
      throw ConfigError("synth: outlier_fraction must be in [0, 1)");
    if (descriptor_dim_local < 1 || descriptor_dim_global < 1 || n_global_types < 1)
      throw ConfigError("synth: descriptor dimensions must be positive");
    if (!(ring_radius_factor > 0.9) || !(splat_radius_px >= 0.75))
      throw ConfigError("synth: ring must enclose the scene and splats must cover a pixel");
    if (!(visibility_cone_deg > 0.0 && visibility_cone_deg <= 90.0))
      throw ConfigError("synth: visibility cone must be in (0, 90] degrees");
    if (rig) {
      if (rig->n_cams < 1) throw ConfigError("synth: rig needs at least one camera");
      if (!rig->baselines_m.empty() &&
          rig->baselines_m.size() != static_cast<std::size_t>(rig->n_cams - 1))
        throw ConfigError("synth: rig needs n_cams - 1 baselines");
    }
    if (pose_noise && (!(pose_noise->sigma_t_m >= 0.0) || !(pose_noise->sigma_r_deg >= 0.0)))
      throw ConfigError("synth: pose noise must be non-negative");
  }
};

struct GroundTruth {
  struct Correspondence {
    std::string image_path;
    std::uint32_t keypoint_idx = 0;
    PointId point_id = 0;

    auto operator<=>(const Correspondence&) const = default;
  };

  GroundTruthPoses poses;  // every image, true world-to-camera
  std::map<PointId, Point3> points;
  std::vector<Correspondence> correspondences;  // sorted
  std::vector<std::string> map_images;
  std::vector<std::string> query_images;
};

struct SynthScene {
  Dataset mapping;
  Dataset query;
  GroundTruth truth;
};

inline std::string GlobalTypeName(int t) {
  return t == 0 ? "vis_hist" : "vis_hist_" + std::to_string(t);
}

namespace synth_detail {

enum Domain : std::uint64_t {
  kPointPosition = 1,
  kPointNormal,
  kPointDescriptor,
  kMapCamera,
  kQueryCamera,
  kKeypointNoise,
  kDescriptorNoise,
  kOutlier,
  kShuffle,
  kPoseNoise,
};

/// World-to-camera rotation looking along `forward` with world z up.
inline Eigen::Quaterniond LookRotation(const Eigen::Vector3d& forward, double roll_rad) {
  const Eigen::Vector3d f = forward.normalized();
  const Eigen::Vector3d right = f.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d down = f.cross(right);
  Eigen::Matrix3d R;
  R.row(0) = right;
  R.row(1) = down;
  R.row(2) = f;
  const Eigen::Quaterniond roll(Eigen::AngleAxisd(roll_rad, Eigen::Vector3d::UnitZ()));
  return (roll * Eigen::Quaterniond(R)).normalized();
}

inline Pose RingPose(const SynthConfig& cfg, Domain domain, int index, int count, double phase) {
  CounterRng rng(cfg.seed, domain, static_cast<std::uint64_t>(index));
  const double e = cfg.scene_extent_m;
  const double step = 2.0 * std::numbers::pi / std::max(count, 1);
  const double theta = step * (index + phase) + rng.Uniform(-0.2, 0.2) * step;
  const double radius = cfg.ring_radius_factor * e * rng.Uniform(0.95, 1.05);
  const Point3 center(radius * std::cos(theta), radius * std::sin(theta),
                      rng.Uniform(-0.1, 0.1) * e);
  const Point3 target(rng.Uniform(-0.05, 0.05) * e, rng.Uniform(-0.05, 0.05) * e,
                      rng.Uniform(-0.05, 0.05) * e);
  const double roll = rng.Normal() * 2.0 * kDegToRad;
  return Pose::FromCenter(LookRotation(target - center, roll), center);
}

inline Eigen::VectorXd UnitGaussian(CounterRng& rng, int dim) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.Normal();
  const double n = v.norm();
  return n > 0.0 ? Eigen::VectorXd(v / n) : v;
}

struct Visible {
  PointId id;
  Point2 pixel;  // noiseless projection
  double depth;  // camera-frame z
};

/// Z-buffer of point splats; returns the visible points and the buffer.
inline std::vector<Visible> RenderPoints(const SynthConfig& cfg, const Camera& cam,
                                         const Pose& pose, const std::vector<Point3>& points,
                                         const std::vector<Eigen::Vector3d>& normals,
                                         std::vector<double>& zbuf) {
  const int W = cam.width, H = cam.height;
  zbuf.assign(static_cast<std::size_t>(W) * H, std::numeric_limits<double>::infinity());
  const double cos_cone = std::cos(cfg.visibility_cone_deg * kDegToRad);
  const Point3 center = pose.Center();
  std::vector<Visible> candidates;
  for (std::size_t p = 0; p < points.size(); ++p) {
    const Point3 xc = pose * points[p];
    if (xc.z() <= 0.1) continue;
    const Eigen::Vector3d to_cam = (center - points[p]).normalized();
    if (to_cam.dot(normals[p]) < cos_cone) continue;
    const auto px = Project(cam, pose, points[p]);
    if (!px || px->x() < 0.0 || px->y() < 0.0 || px->x() >= W || px->y() >= H) continue;
    candidates.push_back({p, *px, xc.z()});
    const double r = cfg.splat_radius_px;
    const int x0 = std::max(0, static_cast<int>(std::floor(px->x() - r)));
    const int x1 = std::min(W - 1, static_cast<int>(std::floor(px->x() + r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(px->y() - r)));
    const int y1 = std::min(H - 1, static_cast<int>(std::floor(px->y() + r)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - px->x(), dy = y + 0.5 - px->y();
        if (dx * dx + dy * dy > r * r) continue;
        double& z = zbuf[static_cast<std::size_t>(y) * W + x];
        z = std::min(z, xc.z());
      }
  }
  std::vector<Visible> out;
  for (const auto& v : candidates) {
    const int x = static_cast<int>(std::floor(v.pixel.x()));
    const int y = static_cast<int>(std::floor(v.pixel.y()));
    if (zbuf[static_cast<std::size_t>(y) * W + x] == v.depth) out.push_back(v);
  }
  return out;
}

inline Pose PerturbPose(const Pose& p, const SynthConfig::PoseNoise& noise, std::uint64_t seed,
                        std::uint64_t entity) {
  CounterRng rng(seed, kPoseNoise, entity);
  Eigen::Vector3d dc, dr;
  for (int i = 0; i < 3; ++i) dc(i) = rng.Normal() * noise.sigma_t_m;
  for (int i = 0; i < 3; ++i) dr(i) = rng.Normal() * noise.sigma_r_deg * kDegToRad;
  const double angle = dr.norm();
  const Eigen::Quaterniond dq =
      angle > 0.0 ? Eigen::Quaterniond(Eigen::AngleAxisd(angle, dr / angle))
                  : Eigen::Quaterniond::Identity();
  return Pose::FromCenter((dq * p.rotation).normalized(), p.Center() + dc);
}

inline std::string ImageName(const std::string& sensor, std::uint64_t ts, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(ts));
  return sensor + "/" + buf + ext;
}

}  // namespace synth_detail

/// Depth image of the plane n.x = d seen from `pose`, sampled at pixel
/// centers; 0 where the plane is behind the camera or parallel to the ray.
inline DepthImage RenderPlaneDepth(const Camera& cam, const Pose& pose,
                                   const Eigen::Vector3d& normal, double d) {
  DepthImage img;
  img.width = cam.width;
  img.height = cam.height;
  img.data.assign(static_cast<std::size_t>(cam.width) * cam.height, 0.0f);
  // plane in the camera frame: n_c . x = d_c
  const Eigen::Vector3d nc = pose.rotation * normal;
  const double dc = d + nc.dot(pose.translation);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const Eigen::Vector3d ray = cam.Unproject({x + 0.5, y + 0.5});
      const double denom = nc.dot(ray);
      if (std::abs(denom) < 1e-12) continue;
      const double z = dc / denom;  // ray has unit z
      if (z > 0.0) img.data[static_cast<std::size_t>(y) * cam.width + x] = static_cast<float>(z);
    }
  return img;
}

inline SynthScene GenerateScene(const SynthConfig& cfg) {
  using namespace synth_detail;
  cfg.Validate();
  SynthScene scene;
  const double e = cfg.scene_extent_m;

  std::vector<Point3> points(cfg.n_points);
  std::vector<Eigen::Vector3d> normals(cfg.n_points);
  std::vector<Eigen::VectorXd> base_desc(cfg.n_points);
  for (int p = 0; p < cfg.n_points; ++p) {
    CounterRng pos(cfg.seed, kPointPosition, p);
    points[p] = Point3(pos.Uniform(-0.5, 0.5), pos.Uniform(-0.5, 0.5), pos.Uniform(-0.5, 0.5)) * e;
    CounterRng nrm(cfg.seed, kPointNormal, p);
    const double az = nrm.Uniform(0.0, 2.0 * std::numbers::pi);
    const double el = nrm.Uniform(-20.0, 20.0) * kDegToRad;
    normals[p] = Eigen::Vector3d(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                                 std::sin(el));
    CounterRng desc(cfg.seed, kPointDescriptor, p);
    base_desc[p] = UnitGaussian(desc, cfg.descriptor_dim_local);
    scene.truth.points[p] = points[p];
  }

  const int n_members = cfg.rig ? cfg.rig->n_cams : 1;
  auto offset_of = [&](int member) {
    if (member == 0) return 0.0;
    if (cfg.rig && !cfg.rig->baselines_m.empty()) return cfg.rig->baselines_m[member - 1];
    return 0.3 * member;
  };

  auto build = [&](Dataset& ds, bool is_map) {
    const std::string prefix = is_map ? "cam" : "qcam";
    const std::string rig_id = is_map ? "rig" : "qrig";
    const int frames = is_map ? cfg.n_map_cams : cfg.n_query_cams;
    const Domain domain = is_map ? kMapCamera : kQueryCamera;
    const double phase = is_map ? 0.0 : 0.5;

    std::vector<Pose> rig_to_sensor(n_members);
    for (int m = 0; m < n_members; ++m) {
      const std::string id = prefix + std::to_string(m);
      ds.cameras.push_back(Camera::Pinhole(id, cfg.width, cfg.height, cfg.focal_px, cfg.focal_px,
                                           cfg.width / 2.0, cfg.height / 2.0));
      rig_to_sensor[m] = Pose(Eigen::Quaterniond::Identity(), Eigen::Vector3d(-offset_of(m), 0, 0));
    }
    if (cfg.rig) {
      Rig rig{rig_id, {}};
      for (int m = 0; m < n_members; ++m)
        rig.members.push_back({prefix + std::to_string(m), rig_to_sensor[m]});
      ds.rigs.push_back(std::move(rig));
    }

    FeatureSet kpts{"float32", 2, {}};
    FeatureSet descs{"float32", static_cast<std::size_t>(cfg.descriptor_dim_local), {}};
    std::vector<FeatureSet> globals(cfg.n_global_types,
                                    FeatureSet{"float32",
                                               static_cast<std::size_t>(cfg.descriptor_dim_global),
                                               {}});
    std::vector<double> zbuf;

    for (int f = 0; f < frames; ++f) {
      const Timestamp ts = static_cast<Timestamp>(f);
      const Pose frame_pose = RingPose(cfg, domain, f, frames, phase);
      if (is_map) {
        const std::string device = cfg.rig ? rig_id : prefix + "0";
        Pose stored = frame_pose;
        if (cfg.pose_noise)
          stored = PerturbPose(frame_pose, *cfg.pose_noise, cfg.seed,
                               HashString(device) ^ SplitMix64(ts));
        ds.trajectories[{ts, device}] = stored.Canonical();
      }
      for (int m = 0; m < n_members; ++m) {
        const std::string sensor = prefix + std::to_string(m);
        const Camera& cam = ds.cameras[m];
        const Pose pose = Compose(rig_to_sensor[m], frame_pose).Canonical();
        const std::string image = ImageName(sensor, ts, ".jpg");
        const std::uint64_t ih = HashString(image);
        ds.image_records[{ts, sensor}] = image;
        scene.truth.poses[image] = pose;
        (is_map ? scene.truth.map_images : scene.truth.query_images).push_back(image);

        const auto visible = RenderPoints(cfg, cam, pose, points, normals, zbuf);
        const std::size_t n_true = visible.size();
        const std::size_t n_out = static_cast<std::size_t>(std::llround(
            static_cast<double>(n_true) * cfg.outlier_fraction / (1.0 - cfg.outlier_fraction)));
        const std::size_t n = n_true + n_out;

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        CounterRng shuffle(cfg.seed, kShuffle, ih);
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.Index(i)]);

        FeatureArray ka{n, 2, std::vector<float>(n * 2)};
        FeatureArray da{n, descs.dsize, std::vector<float>(n * descs.dsize)};
        auto put = [&](std::size_t slot, const Point2& px, const Eigen::VectorXd& d) {
          ka.data[slot * 2] = static_cast<float>(px.x());
          ka.data[slot * 2 + 1] = static_cast<float>(px.y());
          for (std::size_t k = 0; k < descs.dsize; ++k)
            da.data[slot * descs.dsize + k] = static_cast<float>(d(k));
        };
        const double comp_sigma = cfg.descriptor_noise / std::sqrt(cfg.descriptor_dim_local);
        for (std::size_t i = 0; i < n_true; ++i) {
          const auto& v = visible[i];
          CounterRng noise(cfg.seed, kKeypointNoise, ih ^ SplitMix64(v.id));
          const Point2 px = v.pixel + cfg.pixel_noise_sigma * Point2(noise.Normal(), noise.Normal());
          CounterRng dn(cfg.seed, kDescriptorNoise, ih ^ SplitMix64(v.id));
          Eigen::VectorXd d = base_desc[v.id];
          for (int k = 0; k < cfg.descriptor_dim_local; ++k) d(k) += comp_sigma * dn.Normal();
          d.normalize();
          put(order[i], px, d);
          scene.truth.correspondences.push_back(
              {image, static_cast<std::uint32_t>(order[i]), v.id});
        }
        CounterRng out(cfg.seed, kOutlier, ih);
        for (std::size_t i = n_true; i < n; ++i) {
          const Point2 px(out.Uniform(0.0, cfg.width), out.Uniform(0.0, cfg.height));
          put(order[i], px, UnitGaussian(out, cfg.descriptor_dim_local));
        }
        kpts.images[image] = std::move(ka);
        descs.images[image] = std::move(da);

        for (int t = 0; t < cfg.n_global_types; ++t) {
          Eigen::VectorXd h = Eigen::VectorXd::Zero(cfg.descriptor_dim_global);
          for (const auto& v : visible)
            h(SplitMix64(v.id * 0x100000001b3ull + static_cast<std::uint64_t>(t) + 1) %
              static_cast<std::uint64_t>(cfg.descriptor_dim_global)) += 1.0;
          if (h.norm() > 0.0) h.normalize();
          FeatureArray g{1, static_cast<std::size_t>(cfg.descriptor_dim_global), {}};
          for (int k = 0; k < cfg.descriptor_dim_global; ++k) g.data.push_back(static_cast<float>(h(k)));
          globals[t].images[image] = std::move(g);
        }

        if (is_map && cfg.depth_render) {
          DepthImage depth{cam.width, cam.height, std::vector<float>(zbuf.size(), 0.0f)};
          for (std::size_t i = 0; i < zbuf.size(); ++i)
            if (std::isfinite(zbuf[i])) depth.data[i] = static_cast<float>(zbuf[i]);
          const std::string path = ImageName(sensor, ts, ".depth");
          ds.depth_records[{ts, sensor}] = path;
          ds.depth_maps[path] = std::move(depth);
        }
      }
    }
    ds.features.keypoints[cfg.keypoints_type] = std::move(kpts);
    ds.features.descriptors[cfg.keypoints_type] = std::move(descs);
    for (int t = 0; t < cfg.n_global_types; ++t)
      ds.features.global_features[GlobalTypeName(t)] = std::move(globals[t]);
  };

  build(scene.mapping, true);
  build(scene.query, false);
  std::sort(scene.truth.correspondences.begin(), scene.truth.correspondences.end());
  std::sort(scene.truth.map_images.begin(), scene.truth.map_images.end());
  std::sort(scene.truth.query_images.begin(), scene.truth.query_images.end());
  return scene;
}

inline std::string PipelineToml(const SynthConfig& cfg) {
  std::string globals;
  for (int t = 0; t < cfg.n_global_types; ++t)
    globals += (t ? ", \"" : "\"") + GlobalTypeName(t) + "\"";
  const bool rgbd = cfg.depth_render;
  return "# synthetic scene, seed " + std::to_string(cfg.seed) +
         "\n"
         "[paths]\n"
         "mapping = \"mapping\"\n"
         "query = \"query\"\n"
         "ground_truth = \"ground_truth\"\n"
         "output = \"output\"\n"
         "\n"
         "[features]\n"
         "keypoints_type = \"" + cfg.keypoints_type + "\"\n"
         "global_types = [" + globals + "]\n"
         "\n"
         "[mapping]\n"
         "method = \"" + std::string(rgbd ? "rgbd" : "sfm") + "\"\n"
         "pairs = \"retrieval\"\n"
         "k = 20\n"
         "config = \"config2\"\n"
         "\n"
         "[matching]\n"
         "ratio = 0.8\n"
         "\n"
         "[localization]\n"
         "k = 20\n"
         "config = \"config2\"\n"
         "fusion = \"gharm\"\n"
         "seed = 0\n"
         "\n"
         "[postprocess]\n"
         "mode = \"rig+seq\"\n"
         "\n"
         "[evaluation]\n"
         "bins = \"outdoor\"\n";
}

/// mapping/ and query/ datastores, ground_truth/ (poses.txt, points3d.txt,
/// correspondences.txt) and pipeline.toml.
inline void WriteScene(const SynthScene& scene, const SynthConfig& cfg, const fs::path& out) {
  SaveDataset(scene.mapping, out / "mapping");
  SaveDataset(scene.query, out / "query");
  const fs::path gt = out / "ground_truth";
  SaveGroundTruthPoses(scene.truth.poses, gt / "poses.txt");
  std::vector<std::vector<std::string>> rows;
  for (const auto& [id, x] : scene.truth.points)
    rows.push_back({std::to_string(id), csv::FormatReal(x.x()), csv::FormatReal(x.y()),
                    csv::FormatReal(x.z())});
  csv::WriteTable(gt / "points3d.txt", "points3d", rows);
  rows.clear();
  for (const auto& c : scene.truth.correspondences)
    rows.push_back({c.image_path, std::to_string(c.keypoint_idx), std::to_string(c.point_id)});
  csv::WriteTable(gt / "correspondences.txt", "correspondences", rows);
  csv::WriteFile(out / "pipeline.toml", PipelineToml(cfg));
}

}  // namespace locmap
