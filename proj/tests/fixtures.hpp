#pragma once

// Small synthetic scenes shared by several test files.

#include <map>
#include <string>

#include "locmap/matching.hpp"
#include "locmap/synth.hpp"

namespace fixture {

inline locmap::SynthConfig SmallScene(std::uint64_t seed) {
  locmap::SynthConfig cfg;
  cfg.seed = seed;
  cfg.n_points = 300;
  cfg.n_map_cams = 8;
  cfg.n_query_cams = 3;
  cfg.width = 640;
  cfg.height = 480;
  cfg.focal_px = 500;
  cfg.descriptor_dim_local = 32;
  cfg.descriptor_dim_global = 64;
  return cfg;
}

/// Map made of the true points, observed by every true mapping keypoint.
inline locmap::ReconstructedMap MapFromTruth(const locmap::SynthScene& scene,
                                             const std::string& keypoints_type = "synth") {
  locmap::ReconstructedMap map;
  std::set<std::string> map_images(scene.truth.map_images.begin(), scene.truth.map_images.end());
  for (const auto& c : scene.truth.correspondences) {
    if (!map_images.count(c.image_path)) continue;
    map.points[c.point_id].xyz = scene.truth.points.at(c.point_id);
    map.observations[c.point_id].push_back({keypoints_type, c.image_path, c.keypoint_idx});
  }
  return map;
}

/// (image, keypoint) -> true point id.
inline std::map<std::pair<std::string, std::uint32_t>, locmap::PointId> TruthLookup(
    const locmap::GroundTruth& gt) {
  std::map<std::pair<std::string, std::uint32_t>, locmap::PointId> out;
  for (const auto& c : gt.correspondences) out[{c.image_path, c.keypoint_idx}] = c.point_id;
  return out;
}

/// Synthetic dataset with a rig, depth maps, matches and a map.
inline locmap::Dataset RichDataset(std::uint64_t seed) {
  locmap::SynthConfig cfg = SmallScene(seed);
  cfg.n_points = 120;
  cfg.n_map_cams = 4;
  cfg.width = 160;
  cfg.height = 120;
  cfg.focal_px = 120;
  cfg.rig = locmap::SynthConfig::RigSpec{2, {0.25}};
  cfg.depth_render = true;
  cfg.outlier_fraction = 0.1;
  auto scene = locmap::GenerateScene(cfg);
  locmap::Dataset ds = std::move(scene.mapping);
  const auto& images = scene.truth.map_images;
  locmap::PairList pairs;
  for (std::size_t i = 0; i + 1 < images.size(); ++i) pairs.push_back({images[i], images[i + 1], 1.0});
  ds.features.matches["synth"] = locmap::MatchPairs(ds.features.descriptors["synth"], pairs, locmap::MatchParams{});
  ds.map = MapFromTruth(scene);
  ds.map->points.begin()->second.rgb = std::array<std::uint8_t, 3>{1, 2, 255};
  return ds;
}

}  // namespace fixture
