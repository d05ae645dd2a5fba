#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "locmap/datastore.hpp"
#include "locmap/errors.hpp"
#include "locmap/geometry.hpp"
#include "locmap/matching.hpp"
#include "locmap/pairing.hpp"
#include "locmap/parallel.hpp"

namespace locmap {

struct MapperConfig {
  int min_num_matches = 15;
  double filter_max_reproj_error = 4.0;  // pixels

  static MapperConfig Config1() { return {15, 4.0}; }
  static MapperConfig Config2() { return {4, 12.0}; }
};

struct MapBuildStats {
  std::size_t pairs = 0;
  std::size_t pairs_kept = 0;
  std::size_t verified_matches = 0;
  std::size_t tracks = 0;
  std::size_t dropped_degenerate = 0;
  std::size_t dropped_reprojection = 0;
  std::size_t points = 0;
};

namespace detail {

inline const FeatureSet& RequireFeatures(const std::map<std::string, FeatureSet>& sets,
                                         const std::string& type, const char* what) {
  auto it = sets.find(type);
  if (it == sets.end())
    throw InvariantViolation(std::string("dataset has no ") + what + " of type '" + type + "'");
  return it->second;
}

/// Matches for every pair of the shortlist, reusing stored matches and
/// computing the missing ones, then epipolar verification with known poses.
inline PairMatches VerifiedPairMatches(const Dataset& ds, const ImageCatalog& catalog,
                                       const PairList& pairs, const MatchParams& mp,
                                       const std::string& type, unsigned threads) {
  const FeatureSet& kpts = RequireFeatures(ds.features.keypoints, type, "keypoints");
  const PairList unique = DeduplicateSymmetric(pairs);
  const std::map<ImagePair, std::vector<KeypointMatch>>* stored = nullptr;
  if (auto it = ds.features.matches.find(type); it != ds.features.matches.end())
    stored = &it->second;

  PairList missing;
  for (const auto& p : unique) {
    const auto key = std::minmax(p.image_a, p.image_b);
    if (!stored || !stored->count({key.first, key.second})) missing.push_back(p);
  }
  PairMatches all;
  if (!missing.empty())
    all = MatchPairs(RequireFeatures(ds.features.descriptors, type, "descriptors"), missing,
                     mp, threads);
  if (stored)
    for (const auto& p : unique) {
      const auto key = std::minmax(p.image_a, p.image_b);
      auto it = stored->find({key.first, key.second});
      if (it != stored->end()) all.insert(*it);
    }

  std::vector<std::pair<ImagePair, std::vector<KeypointMatch>>> items(all.begin(), all.end());
  ParallelFor(items.size(), threads, [&](std::size_t i) {
    auto& [pair, list] = items[i];
    const Pose pa = catalog.RequirePose(pair.first);
    const Pose pb = catalog.RequirePose(pair.second);
    auto ka = kpts.images.find(pair.first);
    auto kb = kpts.images.find(pair.second);
    if (ka == kpts.images.end() || kb == kpts.images.end())
      throw InvariantViolation("no keypoints for pair " + pair.first + " / " + pair.second);
    list = VerifyMatchesEpipolar(list, catalog.CameraOf(pair.first), pa,
                                 catalog.CameraOf(pair.second), pb, ka->second, kb->second,
                                 mp.epipolar_px);
  });
  return PairMatches(items.begin(), items.end());
}

}  // namespace detail

/// Map from known training poses: match the shortlist, verify with the
/// epipolar constraint, chain matches into tracks and triangulate each track.
/// Pairs with fewer than min_num_matches verified matches contribute nothing;
/// points whose largest reprojection error exceeds the filter are dropped.
inline ReconstructedMap TriangulateMap(const Dataset& ds, const PairList& pairs,
                                       const MatchParams& mp, const MapperConfig& mc,
                                       const std::string& keypoints_type,
                                       MapBuildStats* stats = nullptr,
                                       PairMatches* verified_out = nullptr,
                                       unsigned threads = 1) {
  if (mc.min_num_matches < 1 || !(mc.filter_max_reproj_error > 0.0))
    throw ConfigError("mapper configuration values must be positive");
  MapBuildStats local;
  MapBuildStats& st = stats ? *stats : local;
  st = {};
  ReconstructedMap map;
  if (pairs.empty()) return map;

  const ImageCatalog catalog(ds);
  for (const auto& p : pairs) {
    catalog.RequirePose(p.image_a);
    catalog.RequirePose(p.image_b);
  }
  const FeatureSet& kpts = detail::RequireFeatures(ds.features.keypoints, keypoints_type, "keypoints");
  PairMatches verified =
      detail::VerifiedPairMatches(ds, catalog, pairs, mp, keypoints_type, threads);
  st.pairs = verified.size();

  PairMatches kept;
  for (auto& [pair, list] : verified) {
    st.verified_matches += list.size();
    if (static_cast<int>(list.size()) >= mc.min_num_matches) kept.emplace(pair, list);
  }
  st.pairs_kept = kept.size();
  const std::vector<Track> tracks = BuildTracks(kept);
  st.tracks = tracks.size();
  if (verified_out) *verified_out = std::move(verified);

  enum class Outcome { kKept, kDegenerate, kReprojection };
  std::vector<std::pair<Outcome, Point3>> results(tracks.size());
  ParallelFor(tracks.size(), threads, [&](std::size_t i) {
    std::vector<PosedObservation> obs;
    for (const auto& node : tracks[i].members) {
      obs.push_back({std::cref(catalog.CameraOf(node.image)), catalog.RequirePose(node.image),
                     KeypointPixel(kpts.images.at(node.image), node.keypoint)});
    }
    try {
      const auto tri = Triangulate(obs);
      const double worst =
          *std::max_element(tri.reprojection_errors.begin(), tri.reprojection_errors.end());
      results[i] = {worst <= mc.filter_max_reproj_error ? Outcome::kKept : Outcome::kReprojection,
                    tri.point};
    } catch (const DegenerateGeometry&) {
      results[i] = {Outcome::kDegenerate, Point3::Zero()};
    }
  });

  PointId next = 0;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (results[i].first == Outcome::kDegenerate) {
      ++st.dropped_degenerate;
      continue;
    }
    if (results[i].first == Outcome::kReprojection) {
      ++st.dropped_reprojection;
      continue;
    }
    const PointId id = next++;
    map.points[id] = MapPoint{results[i].second, std::nullopt};
    auto& obs = map.observations[id];
    for (const auto& node : tracks[i].members)
      obs.push_back({keypoints_type, node.image, node.keypoint});
  }
  st.points = map.points.size();
  return map;
}

/// Map from depth: every keypoint over a valid depth pixel (nearest pixel,
/// depth > 0) is back-projected. With `merge`, keypoints linked by verified
/// matches of the shortlist become one point at the mean of their
/// back-projections.
inline ReconstructedMap RgbdMap(const Dataset& ds, const PairList& pairs, const MatchParams& mp,
                                bool merge, const std::string& keypoints_type,
                                unsigned threads = 1) {
  const ImageCatalog catalog(ds);
  const FeatureSet& kpts = detail::RequireFeatures(ds.features.keypoints, keypoints_type, "keypoints");

  // back-projection of every keypoint with valid depth
  std::map<TrackNode, Point3> lifted;
  for (const auto& [image, arr] : kpts.images) {
    const auto* entry = catalog.Find(image);
    if (!entry) continue;
    auto rec = ds.depth_records.find({entry->timestamp, entry->sensor_id});
    if (rec == ds.depth_records.end()) throw MissingDepth("no depth record for image " + image);
    auto depth = ds.depth_maps.find(rec->second);
    if (depth == ds.depth_maps.end()) throw MissingDepth("no depth data for image " + image);
    const Camera& cam = catalog.CameraOf(image);
    const Pose pose = catalog.RequirePose(image);
    for (std::size_t i = 0; i < arr.rows; ++i) {
      const Point2 px = KeypointPixel(arr, i);
      const float d = depth->second.Nearest(px);
      if (d > 0.0f)
        lifted.emplace(TrackNode{image, static_cast<std::uint32_t>(i)},
                       Backproject(cam, pose, px, d));
    }
  }

  std::vector<std::vector<TrackNode>> groups;
  std::set<TrackNode> grouped;
  if (merge && !pairs.empty()) {
    const PairMatches verified =
        detail::VerifiedPairMatches(ds, catalog, pairs, mp, keypoints_type, threads);
    for (const auto& track : BuildTracks(verified)) {
      std::vector<TrackNode> members;
      for (const auto& node : track.members)
        if (lifted.count(node)) members.push_back(node);
      if (members.empty()) continue;
      for (const auto& n : members) grouped.insert(n);
      groups.push_back(std::move(members));
    }
  }
  for (const auto& [node, x] : lifted)
    if (!grouped.count(node)) groups.push_back({node});
  std::sort(groups.begin(), groups.end());

  ReconstructedMap map;
  PointId id = 0;
  for (const auto& g : groups) {
    Point3 mean = Point3::Zero();
    for (const auto& n : g) mean += lifted.at(n);
    mean /= static_cast<double>(g.size());
    map.points[id] = MapPoint{mean, std::nullopt};
    auto& obs = map.observations[id];
    for (const auto& n : g) obs.push_back({keypoints_type, n.image, n.keypoint});
    ++id;
  }
  return map;
}

}  // namespace locmap
