#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "locmap/datastore.hpp"
#include "locmap/errors.hpp"
#include "locmap/geometry.hpp"
#include "locmap/pairing.hpp"
#include "locmap/parallel.hpp"

namespace locmap {

struct MatchParams {
  bool mutual_check = true;
  std::optional<double> ratio;  // Lowe ratio in (0, 1], off by default
  double epipolar_px = 4.0;

  static MatchParams Config1() { return {true, std::nullopt, 4.0}; }
  static MatchParams Config2() { return {true, std::nullopt, 12.0}; }
};

namespace detail {

inline double ExactL2(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMatrixF> AsMatrix(const FeatureArray& a) {
  return {a.data.data(), static_cast<Eigen::Index>(a.rows), static_cast<Eigen::Index>(a.cols)};
}

}  // namespace detail

/// Exhaustive L2 nearest-neighbour matching of descriptor rows. Returned
/// matches are sorted by idx_a; the score is the L2 distance.
inline std::vector<KeypointMatch> MatchDescriptors(const FeatureArray& desc_a,
                                                   const FeatureArray& desc_b,
                                                   const MatchParams& params = {}) {
  if (desc_a.rows > 0 && desc_b.rows > 0 && desc_a.cols != desc_b.cols)
    throw DimensionMismatch("descriptor dimensions differ: " + std::to_string(desc_a.cols) +
                            " vs " + std::to_string(desc_b.cols));
  if (params.ratio && !(*params.ratio > 0.0 && *params.ratio <= 1.0))
    throw ConfigError("ratio test threshold must be in (0, 1]");
  const std::size_t n = desc_a.rows, m = desc_b.rows;
  if (n == 0 || m == 0) return {};

  const auto A = detail::AsMatrix(desc_a);
  const auto B = detail::AsMatrix(desc_b);
  const Eigen::VectorXf na = A.rowwise().squaredNorm();
  const Eigen::VectorXf nb = B.rowwise().squaredNorm();
  // squared distances up to float rounding; exact values are recomputed for
  // the retained matches
  detail::RowMatrixF d2 = -2.0f * (A * B.transpose());
  d2.colwise() += na;
  d2.rowwise() += nb.transpose();

  std::vector<std::size_t> best_b(n), best_a(m, 0);
  std::vector<float> best_d(n), second_d(n);
  std::vector<float> col_best(m, std::numeric_limits<float>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    float b1 = std::numeric_limits<float>::infinity(), b2 = b1;
    std::size_t j1 = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const float d = d2(i, j);
      if (d < b1) {
        b2 = b1;
        b1 = d;
        j1 = j;
      } else if (d < b2) {
        b2 = d;
      }
      if (d < col_best[j]) {
        col_best[j] = d;
        best_a[j] = i;
      }
    }
    best_b[i] = j1;
    best_d[i] = b1;
    second_d[i] = b2;
  }

  std::vector<KeypointMatch> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = best_b[i];
    if (params.mutual_check && best_a[j] != i) continue;
    if (params.ratio && m > 1) {
      const double d1 = std::sqrt(std::max(0.0f, best_d[i]));
      const double d2nd = std::sqrt(std::max(0.0f, second_d[i]));
      if (!(d1 < *params.ratio * d2nd)) continue;
    }
    out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                   static_cast<float>(detail::ExactL2(desc_a.Row(i), desc_b.Row(j)))});
  }
  return out;
}

inline Point2 KeypointPixel(const FeatureArray& kpts, std::size_t i) {
  const auto row = kpts.Row(i);
  return {row[0], row[1]};
}

/// Keeps matches whose symmetric epipolar distance is within the threshold.
/// A zero-baseline pair gives no constraint and keeps everything.
inline std::vector<KeypointMatch> VerifyMatchesEpipolar(
    const std::vector<KeypointMatch>& matches, const Camera& cam_a, const Pose& pose_a,
    const Camera& cam_b, const Pose& pose_b, const FeatureArray& kpts_a,
    const FeatureArray& kpts_b, double epipolar_px) {
  std::vector<KeypointMatch> out;
  out.reserve(matches.size());
  for (const auto& m : matches) {
    const double d = EpipolarDistance(cam_a, pose_a, KeypointPixel(kpts_a, m.idx_a), cam_b,
                                      pose_b, KeypointPixel(kpts_b, m.idx_b));
    if (d <= epipolar_px || std::isinf(d)) out.push_back(m);
  }
  return out;
}

struct TrackNode {
  std::string image;
  std::uint32_t keypoint = 0;

  auto operator<=>(const TrackNode&) const = default;
};

/// Keypoints of several images that observe one 3D point; at most one
/// keypoint per image, sorted.
struct Track {
  std::vector<TrackNode> members;
};

using PairMatches = std::map<ImagePair, std::vector<KeypointMatch>>;

/// Connected components of the match graph. Components holding two keypoints
/// of one image are discarded whole, as are single-image components.
inline std::vector<Track> BuildTracks(const PairMatches& matches) {
  std::map<TrackNode, std::size_t> ids;
  std::vector<const TrackNode*> nodes;
  std::vector<std::size_t> parent;
  auto id_of = [&](const std::string& image, std::uint32_t kp) {
    auto [it, inserted] = ids.emplace(TrackNode{image, kp}, parent.size());
    if (inserted) {
      parent.push_back(parent.size());
      nodes.push_back(&it->first);
    }
    return it->second;
  };
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& [pair, list] : matches)
    for (const auto& m : list) {
      const std::size_t a = find(id_of(pair.first, m.idx_a));
      const std::size_t b = find(id_of(pair.second, m.idx_b));
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }

  std::map<std::size_t, std::vector<TrackNode>> components;
  // ids is ordered, so members come out sorted
  for (const auto& [node, id] : ids) components[find(id)].push_back(node);

  std::vector<Track> tracks;
  for (auto& [root, members] : components) {
    bool conflict = false;
    for (std::size_t i = 1; i < members.size(); ++i)
      if (members[i].image == members[i - 1].image) conflict = true;
    if (conflict || members.size() < 2) continue;
    tracks.push_back({std::move(members)});
  }
  std::sort(tracks.begin(), tracks.end(),
            [](const Track& a, const Track& b) { return a.members < b.members; });
  return tracks;
}

/// Orders a pair lexicographically, swapping match indices when needed.
inline std::pair<ImagePair, std::vector<KeypointMatch>> CanonicalPair(
    const std::string& a, const std::string& b, std::vector<KeypointMatch> list) {
  if (a < b) return {{a, b}, std::move(list)};
  for (auto& m : list) std::swap(m.idx_a, m.idx_b);
  std::sort(list.begin(), list.end(),
            [](const KeypointMatch& x, const KeypointMatch& y) { return x.idx_a < y.idx_a; });
  return {{b, a}, std::move(list)};
}

/// Descriptor matching for every (deduplicated) pair of a shortlist.
inline PairMatches MatchPairs(const FeatureSet& descriptors, const PairList& pairs,
                              const MatchParams& params, unsigned threads = 1) {
  const PairList unique = DeduplicateSymmetric(pairs);
  std::vector<std::pair<ImagePair, std::vector<KeypointMatch>>> results(unique.size());
  ParallelFor(unique.size(), threads, [&](std::size_t i) {
    const auto& p = unique[i];
    auto da = descriptors.images.find(p.image_a);
    auto db = descriptors.images.find(p.image_b);
    if (da == descriptors.images.end() || db == descriptors.images.end())
      throw InvariantViolation("no descriptors for pair " + p.image_a + " / " + p.image_b);
    results[i] = CanonicalPair(p.image_a, p.image_b,
                               MatchDescriptors(da->second, db->second, params));
  });
  PairMatches out;
  for (auto& [pair, list] : results) out.emplace(pair, std::move(list));
  return out;
}

}  // namespace locmap
