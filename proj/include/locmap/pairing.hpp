#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "locmap/csv.hpp"
#include "locmap/datastore.hpp"
#include "locmap/errors.hpp"
#include "locmap/geometry.hpp"

namespace locmap {

struct ScoredPair {
  std::string image_a;
  std::string image_b;
  double score = 0.0;

  bool operator==(const ScoredPair&) const = default;
};

/// Ordered shortlist; earlier entries are more relevant.
using PairList = std::vector<ScoredPair>;

struct RetrievalParams {
  int k = 20;
  std::string descriptor_type;
};

struct DistancePairingParams {
  double tau_c = 25.0;  // meters
  double tau_r = 45.0;  // degrees
  int k = 20;
};

struct FrustumParams {
  double near_m = 0.1;
  double far_m = 50.0;
  int nu = 8;
  int nv = 6;
  int nd = 8;
  int k = 20;
};

/// image path -> L2-normalizable global descriptor
using GlobalDescriptors = std::map<std::string, Eigen::VectorXd>;

inline GlobalDescriptors ToGlobalDescriptors(const FeatureSet& set) {
  GlobalDescriptors out;
  for (const auto& [image, arr] : set.images) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.data.size()));
    for (std::size_t i = 0; i < arr.data.size(); ++i) v(i) = arr.data[i];
    out.emplace(image, std::move(v));
  }
  return out;
}

namespace detail {

struct Candidate {
  const std::string* image;
  double score;
};

/// Sorts candidates (descending or ascending score, ties by path) and keeps k.
inline void RankAndTruncate(std::vector<Candidate>& c, bool descending, int k) {
  std::sort(c.begin(), c.end(), [descending](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return descending ? a.score > b.score : a.score < b.score;
    return *a.image < *b.image;
  });
  if (k >= 0 && c.size() > static_cast<std::size_t>(k)) c.resize(k);
}

inline void CheckK(int k) {
  if (k < 1) throw ConfigError("pairing: k must be >= 1");
}

}  // namespace detail

/// Cosine similarity of every query against every database image, in
/// database path order. Zero vectors have similarity 0.
inline std::map<std::string, std::vector<std::pair<std::string, double>>>
RetrievalScores(const GlobalDescriptors& queries, const GlobalDescriptors& db) {
  Eigen::Index dim = -1;
  auto check = [&](const Eigen::VectorXd& v, const std::string& name) {
    if (dim < 0) dim = v.size();
    if (v.size() != dim)
      throw DimensionMismatch("global descriptor of " + name + " has dimension " +
                              std::to_string(v.size()) + ", expected " +
                              std::to_string(dim));
  };
  auto normalized = [](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    const double n = v.norm();
    return n > 0.0 ? Eigen::VectorXd(v / n) : Eigen::VectorXd::Zero(v.size());
  };
  std::vector<std::pair<std::string, Eigen::VectorXd>> dbn;
  dbn.reserve(db.size());
  for (const auto& [name, v] : db) {
    check(v, name);
    dbn.emplace_back(name, normalized(v));
  }
  std::map<std::string, std::vector<std::pair<std::string, double>>> out;
  for (const auto& [qname, qv] : queries) {
    check(qv, qname);
    const Eigen::VectorXd q = normalized(qv);
    auto& row = out[qname];
    row.reserve(dbn.size());
    for (const auto& [dname, dv] : dbn) row.emplace_back(dname, q.dot(dv));
  }
  return out;
}

/// Top-k database images per query by cosine similarity (descending, ties by
/// database path). A query never pairs with itself.
inline PairList RetrievalPairs(const GlobalDescriptors& queries,
                               const GlobalDescriptors& db,
                               const RetrievalParams& params) {
  detail::CheckK(params.k);
  PairList out;
  for (const auto& [qname, scores] : RetrievalScores(queries, db)) {
    std::vector<detail::Candidate> c;
    for (const auto& [dname, s] : scores)
      if (dname != qname) c.push_back({&dname, s});
    detail::RankAndTruncate(c, true, params.k);
    for (const auto& cand : c) out.push_back({qname, *cand.image, cand.score});
  }
  return out;
}

/// c_diff / tau_c + R_diff / tau_R between two camera poses.
inline double DistanceScore(const Pose& q, const Pose& t,
                            const DistancePairingParams& params) {
  const double c_diff = (q.Center() - t.Center()).norm();
  const double r_diff = RotationAngleDeg(q.rotation, t.rotation);
  return c_diff / params.tau_c + r_diff / params.tau_r;
}

using PosedImages = std::map<std::string, std::optional<Pose>>;

/// Top-k database images per query by ascending normalized distance score.
inline PairList DistancePairs(const PosedImages& queries, const PosedImages& db,
                              const DistancePairingParams& params) {
  detail::CheckK(params.k);
  if (!(params.tau_c > 0.0) || !(params.tau_r > 0.0))
    throw ConfigError("distance pairing: tau_c and tau_r must be positive");
  auto require = [](const std::string& name, const std::optional<Pose>& p) -> const Pose& {
    if (!p) throw MissingPose("distance pairing: no pose for image " + name);
    return *p;
  };
  for (const auto& [name, p] : db) require(name, p);
  PairList out;
  for (const auto& [qname, qpose] : queries) {
    const Pose& q = require(qname, qpose);
    std::vector<detail::Candidate> c;
    for (const auto& [dname, dpose] : db)
      if (dname != qname) c.push_back({&dname, DistanceScore(q, *dpose, params)});
    detail::RankAndTruncate(c, false, params.k);
    for (const auto& cand : c) out.push_back({qname, *cand.image, cand.score});
  }
  return out;
}

/// Keeps the first occurrence of every unordered pair; drops self pairs.
inline PairList DeduplicateSymmetric(const PairList& pairs) {
  std::set<std::pair<std::string, std::string>> seen;
  PairList out;
  for (const auto& p : pairs) {
    if (p.image_a == p.image_b) continue;
    auto key = std::minmax(p.image_a, p.image_b);
    if (seen.emplace(key.first, key.second).second) out.push_back(p);
  }
  return out;
}

namespace detail {

inline std::vector<Point3> FrustumSamples(const Camera& cam, const Pose& pose,
                                          const FrustumParams& p) {
  std::vector<double> depths;
  if (p.nd == 1) {
    depths.push_back(std::sqrt(p.near_m * p.far_m));
  } else {
    for (int l = 0; l < p.nd; ++l)
      depths.push_back(p.near_m * std::pow(p.far_m / p.near_m,
                                           static_cast<double>(l) / (p.nd - 1)));
  }
  std::vector<Point3> out;
  out.reserve(static_cast<std::size_t>(p.nu) * p.nv * p.nd);
  for (int j = 0; j < p.nv; ++j)
    for (int i = 0; i < p.nu; ++i) {
      const Point2 px((i + 0.5) * cam.width / p.nu, (j + 0.5) * cam.height / p.nv);
      for (double d : depths) out.push_back(Backproject(cam, pose, px, d));
    }
  return out;
}

inline double VisibleFraction(const std::vector<Point3>& samples, const Camera& cam,
                              const Pose& pose, const FrustumParams& p) {
  if (samples.empty()) return 0.0;
  const double lo = p.near_m * (1.0 - 1e-9);
  const double hi = p.far_m * (1.0 + 1e-9);
  std::size_t visible = 0;
  for (const Point3& x : samples) {
    const Point3 xc = pose * x;
    if (xc.z() < lo || xc.z() > hi) continue;
    const auto px = Project(cam, pose, x);
    if (px && cam.InImage(*px)) ++visible;
  }
  return static_cast<double>(visible) / samples.size();
}

inline void CheckFrustumParams(const FrustumParams& p) {
  if (!(p.near_m > 0.0) || !(p.near_m < p.far_m))
    throw ConfigError("frustum pairing: need 0 < near < far");
  if (p.nu < 1 || p.nv < 1 || p.nd < 1)
    throw ConfigError("frustum pairing: grid dimensions must be positive");
}

}  // namespace detail

/// Mean of the fraction of A's frustum samples visible in B and vice versa.
inline double FrustumOverlap(const Camera& cam_a, const Pose& pose_a,
                             const Camera& cam_b, const Pose& pose_b,
                             const FrustumParams& params = {}) {
  detail::CheckFrustumParams(params);
  const double ab = detail::VisibleFraction(
      detail::FrustumSamples(cam_a, pose_a, params), cam_b, pose_b, params);
  const double ba = detail::VisibleFraction(
      detail::FrustumSamples(cam_b, pose_b, params), cam_a, pose_a, params);
  return 0.5 * (ab + ba);
}

struct FrustumImage {
  std::string image;
  Camera camera;
  Pose pose;
};

/// Mapping shortlist: per image the k partners with the largest frustum
/// overlap (zero overlap omitted), symmetric-deduplicated.
inline PairList FrustumPairs(const std::vector<FrustumImage>& images,
                             const FrustumParams& params) {
  detail::CheckFrustumParams(params);
  detail::CheckK(params.k);
  std::vector<std::vector<Point3>> samples;
  samples.reserve(images.size());
  for (const auto& im : images)
    samples.push_back(detail::FrustumSamples(im.camera, im.pose, params));
  const std::size_t n = images.size();
  // frac[a][b]: fraction of a's samples visible in b
  std::vector<std::vector<double>> frac(n, std::vector<double>(n, 0.0));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (a != b)
        frac[a][b] = detail::VisibleFraction(samples[a], images[b].camera,
                                             images[b].pose, params);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return images[x].image < images[y].image; });
  PairList out;
  for (std::size_t a : order) {
    std::vector<detail::Candidate> c;
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b || images[a].image == images[b].image) continue;
      const double s = 0.5 * (frac[a][b] + frac[b][a]);
      if (s > 0.0) c.push_back({&images[b].image, s});
    }
    detail::RankAndTruncate(c, true, params.k);
    for (const auto& cand : c) out.push_back({images[a].image, *cand.image, cand.score});
  }
  return DeduplicateSymmetric(out);
}

/// Mapping shortlist from co-observed map points: score = number of points
/// seen in both images; zero-score pairs omitted; symmetric-deduplicated.
inline PairList CovisibilityPairs(const ReconstructedMap& map, int k) {
  detail::CheckK(k);
  std::map<std::string, std::map<std::string, int>> counts;
  for (const auto& [id, obs] : map.observations) {
    std::set<std::string> images;
    for (const auto& o : obs) images.insert(o.image_path);
    for (const auto& a : images) {
      auto& row = counts[a];
      for (const auto& b : images)
        if (a != b) ++row[b];
    }
  }
  PairList out;
  for (const auto& [a, row] : counts) {
    std::vector<detail::Candidate> c;
    for (const auto& [b, n] : row) c.push_back({&b, static_cast<double>(n)});
    detail::RankAndTruncate(c, true, k);
    for (const auto& cand : c) out.push_back({a, *cand.image, cand.score});
  }
  return DeduplicateSymmetric(out);
}

inline void SavePairs(const PairList& pairs, const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(pairs.size());
  for (const auto& p : pairs)
    rows.push_back({p.image_a, p.image_b, csv::FormatReal(p.score)});
  csv::WriteTable(path, "pairs", rows);
}

inline PairList LoadPairs(const fs::path& path) {
  const auto t = csv::Table::Read(path);
  PairList out;
  for (const auto& row : t.rows()) {
    t.ExpectFields(row, 2, 3);
    ScoredPair p{t.Text(row, 0), t.Text(row, 1), 0.0};
    if (row.fields.size() == 3) p.score = t.Real(row, 2);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace locmap
