#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "locmap/csv.hpp"
#include "locmap/datastore.hpp"
#include "locmap/errors.hpp"
#include "locmap/fusion.hpp"
#include "locmap/geometry.hpp"
#include "locmap/matching.hpp"
#include "locmap/pairing.hpp"
#include "locmap/parallel.hpp"
#include "locmap/random.hpp"

namespace locmap {

struct Correspondence2D3D {
  Point2 pixel = Point2::Zero();
  PointId point_id = 0;
  Point3 xyz = Point3::Zero();
  std::uint32_t keypoint_idx = 0;  // query keypoint
};

// ---------------------------------------------------------------------------
// P3P (Grunert)

namespace detail {

/// Real roots of sum c[i] x^i via companion-matrix eigenvalues, polished by
/// Newton steps on the polynomial.
inline std::vector<double> RealPolynomialRoots(std::vector<double> c) {
  const double scale = [&] {
    double m = 0.0;
    for (double x : c) m = std::max(m, std::abs(x));
    return m;
  }();
  if (!(scale > 0.0)) return {};
  for (double& x : c) x /= scale;
  while (c.size() > 1 && std::abs(c.back()) < 1e-14) c.pop_back();
  const std::size_t deg = c.size() - 1;
  if (deg == 0) return {};

  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(deg, deg);
  for (std::size_t i = 0; i < deg; ++i) comp(0, i) = -c[deg - 1 - i] / c[deg];
  for (std::size_t i = 1; i < deg; ++i) comp(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
  const Eigen::VectorXcd ev = es.eigenvalues();

  auto eval = [&](double x, double& dp) {
    double p = 0.0;
    dp = 0.0;
    for (std::size_t i = deg + 1; i-- > 0;) {
      dp = dp * x + p;
      p = p * x + c[i];
    }
    return p;
  };
  std::vector<double> roots;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const double re = ev(i).real();
    if (std::abs(ev(i).imag()) > 1e-6 * (1.0 + std::abs(re))) continue;
    double x = re;
    double dp = 0.0;
    double p = eval(x, dp);
    for (int it = 0; it < 8 && dp != 0.0; ++it) {
      const double nx = x - p / dp;
      double ndp = 0.0;
      const double np = eval(nx, ndp);
      if (!(std::abs(np) < std::abs(p))) break;
      x = nx;
      p = np;
      dp = ndp;
    }
    roots.push_back(x);
  }
  return roots;
}

using Poly = std::vector<double>;  // low to high degree

inline Poly PolyMul(const Poly& a, const Poly& b) {
  Poly out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

inline Poly PolyAdd(Poly a, const Poly& b, double sb = 1.0) {
  if (a.size() < b.size()) a.resize(b.size(), 0.0);
  for (std::size_t i = 0; i < b.size(); ++i) a[i] += sb * b[i];
  return a;
}

/// Rigid transform (R, t) with y_i = R x_i + t in the least-squares sense.
inline Pose AlignPoints(const std::array<Point3, 3>& x, const std::array<Point3, 3>& y) {
  const Point3 cx = (x[0] + x[1] + x[2]) / 3.0;
  const Point3 cy = (y[0] + y[1] + y[2]) / 3.0;
  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) H += (x[i] - cx) * (y[i] - cy).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  D(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Eigen::Matrix3d R = svd.matrixV() * D * svd.matrixU().transpose();
  Eigen::Quaterniond q(R);
  q.normalize();
  return {q, cy - R * cx};
}

}  // namespace detail

inline constexpr double kP3PReprojectionTolerancePx = 1e-6;

/// Candidate world-to-camera poses from exactly three correspondences.
/// Distances along the viewing rays solve three law-of-cosines equations;
/// eliminating the ratio s2/s1 leaves a quartic in v = s3/s1.
inline std::vector<Pose> SolveP3P(std::span<const Correspondence2D3D> c, const Camera& cam) {
  if (c.size() != 3) throw InvariantViolation("p3p needs exactly three correspondences");
  const Point3 &P1 = c[0].xyz, &P2 = c[1].xyz, &P3 = c[2].xyz;
  const double extent = std::max({(P2 - P1).norm(), (P3 - P1).norm(), (P3 - P2).norm()});
  if (!(extent > 0.0) || (P2 - P1).cross(P3 - P1).norm() <= 1e-10 * extent * extent)
    throw CollinearPoints("p3p: the three 3D points are collinear");

  std::array<Eigen::Vector3d, 3> j;
  for (int i = 0; i < 3; ++i) j[i] = cam.Unproject(c[i].pixel).normalized();
  const double ca = j[1].dot(j[2]), cb = j[0].dot(j[2]), cg = j[0].dot(j[1]);
  const double a2 = (P2 - P3).squaredNorm(), b2 = (P1 - P3).squaredNorm(),
               c2 = (P1 - P2).squaredNorm();

  // u = N(v) / D(v); substituting into the (s1, s2) equation times D^2
  const detail::Poly N = {b2 + (a2 - c2), -2.0 * (a2 - c2) * cb, -b2 + (a2 - c2)};
  const detail::Poly D = {2.0 * b2 * cg, -2.0 * b2 * ca};
  const detail::Poly Q = {b2 - c2, 2.0 * c2 * cb, -c2};
  detail::Poly quartic = detail::PolyMul(N, N);
  for (double& x : quartic) x *= b2;
  quartic = detail::PolyAdd(quartic, detail::PolyMul(N, D), -2.0 * b2 * cg);
  quartic = detail::PolyAdd(quartic, detail::PolyMul(Q, detail::PolyMul(D, D)));

  std::vector<Pose> out;
  const std::array<Point3, 3> world = {P1, P2, P3};
  for (double v : detail::RealPolynomialRoots(quartic)) {
    if (!(v > 0.0)) continue;
    const double d = D[0] + D[1] * v;
    if (std::abs(d) < 1e-14 * (std::abs(D[0]) + std::abs(D[1]) * v)) continue;
    const double u = (N[0] + N[1] * v + N[2] * v * v) / d;
    const double den = 1.0 + v * v - 2.0 * v * cb;
    if (!(u > 0.0) || !(den > 0.0)) continue;
    Eigen::Vector3d s;
    s(0) = std::sqrt(b2 / den);
    s(1) = u * s(0);
    s(2) = v * s(0);

    // Newton polish of the distance system
    auto residual = [&](const Eigen::Vector3d& x) {
      return Eigen::Vector3d(x(0) * x(0) + x(1) * x(1) - 2.0 * x(0) * x(1) * cg - c2,
                             x(0) * x(0) + x(2) * x(2) - 2.0 * x(0) * x(2) * cb - b2,
                             x(1) * x(1) + x(2) * x(2) - 2.0 * x(1) * x(2) * ca - a2);
    };
    Eigen::Vector3d r = residual(s);
    for (int it = 0; it < 5 && r.norm() > 0.0; ++it) {
      Eigen::Matrix3d J;
      J << 2.0 * s(0) - 2.0 * s(1) * cg, 2.0 * s(1) - 2.0 * s(0) * cg, 0.0,  //
          2.0 * s(0) - 2.0 * s(2) * cb, 0.0, 2.0 * s(2) - 2.0 * s(0) * cb,   //
          0.0, 2.0 * s(1) - 2.0 * s(2) * ca, 2.0 * s(2) - 2.0 * s(1) * ca;
      const Eigen::Vector3d ns = s - J.colPivHouseholderQr().solve(r);
      if (!ns.allFinite()) break;
      const Eigen::Vector3d nr = residual(ns);
      if (!(nr.norm() < r.norm())) break;
      s = ns;
      r = nr;
    }
    if ((s.array() <= 0.0).any()) continue;

    const std::array<Point3, 3> camera_pts = {s(0) * j[0], s(1) * j[1], s(2) * j[2]};
    const Pose pose = detail::AlignPoints(world, camera_pts);
    bool ok = true;
    for (int i = 0; i < 3 && ok; ++i)
      ok = ReprojectionError(cam, pose, c[i].xyz, c[i].pixel) <= kP3PReprojectionTolerancePx;
    if (!ok) continue;
    bool duplicate = false;
    for (const auto& p : out)
      if ((p.translation - pose.translation).norm() < 1e-12 &&
          RotationAngleDeg(p.rotation, pose.rotation) < 1e-10)
        duplicate = true;
    if (!duplicate) out.push_back(pose);
  }
  if (out.empty()) throw NoRealSolution("p3p: no real solution in front of the camera");
  return out;
}

// ---------------------------------------------------------------------------
// Refinement

namespace detail {

inline double TotalSquaredError(const Pose& pose, std::span<const Correspondence2D3D> c,
                                const Camera& cam) {
  double sum = 0.0;
  for (const auto& x : c) {
    const auto p = Project(cam, pose, x.xyz);
    if (!p) return std::numeric_limits<double>::infinity();
    sum += (*p - x.pixel).squaredNorm();
  }
  return sum;
}

inline Eigen::Quaterniond ExpSO3(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  if (theta == 0.0) return Eigen::Quaterniond::Identity();
  return Eigen::Quaterniond(Eigen::AngleAxisd(theta, w / theta));
}

}  // namespace detail

/// Levenberg-Marquardt on the total squared reprojection error with the
/// local update R <- Exp(w) R, t <- t + v. Only steps that lower the cost are
/// taken, so the input comes back unchanged when nothing improves it.
/// `cost_history` receives the cost of the start pose and of every accepted
/// step.
inline Pose RefinePose(const Pose& initial, std::span<const Correspondence2D3D> inliers,
                       const Camera& cam, std::vector<double>* cost_history = nullptr,
                       int max_iterations = 50) {
  Pose pose = initial;
  double cost = detail::TotalSquaredError(pose, inliers, cam);
  if (cost_history) cost_history->assign(1, cost);
  if (inliers.size() < 4 || !std::isfinite(cost) || cost == 0.0) return initial;

  double lambda = 1e-4;
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    const Eigen::Matrix3d R = pose.RotationMatrix();
    for (const auto& x : inliers) {
      const Point3 rx = R * x.xyz;
      const Point3 xc = rx + pose.translation;
      const double iz = 1.0 / xc.z();
      const Eigen::Vector2d r(cam.fx() * xc.x() * iz + cam.cx() - x.pixel.x(),
                              cam.fy() * xc.y() * iz + cam.cy() - x.pixel.y());
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << cam.fx() * iz, 0.0, -cam.fx() * xc.x() * iz * iz,  //
          0.0, cam.fy() * iz, -cam.fy() * xc.y() * iz * iz;
      Eigen::Matrix<double, 2, 6> J;
      J.leftCols<3>() = -dproj * Skew(rx);
      J.rightCols<3>() = dproj;
      H += J.transpose() * J;
      g += J.transpose() * r;
    }
    bool accepted = false;
    while (!accepted && lambda < 1e12) {
      Eigen::Matrix<double, 6, 6> A = H;
      A.diagonal() += lambda * H.diagonal().cwiseMax(1e-12);
      const Eigen::Matrix<double, 6, 1> step = A.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      Pose candidate;
      candidate.rotation = (detail::ExpSO3(step.head<3>()) * pose.rotation).normalized();
      candidate.translation = pose.translation + step.tail<3>();
      const double next = detail::TotalSquaredError(candidate, inliers, cam);
      if (next < cost) {
        const bool tiny = step.norm() < 1e-15 || cost - next <= 1e-16 * cost;
        pose = candidate;
        cost = next;
        if (cost_history) cost_history->push_back(cost);
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (tiny) return pose;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted || cost == 0.0) break;
  }
  return pose;
}

// ---------------------------------------------------------------------------
// RANSAC

struct PnPConfig {
  double max_error_px = 12.0;
  int min_num_inliers = 30;
  double min_inlier_ratio = 0.25;
  double confidence = 0.9999;
  int max_iterations = 10000;
  std::uint64_t seed = 0;

  static PnPConfig Config1() { return {12.0, 30, 0.25, 0.9999, 10000, 0}; }
  static PnPConfig Config2() { return {20.0, 4, 0.05, 0.9999, 10000, 0}; }

  void Validate() const {
    if (!(max_error_px > 0.0) || min_num_inliers < 1 || max_iterations < 1)
      throw ConfigError("pnp: thresholds must be positive");
    if (!(min_inlier_ratio > 0.0 && min_inlier_ratio <= 1.0))
      throw ConfigError("pnp: min_inlier_ratio must be in (0, 1]");
    if (!(confidence > 0.0 && confidence < 1.0))
      throw ConfigError("pnp: confidence must be in (0, 1)");
  }
};

struct PnPEstimate {
  Pose pose;
  std::vector<std::size_t> inliers;  // ascending indices into the input
  double mean_error_px = 0.0;
  int iterations = 0;
};

namespace detail {

inline std::size_t UniformIndex(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t range = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x;
  do x = rng();
  while (x >= limit);
  return static_cast<std::size_t>(x % range);
}

inline std::pair<std::vector<std::size_t>, double> Inliers(
    const Pose& pose, std::span<const Correspondence2D3D> c, const Camera& cam,
    double max_error) {
  std::vector<std::size_t> idx;
  double sum = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double e = ReprojectionError(cam, pose, c[i].xyz, c[i].pixel);
    if (e <= max_error) {
      idx.push_back(i);
      sum += e;
    }
  }
  return {idx, idx.empty() ? 0.0 : sum / static_cast<double>(idx.size())};
}

}  // namespace detail

/// RANSAC over P3P samples followed by refinement on the inliers, without the
/// acceptance gates. Only max_error_px, confidence, max_iterations and seed
/// are used.
inline std::optional<PnPEstimate> EstimatePoseRansac(std::span<const Correspondence2D3D> corrs,
                                                     const Camera& cam, const PnPConfig& cfg) {
  cfg.Validate();
  const std::size_t n = corrs.size();
  if (n < 3) return std::nullopt;
  std::mt19937_64 rng(cfg.seed);

  std::optional<PnPEstimate> best;
  long bound = cfg.max_iterations;
  int it = 0;
  for (; it < bound; ++it) {
    const std::size_t i0 = detail::UniformIndex(rng, n);
    std::size_t i1 = detail::UniformIndex(rng, n - 1);
    if (i1 >= i0) ++i1;
    std::size_t i2 = detail::UniformIndex(rng, n - 2);
    const auto [lo, hi] = std::minmax(i0, i1);
    if (i2 >= lo) ++i2;
    if (i2 >= hi) ++i2;
    const std::array<Correspondence2D3D, 3> sample = {corrs[i0], corrs[i1], corrs[i2]};
    std::vector<Pose> candidates;
    try {
      candidates = SolveP3P(sample, cam);
    } catch (const CollinearPoints&) {
      continue;
    } catch (const NoRealSolution&) {
      continue;
    }
    for (const auto& pose : candidates) {
      auto [inl, mean] = detail::Inliers(pose, corrs, cam, cfg.max_error_px);
      const bool better = !best || inl.size() > best->inliers.size() ||
                          (inl.size() == best->inliers.size() && mean < best->mean_error_px);
      if (!better || inl.empty()) continue;
      best = PnPEstimate{pose, std::move(inl), mean, 0};
      const double w = static_cast<double>(best->inliers.size()) / static_cast<double>(n);
      const double miss = std::log1p(-w * w * w);
      const double needed = miss < 0.0 ? std::ceil(std::log1p(-cfg.confidence) / miss)
                                       : static_cast<double>(cfg.max_iterations);
      bound = static_cast<long>(std::min<double>(cfg.max_iterations, std::max(1.0, needed)));
    }
  }
  if (!best) return std::nullopt;
  best->iterations = it;

  std::vector<Correspondence2D3D> inl;
  inl.reserve(best->inliers.size());
  for (auto i : best->inliers) inl.push_back(corrs[i]);
  const Pose refined = RefinePose(best->pose, inl, cam).Canonical();
  auto [final_inliers, mean] = detail::Inliers(refined, corrs, cam, cfg.max_error_px);
  best->pose = refined;
  best->inliers = std::move(final_inliers);
  best->mean_error_px = mean;
  return best;
}

inline bool PassesGates(const PnPEstimate& e, std::size_t num_correspondences,
                        const PnPConfig& cfg) {
  if (num_correspondences == 0) return false;
  const double ratio =
      static_cast<double>(e.inliers.size()) / static_cast<double>(num_correspondences);
  return static_cast<int>(e.inliers.size()) >= cfg.min_num_inliers &&
         ratio >= cfg.min_inlier_ratio;
}

/// Gated RANSAC PnP: nothing unless enough inliers at a sufficient ratio.
inline std::optional<PnPEstimate> RansacPnp(std::span<const Correspondence2D3D> corrs,
                                            const Camera& cam, const PnPConfig& cfg) {
  auto e = EstimatePoseRansac(corrs, cam, cfg);
  if (!e || !PassesGates(*e, corrs.size(), cfg)) return std::nullopt;
  return e;
}

// ---------------------------------------------------------------------------
// 2D-3D assembly and the localization pipeline

/// (image, keypoint) -> map points observing it, for one keypoints type.
class ObservationIndex {
 public:
  ObservationIndex(const ReconstructedMap& map, const std::string& keypoints_type) {
    for (const auto& [id, obs] : map.observations)
      for (const auto& o : obs)
        if (o.keypoints_type == keypoints_type) index_[{o.image_path, o.keypoint_idx}].push_back(id);
  }

  std::span<const PointId> Find(const std::string& image, std::uint32_t kp) const {
    auto it = index_.find({image, kp});
    if (it == index_.end()) return {};
    return it->second;
  }

 private:
  std::map<std::pair<std::string, std::uint32_t>, std::vector<PointId>> index_;
};

/// One correspondence per (query keypoint, map point) reached through any
/// retrieved image; sorted by query keypoint then point id.
inline std::vector<Correspondence2D3D> Assemble2D3D(
    const std::map<std::string, std::vector<KeypointMatch>>& matches_by_db_image,
    const FeatureArray& query_keypoints, const ObservationIndex& index,
    const ReconstructedMap& map) {
  std::set<std::pair<std::uint32_t, PointId>> seen;
  for (const auto& [db_image, matches] : matches_by_db_image)
    for (const auto& m : matches)
      for (PointId id : index.Find(db_image, m.idx_b)) seen.insert({m.idx_a, id});
  std::vector<Correspondence2D3D> out;
  out.reserve(seen.size());
  for (const auto& [kp, id] : seen) {
    auto p = map.points.find(id);
    if (p == map.points.end())
      throw DanglingObservation("observation refers to missing point " + std::to_string(id));
    out.push_back({KeypointPixel(query_keypoints, kp), id, p->second.xyz, kp});
  }
  return out;
}

enum class Provenance { kDirect, kRig, kSequenceInterp, kSequenceNn };

inline const char* ProvenanceName(Provenance p) {
  switch (p) {
    case Provenance::kDirect: return "direct";
    case Provenance::kRig: return "rig";
    case Provenance::kSequenceInterp: return "sequence_interp";
    case Provenance::kSequenceNn: return "sequence_nn";
  }
  return "direct";
}

inline std::optional<Provenance> ParseProvenance(const std::string& s) {
  if (s == "direct") return Provenance::kDirect;
  if (s == "rig") return Provenance::kRig;
  if (s == "sequence_interp") return Provenance::kSequenceInterp;
  if (s == "sequence_nn") return Provenance::kSequenceNn;
  return std::nullopt;
}

struct LocalizationResult {
  std::string image_path;
  std::optional<Pose> pose;
  int num_inliers = 0;
  int num_correspondences = 0;
  Provenance provenance = Provenance::kDirect;
};

struct LocalizationParams {
  std::string keypoints_type;
  std::vector<std::string> global_types;  // several types are fused
  int k = 20;
  FusionParams fusion;
  MatchParams match;
  PnPConfig pnp;
};

/// Query-side inputs for one image.
struct QueryView {
  std::string image_path;
  const Camera* camera = nullptr;
  const FeatureArray* keypoints = nullptr;
  const FeatureArray* descriptors = nullptr;
  std::vector<Eigen::VectorXd> global;  // one per params.global_types
};

class Localizer {
 public:
  Localizer(const Dataset& map_ds, const ReconstructedMap& map, LocalizationParams params)
      : ds_(map_ds), map_(map), params_(std::move(params)),
        index_(map, params_.keypoints_type) {
    params_.pnp.Validate();
    if (params_.global_types.empty()) throw ConfigError("localize: no global descriptor type");
    if (params_.k < 1) throw ConfigError("localize: k must be >= 1");
    for (const auto& type : params_.global_types) {
      auto it = ds_.features.global_features.find(type);
      if (it == ds_.features.global_features.end())
        throw InvariantViolation("mapping data has no global features of type '" + type + "'");
      db_.push_back(ToGlobalDescriptors(it->second));
    }
    auto d = ds_.features.descriptors.find(params_.keypoints_type);
    if (d == ds_.features.descriptors.end())
      throw InvariantViolation("mapping data has no descriptors of type '" +
                               params_.keypoints_type + "'");
    db_descriptors_ = &d->second;
  }

  const LocalizationParams& params() const { return params_; }

  std::vector<std::string> Retrieve(const QueryView& q) const {
    if (q.global.size() != db_.size())
      throw DimensionMismatch("query " + q.image_path + " lacks a global descriptor type");
    PairList pairs;
    if (db_.size() == 1) {
      pairs = RetrievalPairs({{q.image_path, q.global[0]}}, db_[0], {params_.k, ""});
    } else {
      std::vector<GlobalDescriptors> queries;
      for (const auto& g : q.global) queries.push_back({{q.image_path, g}});
      pairs = FusedRetrievalPairs(queries, db_, params_.fusion, params_.k);
    }
    std::vector<std::string> out;
    for (const auto& p : pairs) out.push_back(p.image_b);
    return out;
  }

  std::vector<Correspondence2D3D> Correspondences(const QueryView& q) const {
    std::map<std::string, std::vector<KeypointMatch>> matches;
    for (const auto& db_image : Retrieve(q)) {
      auto it = db_descriptors_->images.find(db_image);
      if (it == db_descriptors_->images.end()) continue;
      matches[db_image] = MatchDescriptors(*q.descriptors, it->second, params_.match);
    }
    return Assemble2D3D(matches, *q.keypoints, index_, map_);
  }

  LocalizationResult Localize(const QueryView& q) const {
    if (!q.camera || !q.keypoints || !q.descriptors)
      throw InvariantViolation("query " + q.image_path + " lacks camera or local features");
    LocalizationResult result;
    result.image_path = q.image_path;
    const auto corrs = Correspondences(q);
    result.num_correspondences = static_cast<int>(corrs.size());
    PnPConfig cfg = params_.pnp;
    cfg.seed ^= HashString(q.image_path);
    if (auto e = EstimatePoseRansac(corrs, *q.camera, cfg)) {
      result.num_inliers = static_cast<int>(e->inliers.size());
      if (PassesGates(*e, corrs.size(), cfg)) result.pose = e->pose;
    }
    return result;
  }

 private:
  const Dataset& ds_;
  const ReconstructedMap& map_;
  LocalizationParams params_;
  ObservationIndex index_;
  std::vector<GlobalDescriptors> db_;
  const FeatureSet* db_descriptors_ = nullptr;
};

/// Gathers the inputs of one query image from a query dataset.
inline QueryView MakeQueryView(const Dataset& query_ds, const ImageCatalog& catalog,
                               const std::string& image, const LocalizationParams& params) {
  QueryView q;
  q.image_path = image;
  q.camera = &catalog.CameraOf(image);
  auto find = [&](const std::map<std::string, FeatureSet>& sets,
                  const std::string& type) -> const FeatureArray* {
    auto s = sets.find(type);
    if (s == sets.end()) return nullptr;
    auto a = s->second.images.find(image);
    return a == s->second.images.end() ? nullptr : &a->second;
  };
  q.keypoints = find(query_ds.features.keypoints, params.keypoints_type);
  q.descriptors = find(query_ds.features.descriptors, params.keypoints_type);
  for (const auto& type : params.global_types) {
    const FeatureArray* g = find(query_ds.features.global_features, type);
    if (!g) throw InvariantViolation("query " + image + " has no global feature '" + type + "'");
    Eigen::VectorXd v(static_cast<Eigen::Index>(g->data.size()));
    for (std::size_t i = 0; i < g->data.size(); ++i) v(i) = g->data[i];
    q.global.push_back(std::move(v));
  }
  return q;
}

inline LocalizationResult LocalizeQuery(const Dataset& map_ds, const ReconstructedMap& map,
                                        const Dataset& query_ds, const std::string& image,
                                        const LocalizationParams& params) {
  const Localizer loc(map_ds, map, params);
  const ImageCatalog catalog(query_ds);
  return loc.Localize(MakeQueryView(query_ds, catalog, image, params));
}

/// Localizes every image of the query dataset; results sorted by image path
/// and independent of the thread count.
inline std::vector<LocalizationResult> LocalizeAll(const Dataset& map_ds,
                                                   const ReconstructedMap& map,
                                                   const Dataset& query_ds,
                                                   const LocalizationParams& params,
                                                   unsigned threads = 1) {
  const Localizer loc(map_ds, map, params);
  const ImageCatalog catalog(query_ds);
  const auto images = catalog.Images();
  std::vector<LocalizationResult> out(images.size());
  ParallelFor(images.size(), threads, [&](std::size_t i) {
    out[i] = loc.Localize(MakeQueryView(query_ds, catalog, images[i], params));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Results file

inline void SaveResults(const std::vector<LocalizationResult>& results, const fs::path& path) {
  std::vector<LocalizationResult> sorted = results;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.image_path < b.image_path; });
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : sorted) {
    std::vector<std::string> row = {r.image_path};
    if (r.pose) {
      for (auto& f : detail::PoseFields(*r.pose)) row.push_back(std::move(f));
    } else {
      row.insert(row.end(), 7, "");
    }
    row.push_back(std::to_string(r.num_inliers));
    row.push_back(std::to_string(r.num_correspondences));
    row.push_back(ProvenanceName(r.provenance));
    rows.push_back(std::move(row));
  }
  csv::WriteTable(path, "results", rows);
}

inline std::vector<LocalizationResult> LoadResults(const fs::path& path) {
  const auto table = csv::Table::Read(path);
  std::vector<LocalizationResult> out;
  for (const auto& row : table.rows()) {
    table.ExpectFields(row, 11, 11);
    LocalizationResult r;
    r.image_path = table.Text(row, 0);
    bool any = false, all = true;
    for (std::size_t i = 1; i <= 7; ++i) {
      const bool empty = row.fields[i].empty();
      any = any || !empty;
      all = all && !empty;
    }
    if (any && !all) table.Fail(row, "pose fields must be all present or all empty");
    if (all) r.pose = detail::ParsePose(table, row, 1);
    r.num_inliers = table.Integer<int>(row, 8);
    r.num_correspondences = table.Integer<int>(row, 9);
    const auto prov = ParseProvenance(table.Text(row, 10));
    if (!prov) table.Fail(row, "unknown provenance '" + row.fields[10] + "'");
    r.provenance = *prov;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace locmap
