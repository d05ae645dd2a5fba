#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "locmap/errors.hpp"

namespace locmap {

using Point2 = Eigen::Vector2d;
using Point3 = Eigen::Vector3d;

inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;
inline constexpr double kDegToRad = std::numbers::pi / 180.0;

/// Rigid world-to-camera transform: x_cam = R(q) * x_world + t.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Pose() = default;
  Pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& t)
      : rotation(q), translation(t) {}

  static Pose Identity() { return {}; }

  /// Pose of a camera with center `center` and world-to-camera rotation `q`.
  static Pose FromCenter(const Eigen::Quaterniond& q, const Point3& center) {
    return {q, -(q * center)};
  }

  Eigen::Matrix3d RotationMatrix() const { return rotation.toRotationMatrix(); }

  Point3 Center() const { return -(rotation.conjugate() * translation); }

  Point3 operator*(const Point3& x) const { return rotation * x + translation; }

  Eigen::Matrix4d Matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = RotationMatrix();
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  /// Same transform with a unit quaternion of non-negative w.
  Pose Canonical() const {
    Pose out = *this;
    out.rotation.normalize();
    if (out.rotation.w() < 0.0) out.rotation.coeffs() *= -1.0;
    return out;
  }
};

/// x -> a(b(x)).
inline Pose Compose(const Pose& a, const Pose& b) {
  Pose out{a.rotation * b.rotation, a.rotation * b.translation + a.translation};
  return out.Canonical();
}

inline Pose Inverse(const Pose& p) {
  const Eigen::Quaterniond qi = p.rotation.conjugate();
  return Pose{qi, -(qi * p.translation)}.Canonical();
}

enum class CameraModel { kSimplePinhole, kPinhole };

inline const char* CameraModelName(CameraModel m) {
  return m == CameraModel::kSimplePinhole ? "SIMPLE_PINHOLE" : "PINHOLE";
}

inline std::optional<CameraModel> ParseCameraModel(const std::string& s) {
  if (s == "SIMPLE_PINHOLE") return CameraModel::kSimplePinhole;
  if (s == "PINHOLE") return CameraModel::kPinhole;
  return std::nullopt;
}

inline std::size_t NumCameraParams(CameraModel m) {
  return m == CameraModel::kSimplePinhole ? 3 : 4;
}

struct Camera {
  std::string sensor_id;
  CameraModel model = CameraModel::kPinhole;
  int width = 0;
  int height = 0;
  // SIMPLE_PINHOLE: f, cx, cy.  PINHOLE: fx, fy, cx, cy.
  std::vector<double> params;

  static Camera Pinhole(std::string id, int w, int h, double fx, double fy,
                        double cx, double cy) {
    return {std::move(id), CameraModel::kPinhole, w, h, {fx, fy, cx, cy}};
  }

  double fx() const { return params[0]; }
  double fy() const {
    return model == CameraModel::kSimplePinhole ? params[0] : params[1];
  }
  double cx() const {
    return model == CameraModel::kSimplePinhole ? params[1] : params[2];
  }
  double cy() const {
    return model == CameraModel::kSimplePinhole ? params[2] : params[3];
  }

  Eigen::Matrix3d K() const {
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = fx();
    k(1, 1) = fy();
    k(0, 2) = cx();
    k(1, 2) = cy();
    return k;
  }

  /// Empty string when valid, otherwise a description of the violation.
  std::string Violation() const {
    if (width <= 0 || height <= 0) return "non-positive image size";
    if (params.size() != NumCameraParams(model))
      return "parameter count does not match model";
    for (double p : params)
      if (!std::isfinite(p)) return "non-finite parameter";
    if (fx() <= 0.0 || fy() <= 0.0) return "non-positive focal length";
    if (cx() < 0.0 || cx() >= width || cy() < 0.0 || cy() >= height)
      return "principal point outside the image";
    return {};
  }

  bool InImage(const Point2& px) const {
    return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < width && px.y() < height;
  }

  /// Normalized image coordinates (z = 1) of a pixel.
  Eigen::Vector3d Unproject(const Point2& px) const {
    return {(px.x() - cx()) / fx(), (px.y() - cy()) / fy(), 1.0};
  }
};

inline constexpr double kMinProjectionDepth = 1e-9;

inline std::optional<Point2> Project(const Camera& cam, const Pose& pose,
                                     const Point3& x) {
  const Point3 xc = pose * x;
  if (xc.z() <= kMinProjectionDepth) return std::nullopt;
  return Point2(cam.fx() * xc.x() / xc.z() + cam.cx(),
                cam.fy() * xc.y() / xc.z() + cam.cy());
}

inline Point3 Backproject(const Camera& cam, const Pose& pose, const Point2& px,
                          double depth_m) {
  if (!(depth_m > 0.0))
    throw NonPositiveDepth("backproject: depth must be positive, got " +
                           std::to_string(depth_m));
  const Point3 xc = cam.Unproject(px) * depth_m;
  return pose.rotation.conjugate() * (xc - pose.translation);
}

/// Rotation angle between two unit quaternions in degrees, in [0, 180].
/// Equal to 2*acos(min(1, |q1.q2|)); evaluated through atan2 of the
/// relative rotation, which stays accurate near 0 and 180 degrees.
inline double RotationAngleDeg(const Eigen::Quaterniond& q1,
                               const Eigen::Quaterniond& q2) {
  const Eigen::Quaterniond rel = q1.conjugate() * q2;
  const double half = std::atan2(rel.vec().norm(), std::abs(rel.w()));
  return std::min(180.0, 2.0 * half * kRadToDeg);
}

struct PosedObservation {
  std::reference_wrapper<const Camera> camera;
  Pose pose;
  Point2 pixel;
};

struct TriangulationResult {
  Point3 point;
  std::vector<double> reprojection_errors;  // pixels, one per view
};

inline double ReprojectionError(const Camera& cam, const Pose& pose,
                                const Point3& x, const Point2& px) {
  const auto proj = Project(cam, pose, x);
  if (!proj) return std::numeric_limits<double>::infinity();
  return (*proj - px).norm();
}

struct TriangulationOptions {
  int max_iterations = 10;
  double step_tolerance_m = 1e-10;
  double max_singular_ratio = 0.99;
};

/// Linear DLT followed by Gauss-Newton refinement of the summed squared
/// reprojection error.
inline TriangulationResult Triangulate(std::span<const PosedObservation> obs,
                                       const TriangulationOptions& options = {}) {
  if (obs.size() < 2)
    throw DegenerateGeometry("triangulate: need at least two observations");

  Eigen::MatrixXd A(2 * obs.size(), 4);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const Camera& cam = obs[i].camera.get();
    const Eigen::Vector3d xn = cam.Unproject(obs[i].pixel);
    Eigen::Matrix<double, 3, 4> P;
    P.leftCols<3>() = obs[i].pose.RotationMatrix();
    P.col(3) = obs[i].pose.translation;
    A.row(2 * i) = xn.x() * P.row(2) - P.row(0);
    A.row(2 * i + 1) = xn.y() * P.row(2) - P.row(1);
  }
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    const double n = A.row(r).norm();
    if (n > 0.0) A.row(r) /= n;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::Vector4d sv = svd.singularValues().head<4>();
  if (sv(2) <= 1e-12 * sv(0) || sv(3) / sv(2) > options.max_singular_ratio)
    throw DegenerateGeometry("triangulate: near-parallel viewing rays");
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) <= 1e-14 * h.head<3>().norm())
    throw DegenerateGeometry("triangulate: point at infinity");
  Point3 x = h.head<3>() / h(3);

  auto cost = [&](const Point3& p) {
    double c = 0.0;
    for (const auto& o : obs) {
      const Point3 xc = o.pose * p;
      if (xc.z() <= kMinProjectionDepth)
        return std::numeric_limits<double>::infinity();
      const Camera& cam = o.camera.get();
      const Point2 r(cam.fx() * xc.x() / xc.z() + cam.cx() - o.pixel.x(),
                     cam.fy() * xc.y() / xc.z() + cam.cy() - o.pixel.y());
      c += r.squaredNorm();
    }
    return c;
  };

  double current = cost(x);
  for (int it = 0; it < options.max_iterations && std::isfinite(current); ++it) {
    Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
    Eigen::Vector3d g = Eigen::Vector3d::Zero();
    for (const auto& o : obs) {
      const Camera& cam = o.camera.get();
      const Eigen::Matrix3d R = o.pose.RotationMatrix();
      const Point3 xc = R * x + o.pose.translation;
      const double iz = 1.0 / xc.z();
      const Point2 r(cam.fx() * xc.x() * iz + cam.cx() - o.pixel.x(),
                     cam.fy() * xc.y() * iz + cam.cy() - o.pixel.y());
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << cam.fx() * iz, 0.0, -cam.fx() * xc.x() * iz * iz,  //
          0.0, cam.fy() * iz, -cam.fy() * xc.y() * iz * iz;
      const Eigen::Matrix<double, 2, 3> J = dproj * R;
      H += J.transpose() * J;
      g += J.transpose() * r;
    }
    const Eigen::Vector3d step = H.ldlt().solve(-g);
    if (!step.allFinite()) break;
    const Point3 candidate = x + step;
    const double next = cost(candidate);
    if (!(next <= current)) break;
    x = candidate;
    current = next;
    if (step.norm() < options.step_tolerance_m) break;
  }

  TriangulationResult result{x, {}};
  result.reprojection_errors.reserve(obs.size());
  for (const auto& o : obs)
    result.reprojection_errors.push_back(
        ReprojectionError(o.camera.get(), o.pose, x, o.pixel));
  return result;
}

inline Eigen::Matrix3d Skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0.0, -v.z(), v.y(),  //
      v.z(), 0.0, -v.x(),   //
      -v.y(), v.x(), 0.0;
  return s;
}

/// Fundamental matrix mapping pixels of A to epipolar lines in B, or nullopt
/// for a zero baseline.
inline std::optional<Eigen::Matrix3d> FundamentalFromPoses(const Camera& cam_a,
                                                           const Pose& pose_a,
                                                           const Camera& cam_b,
                                                           const Pose& pose_b) {
  const Eigen::Matrix3d R = pose_b.RotationMatrix() * pose_a.RotationMatrix().transpose();
  const Eigen::Vector3d t = pose_b.translation - R * pose_a.translation;
  const double scale =
      std::max({1.0, pose_a.translation.norm(), pose_b.translation.norm()});
  if (t.norm() <= 1e-12 * scale) return std::nullopt;
  const Eigen::Matrix3d E = Skew(t) * R;
  return cam_b.K().inverse().transpose() * E * cam_a.K().inverse();
}

/// Mean of the two point-to-epipolar-line distances in pixels. +inf when the
/// poses share a center (no epipolar constraint).
inline double EpipolarDistance(const Camera& cam_a, const Pose& pose_a,
                               const Point2& pa, const Camera& cam_b,
                               const Pose& pose_b, const Point2& pb) {
  const auto F = FundamentalFromPoses(cam_a, pose_a, cam_b, pose_b);
  if (!F) return std::numeric_limits<double>::infinity();
  const Eigen::Vector3d xa(pa.x(), pa.y(), 1.0);
  const Eigen::Vector3d xb(pb.x(), pb.y(), 1.0);
  const Eigen::Vector3d line_b = *F * xa;
  const Eigen::Vector3d line_a = F->transpose() * xb;
  const double na = line_a.head<2>().norm();
  const double nb = line_b.head<2>().norm();
  if (na == 0.0 || nb == 0.0) return std::numeric_limits<double>::infinity();
  const double algebraic = std::abs(xb.dot(line_b));
  return 0.5 * (algebraic / na + algebraic / nb);
}

}  // namespace locmap
