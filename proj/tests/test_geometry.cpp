#include <gtest/gtest.h>

#include <random>

#include "locmap/geometry.hpp"
#include "oracles.hpp"

namespace locmap {
namespace {

Camera TestCamera() { return Camera::Pinhole("cam", 100, 100, 100, 100, 50, 50); }

TEST(Pose, ComposeWithIdentity) {
  std::mt19937_64 rng(1);
  const Pose p = oracle::RandomPose(rng);
  EXPECT_LT(oracle::MaxAbsDiff(oracle::ToMatrix(Compose(Pose::Identity(), p)),
                               oracle::ToMatrix(p)),
            1e-12);
}

TEST(Pose, ComposeWithInverseIsIdentity) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Pose p = oracle::RandomPose(rng);
    EXPECT_LT(oracle::MaxAbsDiff(oracle::ToMatrix(Compose(p, Inverse(p))), oracle::Mat4::Identity()),
              1e-12);
  }
}

TEST(Pose, ComposeMatchesMatrixProduct) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Pose a = oracle::RandomPose(rng), b = oracle::RandomPose(rng);
    EXPECT_LT(oracle::MaxAbsDiff(oracle::ToMatrix(Compose(a, b)),
                                 oracle::ToMatrix(a) * oracle::ToMatrix(b)),
              1e-12);
  }
}

TEST(Pose, InverseOfPureTranslation) {
  const Pose p(Eigen::Quaterniond::Identity(), {1, -2, 3});
  const Pose inv = Inverse(p);
  EXPECT_TRUE(inv.translation.isApprox(Eigen::Vector3d(-1, 2, -3)));
  EXPECT_NEAR(inv.rotation.w(), 1.0, 1e-15);
  EXPECT_LT(oracle::MaxAbsDiff(oracle::ToMatrix(Inverse(Pose::Identity())), oracle::Mat4::Identity()),
            1e-15);
}

TEST(Pose, InverseMatchesMatrixInverse) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) {
    const Pose p = oracle::RandomPose(rng);
    EXPECT_LT(oracle::MaxAbsDiff(oracle::ToMatrix(Inverse(p)), oracle::ToMatrix(p).inverse()), 1e-12);
  }
}

TEST(Pose, CanonicalHasNonNegativeW) {
  Pose p(Eigen::Quaterniond(-0.5, 0.5, 0.5, 0.5), {0, 0, 0});
  const Pose c = p.Canonical();
  EXPECT_GE(c.rotation.w(), 0.0);
  EXPECT_LT(oracle::MaxAbsDiff(oracle::ToMatrix(c), oracle::ToMatrix(p)), 1e-15);
}

TEST(Project, PrincipalRay) {
  const auto px = Project(TestCamera(), Pose::Identity(), {0, 0, 1});
  ASSERT_TRUE(px);
  EXPECT_DOUBLE_EQ(px->x(), 50.0);
  EXPECT_DOUBLE_EQ(px->y(), 50.0);
}

TEST(Project, OffAxis) {
  const auto px = Project(TestCamera(), Pose::Identity(), {0.5, 0, 1});
  ASSERT_TRUE(px);
  EXPECT_DOUBLE_EQ(px->x(), 100.0);
  EXPECT_DOUBLE_EQ(px->y(), 50.0);
}

TEST(Project, BehindCamera) {
  EXPECT_FALSE(Project(TestCamera(), Pose::Identity(), {0, 0, -1}));
}

TEST(Project, SimplePinholeMatchesPinhole) {
  Camera simple{"s", CameraModel::kSimplePinhole, 100, 100, {100, 50, 50}};
  const Point3 x(0.3, -0.2, 2.0);
  EXPECT_TRUE(Project(simple, Pose::Identity(), x)->isApprox(*Project(TestCamera(), Pose::Identity(), x)));
}

TEST(Backproject, PrincipalPointAtDepth) {
  const Point3 x = Backproject(TestCamera(), Pose::Identity(), {50, 50}, 2.0);
  EXPECT_TRUE(x.isApprox(Point3(0, 0, 2)));
}

TEST(Backproject, InvertsProjection) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  const Camera cam = Camera::Pinhole("c", 640, 480, 500, 510, 320, 240);
  for (int i = 0; i < 1000; ++i) {
    const Pose pose = oracle::RandomPose(rng, 2.0);
    const Point3 xc(u(rng), u(rng), 1.0 + 4.0 * (u(rng) + 1.0));
    const Point3 x = pose.rotation.conjugate() * (xc - pose.translation);
    const auto px = Project(cam, pose, x);
    ASSERT_TRUE(px);
    EXPECT_LT((Backproject(cam, pose, *px, xc.z()) - x).norm(), 1e-9);
  }
}

TEST(Backproject, YawedPoseLandsOnRotatedAxis) {
  // camera rotated 90 degrees about y: its optical axis is world -x
  const Eigen::Quaterniond q(Eigen::AngleAxisd(std::numbers::pi / 2, Eigen::Vector3d::UnitY()));
  const Pose pose(q, Eigen::Vector3d::Zero());
  const Point3 x = Backproject(TestCamera(), pose, {50, 50}, 1.0);
  const Eigen::Vector3d expected = oracle::ToMatrix(pose).topLeftCorner<3, 3>().transpose() *
                                   Eigen::Vector3d::UnitZ();
  EXPECT_LT((x - expected).norm(), 1e-12);
  EXPECT_NEAR(x.x(), -1.0, 1e-12);
}

TEST(Backproject, RejectsNonPositiveDepth) {
  EXPECT_THROW(Backproject(TestCamera(), Pose::Identity(), {1, 1}, 0.0), NonPositiveDepth);
  EXPECT_THROW(Backproject(TestCamera(), Pose::Identity(), {1, 1}, -1.0), NonPositiveDepth);
}

TEST(RotationAngle, Basics) {
  std::mt19937_64 rng(6);
  const Pose p = oracle::RandomPose(rng);
  EXPECT_EQ(RotationAngleDeg(p.rotation, p.rotation), 0.0);
  Eigen::Quaterniond neg = p.rotation;
  neg.coeffs() *= -1.0;
  EXPECT_NEAR(RotationAngleDeg(p.rotation, neg), 0.0, 1e-12);
  const Eigen::Quaterniond z90(Eigen::AngleAxisd(std::numbers::pi / 2, Eigen::Vector3d::UnitZ()));
  EXPECT_NEAR(RotationAngleDeg(Eigen::Quaterniond::Identity(), z90), 90.0, 1e-9);
}

TEST(RotationAngle, MatchesMatrixOracle) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const Pose a = oracle::RandomPose(rng), b = oracle::RandomPose(rng);
    EXPECT_NEAR(RotationAngleDeg(a.rotation, b.rotation), oracle::AngleDeg(a, b), 1e-9);
  }
}

TEST(Triangulate, TwoExactViews) {
  const Camera cam = TestCamera();
  const Point3 x(0, 0, 5);
  const Pose a = Pose::Identity();
  const Pose b(Eigen::Quaterniond::Identity(), {-1, 0, 0});
  std::vector<PosedObservation> obs = {{cam, a, *Project(cam, a, x)}, {cam, b, *Project(cam, b, x)}};
  const auto r = Triangulate(obs);
  EXPECT_LT((r.point - x).norm(), 1e-9);
  for (double e : r.reprojection_errors) EXPECT_LT(e, 1e-9);
}

TEST(Triangulate, NoisyTenViews) {
  const Camera cam = Camera::Pinhole("c", 1000, 1000, 800, 800, 500, 500);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(0.0, 0.5);
  const Point3 x(0.2, -0.1, 5.0);
  std::vector<PosedObservation> obs;
  for (int i = 0; i < 10; ++i) {
    const Pose p(Eigen::Quaterniond::Identity(), {-0.5 + 0.1 * i, 0.05 * (i % 3), 0});
    obs.push_back({cam, p, *Project(cam, p, x) + Point2(noise(rng), noise(rng))});
  }
  EXPECT_LT((Triangulate(obs).point - x).norm(), 5e-3);
}

TEST(Triangulate, ZeroBaselineIsDegenerate) {
  const Camera cam = TestCamera();
  const Pose p = Pose::Identity();
  std::vector<PosedObservation> obs = {{cam, p, {50, 50}}, {cam, p, {50, 50}}};
  EXPECT_THROW(Triangulate(obs), DegenerateGeometry);
  EXPECT_THROW(Triangulate(std::span<const PosedObservation>(obs.data(), 1)), DegenerateGeometry);
}

TEST(Triangulate, RandomNoiselessPointsAreExact) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  const Camera cam = Camera::Pinhole("c", 1000, 1000, 800, 800, 500, 500);
  for (int i = 0; i < 500; ++i) {
    const Point3 x(u(rng), u(rng), u(rng));
    std::vector<PosedObservation> obs;
    for (int v = 0; v < 3; ++v) {
      const Point3 center(3.0 * u(rng), 3.0 * u(rng), -6.0);
      const Pose p = Pose::FromCenter(Eigen::Quaterniond::Identity(), center);
      const auto px = Project(cam, p, x);
      ASSERT_TRUE(px);
      obs.push_back({cam, p, *px});
    }
    EXPECT_LT((Triangulate(obs).point - x).norm(), 1e-6);
  }
}

TEST(Epipolar, ExactCorrespondenceHasZeroDistance) {
  std::mt19937_64 rng(10);
  const Camera cam = Camera::Pinhole("c", 1000, 1000, 800, 800, 500, 500);
  const Pose a = Pose::Identity();
  const Pose b(Eigen::Quaterniond(Eigen::AngleAxisd(0.1, Eigen::Vector3d::UnitY())), {-1, 0.1, 0});
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 100; ++i) {
    const Point3 x(u(rng), u(rng), 5 + u(rng));
    EXPECT_LT(EpipolarDistance(cam, a, *Project(cam, a, x), cam, b, *Project(cam, b, x)), 1e-7);
  }
}

TEST(Epipolar, OrthogonalDisplacement) {
  const Camera cam = Camera::Pinhole("c", 1000, 1000, 800, 800, 500, 500);
  const Pose a = Pose::Identity();
  const Pose b(Eigen::Quaterniond::Identity(), {-1, 0, 0});  // horizontal baseline
  const Point3 x(0.1, 0.2, 5);
  const Point2 pa = *Project(cam, a, x);
  const Point2 pb = *Project(cam, b, x) + Point2(0, 3);  // epipolar lines are horizontal
  EXPECT_NEAR(EpipolarDistance(cam, a, pa, cam, b, pb), 3.0, 1e-9);
}

TEST(Epipolar, ZeroBaselineIsUnconstrained) {
  const Camera cam = TestCamera();
  EXPECT_TRUE(std::isinf(EpipolarDistance(cam, Pose::Identity(), {1, 2}, cam, Pose::Identity(), {3, 4})));
}

TEST(Camera, Violations) {
  EXPECT_TRUE(TestCamera().Violation().empty());
  EXPECT_FALSE(Camera::Pinhole("c", 0, 10, 1, 1, 0, 0).Violation().empty());
  EXPECT_FALSE(Camera::Pinhole("c", 10, 10, -1, 1, 5, 5).Violation().empty());
  EXPECT_FALSE(Camera::Pinhole("c", 10, 10, 1, 1, 50, 5).Violation().empty());
  EXPECT_FALSE((Camera{"c", CameraModel::kPinhole, 10, 10, {1, 2, 3}}).Violation().empty());
}

}  // namespace
}  // namespace locmap
