#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "locmap/matching.hpp"
#include "locmap/synth.hpp"
#include "oracles.hpp"

namespace locmap {
namespace {

TEST(Synth, EmptyScene) {
  SynthConfig cfg = fixture::SmallScene(1);
  cfg.n_points = 0;
  const auto s = GenerateScene(cfg);
  EXPECT_TRUE(s.truth.points.empty());
  EXPECT_TRUE(s.truth.correspondences.empty());
  EXPECT_EQ(s.truth.map_images.size(), 8u);
  for (const auto& [image, kp] : s.mapping.features.keypoints.at("synth").images) EXPECT_EQ(kp.rows, 0u);
  ValidateDataset(s.mapping);
}

TEST(Synth, SameSeedSameBytes) {
  SynthConfig cfg = fixture::SmallScene(2);
  cfg.depth_render = true;
  cfg.outlier_fraction = 0.1;
  cfg.rig = SynthConfig::RigSpec{2, {0.3}};
  const auto a = oracle::TempDir("synth_a"), b = oracle::TempDir("synth_b");
  WriteScene(GenerateScene(cfg), cfg, a);
  WriteScene(GenerateScene(cfg), cfg, b);
  const auto sa = oracle::Snapshot(a);
  EXPECT_FALSE(sa.empty());
  EXPECT_EQ(sa, oracle::Snapshot(b));

  cfg.seed = 3;
  const auto c = oracle::TempDir("synth_c");
  WriteScene(GenerateScene(cfg), cfg, c);
  EXPECT_NE(sa, oracle::Snapshot(c));
}

TEST(Synth, CorrespondencesReprojectWithinNoise) {
  SynthConfig cfg = fixture::SmallScene(4);
  cfg.pixel_noise_sigma = 0.5;
  cfg.outlier_fraction = 0.25;
  const auto s = GenerateScene(cfg);
  ASSERT_GT(s.truth.correspondences.size(), 100u);
  const ImageCatalog map_cat(s.mapping), query_cat(s.query);
  for (const auto& c : s.truth.correspondences) {
    const bool is_map = map_cat.Find(c.image_path) != nullptr;
    const Dataset& ds = is_map ? s.mapping : s.query;
    const Camera& cam = (is_map ? map_cat : query_cat).CameraOf(c.image_path);
    const auto px = Project(cam, s.truth.poses.at(c.image_path), s.truth.points.at(c.point_id));
    ASSERT_TRUE(px);
    const auto& kp = ds.features.keypoints.at("synth").images.at(c.image_path);
    EXPECT_LT((*px - KeypointPixel(kp, c.keypoint_idx)).norm(), 5 * cfg.pixel_noise_sigma * std::sqrt(2.0));
  }
}

TEST(Synth, OutlierFractionOfKeypoints) {
  SynthConfig cfg = fixture::SmallScene(5);
  cfg.outlier_fraction = 0.3;
  const auto s = GenerateScene(cfg);
  std::map<std::string, std::size_t> true_count;
  for (const auto& c : s.truth.correspondences) ++true_count[c.image_path];
  for (const auto& [image, kp] : s.mapping.features.keypoints.at("synth").images) {
    const double n = static_cast<double>(kp.rows);
    const double outliers = n - static_cast<double>(true_count[image]);
    EXPECT_NEAR(outliers / n, 0.3, 1.0 / n + 1e-12) << image;
  }
  cfg.outlier_fraction = 1.0;
  EXPECT_THROW(GenerateScene(cfg), ConfigError);
}

TEST(Synth, DepthMatchesCameraZ) {
  SynthConfig cfg = fixture::SmallScene(6);
  cfg.pixel_noise_sigma = 0.0;
  cfg.depth_render = true;
  const auto s = GenerateScene(cfg);
  const ImageCatalog cat(s.mapping);
  std::size_t checked = 0;
  for (const auto& c : s.truth.correspondences) {
    const auto* e = cat.Find(c.image_path);
    if (!e) continue;
    const auto& depth = s.mapping.depth_maps.at(s.mapping.depth_records.at({e->timestamp, e->sensor_id}));
    const Pose& pose = s.truth.poses.at(c.image_path);
    const Point3 xc = pose.rotation * s.truth.points.at(c.point_id) + pose.translation;
    const auto px = Project(cat.CameraOf(c.image_path), pose, s.truth.points.at(c.point_id));
    const std::size_t u = static_cast<std::size_t>(std::floor(px->x()));
    const std::size_t v = static_cast<std::size_t>(std::floor(px->y()));
    const float d = depth.data[v * depth.width + u];
    EXPECT_LT(std::abs(d - xc.z()), 1e-6 * xc.z());
    ++checked;
  }
  EXPECT_GT(checked, 100u);
}

TEST(Synth, PlaneDepth) {
  const Camera cam = Camera::Pinhole("c", 40, 30, 30, 30, 20, 15);
  // plane z = 3 seen from the origin looking along +z
  const auto d = RenderPlaneDepth(cam, Pose::Identity(), {0, 0, 1}, 3.0);
  for (float x : d.data) EXPECT_FLOAT_EQ(x, 3.0f);
}

TEST(Synth, RigLayout) {
  SynthConfig cfg = fixture::SmallScene(7);
  cfg.rig = SynthConfig::RigSpec{3, {0.2, 0.5}};
  const auto s = GenerateScene(cfg);
  EXPECT_EQ(s.truth.map_images.size(), 24u);
  EXPECT_EQ(s.truth.query_images.size(), 9u);
  ASSERT_EQ(s.query.rigs.size(), 1u);
  const Pose& p0 = s.truth.poses.at("qcam0/000001.jpg");
  const Pose& p2 = s.truth.poses.at("qcam2/000001.jpg");
  EXPECT_NEAR((p0.Center() - p2.Center()).norm(), 0.5, 1e-9);
  ValidateDataset(s.mapping);
  ValidateDataset(s.query);
}

TEST(Synth, InvalidConfigs) {
  SynthConfig cfg = fixture::SmallScene(8);
  cfg.n_points = -1;
  EXPECT_THROW(GenerateScene(cfg), ConfigError);
  cfg = fixture::SmallScene(8);
  cfg.focal_px = 0;
  EXPECT_THROW(GenerateScene(cfg), ConfigError);
  cfg = fixture::SmallScene(8);
  cfg.rig = SynthConfig::RigSpec{3, {0.2}};
  EXPECT_THROW(GenerateScene(cfg), ConfigError);
  cfg = fixture::SmallScene(8);
  cfg.pose_noise = SynthConfig::PoseNoise{-1, 0};
  EXPECT_THROW(GenerateScene(cfg), ConfigError);
}

TEST(Synth, PoseNoiseOnlyTouchesStoredMapPoses) {
  SynthConfig cfg = fixture::SmallScene(9);
  const auto clean = GenerateScene(cfg);
  cfg.pose_noise = SynthConfig::PoseNoise{0.05, 0.5};
  const auto noisy = GenerateScene(cfg);
  EXPECT_EQ(clean.truth.correspondences, noisy.truth.correspondences);
  const ImageCatalog cat(noisy.mapping);
  double worst = 0;
  for (const auto& image : noisy.truth.map_images) {
    const auto e = PoseError(cat.RequirePose(image), noisy.truth.poses.at(image));
    worst = std::max(worst, e.meters);
  }
  EXPECT_GT(worst, 0.0);
  EXPECT_LT(worst, 1.0);
}

}  // namespace
}  // namespace locmap
