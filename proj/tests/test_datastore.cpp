#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "locmap/datastore.hpp"
#include "locmap/matching.hpp"
#include "oracles.hpp"

namespace locmap {
namespace {

namespace fs = std::filesystem;

using fixture::RichDataset;

TEST(Datastore, MinimalDataset) {
  const auto root = oracle::TempDir("minimal");
  csv::WriteFile(root / "sensors/sensors.txt",
                 "# sensors version 1.0\ncam, PINHOLE, 640, 480, 500, 500, 320, 240\n");
  const Dataset ds = LoadDataset(root);
  ASSERT_EQ(ds.cameras.size(), 1u);
  EXPECT_EQ(ds.cameras[0].sensor_id, "cam");
  EXPECT_EQ(ds.cameras[0].fx(), 500.0);
  EXPECT_TRUE(ds.rigs.empty());
  EXPECT_TRUE(ds.trajectories.empty());
  EXPECT_TRUE(ds.image_records.empty());
  EXPECT_TRUE(ds.features.keypoints.empty());
  EXPECT_FALSE(ds.map);
}

TEST(Datastore, MissingSensorsFileIsIoError) {
  EXPECT_THROW(LoadDataset(oracle::TempDir("nosensors")), IoError);
}

TEST(Datastore, EmptyDatasetWritesHeaderOnly) {
  const auto root = oracle::TempDir("empty");
  SaveDataset(Dataset{}, root);
  EXPECT_EQ(csv::ReadBytes(root / "sensors/sensors.txt"), "# sensors version 1.0\n");
}

TEST(Datastore, TrajectoriesSortedByTimestampThenDevice) {
  Dataset ds;
  ds.cameras.push_back(Camera::Pinhole("b", 10, 10, 5, 5, 5, 5));
  ds.cameras.push_back(Camera::Pinhole("a", 10, 10, 5, 5, 5, 5));
  ds.trajectories[{7, "b"}] = Pose::Identity();
  ds.trajectories[{3, "a"}] = Pose(Eigen::Quaterniond::Identity(), {1, 2, 3});
  const auto root = oracle::TempDir("traj");
  SaveDataset(ds, root);
  const auto t = csv::Table::Read(root / "sensors/trajectories.txt");
  ASSERT_EQ(t.rows().size(), 2u);
  EXPECT_EQ(t.rows()[0].fields[0], "3");
  EXPECT_EQ(t.rows()[1].fields[0], "7");
  EXPECT_EQ(t.rows()[0].fields[6], "1");
}

TEST(Datastore, LoadsRigsAndDepth) {
  const auto root = oracle::TempDir("rigdepth");
  const Dataset ds = RichDataset(3);
  SaveDataset(ds, root);
  ASSERT_TRUE(fs::exists(root / "sensors/rigs.txt"));
  ASSERT_TRUE(fs::exists(root / "sensors/records_depth.txt"));
  const Dataset back = LoadDataset(root);
  EXPECT_EQ(back.rigs.size(), 1u);
  EXPECT_EQ(back.depth_records.size(), ds.depth_records.size());
  EXPECT_EQ(back.depth_maps, ds.depth_maps);
  EXPECT_EQ(back.features, ds.features);
  ASSERT_TRUE(back.map);
  EXPECT_EQ(back.map->observations, ds.map->observations);
  EXPECT_EQ(back.map->points.begin()->second.rgb, ds.map->points.begin()->second.rgb);
}

TEST(Datastore, SaveLoadSaveIsByteIdentical) {
  for (std::uint64_t seed : {11u, 12u}) {
    const auto a = oracle::TempDir("rt_a"), b = oracle::TempDir("rt_b");
    SaveDataset(RichDataset(seed), a);
    SaveDataset(LoadDataset(a), b);
    EXPECT_EQ(oracle::Snapshot(a), oracle::Snapshot(b));
  }
}

TEST(Datastore, RoundTripIsIdempotent) {
  const auto a = oracle::TempDir("idem_a"), b = oracle::TempDir("idem_b");
  SaveDataset(RichDataset(5), a);
  const Dataset once = LoadDataset(a);
  SaveDataset(once, b);
  const Dataset twice = LoadDataset(b);
  EXPECT_EQ(twice.features, once.features);
  EXPECT_EQ(twice.image_records, once.image_records);
  EXPECT_EQ(twice.depth_maps, once.depth_maps);
  for (const auto& [key, pose] : once.trajectories) {
    EXPECT_EQ(twice.trajectories.at(key).rotation.coeffs(), pose.rotation.coeffs());
    EXPECT_EQ(twice.trajectories.at(key).translation, pose.translation);
  }
}

TEST(Datastore, PosesRoundTripExactly) {
  std::mt19937_64 rng(1);
  Dataset ds;
  ds.cameras.push_back(Camera::Pinhole("c", 10, 10, 5, 5, 5, 5));
  for (Timestamp t = 0; t < 50; ++t) ds.trajectories[{t, "c"}] = oracle::RandomPose(rng).Canonical();
  const auto root = oracle::TempDir("poses");
  SaveDataset(ds, root);
  const Dataset back = LoadDataset(root);
  for (const auto& [key, pose] : ds.trajectories) {
    EXPECT_EQ(back.trajectories.at(key).rotation.coeffs(), pose.rotation.coeffs());
    EXPECT_EQ(back.trajectories.at(key).translation, pose.translation);
  }
}

TEST(DepthMap, ZerosAreInvalid) {
  const auto root = oracle::TempDir("depth0");
  SaveDepthMap(DepthImage{2, 2, {0, 0, 0, 0}}, root / "d.depth");
  const DepthImage img = LoadDepthMap(root / "d.depth");
  EXPECT_EQ(img.width, 2);
  EXPECT_EQ(img.height, 2);
  for (float v : img.data) EXPECT_EQ(v, 0.0f);
}

TEST(DepthMap, PayloadSizeMismatch) {
  const auto root = oracle::TempDir("depthbad");
  csv::WriteFloats(root / "d.depth", {1, 2, 3});
  csv::WriteTable(root / "d.depth.meta", "depth_meta", {{"2", "2"}});
  EXPECT_THROW(LoadDepthMap(root / "d.depth"), SizeMismatch);
}

TEST(DepthMap, NegativeDepthRejected) {
  const auto root = oracle::TempDir("depthneg");
  csv::WriteFloats(root / "d.depth", {1, -2});
  csv::WriteTable(root / "d.depth.meta", "depth_meta", {{"2", "1"}});
  EXPECT_THROW(LoadDepthMap(root / "d.depth"), NegativeDepth);
}

TEST(DepthMap, RenderedPlaneAtTwoMeters) {
  const Camera cam = Camera::Pinhole("c", 64, 48, 50, 50, 32, 24);
  const DepthImage img = RenderPlaneDepth(cam, Pose::Identity(), {0, 0, 1}, 2.0);
  const auto root = oracle::TempDir("plane");
  SaveDepthMap(img, root / "p.depth");
  for (float v : LoadDepthMap(root / "p.depth").data) EXPECT_NEAR(v, 2.0, 1e-6);
}

TEST(Datastore, UnknownSensorInRecords) {
  const auto root = oracle::TempDir("unknown");
  csv::WriteFile(root / "sensors/sensors.txt", "# sensors version 1.0\ncam, PINHOLE, 10, 10, 5, 5, 5, 5\n");
  csv::WriteFile(root / "sensors/records_camera.txt", "# records_camera version 1.0\n0, other, x.jpg\n");
  EXPECT_THROW(LoadDataset(root), UnknownSensorRef);
}

TEST(Datastore, MalformedRows) {
  const auto root = oracle::TempDir("malformed");
  csv::WriteFile(root / "sensors/sensors.txt", "# sensors version 1.0\ncam, PINHOLE, ten, 10, 5, 5, 5, 5\n");
  EXPECT_THROW(LoadDataset(root), MalformedCsv);
  csv::WriteFile(root / "sensors/sensors.txt", "# sensors version 1.0\ncam, OPENCV, 10, 10, 5, 5, 5, 5\n");
  EXPECT_THROW(LoadDataset(root), MalformedCsv);
}

TEST(Datastore, DanglingObservation) {
  const auto root = oracle::TempDir("dangling");
  csv::WriteFile(root / "sensors/sensors.txt", "# sensors version 1.0\ncam, PINHOLE, 10, 10, 5, 5, 5, 5\n");
  csv::WriteFile(root / "reconstruction/points3d.txt", "# points3d version 1.0\n1, 0, 0, 1\n");
  csv::WriteFile(root / "reconstruction/observations.txt",
                 "# observations version 1.0\n2, synth, a.jpg, 0\n");
  EXPECT_THROW(LoadDataset(root), DanglingObservation);
}

TEST(Datastore, MatchFileWithPartialRow) {
  const auto root = oracle::TempDir("badmatch");
  const Dataset ds = RichDataset(4);
  SaveDataset(ds, root);
  const auto& [pair, list] = *ds.features.matches.at("synth").begin();
  csv::WriteFloats(root / "reconstruction/matches/synth" / (pair.first + ".overlapping") /
                       (pair.second + ".matches"),
                   {1, 2});
  EXPECT_THROW(LoadDataset(root), BinaryShapeMismatch);
}

TEST(Validate, KeypointObservingTwoPoints) {
  Dataset ds = RichDataset(6);
  const auto first = ds.map->observations.begin();
  const Observation o = first->second.front();
  ds.map->observations[std::next(first)->first].push_back(o);
  EXPECT_THROW(ValidateDataset(ds), InvariantViolation);
}

TEST(Validate, DescriptorRowCountMustMatchKeypoints) {
  Dataset ds = RichDataset(7);
  auto& arr = ds.features.descriptors["synth"].images.begin()->second;
  arr.rows -= 1;
  arr.data.resize(arr.rows * arr.cols);
  EXPECT_ANY_THROW(ValidateDataset(ds));
}

TEST(Csv, RealsUseSeventeenDigits) {
  EXPECT_EQ(csv::FormatReal(0.1), "0.10000000000000001");
  EXPECT_EQ(csv::FormatReal(2.0), "2");
}

}  // namespace
}  // namespace locmap
