#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "locmap/evaluation.hpp"
#include "oracles.hpp"

namespace locmap {
namespace {

const std::string kCli = LOCMAP_CLI;

struct Run {
  int code = -1;
  std::string out, err;
};

Run Exec(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.log", err = dir / "stderr.log";
  const std::string cmd = "'" + kCli + "' " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

const std::string kSmall =
    " --points 300 --map-cams 8 --query-cams 3 --width 640 --height 480 --focal 500"
    " --local-dim 32 --global-dim 64";

fs::path Scene(const std::string& name, const std::string& extra = "") {
  const auto dir = oracle::TempDir(name);
  const auto r = Exec("synth --seed 7 --out '" + (dir / "scene").string() + "'" + kSmall + extra, dir);
  EXPECT_EQ(r.code, 0) << r.err;
  return dir;
}

TEST(Cli, SynthThenPipeline) {
  const auto dir = Scene("cli_pipeline", " --rig 2");
  const auto scene = dir / "scene";
  const auto r = Exec("pipeline '" + (scene / "pipeline.toml").string() + "'", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("avg. all bins"), std::string::npos);
  for (const char* f : {"mapping_pairs.txt", "results.txt", "results_postprocessed.txt", "report.txt",
                        "report.csv", "map/sensors/sensors.txt"})
    EXPECT_TRUE(fs::exists(scene / "output" / f)) << f;
  const auto v = Exec("validate '" + (scene / "output" / "map").string() + "'", dir);
  EXPECT_EQ(v.code, 0) << v.err;
}

TEST(Cli, RerunIsByteIdentical) {
  const auto a = Scene("cli_rerun_a"), b = Scene("cli_rerun_b");
  EXPECT_EQ(oracle::Snapshot(a / "scene"), oracle::Snapshot(b / "scene"));
  ASSERT_EQ(Exec("pipeline '" + (a / "scene" / "pipeline.toml").string() + "' --threads 1", a).code, 0);
  ASSERT_EQ(Exec("pipeline '" + (b / "scene" / "pipeline.toml").string() + "' --threads 2", b).code, 0);
  const auto sa = oracle::Snapshot(a / "scene" / "output");
  EXPECT_FALSE(sa.empty());
  EXPECT_EQ(sa, oracle::Snapshot(b / "scene" / "output"));
}

TEST(Cli, StagesAndEvaluateAgainstOracle) {
  const auto dir = Scene("cli_stages");
  const auto scene = dir / "scene";
  const std::string m = (scene / "mapping").string(), q = (scene / "query").string();
  const std::string pairs = (dir / "pairs.txt").string(), map = (dir / "map").string();
  const std::string res = (dir / "res.txt").string(), post = (dir / "post.txt").string();
  ASSERT_EQ(Exec("pairs retrieval --data '" + m + "' --out '" + pairs + "' --k 5", dir).code, 0);
  auto r = Exec("map sfm --data '" + m + "' --pairs '" + pairs + "' --out '" + map + "' --ratio 0.8", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  r = Exec("localize --map '" + map + "' --query '" + q + "' --out '" + res + "' --config config2 --ratio 0.8",
           dir);
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(Exec("postprocess seq --results '" + res + "' --query '" + q + "' --out '" + post + "'", dir).code, 0);
  const std::string csv = (dir / "report.csv").string();
  r = Exec("evaluate --results '" + post + "' --gt '" + (scene / "ground_truth" / "poses.txt").string() +
               "' --csv '" + csv + "'",
           dir);
  ASSERT_EQ(r.code, 0) << r.err;

  // oracle: count bins by hand from the saved files
  const auto results = LoadResults(post);
  const auto gt = LoadGroundTruthPoses(scene / "ground_truth" / "poses.txt");
  const auto b = bins::Outdoor();
  std::vector<double> want(b.size(), 0.0);
  for (const auto& x : results) {
    if (!x.pose) continue;
    const double t = (x.pose->Center() - gt.at(x.image_path).Center()).norm();
    const double deg = oracle::AngleDeg(*x.pose, gt.at(x.image_path));
    for (std::size_t i = 0; i < b.size(); ++i)
      if (t <= b[i].max_t && deg <= b[i].max_r) want[i] += 100.0 / results.size();
  }
  const auto table = csv::Table::Read(csv);
  std::map<std::string, double> got;
  for (const auto& row : table.rows()) {
    const std::string key = table.Text(row, 0);
    if (key.rfind("recall_", 0) == 0) got[key] = std::stod(table.Text(row, 3));
  }
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(got.at("recall_" + b[i].name), want[i], 1e-9);
}

TEST(Cli, ExitCodes) {
  const auto dir = Scene("cli_exit");
  const auto scene = dir / "scene";
  EXPECT_EQ(Exec("--help", dir).code, 0);
  EXPECT_EQ(Exec("frobnicate", dir).code, 1);
  EXPECT_EQ(Exec("pairs distance", dir).code, 1);  // missing required options
  auto r = Exec("validate '" + (dir / "nope").string() + "'", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u) << r.err;
  r = Exec("localize --map '" + (scene / "mapping").string() + "' --query '" + (scene / "query").string() +
               "' --out '" + (dir / "x.txt").string() + "' --config config3",
           dir);
  EXPECT_EQ(r.code, 1);
  r = Exec("evaluate --results x --gt y --bins mars", dir);
  EXPECT_EQ(r.code, 1);
  // the mapping datastore has no reconstruction yet
  r = Exec("localize --map '" + (scene / "mapping").string() + "' --query '" + (scene / "query").string() +
               "' --out '" + (dir / "x.txt").string() + "'",
           dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(Exec("validate '" + (scene / "mapping").string() + "'", dir).code, 0);
}

}  // namespace
}  // namespace locmap
