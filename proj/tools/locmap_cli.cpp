// locmap: command-line front-end for the mapping and localization pipeline.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "locmap/config.hpp"
#include "locmap/datastore.hpp"
#include "locmap/evaluation.hpp"
#include "locmap/localization.hpp"
#include "locmap/parallel.hpp"
#include "locmap/pipeline.hpp"
#include "locmap/postproc.hpp"
#include "locmap/synth.hpp"

namespace fs = std::filesystem;
using namespace locmap;

namespace {

void ConfigureLogging() {
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("LOCMAP_LOG")) {
    const std::string v = env;
    if (v == "error") spdlog::set_level(spdlog::level::err);
    else if (v == "info") spdlog::set_level(spdlog::level::info);
    else if (v == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::warn("ignoring LOCMAP_LOG={} (expected error, info or debug)", v);
  }
}

FusionParams ParseFusion(const std::string& name) {
  FusionParams f;
  auto m = ParseFusionMethod(name);
  if (!m) throw ConfigError("unknown fusion method '" + name + "'");
  f.method = *m;
  return f;
}

MatchParams MakeMatchParams(const std::string& config, double ratio, bool no_mutual) {
  MatchParams mp = MatchPreset(config);
  if (ratio > 0.0) mp.ratio = ratio;
  mp.mutual_check = !no_mutual;
  return mp;
}

struct Options {
  unsigned threads = 0;

  std::string root, query_root, out, pairs_file, results, gt, report_csv;
  std::string keypoints_type, config = "config2", fusion = "gharm", bins = "outdoor";
  std::vector<std::string> global_types;
  int k = 20;
  double ratio = 0.0;
  bool no_mutual = false;
  bool no_merge = false;
  std::uint64_t seed = 0;
  double tau_c = 25.0, tau_r = 45.0;
  double near_m = 0.1, far_m = 50.0;
  std::int64_t max_gap = -1;

  SynthConfig synth;
  int rig_cams = 0;
  double pose_noise_t = -1.0, pose_noise_r = -1.0;
};

}  // namespace

int main(int argc, char** argv) {
  ConfigureLogging();
  CLI::App app{"Structure-based visual localization: datastore tools, mapping, localization, "
               "evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  std::function<void()> action;

  // validate
  auto* validate = app.add_subcommand("validate", "Load a datastore and check every invariant");
  validate->add_option("root", o.root, "Datastore root")->required();
  validate->callback([&] {
    action = [&] {
      const Dataset ds = LoadDataset(o.root);
      std::cout << o.root << ": " << ds.cameras.size() << " cameras, " << ds.image_records.size()
                << " images, " << (ds.map ? ds.map->points.size() : 0) << " points: ok\n";
    };
  });

  // pairs
  auto* pairs = app.add_subcommand("pairs", "Build an image-pair shortlist");
  pairs->require_subcommand(1);
  auto add_pairs_common = [&](CLI::App* c) {
    c->add_option("--data", o.root, "Database datastore")->required();
    c->add_option("--out", o.out, "Pairs file to write")->required();
    c->add_option("--k", o.k, "Partners per image")->capture_default_str();
  };
  auto* p_retr = pairs->add_subcommand("retrieval", "Top-k by global descriptor similarity");
  add_pairs_common(p_retr);
  p_retr->add_option("--query", o.query_root, "Query datastore (default: database against itself)");
  p_retr->add_option("--global-types", o.global_types, "Global descriptor types; several are fused")
      ->delimiter(',');
  p_retr->add_option("--fusion", o.fusion, "Fusion method for several types")->capture_default_str();
  p_retr->callback([&] {
    action = [&] {
      const Dataset db = LoadDataset(o.root);
      PairList list;
      const auto types = ResolveGlobalTypes(db, o.global_types);
      if (o.query_root.empty()) {
        list = DeduplicateSymmetric(RetrievalStage(db, db, types, o.k, ParseFusion(o.fusion)));
      } else {
        list = RetrievalStage(LoadDataset(o.query_root), db, types, o.k, ParseFusion(o.fusion));
      }
      SavePairs(list, o.out);
      spdlog::info("{} pairs written to {}", list.size(), o.out);
    };
  });
  auto* p_dist = pairs->add_subcommand("distance", "Top-k by camera-center and rotation distance");
  add_pairs_common(p_dist);
  p_dist->add_option("--query", o.query_root, "Query datastore with poses");
  p_dist->add_option("--tau-c", o.tau_c, "Center normalizer in meters")->capture_default_str();
  p_dist->add_option("--tau-r", o.tau_r, "Rotation normalizer in degrees")->capture_default_str();
  p_dist->callback([&] {
    action = [&] {
      const Dataset db = LoadDataset(o.root);
      DistancePairingParams p{o.tau_c, o.tau_r, o.k};
      const auto db_poses = PosesOf(db, true);
      PairList list = o.query_root.empty()
                          ? DeduplicateSymmetric(DistancePairs(db_poses, db_poses, p))
                          : DistancePairs(PosesOf(LoadDataset(o.query_root), true), db_poses, p);
      SavePairs(list, o.out);
    };
  });
  auto* p_frus = pairs->add_subcommand("frustum", "Top-k by view-frustum overlap");
  add_pairs_common(p_frus);
  p_frus->add_option("--near", o.near_m, "Near plane in meters")->capture_default_str();
  p_frus->add_option("--far", o.far_m, "Far plane in meters")->capture_default_str();
  p_frus->callback([&] {
    action = [&] {
      FrustumParams p;
      p.near_m = o.near_m;
      p.far_m = o.far_m;
      p.k = o.k;
      SavePairs(FrustumStage(LoadDataset(o.root), p), o.out);
    };
  });
  auto* p_covis = pairs->add_subcommand("covis", "Top-k by co-observed map points");
  add_pairs_common(p_covis);
  p_covis->callback([&] {
    action = [&] { SavePairs(MappingPairsStage(LoadDataset(o.root), "covis", o.k, {}), o.out); };
  });

  // match
  auto* match = app.add_subcommand("match", "Match local descriptors of every shortlisted pair");
  match->add_option("--data", o.root, "Datastore")->required();
  match->add_option("--pairs", o.pairs_file, "Pairs file")->required();
  match->add_option("--out", o.out, "Output datastore (default: in place)");
  match->add_option("--keypoints-type", o.keypoints_type, "Keypoints type");
  match->add_option("--config", o.config, "config1 or config2")->capture_default_str();
  match->add_option("--ratio", o.ratio, "Lowe ratio test threshold (off when 0)");
  match->add_flag("--no-mutual", o.no_mutual, "Disable the mutual nearest-neighbour check");
  match->callback([&] {
    action = [&] {
      Dataset ds = LoadDataset(o.root);
      const auto type = ResolveKeypointsType(ds, o.keypoints_type);
      MatchStage(ds, LoadPairs(o.pairs_file), type, MakeMatchParams(o.config, o.ratio, o.no_mutual),
                 o.threads);
      SaveDataset(ds, o.out.empty() ? o.root : o.out);
    };
  });

  // map
  auto* map = app.add_subcommand("map", "Build a 3D map from known training poses");
  map->require_subcommand(1);
  std::string map_method;
  for (const char* method : {"sfm", "rgbd"}) {
    auto* c = map->add_subcommand(method, std::string(method) == "sfm"
                                              ? "Triangulate matched keypoints"
                                              : "Back-project keypoints with depth maps");
    c->add_option("--data", o.root, "Mapping datastore")->required();
    c->add_option("--pairs", o.pairs_file, "Pairs file")->required();
    c->add_option("--out", o.out, "Output datastore (default: in place)");
    c->add_option("--keypoints-type", o.keypoints_type, "Keypoints type");
    c->add_option("--config", o.config, "config1 or config2")->capture_default_str();
    c->add_option("--ratio", o.ratio, "Lowe ratio test threshold (off when 0)");
    c->add_flag("--no-mutual", o.no_mutual, "Disable the mutual nearest-neighbour check");
    if (std::string(method) == "rgbd")
      c->add_flag("--no-merge", o.no_merge, "Keep one point per keypoint instead of merging matches");
    c->callback([&, method] {
      action = [&, method] {
        Dataset ds = LoadDataset(o.root);
        MapStageParams p{method, ResolveKeypointsType(ds, o.keypoints_type),
                         MakeMatchParams(o.config, o.ratio, o.no_mutual), MapperPreset(o.config),
                         !o.no_merge};
        const auto stats = MapStage(ds, LoadPairs(o.pairs_file), p, o.threads);
        SaveDataset(ds, o.out.empty() ? o.root : o.out);
        std::cout << "map points: " << stats.points << "\n";
      };
    });
  }

  // localize
  auto* loc = app.add_subcommand("localize", "Localize every query image against a map");
  loc->add_option("--map", o.root, "Datastore with a reconstruction")->required();
  loc->add_option("--query", o.query_root, "Query datastore")->required();
  loc->add_option("--out", o.out, "Results file")->required();
  loc->add_option("--keypoints-type", o.keypoints_type, "Keypoints type");
  loc->add_option("--global-types", o.global_types, "Global descriptor types; several are fused")
      ->delimiter(',');
  loc->add_option("--k", o.k, "Retrieved database images per query")->capture_default_str();
  loc->add_option("--config", o.config, "config1 or config2 acceptance gates")->capture_default_str();
  loc->add_option("--fusion", o.fusion, "Fusion method for several types")->capture_default_str();
  loc->add_option("--seed", o.seed, "RANSAC seed")->capture_default_str();
  loc->add_option("--ratio", o.ratio, "Lowe ratio test threshold (off when 0)");
  loc->add_flag("--no-mutual", o.no_mutual, "Disable the mutual nearest-neighbour check");
  loc->callback([&] {
    action = [&] {
      LocalizationParams lp;
      lp.k = o.k;
      lp.fusion = ParseFusion(o.fusion);
      lp.match = MakeMatchParams(o.config, o.ratio, o.no_mutual);
      lp.pnp = PnPPreset(o.config);
      lp.pnp.seed = o.seed;
      const Dataset ds = LoadDataset(o.root);
      if (!ds.map) throw InvariantViolation(o.root + " has no reconstruction");
      const Dataset query = LoadDataset(o.query_root);
      lp.keypoints_type = ResolveKeypointsType(ds, o.keypoints_type);
      lp.global_types = ResolveGlobalTypes(ds, o.global_types);
      const auto results = LocalizeAll(ds, *ds.map, query, lp, o.threads);
      SaveResults(results, o.out);
      std::size_t n = 0;
      for (const auto& r : results) n += r.pose.has_value();
      std::cout << "localized " << n << "/" << results.size() << "\n";
    };
  });

  // postprocess
  auto* post = app.add_subcommand("postprocess", "Complete unlocalized queries");
  post->require_subcommand(1);
  for (const char* mode : {"rig", "seq", "rig+seq"}) {
    auto* c = post->add_subcommand(mode, std::string("Completion mode ") + mode);
    c->add_option("--results", o.results, "Results file")->required();
    c->add_option("--query", o.query_root, "Query datastore (rigs and timestamps)")->required();
    c->add_option("--out", o.out, "Completed results file")->required();
    c->add_option("--max-gap", o.max_gap, "Largest timestamp gap bridged by sequence completion");
    c->callback([&, mode] {
      action = [&, mode] {
        SequenceParams seq;
        if (o.max_gap >= 0) seq.max_gap = static_cast<Timestamp>(o.max_gap);
        SaveResults(PostprocessStage(LoadResults(o.results), LoadDataset(o.query_root), mode, seq),
                    o.out);
      };
    });
  }

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Bucketed recall and median errors");
  eval->add_option("--results", o.results, "Results file")->required();
  eval->add_option("--gt", o.gt, "Ground-truth poses file")->required();
  eval->add_option("--bins", o.bins, "outdoor, indoor_tight or seven_scenes")->capture_default_str();
  eval->add_option("--report", o.out, "Text report (default: stdout only)");
  eval->add_option("--csv", o.report_csv, "Machine-readable report");
  eval->callback([&] {
    action = [&] {
      const auto rep = Evaluate(LoadResults(o.results), LoadGroundTruthPoses(o.gt), BinsPreset(o.bins));
      const std::string text = FormatReport(rep);
      std::cout << text;
      if (!o.out.empty()) csv::WriteFile(o.out, text);
      if (!o.report_csv.empty()) SaveReportCsv(rep, o.report_csv);
    };
  });

  // synth
  auto* syn = app.add_subcommand("synth", "Generate a synthetic scene with ground truth");
  syn->add_option("--out", o.out, "Output folder")->required();
  syn->add_option("--seed", o.synth.seed, "Seed")->capture_default_str();
  syn->add_option("--points", o.synth.n_points, "Number of 3D points")->capture_default_str();
  syn->add_option("--map-cams", o.synth.n_map_cams, "Mapping frames")->capture_default_str();
  syn->add_option("--query-cams", o.synth.n_query_cams, "Query frames")->capture_default_str();
  syn->add_option("--extent", o.synth.scene_extent_m, "Scene size in meters")->capture_default_str();
  syn->add_option("--pixel-noise", o.synth.pixel_noise_sigma, "Keypoint noise sigma in pixels")
      ->capture_default_str();
  syn->add_option("--outliers", o.synth.outlier_fraction, "Outlier keypoint fraction")
      ->capture_default_str();
  syn->add_option("--local-dim", o.synth.descriptor_dim_local, "Local descriptor size")
      ->capture_default_str();
  syn->add_option("--global-dim", o.synth.descriptor_dim_global, "Global descriptor size")
      ->capture_default_str();
  syn->add_option("--global-types", o.synth.n_global_types, "Number of global descriptor types")
      ->capture_default_str();
  syn->add_option("--width", o.synth.width, "Image width")->capture_default_str();
  syn->add_option("--height", o.synth.height, "Image height")->capture_default_str();
  syn->add_option("--focal", o.synth.focal_px, "Focal length in pixels")->capture_default_str();
  syn->add_option("--rig", o.rig_cams, "Cameras per rig (0 = no rig)");
  syn->add_flag("--depth", o.synth.depth_render, "Render depth maps for the mapping images");
  syn->add_option("--pose-noise-t", o.pose_noise_t, "Training position noise sigma in meters");
  syn->add_option("--pose-noise-r", o.pose_noise_r, "Training rotation noise sigma in degrees");
  syn->callback([&] {
    action = [&] {
      SynthConfig cfg = o.synth;
      if (o.rig_cams > 0) cfg.rig = SynthConfig::RigSpec{o.rig_cams, {}};
      if (o.pose_noise_t >= 0.0 || o.pose_noise_r >= 0.0)
        cfg.pose_noise = SynthConfig::PoseNoise{std::max(0.0, o.pose_noise_t),
                                                std::max(0.0, o.pose_noise_r)};
      WriteScene(GenerateScene(cfg), cfg, o.out);
    };
  });

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run pairing, mapping, localization, "
                                              "post-processing and evaluation from a config file");
  pipe->add_option("config", o.root, "Pipeline TOML file")->required();
  pipe->callback([&] {
    action = [&] {
      const auto cfg = PipelineConfig::Load(o.root);
      const auto out = RunPipeline(cfg, o.threads, [](const std::string& s) { spdlog::info("{}", s); });
      std::cout << FormatReport(out.evaluation);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    if (action) action();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
