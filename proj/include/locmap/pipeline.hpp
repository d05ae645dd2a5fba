#pragma once

// Pipeline stages over on-disk datastores, shared by the command-line tool
// and the tests. Every stage reads and writes only datastore formats.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "locmap/config.hpp"
#include "locmap/datastore.hpp"
#include "locmap/errors.hpp"
#include "locmap/evaluation.hpp"
#include "locmap/fusion.hpp"
#include "locmap/localization.hpp"
#include "locmap/mapping.hpp"
#include "locmap/pairing.hpp"
#include "locmap/postproc.hpp"

namespace locmap {

/// The only keypoints type of a dataset, or `requested` when given.
inline std::string ResolveKeypointsType(const Dataset& ds, const std::string& requested) {
  if (!requested.empty()) return requested;
  if (ds.features.keypoints.size() == 1) return ds.features.keypoints.begin()->first;
  throw ConfigError("dataset has " + std::to_string(ds.features.keypoints.size()) +
                    " keypoints types; pass one explicitly");
}

inline std::vector<std::string> ResolveGlobalTypes(const Dataset& ds,
                                                   const std::vector<std::string>& requested) {
  if (!requested.empty()) return requested;
  if (ds.features.global_features.size() == 1)
    return {ds.features.global_features.begin()->first};
  throw ConfigError("dataset has " + std::to_string(ds.features.global_features.size()) +
                    " global feature types; pass them explicitly");
}

inline MatchParams MatchPreset(const std::string& name) {
  if (name == "config1") return MatchParams::Config1();
  if (name == "config2") return MatchParams::Config2();
  throw ConfigError("unknown configuration '" + name + "' (config1 or config2)");
}

inline MapperConfig MapperPreset(const std::string& name) {
  if (name == "config1") return MapperConfig::Config1();
  if (name == "config2") return MapperConfig::Config2();
  throw ConfigError("unknown configuration '" + name + "' (config1 or config2)");
}

inline PnPConfig PnPPreset(const std::string& name) {
  if (name == "config1") return PnPConfig::Config1();
  if (name == "config2") return PnPConfig::Config2();
  throw ConfigError("unknown configuration '" + name + "' (config1 or config2)");
}

inline ThresholdBins BinsPreset(const std::string& name) {
  auto b = bins::Preset(name);
  if (!b) throw ConfigError("unknown bins preset '" + name + "'");
  return *b;
}

// ---------------------------------------------------------------------------
// Pairing

inline PosedImages PosesOf(const Dataset& ds, bool required) {
  const ImageCatalog catalog(ds);
  PosedImages out;
  for (const auto& image : catalog.Images()) {
    auto p = catalog.PoseOf(image);
    if (required && !p) throw MissingPose("no pose for image " + image);
    out[image] = p;
  }
  return out;
}

/// Retrieval shortlist of `queries` against `db`; several types are fused.
inline PairList RetrievalStage(const Dataset& queries, const Dataset& db,
                               const std::vector<std::string>& types, int k,
                               const FusionParams& fusion) {
  std::vector<GlobalDescriptors> q, d;
  for (const auto& t : types) {
    auto qi = queries.features.global_features.find(t);
    auto di = db.features.global_features.find(t);
    if (qi == queries.features.global_features.end() || di == db.features.global_features.end())
      throw InvariantViolation("missing global features of type '" + t + "'");
    q.push_back(ToGlobalDescriptors(qi->second));
    d.push_back(ToGlobalDescriptors(di->second));
  }
  if (types.size() == 1) return RetrievalPairs(q[0], d[0], {k, types[0]});
  return FusedRetrievalPairs(q, d, fusion, k);
}

inline PairList FrustumStage(const Dataset& ds, const FrustumParams& params) {
  const ImageCatalog catalog(ds);
  std::vector<FrustumImage> images;
  for (const auto& image : catalog.Images())
    images.push_back({image, catalog.CameraOf(image), catalog.RequirePose(image)});
  return FrustumPairs(images, params);
}

/// Shortlist among the images of one mapping dataset.
inline PairList MappingPairsStage(const Dataset& ds, const std::string& method, int k,
                                  const std::vector<std::string>& global_types,
                                  const FusionParams& fusion = {}) {
  if (method == "retrieval")
    return DeduplicateSymmetric(RetrievalStage(ds, ds, ResolveGlobalTypes(ds, global_types), k, fusion));
  if (method == "distance") {
    const auto posed = PosesOf(ds, true);
    DistancePairingParams p;
    p.k = k;
    return DeduplicateSymmetric(DistancePairs(posed, posed, p));
  }
  if (method == "frustum") {
    FrustumParams p;
    p.k = k;
    return FrustumStage(ds, p);
  }
  if (method == "covis") {
    if (!ds.map) throw InvariantViolation("covisibility pairing needs a reconstruction");
    return CovisibilityPairs(*ds.map, k);
  }
  throw ConfigError("unknown pairing method '" + method + "'");
}

// ---------------------------------------------------------------------------
// Matching and mapping

/// Stores descriptor matches for every pair of the shortlist in the dataset.
inline void MatchStage(Dataset& ds, const PairList& pairs, const std::string& keypoints_type,
                       const MatchParams& params, unsigned threads) {
  auto d = ds.features.descriptors.find(keypoints_type);
  if (d == ds.features.descriptors.end())
    throw InvariantViolation("no descriptors of type '" + keypoints_type + "'");
  auto& store = ds.features.matches[keypoints_type];
  for (auto& [pair, list] : MatchPairs(d->second, pairs, params, threads))
    store[pair] = std::move(list);
}

struct MapStageParams {
  std::string method = "sfm";  // sfm | rgbd
  std::string keypoints_type;
  MatchParams match = MatchParams::Config2();
  MapperConfig mapper = MapperConfig::Config2();
  bool rgbd_merge = true;
};

/// Builds the map into the dataset; SFM also stores the verified matches.
inline MapBuildStats MapStage(Dataset& ds, const PairList& pairs, const MapStageParams& p,
                              unsigned threads) {
  MapBuildStats stats;
  if (p.method == "sfm") {
    PairMatches verified;
    ds.map = TriangulateMap(ds, pairs, p.match, p.mapper, p.keypoints_type, &stats, &verified,
                            threads);
    auto& store = ds.features.matches[p.keypoints_type];
    for (auto& [pair, list] : verified) store[pair] = std::move(list);
  } else if (p.method == "rgbd") {
    ds.map = RgbdMap(ds, pairs, p.match, p.rgbd_merge, p.keypoints_type, threads);
    stats.points = ds.map->points.size();
  } else {
    throw ConfigError("unknown mapping method '" + p.method + "' (sfm or rgbd)");
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Post-processing

inline std::vector<LocalizationResult> PostprocessStage(std::vector<LocalizationResult> results,
                                                        const Dataset& query_ds,
                                                        const std::string& mode,
                                                        const SequenceParams& seq = {}) {
  if (mode == "rig") return RigComplete(std::move(results), query_ds);
  if (mode == "seq") return SequenceComplete(std::move(results), query_ds, seq);
  if (mode == "rig+seq")
    return SequenceComplete(RigComplete(std::move(results), query_ds), query_ds, seq);
  if (mode == "none") return results;
  throw ConfigError("unknown post-processing mode '" + mode + "' (rig, seq or rig+seq)");
}

// ---------------------------------------------------------------------------
// Whole pipeline from a config file

struct PipelineConfig {
  fs::path mapping, query, ground_truth, output;
  std::string keypoints_type;
  std::vector<std::string> global_types;

  std::string mapping_method = "sfm";
  std::string mapping_pairs = "retrieval";
  int mapping_k = 20;
  std::string mapping_config = "config2";
  bool rgbd_merge = true;

  std::optional<double> ratio;
  bool mutual_check = true;

  int localization_k = 20;
  std::string localization_config = "config2";
  std::string fusion = "gharm";
  std::uint64_t seed = 0;

  std::string postprocess = "rig+seq";
  std::optional<Timestamp> max_gap;

  std::string bins = "outdoor";

  /// Relative paths are resolved against `base` (the config file's folder).
  static PipelineConfig FromToml(const TomlDoc& doc, const fs::path& base) {
    PipelineConfig c;
    auto path = [&](const std::string& key, const std::string& fallback) {
      fs::path p = doc.String(key, fallback);
      return p.is_absolute() ? p : base / p;
    };
    c.mapping = path("paths.mapping", "mapping");
    c.query = path("paths.query", "query");
    c.ground_truth = path("paths.ground_truth", "ground_truth");
    c.output = path("paths.output", "output");
    c.keypoints_type = doc.String("features.keypoints_type", "");
    c.global_types = doc.StringList("features.global_types", {});
    c.mapping_method = doc.String("mapping.method", c.mapping_method);
    c.mapping_pairs = doc.String("mapping.pairs", c.mapping_pairs);
    c.mapping_k = static_cast<int>(doc.Int("mapping.k", c.mapping_k));
    c.mapping_config = doc.String("mapping.config", c.mapping_config);
    c.rgbd_merge = doc.Bool("mapping.merge", c.rgbd_merge);
    if (doc.Has("matching.ratio")) c.ratio = doc.Real("matching.ratio", 0.0);
    c.mutual_check = doc.Bool("matching.mutual_check", c.mutual_check);
    c.localization_k = static_cast<int>(doc.Int("localization.k", c.localization_k));
    c.localization_config = doc.String("localization.config", c.localization_config);
    c.fusion = doc.String("localization.fusion", c.fusion);
    const auto seed = doc.Int("localization.seed", 0);
    if (seed < 0) throw ConfigError("localization.seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);
    c.postprocess = doc.String("postprocess.mode", c.postprocess);
    if (doc.Has("postprocess.max_gap")) {
      const auto g = doc.Int("postprocess.max_gap", 0);
      if (g < 0) throw ConfigError("postprocess.max_gap must be non-negative");
      c.max_gap = static_cast<Timestamp>(g);
    }
    c.bins = doc.String("evaluation.bins", c.bins);
    return c;
  }

  static PipelineConfig Load(const fs::path& file) {
    return FromToml(TomlDoc::Load(file), file.parent_path());
  }
};

struct PipelineOutputs {
  fs::path pairs, map, results, results_postprocessed, report, report_csv;
  EvaluationReport evaluation;
};

inline PipelineOutputs RunPipeline(const PipelineConfig& cfg, unsigned threads,
                                   const std::function<void(const std::string&)>& log = {}) {
  auto note = [&](const std::string& s) {
    if (log) log(s);
  };
  // validate the presets before any work
  MatchParams match = MatchPreset(cfg.mapping_config);
  const MapperConfig mapper = MapperPreset(cfg.mapping_config);
  PnPConfig pnp = PnPPreset(cfg.localization_config);
  const ThresholdBins bin_set = BinsPreset(cfg.bins);
  FusionParams fusion;
  if (auto m = ParseFusionMethod(cfg.fusion)) fusion.method = *m;
  else throw ConfigError("unknown fusion method '" + cfg.fusion + "'");
  match.ratio = cfg.ratio;
  match.mutual_check = cfg.mutual_check;
  pnp.seed = cfg.seed;

  PipelineOutputs out;
  out.pairs = cfg.output / "mapping_pairs.txt";
  out.map = cfg.output / "map";
  out.results = cfg.output / "results.txt";
  out.results_postprocessed = cfg.output / "results_postprocessed.txt";
  out.report = cfg.output / "report.txt";
  out.report_csv = cfg.output / "report.csv";

  Dataset ds = LoadDataset(cfg.mapping);
  const Dataset query = LoadDataset(cfg.query);
  const std::string kp_type = ResolveKeypointsType(ds, cfg.keypoints_type);
  const std::vector<std::string> gtypes = ResolveGlobalTypes(ds, cfg.global_types);

  const PairList pairs = MappingPairsStage(ds, cfg.mapping_pairs, cfg.mapping_k, gtypes, fusion);
  SavePairs(pairs, out.pairs);
  note("mapping pairs: " + std::to_string(pairs.size()));

  MapStageParams mp{cfg.mapping_method, kp_type, match, mapper, cfg.rgbd_merge};
  const MapBuildStats stats = MapStage(ds, pairs, mp, threads);
  if (fs::exists(out.map)) fs::remove_all(out.map);
  SaveDataset(ds, out.map);
  note("map points: " + std::to_string(stats.points));

  LocalizationParams lp;
  lp.keypoints_type = kp_type;
  lp.global_types = gtypes;
  lp.k = cfg.localization_k;
  lp.fusion = fusion;
  lp.match = match;
  lp.pnp = pnp;
  const auto results = LocalizeAll(ds, *ds.map, query, lp, threads);
  SaveResults(results, out.results);
  std::size_t localized = 0;
  for (const auto& r : results) localized += r.pose.has_value();
  note("localized: " + std::to_string(localized) + "/" + std::to_string(results.size()));

  const auto completed = PostprocessStage(results, query, cfg.postprocess, {cfg.max_gap});
  SaveResults(completed, out.results_postprocessed);

  const GroundTruthPoses gt = LoadGroundTruthPoses(cfg.ground_truth / "poses.txt");
  out.evaluation = Evaluate(completed, gt, bin_set);
  csv::WriteFile(out.report, FormatReport(out.evaluation));
  SaveReportCsv(out.evaluation, out.report_csv);
  return out;
}

}  // namespace locmap
