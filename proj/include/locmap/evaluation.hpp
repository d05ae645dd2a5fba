#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "locmap/csv.hpp"
#include "locmap/errors.hpp"
#include "locmap/geometry.hpp"
#include "locmap/localization.hpp"

namespace locmap {

struct ThresholdBin {
  std::string name;
  double max_t = 0.0;  // meters
  double max_r = 0.0;  // degrees
};

using ThresholdBins = std::vector<ThresholdBin>;

namespace bins {

inline ThresholdBins Outdoor() { return {{"high", 0.25, 2.0}, {"mid", 0.5, 5.0}, {"low", 5.0, 10.0}}; }
inline ThresholdBins IndoorTight() { return {{"high", 0.1, 1.0}, {"mid", 0.25, 2.0}, {"low", 1.0, 5.0}}; }
inline ThresholdBins SevenScenes() { return {{"all", 0.05, 5.0}}; }

inline std::optional<ThresholdBins> Preset(const std::string& name) {
  if (name == "outdoor") return Outdoor();
  if (name == "indoor_tight") return IndoorTight();
  if (name == "seven_scenes") return SevenScenes();
  return std::nullopt;
}

}  // namespace bins

inline void ValidateBins(const ThresholdBins& b) {
  if (b.empty()) throw ConfigError("evaluation: no threshold bins");
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!(b[i].max_t >= 0.0) || !(b[i].max_r >= 0.0))
      throw ConfigError("evaluation: thresholds must be non-negative");
    if (i > 0 && (b[i].max_t < b[i - 1].max_t || b[i].max_r < b[i - 1].max_r))
      throw ConfigError("evaluation: bins must be non-decreasing in both limits");
  }
}

struct PoseErrorValue {
  double meters = 0.0;
  double degrees = 0.0;
};

/// Camera-center distance and rotation angle.
inline PoseErrorValue PoseError(const Pose& est, const Pose& gt) {
  return {(est.Center() - gt.Center()).norm(), RotationAngleDeg(est.rotation, gt.rotation)};
}

using GroundTruthPoses = std::map<std::string, Pose>;

namespace detail {

inline const Pose& GtPose(const GroundTruthPoses& gt, const std::string& image) {
  auto it = gt.find(image);
  if (it == gt.end()) throw MissingGroundTruth("no ground-truth pose for " + image);
  return it->second;
}

inline double Median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Percentage of queries localized within each bin (inclusive limits);
/// unlocalized queries count as failures.
inline std::vector<double> BucketRecall(const std::vector<LocalizationResult>& results,
                                        const GroundTruthPoses& gt, const ThresholdBins& b) {
  ValidateBins(b);
  std::vector<std::size_t> hits(b.size(), 0);
  for (const auto& r : results) {
    const Pose& truth = detail::GtPose(gt, r.image_path);
    if (!r.pose) continue;
    const PoseErrorValue e = PoseError(*r.pose, truth);
    for (std::size_t i = 0; i < b.size(); ++i)
      if (e.meters <= b[i].max_t && e.degrees <= b[i].max_r) ++hits[i];
  }
  std::vector<double> out(b.size(), 0.0);
  if (results.empty()) return out;
  for (std::size_t i = 0; i < b.size(); ++i)
    out[i] = 100.0 * static_cast<double>(hits[i]) / static_cast<double>(results.size());
  return out;
}

struct MedianErrorValue {
  double meters = 0.0;
  double degrees = 0.0;
  std::size_t num_localized = 0;
  std::size_t num_unlocalized = 0;
};

/// Medians over localized queries only.
inline MedianErrorValue MedianErrors(const std::vector<LocalizationResult>& results,
                                     const GroundTruthPoses& gt) {
  std::vector<double> t, r;
  MedianErrorValue out;
  for (const auto& res : results) {
    const Pose& truth = detail::GtPose(gt, res.image_path);
    if (!res.pose) {
      ++out.num_unlocalized;
      continue;
    }
    const PoseErrorValue e = PoseError(*res.pose, truth);
    t.push_back(e.meters);
    r.push_back(e.degrees);
  }
  if (t.empty()) throw NoLocalizedQueries("median errors: no localized query");
  out.num_localized = t.size();
  out.meters = detail::Median(t);
  out.degrees = detail::Median(r);
  return out;
}

struct EvaluationReport {
  ThresholdBins bins;
  std::vector<double> recall;
  double avg_all_bins = 0.0;
  std::size_t num_queries = 0;
  std::optional<MedianErrorValue> medians;  // absent without localized queries
};

inline EvaluationReport Evaluate(const std::vector<LocalizationResult>& results,
                                 const GroundTruthPoses& gt, const ThresholdBins& b) {
  EvaluationReport rep;
  rep.bins = b;
  rep.recall = BucketRecall(results, gt, b);
  for (std::size_t i = 1; i < rep.recall.size(); ++i)
    if (rep.recall[i] < rep.recall[i - 1])
      throw InvariantViolation("bucket recall is not monotone across nested bins");
  for (double x : rep.recall) rep.avg_all_bins += x;
  rep.avg_all_bins /= static_cast<double>(rep.recall.size());
  rep.num_queries = results.size();
  try {
    rep.medians = MedianErrors(results, gt);
  } catch (const NoLocalizedQueries&) {
  }
  return rep;
}

namespace detail {

inline std::string Fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

/// Plain-text table: avg. all bins first, then one column per bin.
inline std::string FormatReport(const EvaluationReport& rep, const std::string& condition = "all") {
  std::vector<std::string> header = {"condition", "avg. all bins"};
  std::vector<std::string> row = {condition, detail::Fixed(rep.avg_all_bins, 1)};
  for (std::size_t i = 0; i < rep.bins.size(); ++i) {
    const auto& b = rep.bins[i];
    header.push_back(b.name + " (" + csv::FormatReal(b.max_t) + "m, " + csv::FormatReal(b.max_r) +
                     "deg)");
    row.push_back(detail::Fixed(rep.recall[i], 1));
  }
  header.push_back("median m");
  header.push_back("median deg");
  row.push_back(rep.medians ? detail::Fixed(rep.medians->meters, 4) : "-");
  row.push_back(rep.medians ? detail::Fixed(rep.medians->degrees, 4) : "-");

  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const std::size_t w = std::max(header[i].size(), row[i].size());
      std::string cell = cells[i];
      cell.resize(w, ' ');
      out += (i ? " | " : "") + cell;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
  };
  line(header);
  line(row);
  const std::size_t localized = rep.medians ? rep.medians->num_localized : 0;
  out += "queries: " + std::to_string(rep.num_queries) + ", localized: " +
         std::to_string(localized) + ", unlocalized: " +
         std::to_string(rep.num_queries - localized) + "\n";
  return out;
}

inline void SaveReportCsv(const EvaluationReport& rep, const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"avg_all_bins", "", "", csv::FormatReal(rep.avg_all_bins)});
  for (std::size_t i = 0; i < rep.bins.size(); ++i)
    rows.push_back({"recall_" + rep.bins[i].name, csv::FormatReal(rep.bins[i].max_t),
                    csv::FormatReal(rep.bins[i].max_r), csv::FormatReal(rep.recall[i])});
  rows.push_back({"num_queries", "", "", std::to_string(rep.num_queries)});
  if (rep.medians) {
    rows.push_back({"num_localized", "", "", std::to_string(rep.medians->num_localized)});
    rows.push_back({"median_position_m", "", "", csv::FormatReal(rep.medians->meters)});
    rows.push_back({"median_orientation_deg", "", "", csv::FormatReal(rep.medians->degrees)});
  } else {
    rows.push_back({"num_localized", "", "", "0"});
  }
  csv::WriteTable(path, "evaluation", rows);
}

/// "image_path, qw, qx, qy, qz, tx, ty, tz"
inline GroundTruthPoses LoadGroundTruthPoses(const fs::path& path) {
  const auto table = csv::Table::Read(path);
  GroundTruthPoses out;
  for (const auto& row : table.rows()) {
    table.ExpectFields(row, 8, 8);
    out[table.Text(row, 0)] = detail::ParsePose(table, row, 1);
  }
  return out;
}

inline void SaveGroundTruthPoses(const GroundTruthPoses& gt, const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& [image, pose] : gt) {
    std::vector<std::string> row = {image};
    for (auto& f : detail::PoseFields(pose)) row.push_back(std::move(f));
    rows.push_back(std::move(row));
  }
  csv::WriteTable(path, "poses", rows);
}

}  // namespace locmap
