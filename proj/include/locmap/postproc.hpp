#pragma once

// Completion of unlocalized queries from rig calibration and from
// neighbouring frames of the same camera stream.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "locmap/datastore.hpp"
#include "locmap/geometry.hpp"
#include "locmap/localization.hpp"

namespace locmap {

/// For each (timestamp, rig) group with a DIRECT result, poses every
/// unlocalized member from the best-localized one (most inliers, ties by
/// sensor id). Results carrying a pose are never touched.
inline std::vector<LocalizationResult> RigComplete(std::vector<LocalizationResult> results,
                                                   const Dataset& query_ds) {
  const ImageCatalog catalog(query_ds);
  struct Member {
    std::size_t result;
    const RigMember* member;
  };
  std::map<std::pair<Timestamp, std::string>, std::vector<Member>> groups;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto* e = catalog.Find(results[i].image_path);
    if (!e) continue;
    for (const auto& rig : query_ds.rigs)
      if (const RigMember* m = rig.Find(e->sensor_id)) {
        groups[{e->timestamp, rig.rig_id}].push_back({i, m});
        break;
      }
  }
  for (const auto& [key, members] : groups) {
    const Member* ref = nullptr;
    for (const auto& m : members) {
      const auto& r = results[m.result];
      if (!r.pose || r.provenance != Provenance::kDirect) continue;
      if (!ref || r.num_inliers > results[ref->result].num_inliers ||
          (r.num_inliers == results[ref->result].num_inliers &&
           m.member->sensor_id < ref->member->sensor_id))
        ref = &m;
    }
    if (!ref) continue;
    const Pose world_to_rig =
        Compose(Inverse(ref->member->rig_to_sensor), *results[ref->result].pose);
    for (const auto& m : members) {
      auto& r = results[m.result];
      if (r.pose) continue;
      r.pose = Compose(m.member->rig_to_sensor, world_to_rig).Canonical();
      r.provenance = Provenance::kRig;
    }
  }
  return results;
}

/// Linear interpolation of the camera center and slerp of the rotation.
inline Pose InterpolatePose(const Pose& a, const Pose& b, double lambda) {
  const Point3 c = (1.0 - lambda) * a.Center() + lambda * b.Center();
  const Eigen::Quaterniond q =
      a.rotation.normalized().slerp(lambda, b.rotation.normalized()).normalized();
  return Pose::FromCenter(q, c).Canonical();
}

struct SequenceParams {
  std::optional<Timestamp> max_gap;  // unlimited when unset
};

/// Per camera stream ordered by timestamp: an unlocalized frame between two
/// anchors is interpolated, one with anchors on a single side copies the
/// nearest. Anchors are DIRECT or RIG results; completions of this step are
/// never used as anchors, which keeps the step idempotent.
inline std::vector<LocalizationResult> SequenceComplete(std::vector<LocalizationResult> results,
                                                        const Dataset& query_ds,
                                                        const SequenceParams& params = {}) {
  const ImageCatalog catalog(query_ds);
  std::map<std::string, std::vector<std::pair<Timestamp, std::size_t>>> streams;
  for (std::size_t i = 0; i < results.size(); ++i)
    if (const auto* e = catalog.Find(results[i].image_path))
      streams[e->sensor_id].push_back({e->timestamp, i});

  auto is_anchor = [&](std::size_t i) {
    const auto& r = results[i];
    return r.pose && (r.provenance == Provenance::kDirect || r.provenance == Provenance::kRig);
  };
  auto within = [&](Timestamp a, Timestamp b) {
    return !params.max_gap || (a > b ? a - b : b - a) <= *params.max_gap;
  };

  for (auto& [sensor, frames] : streams) {
    std::sort(frames.begin(), frames.end());
    std::vector<std::pair<Timestamp, std::size_t>> anchors;
    for (const auto& f : frames)
      if (is_anchor(f.second)) anchors.push_back(f);
    if (anchors.empty()) continue;

    std::vector<std::pair<std::size_t, LocalizationResult>> updates;
    for (const auto& [t, i] : frames) {
      if (results[i].pose) continue;
      // last anchor with t0 <= t and first anchor with t1 >= t
      auto after = std::lower_bound(anchors.begin(), anchors.end(), std::make_pair(t, std::size_t{0}));
      std::optional<std::pair<Timestamp, std::size_t>> prev, next;
      if (after != anchors.end()) next = *after;
      auto upper = std::upper_bound(anchors.begin(), anchors.end(), t,
                                    [](Timestamp v, const auto& a) { return v < a.first; });
      if (upper != anchors.begin()) prev = *std::prev(upper);

      LocalizationResult r = results[i];
      if (prev && next && within(prev->first, next->first)) {
        const Timestamp t0 = prev->first, t1 = next->first;
        const double lambda =
            t1 == t0 ? 0.0 : static_cast<double>(t - t0) / static_cast<double>(t1 - t0);
        r.pose = InterpolatePose(*results[prev->second].pose, *results[next->second].pose, lambda);
        r.provenance = Provenance::kSequenceInterp;
      } else {
        std::optional<std::pair<Timestamp, std::size_t>> nearest;
        if (prev && within(prev->first, t)) nearest = prev;
        if (next && within(next->first, t) && (!nearest || next->first - t < t - nearest->first))
          nearest = next;
        if (!nearest) continue;
        r.pose = results[nearest->second].pose->Canonical();
        r.provenance = Provenance::kSequenceNn;
      }
      updates.emplace_back(i, std::move(r));
    }
    for (auto& [i, r] : updates) results[i] = std::move(r);
  }
  return results;
}

}  // namespace locmap
