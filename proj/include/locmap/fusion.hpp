#pragma once

// Late fusion of similarity scores from several global image representations.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "locmap/errors.hpp"
#include "locmap/pairing.hpp"

namespace locmap {

enum class FusionMethod { kMean, kPower, kMin, kMax, kWmp, kWmm, kGharm, kRoundRobin };

inline std::optional<FusionMethod> ParseFusionMethod(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  static const std::map<std::string, FusionMethod> names = {
      {"mean", FusionMethod::kMean},   {"power", FusionMethod::kPower},
      {"min", FusionMethod::kMin},     {"max", FusionMethod::kMax},
      {"wmp", FusionMethod::kWmp},     {"wmm", FusionMethod::kWmm},
      {"gharm", FusionMethod::kGharm}, {"round_robin", FusionMethod::kRoundRobin},
      {"round-robin", FusionMethod::kRoundRobin}};
  auto it = names.find(s);
  if (it == names.end()) return std::nullopt;
  return it->second;
}

/// Empty weight vectors mean "equal weights" (1/n each).
struct FusionParams {
  FusionMethod method = FusionMethod::kGharm;
  std::vector<double> rho;    // mean / power / wmp, >= 0
  std::vector<double> alpha;  // gharm, >= 0, sums to 1
  double beta = 0.5;          // wmp / wmm, in [0, 1]
  double gamma = 1.0;         // gharm, > 0
};

/// Per-list min-max scaling to [0, 1]; a constant list maps to all ones.
inline std::vector<double> NormalizeScores(const std::vector<double>& raw) {
  std::vector<double> out(raw.size(), 1.0);
  if (raw.empty()) return out;
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / range;
  return out;
}

namespace detail {

inline std::vector<double> ResolveWeights(const std::vector<double>& w, std::size_t n,
                                          const char* name) {
  if (w.empty()) return std::vector<double>(n, 1.0 / static_cast<double>(n));
  if (w.size() != n)
    throw WeightShapeMismatch(std::string(name) + " has " + std::to_string(w.size()) +
                              " weights for " + std::to_string(n) + " score lists");
  for (double x : w)
    if (!(x >= 0.0) || !std::isfinite(x))
      throw ConfigError(std::string(name) + " weights must be finite and non-negative");
  return w;
}

}  // namespace detail

/// Element-wise fusion of n aligned score lists (each already in [0, 1]).
inline std::vector<double> FuseScores(const FusionParams& params,
                                      const std::vector<std::vector<double>>& s) {
  if (params.method == FusionMethod::kRoundRobin)
    throw ConfigError("round robin fuses rankings, not scores");
  const std::size_t n = s.size();
  if (n == 0) return {};
  const std::size_t len = s.front().size();
  for (const auto& list : s)
    if (list.size() != len)
      throw DimensionMismatch("fusion: score lists are not aligned");
  if (params.beta < 0.0 || params.beta > 1.0) throw ConfigError("fusion: beta must be in [0, 1]");
  if (!(params.gamma > 0.0)) throw ConfigError("fusion: gamma must be positive");

  std::vector<double> rho, alpha;
  switch (params.method) {
    case FusionMethod::kMean:
    case FusionMethod::kPower:
    case FusionMethod::kWmp:
      rho = detail::ResolveWeights(params.rho, n, "rho");
      break;
    case FusionMethod::kGharm: {
      alpha = detail::ResolveWeights(params.alpha, n, "alpha");
      double sum = 0.0;
      for (double a : alpha) sum += a;
      if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("fusion: alpha must sum to 1");
      break;
    }
    default:
      break;
  }

  const double beta = params.beta;
  const double gamma = params.gamma;
  std::vector<double> out(len);
  for (std::size_t d = 0; d < len; ++d) {
    double mean = 0.0, power = 1.0;
    double lo = s[0][d], hi = s[0][d];
    for (std::size_t i = 0; i < n; ++i) {
      const double x = s[i][d];
      lo = std::min(lo, x);
      hi = std::max(hi, x);
      if (!rho.empty()) {
        mean += rho[i] * x;
        power *= std::pow(x, rho[i]);
      }
    }
    switch (params.method) {
      case FusionMethod::kMean: out[d] = mean; break;
      case FusionMethod::kPower: out[d] = power; break;
      case FusionMethod::kMin: out[d] = lo; break;
      case FusionMethod::kMax: out[d] = hi; break;
      case FusionMethod::kWmp: out[d] = beta * mean + (1.0 - beta) * power; break;
      case FusionMethod::kWmm: out[d] = (1.0 - beta) * hi + beta * lo; break;
      case FusionMethod::kGharm: {
        // generalized f-mean with f(x) = 1 / (gamma + x), x_i = alpha_i * s_i
        double f_mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) f_mean += 1.0 / (gamma + alpha[i] * s[i][d]);
        f_mean /= static_cast<double>(n);
        out[d] = 1.0 / f_mean - gamma;
        break;
      }
      case FusionMethod::kRoundRobin: break;
    }
  }
  return out;
}

/// Interleaves rank lists in circular order, skipping already emitted items.
inline std::vector<std::string> RoundRobin(const std::vector<std::vector<std::string>>& lists) {
  std::vector<std::string> out;
  std::set<std::string> emitted;
  std::vector<std::size_t> cursor(lists.size(), 0);
  bool progressed = true;
  while (progressed) {
    progressed = false;
    for (std::size_t l = 0; l < lists.size(); ++l) {
      auto& c = cursor[l];
      while (c < lists[l].size() && emitted.count(lists[l][c])) ++c;
      if (c == lists[l].size()) continue;
      emitted.insert(lists[l][c]);
      out.push_back(lists[l][c]);
      ++c;
      progressed = true;
    }
  }
  return out;
}

/// Retrieval over several global descriptor types. Score methods normalize
/// each type's similarities per query, fuse, and rank descending (ties by
/// path). Round robin interleaves the per-type rankings; its scores are
/// 1 - rank / |database|.
inline PairList FusedRetrievalPairs(const std::vector<GlobalDescriptors>& queries,
                                    const std::vector<GlobalDescriptors>& db,
                                    const FusionParams& params, int k) {
  if (queries.size() != db.size() || queries.empty())
    throw DimensionMismatch("fused retrieval: need the same descriptor types for queries and database");
  if (k < 1) throw ConfigError("fused retrieval: k must be >= 1");
  std::vector<std::map<std::string, std::vector<std::pair<std::string, double>>>> per_type;
  for (std::size_t i = 0; i < queries.size(); ++i)
    per_type.push_back(RetrievalScores(queries[i], db[i]));

  PairList out;
  for (const auto& [qname, first] : per_type.front()) {
    // database images present for every type, excluding the query itself
    std::vector<std::string> names;
    for (const auto& [dname, s] : first)
      if (dname != qname) names.push_back(dname);
    std::vector<std::vector<double>> lists;
    for (const auto& scores_by_query : per_type) {
      auto it = scores_by_query.find(qname);
      if (it == scores_by_query.end())
        throw DimensionMismatch("fused retrieval: query " + qname + " lacks a descriptor type");
      std::map<std::string, double> lookup(it->second.begin(), it->second.end());
      std::vector<double> raw;
      raw.reserve(names.size());
      for (const auto& n : names) {
        auto f = lookup.find(n);
        if (f == lookup.end())
          throw DimensionMismatch("fused retrieval: database image " + n + " lacks a descriptor type");
        raw.push_back(f->second);
      }
      lists.push_back(std::move(raw));
    }
    if (names.empty()) continue;

    std::vector<std::pair<std::string, double>> ranked;
    if (params.method == FusionMethod::kRoundRobin) {
      std::vector<std::vector<std::string>> rankings;
      for (const auto& raw : lists) {
        std::vector<std::size_t> idx(names.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
          if (raw[a] != raw[b]) return raw[a] > raw[b];
          return names[a] < names[b];
        });
        std::vector<std::string> r;
        for (auto i : idx) r.push_back(names[i]);
        rankings.push_back(std::move(r));
      }
      const auto merged = RoundRobin(rankings);
      for (std::size_t r = 0; r < merged.size(); ++r)
        ranked.emplace_back(merged[r], 1.0 - static_cast<double>(r) / merged.size());
    } else {
      for (auto& raw : lists) raw = NormalizeScores(raw);
      const auto fused = FuseScores(params, lists);
      for (std::size_t i = 0; i < names.size(); ++i) ranked.emplace_back(names[i], fused[i]);
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
      });
    }
    if (ranked.size() > static_cast<std::size_t>(k)) ranked.resize(k);
    for (auto& [name, score] : ranked) out.push_back({qname, name, score});
  }
  return out;
}

}  // namespace locmap
