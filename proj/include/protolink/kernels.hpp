#pragma once

// Data-parallel inner loops. Every kernel has a serial reference and an
// OpenMP version with identical results; tests compare the two and
// bench/kernels_bench times them.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "protolink/string_distance.hpp"

namespace protolink::kernels {

/// Row-major |S| x |S| table F[w * n + y] = alpha(w) exp(-c d(w, y)) / Z(y),
/// plus H[w] = sum_y alpha(y) F[w * n + y].
struct DistortionTable {
  std::size_t n = 0;
  std::vector<double> f;
  std::vector<double> h;
};

DistortionTable distortion_table_serial(std::span<const std::string> support, std::span<const double> alpha,
                                        double c, StringMetric metric);
DistortionTable distortion_table_omp(std::span<const std::string> support, std::span<const double> alpha, double c,
                                     StringMetric metric);

/// Unordered pair (a < b) encoded as a * n_records + b, with the number of
/// draws in which a and b share a label. Sorted by key.
using PairCounts = std::vector<std::pair<std::uint64_t, std::uint32_t>>;

PairCounts cocluster_counts_serial(std::span<const std::vector<int>> draws, std::size_t n_records);
PairCounts cocluster_counts_omp(std::span<const std::vector<int>> draws, std::size_t n_records);

/// Groups positions 0..n-1 by label; groups ordered by smallest member.
std::vector<std::vector<std::size_t>> group_by_label(std::span<const int> labels);

/// Members of `cluster` whose largest distance to another member is
/// smallest (all of them, in input order). `dist(a, b)` receives members.
template <class Dist>
std::vector<std::size_t> minimax_argmin_set(std::span<const std::size_t> cluster, Dist&& dist) {
  if (cluster.size() <= 1) return {cluster.begin(), cluster.end()};
  const std::size_t m = cluster.size();
  std::vector<double> worst(m, 0.0);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = a + 1; b < m; ++b) {
      const double d = dist(cluster[a], cluster[b]);
      worst[a] = std::max(worst[a], d);
      worst[b] = std::max(worst[b], d);
    }
  const double best = *std::min_element(worst.begin(), worst.end());
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < m; ++a)
    if (worst[a] == best) out.push_back(cluster[a]);
  return out;
}

/// For each draw, the minimax argmin set of every non-singleton cluster.
/// Result[d] lists candidate sets for draw d; singletons are omitted and
/// counted in `singleton_hits` (record -> number of draws it was a singleton).
struct MinimaxCandidates {
  std::vector<std::vector<std::vector<std::size_t>>> per_draw;
  std::vector<std::uint32_t> singleton_hits;
};

template <class Dist>
MinimaxCandidates minimax_candidates_serial(std::span<const std::vector<int>> draws, std::size_t n_records,
                                            Dist&& dist) {
  MinimaxCandidates out;
  out.per_draw.resize(draws.size());
  out.singleton_hits.assign(n_records, 0);
  for (std::size_t d = 0; d < draws.size(); ++d)
    for (const auto& cluster : group_by_label(draws[d])) {
      if (cluster.size() == 1) {
        ++out.singleton_hits[cluster.front()];
        continue;
      }
      out.per_draw[d].push_back(minimax_argmin_set(std::span<const std::size_t>(cluster), dist));
    }
  return out;
}

template <class Dist>
MinimaxCandidates minimax_candidates_omp(std::span<const std::vector<int>> draws, std::size_t n_records,
                                         Dist&& dist) {
  MinimaxCandidates out;
  out.per_draw.resize(draws.size());
  out.singleton_hits.assign(n_records, 0);
  const auto n_draws = static_cast<std::ptrdiff_t>(draws.size());
  std::vector<std::vector<std::size_t>> singles(draws.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t d = 0; d < n_draws; ++d)
    for (const auto& cluster : group_by_label(draws[static_cast<std::size_t>(d)])) {
      if (cluster.size() == 1) {
        singles[static_cast<std::size_t>(d)].push_back(cluster.front());
        continue;
      }
      out.per_draw[static_cast<std::size_t>(d)].push_back(
          minimax_argmin_set(std::span<const std::size_t>(cluster), dist));
    }
  for (const auto& s : singles)
    for (auto r : s) ++out.singleton_hits[r];
  return out;
}

}  // namespace protolink::kernels
