#include "protolink/kernels.hpp"

#include <cmath>
#include <map>
#include <unordered_map>

namespace protolink::kernels {

namespace {

void finish_table(DistortionTable& t, std::span<const double> alpha) {
  const std::size_t n = t.n;
  t.h.assign(n, 0.0);
  for (std::size_t w = 0; w < n; ++w) {
    double acc = 0;
    for (std::size_t y = 0; y < n; ++y) acc += alpha[y] * t.f[w * n + y];
    t.h[w] = acc;
  }
}

// Column y: unnormalized alpha(w) exp(-c d(w, y)), then divide by Z(y).
void fill_column(DistortionTable& t, std::span<const std::string> support, std::span<const double> alpha, double c,
                 StringMetric metric, std::size_t y) {
  const std::size_t n = t.n;
  double z = 0;
  for (std::size_t w = 0; w < n; ++w) {
    const double v = alpha[w] * std::exp(-c * string_distance(metric, support[w], support[y]));
    t.f[w * n + y] = v;
    z += v;
  }
  for (std::size_t w = 0; w < n; ++w) t.f[w * n + y] /= z;
}

void add_pairs(std::span<const int> labels, std::size_t n_records,
               std::unordered_map<std::uint64_t, std::uint32_t>& counts) {
  for (const auto& cluster : group_by_label(labels))
    for (std::size_t a = 0; a < cluster.size(); ++a)
      for (std::size_t b = a + 1; b < cluster.size(); ++b)
        ++counts[static_cast<std::uint64_t>(cluster[a]) * n_records + cluster[b]];
}

PairCounts sorted(const std::unordered_map<std::uint64_t, std::uint32_t>& counts) {
  PairCounts out(counts.begin(), counts.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

DistortionTable distortion_table_serial(std::span<const std::string> support, std::span<const double> alpha,
                                        double c, StringMetric metric) {
  DistortionTable t;
  t.n = support.size();
  t.f.assign(t.n * t.n, 0.0);
  for (std::size_t y = 0; y < t.n; ++y) fill_column(t, support, alpha, c, metric, y);
  finish_table(t, alpha);
  return t;
}

DistortionTable distortion_table_omp(std::span<const std::string> support, std::span<const double> alpha, double c,
                                     StringMetric metric) {
  DistortionTable t;
  t.n = support.size();
  t.f.assign(t.n * t.n, 0.0);
  const auto n = static_cast<std::ptrdiff_t>(t.n);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t y = 0; y < n; ++y) fill_column(t, support, alpha, c, metric, static_cast<std::size_t>(y));
  finish_table(t, alpha);
  return t;
}

std::vector<std::vector<std::size_t>> group_by_label(std::span<const int> labels) {
  std::unordered_map<int, std::size_t> slot;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    auto [it, inserted] = slot.try_emplace(labels[r], groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(r);
  }
  return groups;
}

PairCounts cocluster_counts_serial(std::span<const std::vector<int>> draws, std::size_t n_records) {
  std::unordered_map<std::uint64_t, std::uint32_t> counts;
  for (const auto& d : draws) add_pairs(d, n_records, counts);
  return sorted(counts);
}

PairCounts cocluster_counts_omp(std::span<const std::vector<int>> draws, std::size_t n_records) {
  std::unordered_map<std::uint64_t, std::uint32_t> total;
  const auto n_draws = static_cast<std::ptrdiff_t>(draws.size());
#pragma omp parallel
  {
    std::unordered_map<std::uint64_t, std::uint32_t> local;
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t d = 0; d < n_draws; ++d) add_pairs(draws[static_cast<std::size_t>(d)], n_records, local);
#pragma omp critical
    for (const auto& [k, v] : local) total[k] += v;
  }
  return sorted(total);
}

}  // namespace protolink::kernels
