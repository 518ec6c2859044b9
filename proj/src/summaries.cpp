#include "protolink/summaries.hpp"

#include <algorithm>
#include <map>

#include "protolink/prototyping.hpp"

namespace protolink {

void LinkageDraws::validate() const {
  if (draws.empty()) throw StructuralError("no linkage draws");
  for (const auto& d : draws)
    if (d.size() != records.size()) throw StructuralError("linkage draw length differs from record count");
}

PairwiseProbabilities::PairwiseProbabilities(std::size_t n_records, std::size_t n_draws, kernels::PairCounts counts)
    : n_records_(n_records), n_draws_(n_draws), counts_(std::move(counts)) {}

std::uint32_t PairwiseProbabilities::count(std::size_t a, std::size_t b) const {
  if (a > b) std::swap(a, b);
  const std::uint64_t key = static_cast<std::uint64_t>(a) * n_records_ + b;
  auto it = std::lower_bound(counts_.begin(), counts_.end(), key,
                             [](const auto& entry, std::uint64_t k) { return entry.first < k; });
  return it != counts_.end() && it->first == key ? it->second : 0;
}

double PairwiseProbabilities::operator()(std::size_t a, std::size_t b) const {
  if (a == b) return 1.0;
  return static_cast<double>(count(a, b)) / static_cast<double>(n_draws_);
}

PairwiseProbabilities pairwise_probabilities(const LinkageDraws& draws) {
  draws.validate();
  const std::size_t n = draws.records.size();
  return {n, draws.size(), kernels::cocluster_counts_omp(draws.draws, n)};
}

Clustering mpmms(const LinkageDraws& draws) {
  draws.validate();
  const std::size_t n = draws.records.size();
  std::map<std::vector<std::size_t>, std::uint32_t> freq;
  for (const auto& d : draws.draws)
    for (auto& set : kernels::group_by_label(d)) ++freq[std::move(set)];

  using Entry = const std::pair<const std::vector<std::size_t>, std::uint32_t>*;
  std::vector<Entry> best(n, nullptr);
  auto better = [](Entry a, Entry b) {
    if (a->second != b->second) return a->second > b->second;
    if (a->first.size() != b->first.size()) return a->first.size() < b->first.size();
    return a->first < b->first;
  };
  for (const auto& entry : freq)
    for (auto r : entry.first)
      if (!best[r] || better(&entry, best[r])) best[r] = &entry;

  std::vector<std::int64_t> keys(n);
  for (std::size_t r = 0; r < n; ++r) keys[r] = static_cast<std::int64_t>(r);
  for (const auto& entry : freq) {
    const auto& set = entry.first;
    if (set.size() < 2) continue;
    const bool shared = std::all_of(set.begin(), set.end(), [&](std::size_t r) { return best[r] == &entry; });
    if (!shared) continue;
    for (auto r : set) keys[r] = static_cast<std::int64_t>(set.front());
  }
  return Clustering(draws.records, keys);
}

PPCandidates pp_candidates(const LinkageDraws& draws, const Dataset& dataset, const DistanceSpec& spec) {
  draws.validate();
  if (draws.records != dataset.ids()) throw StructuralError("linkage draws and dataset cover different records");
  spec.validate(dataset.schema);
  const std::size_t n = dataset.size();

  // Only pairs that ever share an entity need a distance.
  const kernels::PairCounts pairs = kernels::cocluster_counts_omp(draws.draws, n);
  std::vector<double> dist(pairs.size());
  const auto n_pairs = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t k = 0; k < n_pairs; ++k) {
    const auto key = pairs[static_cast<std::size_t>(k)].first;
    dist[static_cast<std::size_t>(k)] =
        record_distance(dataset.records[key / n], dataset.records[key % n], dataset.schema, spec);
  }
  auto lookup = [&](std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    const std::uint64_t key = static_cast<std::uint64_t>(a) * n + b;
    auto it = std::lower_bound(pairs.begin(), pairs.end(), key,
                               [](const auto& entry, std::uint64_t k) { return entry.first < k; });
    return dist[static_cast<std::size_t>(it - pairs.begin())];
  };

  PPCandidates out;
  out.records = draws.records;
  out.n_draws = draws.size();
  out.candidates = kernels::minimax_candidates_omp(draws.draws, n, lookup);
  return out;
}

PPWeights pp_weights(const PPCandidates& c, std::uint64_t seed) {
  const std::size_t n = c.records.size();
  const auto n_draws = static_cast<std::ptrdiff_t>(c.n_draws);
  std::vector<std::vector<std::size_t>> chosen(c.n_draws);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t d = 0; d < n_draws; ++d) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(d));
    for (const auto& set : c.candidates.per_draw[static_cast<std::size_t>(d)])
      chosen[static_cast<std::size_t>(d)].push_back(set.size() == 1 ? set.front() : set[uniform_index(rng, set.size())]);
  }
  std::vector<std::uint64_t> hits(c.candidates.singleton_hits.begin(), c.candidates.singleton_hits.end());
  for (const auto& per_draw : chosen)
    for (auto r : per_draw) ++hits[r];

  PPWeights w;
  w.records = c.records;
  w.weight.resize(n);
  for (std::size_t r = 0; r < n; ++r) w.weight[r] = static_cast<double>(hits[r]) / static_cast<double>(c.n_draws);
  return w;
}

PPWeights pp_weights(const LinkageDraws& draws, const Dataset& dataset, const DistanceSpec& spec, Rng& rng) {
  return pp_weights(pp_candidates(draws, dataset, spec), rng());
}

std::vector<std::size_t> pp_threshold(const PPWeights& weights, double tau) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < weights.weight.size(); ++r)
    if (weights.weight[r] > tau) out.push_back(r);
  return out;
}

}  // namespace protolink
