// Serial vs OpenMP timings for the data-parallel kernels.

#include <chrono>
#include <cstdio>
#include <numeric>
#include <set>

#include <omp.h>

#include "protolink/kernels.hpp"
#include "protolink/pipeline.hpp"

using namespace protolink;

namespace {

template <class F>
double best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void report(const char* name, double serial, double omp) {
  std::printf("%-22s serial %9.4f s   omp %9.4f s   speedup %5.2fx\n", name, serial, omp, serial / omp);
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 3;
  std::printf("threads: %d\n", omp_get_max_threads());

  ExperimentConfig cfg;
  const GeneratedData data = generate_data(cfg);
  const Dataset& ds = data.observed;
  const std::size_t first = ds.schema.index_of("first_name");

  std::set<std::string> uniq;
  for (const auto& r : ds.records) uniq.insert(r.text(first));
  const std::vector<std::string> support(uniq.begin(), uniq.end());
  const std::vector<double> alpha(support.size(), 1.0 / static_cast<double>(support.size()));
  const double t_ds = best_of(reps, [&] { kernels::distortion_table_serial(support, alpha, 10, StringMetric::NormalizedLevenshtein); });
  const double t_do = best_of(reps, [&] { kernels::distortion_table_omp(support, alpha, 10, StringMetric::NormalizedLevenshtein); });
  report("distortion_table", t_ds, t_do);

  // Draws: truth clustering with random merges/splits.
  const std::size_t n = ds.size();
  const auto truth = truth_clustering(ds).dense_labels();
  std::vector<std::vector<int>> draws(1000, truth);
  Rng rng = make_rng(7);
  for (auto& d : draws)
    for (std::size_t k = 0; k < n / 20; ++k) d[uniform_index(rng, n)] = static_cast<int>(uniform_index(rng, n));

  const double t_cs = best_of(reps, [&] { kernels::cocluster_counts_serial(draws, n); });
  const double t_co = best_of(reps, [&] { kernels::cocluster_counts_omp(draws, n); });
  report("cocluster_counts", t_cs, t_co);

  const DistanceSpec spec = DistanceSpec::defaults(ds);
  auto dist = [&](std::size_t a, std::size_t b) { return record_distance(ds.records[a], ds.records[b], ds.schema, spec); };
  const double t_ms = best_of(reps, [&] { kernels::minimax_candidates_serial(draws, n, dist); });
  const double t_mo = best_of(reps, [&] { kernels::minimax_candidates_omp(draws, n, dist); });
  report("minimax_candidates", t_ms, t_mo);
  return 0;
}
