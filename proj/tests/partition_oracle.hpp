#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "protolink/linkage.hpp"

// Exact partition posterior for tiny linkage instances, shared by the unit
// and acceptance tests.
namespace oracle {

using namespace protolink;

// Canonical partition key of a labeling of 3 records: position of first
// occurrence per label.
inline int partition_key(const std::vector<int>& lambda) {
  std::map<int, int> first;
  int key = 0;
  for (std::size_t r = 0; r < lambda.size(); ++r) {
    auto [it, inserted] = first.emplace(lambda[r], static_cast<int>(r));
    key = key * 3 + it->second;
  }
  return key;
}

// Exact posterior over partitions of a single-database, single-field
// instance by enumeration of (Lambda, Y, z) with beta integrated out.
// `f(x, y)` is the distortion density of observing x from latent y.
template <class F>
inline std::map<int, double> enumerate_posterior(const std::vector<int>& x, const std::vector<double>& alpha, int m,
                                          double a, double b, F&& f) {
  const int n = static_cast<int>(x.size());
  const int s = static_cast<int>(alpha.size());
  std::map<int, double> post;
  double total = 0;
  std::vector<int> lambda(static_cast<std::size_t>(n), 0);
  const int n_lambda = static_cast<int>(std::pow(m, n));
  for (int code = 0; code < n_lambda; ++code) {
    for (int r = 0, c = code; r < n; ++r, c /= m) lambda[static_cast<std::size_t>(r)] = c % m;
    // Sum over latent values of every entity (unoccupied ones integrate to 1)
    // and over z per record.
    std::vector<int> occupied;
    for (int e = 0; e < m; ++e)
      if (std::find(lambda.begin(), lambda.end(), e) != lambda.end()) occupied.push_back(e);
    const int n_y = static_cast<int>(std::pow(s, occupied.size()));
    double mass = 0;
    for (int ycode = 0; ycode < n_y; ++ycode) {
      std::map<int, int> y;
      double py = 1;
      for (std::size_t k = 0, c = static_cast<std::size_t>(ycode); k < occupied.size(); ++k, c /= static_cast<std::size_t>(s)) {
        y[occupied[k]] = static_cast<int>(c % static_cast<std::size_t>(s));
        py *= alpha[c % static_cast<std::size_t>(s)];
      }
      for (int zcode = 0; zcode < (1 << n); ++zcode) {
        double pz = 1;
        int nz = 0;
        for (int r = 0; r < n; ++r) {
          const int yr = y[lambda[static_cast<std::size_t>(r)]];
          if (zcode >> r & 1) {
            pz *= f(x[static_cast<std::size_t>(r)], yr);
            ++nz;
          } else {
            pz *= x[static_cast<std::size_t>(r)] == yr ? 1.0 : 0.0;
          }
        }
        // Beta-Bernoulli marginal of z.
        const double pb = std::exp(std::lgamma(a + nz) + std::lgamma(b + n - nz) - std::lgamma(a + b + n) -
                                   std::lgamma(a) - std::lgamma(b) + std::lgamma(a + b));
        mass += py * pz * pb;
      }
    }
    post[partition_key(lambda)] += mass;
    total += mass;
  }
  for (auto& [k, p] : post) p /= total;
  return post;
}

inline double chain_tv(const Dataset& ds, const Hyperparams& hyper, const std::map<int, double>& exact, int sweeps,
                std::uint64_t seed) {
  const EmpiricalPrior prior = build_empirical_prior(ds);
  const GibbsSampler sampler(ds, prior, hyper);
  LinkageState state = sampler.initial_state();
  Rng rng = make_rng(seed);
  std::map<int, double> freq;
  const int burn = 1000;
  for (int t = 0; t < sweeps + burn; ++t) {
    sampler.sweep(state, rng);
    if (t >= burn) freq[partition_key(state.lambda)] += 1.0 / sweeps;
  }
  sampler.check_invariants(state);
  double tv = 0;
  std::map<int, double> keys = exact;
  for (const auto& [k, p] : freq) keys[k] += 0;
  for (const auto& [k, unused] : keys) tv += std::abs((exact.count(k) ? exact.at(k) : 0) - (freq.count(k) ? freq[k] : 0));
  return tv / 2;
}

}  // namespace oracle
