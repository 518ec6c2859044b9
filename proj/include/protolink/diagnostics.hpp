#pragma once

#include <span>
#include <vector>

namespace protolink {

struct AcfResult {
  std::vector<double> values;  // lags 0..max_lag
  bool constant_series = false;
};

/// Sample autocorrelation: lag-k autocovariance averaged over the n-k
/// available products, divided by the lag-0 variance. A constant series is
/// reported as 1 at lag 0 and 0 elsewhere with `constant_series` set.
AcfResult acf(std::span<const double> series, std::size_t max_lag);

/// Split-chain potential scale reduction factor. Each chain is halved and
/// the halves treated as separate chains.
double split_rhat(const std::vector<std::vector<double>>& chains);

}  // namespace protolink
