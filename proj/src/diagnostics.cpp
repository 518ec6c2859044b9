#include "protolink/diagnostics.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "protolink/data.hpp"

namespace protolink {

AcfResult acf(std::span<const double> series, std::size_t max_lag) {
  const std::size_t n = series.size();
  if (n <= max_lag) throw ConfigError("acf: series length must exceed max_lag");
  AcfResult out;
  out.values.assign(max_lag + 1, 0.0);
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  double c0 = 0;
  for (double x : series) c0 += (x - mean) * (x - mean);
  c0 /= static_cast<double>(n);
  out.values[0] = 1.0;
  if (c0 <= 0) {
    out.constant_series = true;
    return out;
  }
  for (std::size_t k = 1; k <= max_lag; ++k) {
    double ck = 0;
    for (std::size_t t = 0; t + k < n; ++t) ck += (series[t] - mean) * (series[t + k] - mean);
    out.values[k] = ck / static_cast<double>(n - k) / c0;
  }
  return out;
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::span<const double>> halves;
  for (const auto& c : chains) {
    const std::size_t h = c.size() / 2;
    if (h < 2) throw ConfigError("split_rhat: chains too short");
    halves.emplace_back(c.data(), h);
    halves.emplace_back(c.data() + (c.size() - h), h);
  }
  const std::size_t n = halves.front().size();
  const double m = static_cast<double>(halves.size());
  std::vector<double> means;
  double w = 0;
  for (auto h : halves) {
    double mu = std::accumulate(h.begin(), h.end(), 0.0) / static_cast<double>(n);
    double s2 = 0;
    for (double x : h) s2 += (x - mu) * (x - mu);
    w += s2 / static_cast<double>(n - 1);
    means.push_back(mu);
  }
  w /= m;
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double b = 0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= static_cast<double>(n) / (m - 1);
  if (w <= 0) return b <= 0 ? 1.0 : INFINITY;
  const double var_plus = (static_cast<double>(n) - 1) / static_cast<double>(n) * w + b / static_cast<double>(n);
  return std::sqrt(var_plus / w);
}

}  // namespace protolink
