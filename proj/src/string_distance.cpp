#include "protolink/string_distance.hpp"

#include <algorithm>
#include <vector>

namespace protolink {

int levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<int> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    int diag = row[0];
    row[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      int up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] != b[j - 1] ? 1 : 0)});
      diag = up;
    }
  }
  return row[b.size()];
}

double normalized_levenshtein(std::string_view a, std::string_view b) {
  std::size_t n = std::max(a.size(), b.size());
  if (n == 0) return 0.0;
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(n);
}

double jaro_similarity(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  const std::size_t window = std::max<std::size_t>(std::max(a.size(), b.size()) / 2, 1) - 1;
  std::vector<char> a_hit(a.size(), 0), b_hit(b.size(), 0);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::size_t lo = i > window ? i - window : 0;
    std::size_t hi = std::min(i + window + 1, b.size());
    for (std::size_t j = lo; j < hi; ++j) {
      if (b_hit[j] || a[i] != b[j]) continue;
      a_hit[i] = b_hit[j] = 1;
      ++matches;
      break;
    }
  }
  if (matches == 0) return 0.0;
  std::size_t transpositions = 0;
  for (std::size_t i = 0, j = 0; i < a.size(); ++i) {
    if (!a_hit[i]) continue;
    while (!b_hit[j]) ++j;
    if (a[i] != b[j]) ++transpositions;
    ++j;
  }
  const double m = static_cast<double>(matches);
  return (m / a.size() + m / b.size() + (m - transpositions / 2.0) / m) / 3.0;
}

double jaro_winkler_similarity(std::string_view a, std::string_view b, double p, int max_prefix) {
  double sim = jaro_similarity(a, b);
  int prefix = 0;
  const int limit = std::min<int>({max_prefix, static_cast<int>(a.size()), static_cast<int>(b.size())});
  while (prefix < limit && a[prefix] == b[prefix]) ++prefix;
  return sim + prefix * p * (1.0 - sim);
}

double jaro_winkler_distance(std::string_view a, std::string_view b) {
  return std::clamp(1.0 - jaro_winkler_similarity(a, b), 0.0, 1.0);
}

double string_distance(StringMetric metric, std::string_view a, std::string_view b) {
  switch (metric) {
    case StringMetric::JaroWinkler: return jaro_winkler_distance(a, b);
    case StringMetric::NormalizedLevenshtein: return normalized_levenshtein(a, b);
  }
  return 0.0;
}

}  // namespace protolink
