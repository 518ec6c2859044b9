#include "protolink/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "protolink/io.hpp"

namespace protolink {

namespace {

std::uint64_t pairs(std::uint64_t n) { return n * (n - 1) / 2; }

template <class K>
std::uint64_t pair_total(const std::unordered_map<K, std::uint64_t>& sizes) {
  std::uint64_t t = 0;
  for (const auto& [k, n] : sizes) t += pairs(n);
  return t;
}

std::int64_t encode(const RecordId& id) {
  return (static_cast<std::int64_t>(id.database) << 32) | static_cast<std::uint32_t>(id.row);
}

}  // namespace

PRScore precision_recall_from_labels(std::span<const int> predicted, std::span<const std::int64_t> truth) {
  if (predicted.size() != truth.size()) throw StructuralError("precision/recall: labelings differ in length");
  std::unordered_map<int, std::uint64_t> pred_sizes;
  std::unordered_map<std::int64_t, std::uint64_t> true_sizes;
  std::map<std::pair<int, std::int64_t>, std::uint64_t> cells;
  for (std::size_t r = 0; r < predicted.size(); ++r) {
    ++pred_sizes[predicted[r]];
    ++true_sizes[truth[r]];
    ++cells[{predicted[r], truth[r]}];
  }
  PRScore s;
  for (const auto& [k, n] : cells) s.tp += pairs(n);
  const std::uint64_t linked = pair_total(pred_sizes);
  const std::uint64_t true_links = pair_total(true_sizes);
  s.fp = linked - s.tp;
  s.fn = true_links - s.tp;
  s.precision = linked == 0 ? 1.0 : static_cast<double>(s.tp) / static_cast<double>(linked);
  s.recall = true_links == 0 ? 1.0 : static_cast<double>(s.tp) / static_cast<double>(true_links);
  return s;
}

PRScore pairwise_precision_recall(const Clustering& predicted, const Clustering& truth) {
  if (predicted.records() != truth.records())
    throw StructuralError("precision/recall: clusterings cover different records");
  std::vector<int> pred = predicted.dense_labels();
  std::vector<std::int64_t> tru;
  tru.reserve(truth.size());
  for (const auto& l : truth.labels()) tru.push_back(encode(l));
  return precision_recall_from_labels(pred, tru);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw StructuralError("kl_divergence: size mismatch");
  double kl = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] <= 0) continue;
    if (q[k] <= 0) throw std::domain_error("kl_divergence: reference has zero mass where p is positive");
    kl += p[k] * std::log(p[k] / q[k]);
  }
  return kl;
}

namespace {

// Type-7 quantile of sorted data.
double quantile_sorted(const std::vector<double>& xs, double prob) {
  const double h = (static_cast<double>(xs.size()) - 1) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

struct Binner {
  bool numeric = false;
  std::vector<double> cuts;               // numeric: interior cut points
  std::map<std::string, int> labels;      // categorical: label -> cell
  int cells = 0;

  int cell(const Value& v) {
    if (numeric) {
      const double x = std::get<double>(v);
      return static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), x) - cuts.begin());
    }
    const std::string key = std::holds_alternative<double>(v) ? format_number(std::get<double>(v))
                                                              : std::get<std::string>(v);
    auto [it, inserted] = labels.try_emplace(key, cells);
    if (inserted) ++cells;
    return it->second;
  }
};

}  // namespace

double empirical_kl(const Dataset& rep, const Dataset& truth, const KlOptions& options,
                    std::span<const double> rep_weights) {
  if (truth.size() == 0) throw StructuralError("empirical_kl: empty truth dataset");
  if (!rep_weights.empty() && rep_weights.size() != rep.size())
    throw StructuralError("empirical_kl: weight count does not match representative rows");

  const std::size_t F = options.fields.size();
  std::vector<std::size_t> tcol(F), rcol(F);
  std::vector<Binner> binners(F);
  const auto n_true = static_cast<double>(truth.size());
  for (std::size_t f = 0; f < F; ++f) {
    tcol[f] = truth.schema.index_of(options.fields[f]);
    rcol[f] = rep.schema.index_of(options.fields[f]);
    const auto& field = truth.schema.fields[tcol[f]];
    auto& b = binners[f];
    if (field.kind == FieldKind::Numeric) {
      b.numeric = true;
      std::vector<double> xs;
      for (const auto& r : truth.records) xs.push_back(r.number(tcol[f]));
      std::sort(xs.begin(), xs.end());
      const int bins = std::min(static_cast<int>(std::ceil(std::sqrt(n_true))), options.max_bins);
      for (int k = 1; k < bins; ++k) {
        const double c = quantile_sorted(xs, static_cast<double>(k) / bins);
        if (b.cuts.empty() || c > b.cuts.back()) b.cuts.push_back(c);
      }
      b.cells = static_cast<int>(b.cuts.size()) + 1;
    } else {
      for (const auto& cat : field.categories) b.cell(Value{cat});
      for (const auto& lvl : field.ordinal_levels) b.cell(Value{lvl});
      for (const auto& r : truth.records) b.cell(r.values[tcol[f]]);
    }
  }

  std::map<std::vector<int>, double> true_counts;
  std::map<std::vector<int>, double> rep_mass;
  std::vector<int> key(F);
  for (const auto& r : truth.records) {
    for (std::size_t f = 0; f < F; ++f) key[f] = binners[f].cell(r.values[tcol[f]]);
    true_counts[key] += 1.0;
  }
  double rep_total = 0;
  for (std::size_t i = 0; i < rep.size(); ++i) {
    const double w = rep_weights.empty() ? 1.0 : rep_weights[i];
    if (w <= 0) continue;
    for (std::size_t f = 0; f < F; ++f) key[f] = binners[f].cell(rep.records[i].values[rcol[f]]);
    rep_mass[key] += w;
    rep_total += w;
  }
  if (rep_total <= 0) throw StructuralError("empirical_kl: representative dataset has no mass");

  // Labels first seen in rep widen the grid; count cells after both passes.
  double cells = 1;
  for (const auto& b : binners) cells *= b.cells;
  const double eps = 1.0 / (2.0 * cells);
  const double denom = n_true + eps * cells;

  double kl = 0;
  for (const auto& [cell, mass] : rep_mass) {
    const double p = mass / rep_total;
    auto it = true_counts.find(cell);
    const double q = ((it == true_counts.end() ? 0.0 : it->second) + eps) / denom;
    kl += p * std::log(p / q);
  }
  return std::max(kl, 0.0);
}

double mse(std::span<const double> predictions, std::span<const double> actuals) {
  if (predictions.size() != actuals.size()) throw StructuralError("mse: length mismatch");
  if (predictions.empty()) throw StructuralError("mse: empty input");
  double s = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) s += (predictions[i] - actuals[i]) * (predictions[i] - actuals[i]);
  return s / static_cast<double>(predictions.size());
}

CoverageResult coverage(std::span<const Interval> intervals, std::span<const double> truth) {
  if (intervals.size() != truth.size()) throw StructuralError("coverage: term count mismatch");
  CoverageResult out;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const bool in = intervals[k].low <= truth[k] && truth[k] <= intervals[k].high;
    out.contained.push_back(in);
    hits += in;
  }
  out.rate = truth.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(truth.size());
  return out;
}

}  // namespace protolink
