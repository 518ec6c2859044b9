#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protolink/data.hpp"

namespace protolink {

struct PRScore {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  double precision = 1.0;  // 1 when nothing is predicted linked
  double recall = 1.0;     // 1 when nothing is truly linked
};

/// Pairwise precision/recall over all unordered record pairs, counted from
/// the contingency table of the two labelings.
PRScore precision_recall_from_labels(std::span<const int> predicted, std::span<const std::int64_t> truth);
/// Throws StructuralError unless both clusterings cover the same records.
PRScore pairwise_precision_recall(const Clustering& predicted, const Clustering& truth);

/// Sum of p log(p / q) over cells with p > 0 (natural log). Throws when some
/// q is zero where p is positive.
double kl_divergence(std::span<const double> p, std::span<const double> q);

struct KlOptions {
  std::vector<std::string> fields{"bp", "high_bp", "income", "sex"};
  int max_bins = 10;
};

/// Empirical KL divergence of the representative distribution from the true
/// one over joint cells. Numeric fields are cut at quantiles of the truth
/// sample into min(ceil(sqrt n), max_bins) bins; categorical and ordinal
/// fields use their labels. The truth histogram receives 1/(2 * cells)
/// pseudo-counts per cell. `rep_weights` (optional) weight the
/// representative rows.
double empirical_kl(const Dataset& rep, const Dataset& truth, const KlOptions& options = {},
                    std::span<const double> rep_weights = {});

double mse(std::span<const double> predictions, std::span<const double> actuals);

struct Interval {
  double low = 0;
  double high = 0;
};

struct CoverageResult {
  std::vector<bool> contained;
  double rate = 0;
};

/// Closed-interval containment per term.
CoverageResult coverage(std::span<const Interval> intervals, std::span<const double> truth);

}  // namespace protolink
