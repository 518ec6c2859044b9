#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protolink/data.hpp"
#include "protolink/random.hpp"
#include "protolink/string_distance.hpp"
#include "protolink/summaries.hpp"

namespace protolink {

struct FieldDistance {
  std::size_t field = 0;
  double weight = 0;
  StringMetric metric = StringMetric::JaroWinkler;
  double lo = 0;  // numeric scale bounds
  double hi = 1;
};

/// Weighted column-wise record distance; each column contributes a value in
/// [0, 1].
struct DistanceSpec {
  std::vector<FieldDistance> fields;

  /// Every non-id field with equal weight; numeric bounds from the observed
  /// range of `dataset`.
  static DistanceSpec defaults(const Dataset& dataset);
  /// Replaces weights by name (missing names get 0) and renormalizes.
  DistanceSpec with_weights(const Schema& schema, const std::map<std::string, double>& weights) const;
  /// Throws ConfigError unless weights are non-negative and sum to 1 and
  /// numeric bounds are finite with hi > lo.
  void validate(const Schema& schema) const;
};

double record_distance(const Record& a, const Record& b, const Schema& schema, const DistanceSpec& spec);

/// Positions into `dataset.records`.
using Cluster = std::vector<std::size_t>;

std::size_t minimax_prototype(std::span<const std::size_t> cluster, const Dataset& dataset, const DistanceSpec& spec,
                              Rng& rng);
/// Uniform draw, or proportional to `weights` (parallel to cluster) when given.
std::size_t random_prototype(std::span<const std::size_t> cluster, std::span<const double> weights, Rng& rng);
/// Weighted mean / majority vote / per-character vote; ties drawn uniformly.
Record composite_record(std::span<const std::size_t> cluster, std::span<const double> weights,
                        const Dataset& dataset, Rng& rng);

enum class PrototypeMethod { Random, PairwiseRandom, Minimax, PairwiseMinimax, Composite, PairwiseComposite };

const char* to_string(PrototypeMethod m);
PrototypeMethod prototype_method_from_string(const std::string& s);
bool needs_pairwise(PrototypeMethod m);

struct RowSource {
  bool composite = false;
  RecordId record;         // chosen record (when !composite)
  RecordId cluster_label;  // smallest member of the source cluster
};

/// Representative dataset (database 1, rows 1..n) with provenance and a
/// per-row weight for the downstream fit.
struct PrototypeResult {
  Dataset data;
  std::vector<RowSource> sources;
  std::vector<double> weights;
};

/// One representative per cluster. Clusters are processed independently
/// with substreams of a seed drawn from `rng`; output rows follow cluster
/// label order.
PrototypeResult build_representative_dataset(const Clustering& clustering, const Dataset& dataset,
                                             PrototypeMethod method, const DistanceSpec& spec,
                                             const PairwiseProbabilities* pairwise, Rng& rng);

PrototypeResult pp_threshold_dataset(const Dataset& dataset, const PPWeights& weights, double tau = 0.5);
/// Keeps records with positive weight and carries the weight column.
PrototypeResult pp_weighted_dataset(const Dataset& dataset, const PPWeights& weights);

struct FalsePrototypes {
  std::size_t false_count = 0;
  std::size_t composite_rows = 0;
};

/// Chosen rows whose source record is a flagged duplicate.
FalsePrototypes false_prototype_count(const PrototypeResult& result, const Dataset& source);

}  // namespace protolink
