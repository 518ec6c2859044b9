#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "protolink/data.hpp"
#include "protolink/kernels.hpp"
#include "protolink/random.hpp"

namespace protolink {

struct DistanceSpec;

/// Posterior draws of the linkage structure. Each draw assigns an entity
/// label to every record position in `records` (canonical order).
struct LinkageDraws {
  std::vector<RecordId> records;
  std::vector<std::vector<int>> draws;

  std::size_t size() const { return draws.size(); }
  /// Throws StructuralError on ragged or empty input.
  void validate() const;
};

/// Co-cluster frequencies for record pairs that share an entity in at least
/// one draw. Pairs are keyed by positions (a < b).
class PairwiseProbabilities {
 public:
  PairwiseProbabilities() = default;
  PairwiseProbabilities(std::size_t n_records, std::size_t n_draws, kernels::PairCounts counts);

  std::size_t record_count() const { return n_records_; }
  std::size_t draw_count() const { return n_draws_; }
  /// 1 on the diagonal, 0 for pairs never co-clustered.
  double operator()(std::size_t a, std::size_t b) const;
  std::uint32_t count(std::size_t a, std::size_t b) const;
  const kernels::PairCounts& counts() const { return counts_; }

 private:
  std::size_t n_records_ = 0;
  std::size_t n_draws_ = 0;
  kernels::PairCounts counts_;
};

PairwiseProbabilities pairwise_probabilities(const LinkageDraws& draws);

/// Shared most-probable-maximal-matching-set point estimate. A record's MMS
/// in a draw is the set of records sharing its entity; its MPMMS is the most
/// frequent one (ties: smaller set, then smallest members). Records are
/// linked only when their set is the MPMMS of every member.
Clustering mpmms(const LinkageDraws& draws);

struct PPWeights {
  std::vector<RecordId> records;
  std::vector<double> weight;
};

/// Minimax argmin sets for every non-singleton cluster of every draw, kept
/// so repeated tie-breaking does not redo the distance work.
struct PPCandidates {
  std::vector<RecordId> records;
  std::size_t n_draws = 0;
  kernels::MinimaxCandidates candidates;
};

PPCandidates pp_candidates(const LinkageDraws& draws, const Dataset& dataset, const DistanceSpec& spec);
/// Ties inside draw d are broken with substream (seed, d).
PPWeights pp_weights(const PPCandidates& candidates, std::uint64_t seed);
PPWeights pp_weights(const LinkageDraws& draws, const Dataset& dataset, const DistanceSpec& spec, Rng& rng);

/// Positions whose weight is strictly above tau.
std::vector<std::size_t> pp_threshold(const PPWeights& weights, double tau = 0.5);

}  // namespace protolink
