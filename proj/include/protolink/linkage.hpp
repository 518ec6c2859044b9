#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "protolink/data.hpp"
#include "protolink/kernels.hpp"
#include "protolink/random.hpp"
#include "protolink/string_distance.hpp"

namespace protolink {

struct Hyperparams {
  double a = 1.0;   // Beta prior on distortion rates
  double b = 99.0;
  double c = 10.0;  // distortion-kernel steepness
  int max_entities = 0;  // M; 0 means "number of records"
  StringMetric string_metric = StringMetric::NormalizedLevenshtein;

  void validate() const;
};

struct McmcSettings {
  int iters = 10000;
  int burn_in = 1000;
  int thin = 10;
  std::uint64_t seed = 1;

  void validate() const;
  int draw_count() const { return (iters - burn_in) / thin; }
};

/// Empirical distribution G of one linkage field over all databases.
struct FieldPrior {
  std::size_t schema_field = 0;
  std::string name;
  bool string_kernel = true;  // false: distorted values are drawn from G
  std::vector<std::string> support;  // S, sorted
  std::vector<double> alpha;         // frequencies, sum to 1
  std::unordered_map<std::string, int> index;

  /// Position of `value` in support; -1 when absent.
  int find(const std::string& value) const;
};

struct EmpiricalPrior {
  std::vector<FieldPrior> fields;
};

/// Value of a linkage field as the string the model sees (dates rendered as
/// unpadded YYYY-M-D).
std::string linkage_value(const FieldSchema& field, const Value& v);

EmpiricalPrior build_empirical_prior(const Dataset& dataset, const std::vector<std::size_t>& linkage_fields);
EmpiricalPrior build_empirical_prior(const Dataset& dataset);

/// P(X = w | Y = y, z = 1) for linkage field `field` (index into prior.fields).
/// String fields use alpha(w) exp(-c d(w, y)) normalized over S; categorical
/// fields return alpha(w). Throws StructuralError for values outside S.
double distortion_kernel(const std::string& w, const std::string& y, std::size_t field, const EmpiricalPrior& prior,
                         const Hyperparams& hyper);

/// One MCMC state. Entity and value indices are 0-based; `y[e]` is empty for
/// unoccupied entities.
struct LinkageState {
  std::vector<int> lambda;              // record -> entity in [0, M)
  std::vector<std::vector<int>> y;      // entity -> value index per field
  std::vector<std::vector<std::uint8_t>> z;  // record -> distortion flag per field
  std::vector<std::vector<double>> beta;     // database -> rate per field
};

/// Gibbs sampler for the graphical record-linkage model. Holds the encoded
/// data and precomputed distortion tables; sweep() updates, in order, every
/// record's entity assignment (distortion flag integrated out), every
/// occupied entity's latent values (flags integrated out), the flags given
/// the new assignment, and the per-database distortion rates.
class GibbsSampler {
 public:
  GibbsSampler(const Dataset& dataset, const EmpiricalPrior& prior, const Hyperparams& hyper);

  std::size_t record_count() const { return n_records_; }
  std::size_t field_count() const { return prior_.fields.size(); }
  int max_entities() const { return max_entities_; }
  const EmpiricalPrior& prior() const { return prior_; }
  /// Encoded value index of record r, field l.
  int value(std::size_t r, std::size_t l) const { return x_[r * field_count() + l]; }

  /// All-singleton start: Y copied from each record, z = 0, beta at its prior mean.
  LinkageState initial_state() const;

  void sweep(LinkageState& state, Rng& rng) const;

  /// Throws std::logic_error when a state invariant fails.
  void check_invariants(const LinkageState& state) const;

  /// Distortion probability table entry for string fields, alpha(w) for
  /// categorical ones.
  double kernel(std::size_t l, int w, int y) const;

 private:
  struct Tables {
    kernels::DistortionTable table;  // empty for categorical fields
  };

  double agreement_likelihood(std::size_t l, int x, int y, double beta) const;
  double new_entity_marginal(std::size_t l, int x, double beta) const;
  void sample_latent_values(std::size_t l, std::span<const std::size_t> members, const LinkageState& state,
                            std::vector<double>& weights, Rng& rng, int& out) const;

  EmpiricalPrior prior_;
  Hyperparams hyper_;
  std::size_t n_records_ = 0;
  int n_databases_ = 0;
  int max_entities_ = 0;
  std::vector<int> x_;         // n_records x n_fields
  std::vector<int> database_;  // 0-based
  std::vector<std::size_t> database_sizes_;
  std::vector<Tables> tables_;
};

/// Convenience wrapper: one sweep with freshly built tables.
LinkageState gibbs_sweep(const LinkageState& state, const Dataset& dataset, const EmpiricalPrior& prior,
                         const Hyperparams& hyper, Rng& rng);

struct ChainDiagnostics {
  std::vector<int> n_unique;
  std::vector<double> precision;  // empty when no truth supplied
  std::vector<double> recall;
};

struct ChainOutput {
  std::vector<RecordId> records;            // canonical order
  std::vector<std::vector<int>> lambda_draws;  // 1-based entity indices
  ChainDiagnostics diagnostics;
  Hyperparams hyper;
  McmcSettings mcmc;
};

ChainOutput run_chain(const Dataset& dataset, const Hyperparams& hyper, const McmcSettings& mcmc,
                      const std::optional<Clustering>& truth = std::nullopt);

}  // namespace protolink
