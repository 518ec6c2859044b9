#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protolink/glm.hpp"
#include "protolink/linkage.hpp"
#include "protolink/prototyping.hpp"
#include "protolink/summaries.hpp"
#include "protolink/synthgen.hpp"

namespace protolink {

inline constexpr const char* kVersion = "1.0.0";

enum class Scenario { KnownClusters, LinkageAllVars, LinkageExplanatoryOnly };

const char* to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

/// A representative-dataset method in an experiment: one of the six
/// clustering-based methods, the two PP variants, or the truth baseline.
struct MethodId {
  enum class Kind { Clustering, PPThreshold, PPWeighted, Truth } kind = Kind::Clustering;
  PrototypeMethod method = PrototypeMethod::Minimax;

  std::string name() const;
  static MethodId parse(const std::string& s);
  bool operator==(const MethodId&) const = default;
};

struct DownstreamConfig {
  std::string linear_formula = "bp ~ sex + income + sex:income";
  std::string logistic_formula = "high_bp ~ sex + income + sex:income";
  bool fit_linear = true;
  bool fit_logistic = true;
  GlmMcmc mcmc{4, 500, 500, 1, 1.05};
  /// Generating coefficients used for coverage, in design-column order.
  std::vector<double> linear_truth{160, 10, -1, 0.5};
  std::vector<double> logistic_truth{30, 10, -1, 0.5};
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  Scenario scenario = Scenario::KnownClusters;
  GenConfig generation;
  int database_split = 1;
  Hyperparams hyper;
  McmcSettings mcmc;
  std::vector<MethodId> methods;
  double tau = 0.5;
  std::map<std::string, double> field_weights;  // empty: uniform
  DownstreamConfig downstream;
  int replicates = 100;

  /// Methods listed in the scenario's default order when `methods` is empty.
  std::vector<MethodId> effective_methods() const;
  void validate() const;
};

nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig read_config(const std::filesystem::path& path);

struct GeneratedData {
  Dataset truth;
  Dataset observed;  // split into databases
  Dataset test;
};

/// Generation uses substreams of the master seed, so data depend only on
/// (generation settings, seed).
GeneratedData generate_data(const ExperimentConfig& config, const FrequencyTables& tables);
GeneratedData generate_data(const ExperimentConfig& config);

/// Sets each duplicate's response fields to its entity's truth values.
Dataset reset_responses(const Dataset& observed, const Dataset& truth, const std::vector<std::string>& fields);

struct LinkagePosterior {
  ChainOutput chain;
  LinkageDraws draws;
  PairwiseProbabilities pairwise;
  Clustering point_estimate;
};

LinkagePosterior link_posterior(const Dataset& observed, const ExperimentConfig& config);

struct FitMetrics {
  double mse = 0;
  double coverage = 0;
  double max_rhat = 1;
  bool converged = true;
  std::vector<double> mean;
  std::vector<Interval> intervals;
};

struct ReplicateMetrics {
  MethodId method;
  int replicate = 0;
  std::size_t rows = 0;
  double kl = 0;
  std::optional<std::size_t> false_prototypes;
  std::size_t composite_rows = 0;
  std::optional<FitMetrics> linear;
  std::optional<FitMetrics> logistic;
};

/// Inputs shared by all replicates of one experiment.
struct SweepInputs {
  const GeneratedData* data = nullptr;
  const Dataset* observed = nullptr;         // what prototyping sees
  const Clustering* clustering = nullptr;    // truth or point estimate
  const PairwiseProbabilities* pairwise = nullptr;
  const PPCandidates* candidates = nullptr;
};

/// Representative dataset for one replicate; `seed` drives every random
/// choice.
PrototypeResult representative(const ExperimentConfig& config, const SweepInputs& in, const MethodId& method,
                               std::uint64_t seed);

/// Downstream fits and metrics for one representative dataset.
ReplicateMetrics evaluate_representative(const ExperimentConfig& config, const SweepInputs& in,
                                         const MethodId& method, const PrototypeResult& rep, int replicate);

/// `replicates` runs of prototyping + downstream with distinct sub-seeds over
/// the same inputs, parallel over replicates.
std::vector<ReplicateMetrics> replicate_sweep(const ExperimentConfig& config, const SweepInputs& in,
                                              const MethodId& method);

struct Aggregate {
  double mean = 0;
  std::optional<double> sd;  // absent for a single replicate
};

Aggregate aggregate(const std::vector<double>& values);

struct ExperimentResult {
  std::vector<ReplicateMetrics> metrics;
  std::filesystem::path manifest;
};

/// Full pipeline; writes artifacts and manifest.json under `out_dir`.
ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

// Artifact IO shared with the command-line tool.
void write_lambda_draws(const LinkageDraws& draws, const std::filesystem::path& path);
LinkageDraws read_lambda_draws(const std::filesystem::path& path);
void write_diagnostics(const ChainDiagnostics& d, const std::filesystem::path& path);
void write_pairwise(const PairwiseProbabilities& p, const std::vector<RecordId>& ids, const std::filesystem::path& path);
PairwiseProbabilities read_pairwise(const std::vector<RecordId>& ids, std::size_t n_draws,
                                    const std::filesystem::path& path);
void write_clustering(const Clustering& c, const std::filesystem::path& path);
Clustering read_clustering(const std::filesystem::path& path);
void write_pp_weights(const PPWeights& w, const std::filesystem::path& path);
PPWeights read_pp_weights(const std::filesystem::path& path);
void write_representative(const PrototypeResult& rep, const std::filesystem::path& path);
void write_metrics(const std::vector<ReplicateMetrics>& metrics, const ExperimentConfig& config,
                   const std::filesystem::path& path);

std::string sha256_file(const std::filesystem::path& path);
/// Manifest listing every regular file under `dir` (except the manifest and
/// timings) with its SHA-256.
nlohmann::json build_manifest(const ExperimentConfig& config, const std::filesystem::path& dir);

}  // namespace protolink
