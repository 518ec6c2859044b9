#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "protolink/corruptor.hpp"
#include "protolink/data.hpp"
#include "protolink/random.hpp"

namespace protolink {

enum class Sex { F, M };

/// systolic bp = 160 + 10 I(M) - income + 0.5 income I(M) + epsilon
double simulate_bp(double income, Sex sex, double epsilon);

/// Log-odds of high_bp: 30 + 10 I(M) - income + 0.5 income I(M) + epsilon.
double high_bp_logit(double income, Sex sex, double epsilon);

/// Bernoulli draw with the logit above.
int simulate_high_bp(double income, Sex sex, double epsilon, Rng& rng);

struct FirstNameEntry {
  std::string name;
  double frequency = 0;
  double male_fraction = 0.5;
};

struct FrequencyTables {
  std::vector<FirstNameEntry> first_names;
  std::vector<std::pair<std::string, double>> last_names;
  std::vector<std::string> education_levels;  // increasing attainment
  // [sex][age band][level] probabilities; bands: 25-44, 45-64, 65+
  std::vector<std::vector<std::vector<double>>> education;
  // [level][sex] median income in $1000s
  std::vector<std::vector<double>> median_income;
  MisspellingTable misspellings;

  static FrequencyTables load(const std::filesystem::path& dir);
};

/// Directory holding the bundled tables (set at build time, overridable with
/// the PROTOLINK_DATA_DIR environment variable).
std::filesystem::path default_data_dir();

struct GenConfig {
  int n_records = 500;
  double duplication_rate = 0.30;
  int max_duplicates = 5;
  double noise_sigma = 1.0;
  int n_distorted_fields = 3;
  std::uint64_t seed = 1;
  std::filesystem::path data_dir = default_data_dir();

  /// Throws ConfigError on invalid settings.
  void validate() const;
};

/// first_name, last_name, birthdate (linkage); sex, education, income, bp,
/// high_bp (downstream).
Schema person_schema(const std::vector<std::string>& education_levels);

Dataset generate_truth(const GenConfig& config, const FrequencyTables& tables);
Dataset generate_truth(const GenConfig& config);

/// Same mechanism as generate_truth on an independent seed stream.
Dataset generate_test_set(const GenConfig& config, const FrequencyTables& tables);
Dataset generate_test_set(const GenConfig& config);

/// Appends distorted copies of floor(rate * n) randomly chosen entities.
/// Originals keep their order and are flagged is_duplicate = false.
Dataset inject_duplicates(const Dataset& truth, const GenConfig& config, const FrequencyTables& tables, Rng& rng);

/// Shuffles records and deals them uniformly at random into `k` databases.
Dataset shuffle_into_databases(const Dataset& observed, int k, Rng& rng);

/// The noise-free bp mean for a record of the person schema.
double bp_formula_mean(const Dataset& ds, const Record& r);

}  // namespace protolink
