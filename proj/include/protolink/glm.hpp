#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "protolink/data.hpp"
#include "protolink/metrics.hpp"
#include "protolink/prototyping.hpp"
#include "protolink/random.hpp"

namespace protolink {

enum class Family { Linear, Logistic };

const char* to_string(Family f);
Family family_from_string(const std::string& s);

/// A product of fields; one factor is a main effect.
struct Term {
  std::vector<std::string> factors;
  std::string name() const;
};

struct ModelSpec {
  std::string response = "bp";
  std::vector<Term> terms;
  Family family = Family::Linear;
  double coef_prior_sd = 2.5;       // on the standardized scale
  double intercept_prior_sd = 10.0;
  double sigma_rate = 1.0;          // Exponential prior on sigma
  bool standardize = true;
  /// Linear only: center and scale the response before applying the priors.
  bool autoscale = true;
  /// Holds sigma at a known value (linear only).
  std::optional<double> fixed_sigma;

  /// "y ~ a + b + a:b".
  static ModelSpec parse(const std::string& formula, Family family = Family::Linear);
  std::string formula() const;
  void validate(const Schema& schema) const;
};

/// Model matrix on the raw scale (intercept first) with the centering and
/// scaling constants used by the sampler.
struct Design {
  std::vector<std::string> columns;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
  Eigen::VectorXd center;  // per column; 0 for the intercept
  Eigen::VectorXd scale;   // per column; 1 for the intercept
  /// Category levels per field, fixed at build time so test designs match.
  std::map<std::string, std::vector<std::string>> levels;
};

/// Indicator coding for categorical fields (first level is the reference),
/// rank for ordinal fields, values for numeric ones. Throws ConfigError on a
/// zero-variance column.
Design build_design(const Dataset& data, std::span<const double> weights, const ModelSpec& spec);
Design build_design(const PrototypeResult& rep, const ModelSpec& spec);
/// Predictor matrix for new data using the levels of a fitted design.
Eigen::MatrixXd design_matrix_like(const Design& fitted, const Dataset& data, const ModelSpec& spec);
/// Response values of a dataset (0/1 for logistic).
std::vector<double> response_values(const Dataset& data, const ModelSpec& spec);

struct GlmMcmc {
  int chains = 4;
  int warmup = 1000;
  int iters = 1000;  // kept draws per chain
  std::uint64_t seed = 1;
  double rhat_threshold = 1.05;
  void validate() const;
};

struct PosteriorSamples {
  Family family = Family::Linear;
  std::vector<std::string> columns;
  Eigen::MatrixXd beta;        // draws x columns, raw predictor scale
  std::vector<double> sigma;   // linear only
  Eigen::VectorXd center;
  Eigen::VectorXd scale;
  double max_rhat = 1.0;
  bool converged = true;
  bool separation = false;     // logistic: perfectly separable data detected
  double acceptance = 1.0;     // logistic: mean Metropolis acceptance rate

  Eigen::VectorXd mean() const;
};

PosteriorSamples fit_linear(const Design& design, const ModelSpec& spec, const GlmMcmc& mcmc);
PosteriorSamples fit_logistic(const Design& design, const ModelSpec& spec, const GlmMcmc& mcmc);
PosteriorSamples fit(const Design& design, const ModelSpec& spec, const GlmMcmc& mcmc);

/// Posterior predictive mean per row of a raw-scale design.
std::vector<double> predict(const PosteriorSamples& posterior, const Eigen::MatrixXd& x);

/// Type-7 empirical quantile of unsorted values.
double quantile(std::vector<double> values, double prob);
/// Equal-tailed interval per column.
std::vector<Interval> credible_intervals(const PosteriorSamples& posterior, double level = 0.95);

}  // namespace protolink
