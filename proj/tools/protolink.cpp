// Command-line front end: one subcommand per pipeline stage plus `pipeline`.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "protolink/io.hpp"
#include "protolink/metrics.hpp"
#include "protolink/pipeline.hpp"

namespace fs = std::filesystem;
using namespace protolink;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  int threads = 0;
};

ExperimentConfig load_config(const Globals& g) {
  ExperimentConfig c = g.config.empty() ? ExperimentConfig{} : read_config(g.config);
  if (g.seed) c.seed = *g.seed;
  return c;
}

fs::path out_path(const Globals& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

Dataset load_dataset(const std::string& schema, const std::vector<std::string>& inputs) {
  std::vector<fs::path> paths(inputs.begin(), inputs.end());
  return read_dataset(read_schema(schema), paths);
}

RecordId parse_record_id(const std::string& s) {
  const auto dash = s.find('-');
  if (dash == std::string::npos) throw StructuralError("bad record id '" + s + "'");
  return {std::stoi(s.substr(0, dash)), std::stoi(s.substr(dash + 1))};
}

// Inverse of write_representative.
PrototypeResult read_representative(const Schema& schema, const fs::path& path) {
  const CsvTable t = read_csv(path);
  PrototypeResult out;
  out.data = dataset_from_table(schema, t);
  const bool has_source = t.has_column("source");
  const bool has_weight = t.has_column("weight");
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    RowSource s;
    s.record = out.data.records[k].id;
    s.cluster_label = s.record;
    if (has_source) {
      const std::string& cell = t.rows[k][t.column("source")];
      const auto colon = cell.find(':');
      if (colon == std::string::npos) throw StructuralError("representative: bad source '" + cell + "'");
      const RecordId id = parse_record_id(cell.substr(colon + 1));
      s.composite = cell.compare(0, colon, "composite") == 0;
      (s.composite ? s.cluster_label : s.record) = id;
    }
    out.sources.push_back(s);
    double w = 1;
    if (has_weight && !parse_number(t.rows[k][t.column("weight")], w))
      throw StructuralError("representative: bad weight '" + t.rows[k][t.column("weight")] + "'");
    out.weights.push_back(w);
  }
  return out;
}


}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian record linkage, prototyping and downstream regression"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Experiment configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_option("--threads", g.threads, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);
  app.set_version_flag("--version", kVersion);

  // generate
  auto* gen = app.add_subcommand("generate", "Simulate truth, observed (with duplicates) and test data");
  std::optional<int> gen_n, gen_max_dup, gen_split;
  std::optional<double> gen_rate, gen_sigma;
  gen->add_option("-n,--n-records", gen_n, "Unique individuals");
  gen->add_option("--dup-rate", gen_rate, "Fraction of individuals duplicated");
  gen->add_option("--max-dup", gen_max_dup, "Maximum duplicates per individual");
  gen->add_option("--sigma", gen_sigma, "Response noise sd");
  gen->add_option("--split", gen_split, "Number of databases for observed records");

  // link
  auto* link = app.add_subcommand("link", "Run the record linkage Gibbs sampler");
  std::string link_schema;
  std::vector<std::string> link_inputs;
  std::optional<double> link_a, link_b, link_c;
  std::optional<int> link_iters, link_burn, link_thin, link_m;
  std::optional<std::string> link_metric;
  link->add_option("--schema", link_schema, "schema.json")->required()->check(CLI::ExistingFile);
  link->add_option("-i,--input", link_inputs, "Observed CSV, one per database")->required()->check(CLI::ExistingFile);
  link->add_option("--a", link_a, "Beta prior a on distortion");
  link->add_option("--b", link_b, "Beta prior b on distortion");
  link->add_option("--c", link_c, "String kernel steepness");
  link->add_option("--max-entities", link_m, "Latent entity cap (0: record count)");
  link->add_option("--metric", link_metric, "jaro_winkler | normalized_levenshtein");
  link->add_option("--iters", link_iters, "Gibbs sweeps");
  link->add_option("--burn-in", link_burn, "Discarded sweeps");
  link->add_option("--thin", link_thin, "Keep every k-th sweep");

  // summarize
  auto* summ = app.add_subcommand("summarize", "Pairwise probabilities, MPMMS and PP weights from draws");
  std::string sum_draws, sum_schema;
  std::vector<std::string> sum_inputs;
  summ->add_option("--draws", sum_draws, "lambda_draws.csv")->required()->check(CLI::ExistingFile);
  summ->add_option("--schema", sum_schema, "schema.json (needed for PP weights)")->check(CLI::ExistingFile);
  summ->add_option("-i,--input", sum_inputs, "Observed CSV (needed for PP weights)")->check(CLI::ExistingFile);

  // prototype
  auto* proto = app.add_subcommand("prototype", "Build a representative dataset");
  std::string pr_method = "minimax", pr_schema, pr_clusters, pr_pairwise, pr_draws, pr_ppweights, pr_weights;
  std::vector<std::string> pr_inputs;
  std::optional<double> pr_tau;
  std::optional<std::size_t> pr_ndraws;
  proto->add_option("--method", pr_method,
                    "random | pairwise_random | minimax | pairwise_minimax | composite | pairwise_composite | "
                    "pp_threshold | pp_weighted | true");
  proto->add_option("--schema", pr_schema, "schema.json")->required()->check(CLI::ExistingFile);
  proto->add_option("-i,--input", pr_inputs, "Observed CSV")->required()->check(CLI::ExistingFile);
  proto->add_option("--clusters", pr_clusters, "Clustering CSV (default: truth_entity column)")->check(CLI::ExistingFile);
  proto->add_option("--pairwise", pr_pairwise, "pairwise.csv")->check(CLI::ExistingFile);
  proto->add_option("--draws", pr_draws, "lambda_draws.csv (pairwise probabilities are recomputed)")
      ->check(CLI::ExistingFile);
  proto->add_option("--n-draws", pr_ndraws, "Draw count behind --pairwise");
  proto->add_option("--ppweights", pr_ppweights, "ppweights.csv")->check(CLI::ExistingFile);
  proto->add_option("--tau", pr_tau, "PP threshold");
  proto->add_option("--field-weights", pr_weights, "JSON object field -> weight")->check(CLI::ExistingFile);

  // regress
  auto* reg = app.add_subcommand("regress", "Weighted Bayesian linear or logistic regression");
  std::string rg_family = "linear", rg_formula, rg_data, rg_schema, rg_test, rg_weight_col = "weight";
  std::optional<int> rg_chains, rg_warmup, rg_iters;
  reg->add_option("--family", rg_family, "linear | logistic");
  reg->add_option("--formula", rg_formula, "e.g. 'bp ~ sex + income + sex:income'");
  reg->add_option("--data", rg_data, "Representative CSV")->required()->check(CLI::ExistingFile);
  reg->add_option("--schema", rg_schema, "schema.json")->required()->check(CLI::ExistingFile);
  reg->add_option("--test", rg_test, "Test CSV for predictions")->check(CLI::ExistingFile);
  reg->add_option("--weights-column", rg_weight_col, "Row weight column (ignored if absent)");
  reg->add_option("--chains", rg_chains, "MCMC chains");
  reg->add_option("--warmup", rg_warmup, "Warmup iterations per chain");
  reg->add_option("--iters", rg_iters, "Kept draws per chain");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Compute one evaluation metric");
  std::string ev_metric, ev_schema, ev_rep, ev_truth, ev_estimate, ev_predictions, ev_label = "";
  std::vector<std::string> ev_inputs;
  double ev_sigma = std::nan("");
  int ev_replicate = 0;
  eval->add_option("--metric", ev_metric, "kl | precision_recall | mse | false_prototypes")->required();
  eval->add_option("--schema", ev_schema, "schema.json")->check(CLI::ExistingFile);
  eval->add_option("--rep", ev_rep, "Representative CSV")->check(CLI::ExistingFile);
  eval->add_option("--truth", ev_truth, "truth.csv")->check(CLI::ExistingFile);
  eval->add_option("-i,--input", ev_inputs, "Observed CSV with truth_entity")->check(CLI::ExistingFile);
  eval->add_option("--estimate", ev_estimate, "Clustering CSV")->check(CLI::ExistingFile);
  eval->add_option("--predictions", ev_predictions, "predictions.csv")->check(CLI::ExistingFile);
  eval->add_option("--method", ev_label, "Method label for the output key");
  eval->add_option("--sigma", ev_sigma, "Noise level for the output key");
  eval->add_option("--replicate", ev_replicate, "Replicate index for the output key");

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run a full experiment from a config");
  std::optional<std::string> pp_scenario;
  std::optional<int> pp_replicates;
  std::optional<double> pp_sigma;
  pipe->add_option("--scenario", pp_scenario, "known_clusters | linkage_all_vars | linkage_explanatory_only");
  pipe->add_option("--replicates", pp_replicates, "Replicates per method");
  pipe->add_option("--sigma", pp_sigma, "Response noise sd");

  CLI11_PARSE(app, argc, argv);
  if (g.threads > 0) omp_set_num_threads(g.threads);

  std::string stage = "config";
  try {
    ExperimentConfig cfg = load_config(g);

    if (*gen) {
      stage = "generate";
      if (gen_n) cfg.generation.n_records = *gen_n;
      if (gen_rate) cfg.generation.duplication_rate = *gen_rate;
      if (gen_max_dup) cfg.generation.max_duplicates = *gen_max_dup;
      if (gen_sigma) cfg.generation.noise_sigma = *gen_sigma;
      if (gen_split) cfg.database_split = *gen_split;
      cfg.generation.validate();
      const GeneratedData d = generate_data(cfg);
      write_dataset(d.truth, out_path(g, "truth.csv"));
      write_dataset(d.observed, out_path(g, "observed.csv"));
      write_dataset(d.test, out_path(g, "test.csv"));
      write_schema(d.observed.schema, out_path(g, "schema.json"));
    } else if (*link) {
      stage = "link";
      if (link_a) cfg.hyper.a = *link_a;
      if (link_b) cfg.hyper.b = *link_b;
      if (link_c) cfg.hyper.c = *link_c;
      if (link_m) cfg.hyper.max_entities = *link_m;
      if (link_metric)
        cfg.hyper.string_metric =
            *link_metric == "jaro_winkler" ? StringMetric::JaroWinkler
            : *link_metric == "normalized_levenshtein"
                ? StringMetric::NormalizedLevenshtein
                : throw ConfigError("unknown string metric '" + *link_metric + "'");
      if (link_iters) cfg.mcmc.iters = *link_iters;
      if (link_burn) cfg.mcmc.burn_in = *link_burn;
      if (link_thin) cfg.mcmc.thin = *link_thin;
      cfg.hyper.validate();
      cfg.mcmc.validate();
      const Dataset observed = load_dataset(link_schema, link_inputs);
      const LinkagePosterior p = link_posterior(observed, cfg);
      write_lambda_draws(p.draws, out_path(g, "lambda_draws.csv"));
      write_diagnostics(p.chain.diagnostics, out_path(g, "diagnostics.csv"));
    } else if (*summ) {
      stage = "summarize";
      const LinkageDraws draws = read_lambda_draws(sum_draws);
      write_pairwise(pairwise_probabilities(draws), draws.records, out_path(g, "pairwise.csv"));
      write_clustering(mpmms(draws), out_path(g, "mpmms.csv"));
      if (!sum_inputs.empty()) {
        if (sum_schema.empty()) throw ConfigError("--schema is required with --input");
        const Dataset observed = load_dataset(sum_schema, sum_inputs);
        const PPCandidates c = pp_candidates(draws, observed, DistanceSpec::defaults(observed));
        write_pp_weights(pp_weights(c, derive_seed(cfg.seed, 5, 0)), out_path(g, "ppweights.csv"));
      }
    } else if (*proto) {
      stage = "prototype";
      const MethodId method = MethodId::parse(pr_method);
      if (pr_tau) cfg.tau = *pr_tau;
      if (!pr_weights.empty()) {
        std::ifstream in(pr_weights);
        cfg.field_weights = nlohmann::json::parse(in).get<std::map<std::string, double>>();
      }
      const Dataset observed = load_dataset(pr_schema, pr_inputs);
      GeneratedData data;
      data.truth = observed;
      const Clustering clustering = pr_clusters.empty() ? truth_clustering(observed) : read_clustering(pr_clusters);
      std::optional<PairwiseProbabilities> pairwise;
      std::optional<PPCandidates> candidates;
      const bool pairwise_method = method.kind == MethodId::Kind::Clustering && needs_pairwise(method.method);
      if (pairwise_method) {
        if (!pr_draws.empty()) {
          pairwise = pairwise_probabilities(read_lambda_draws(pr_draws));
        } else if (!pr_pairwise.empty()) {
          if (!pr_ndraws) throw ConfigError("--n-draws is required with --pairwise");
          pairwise = read_pairwise(observed.ids(), *pr_ndraws, pr_pairwise);
        } else {
          throw ConfigError("method '" + pr_method + "' needs --pairwise or --draws");
        }
      }
      PrototypeResult rep;
      if (method.kind == MethodId::Kind::PPThreshold || method.kind == MethodId::Kind::PPWeighted) {
        PPWeights w;
        if (!pr_ppweights.empty()) {
          w = read_pp_weights(pr_ppweights);
        } else if (!pr_draws.empty()) {
          w = pp_weights(pp_candidates(read_lambda_draws(pr_draws), observed, DistanceSpec::defaults(observed)),
                         derive_seed(cfg.seed, 5, 0));
        } else {
          throw ConfigError("method '" + pr_method + "' needs --ppweights or --draws");
        }
        rep = method.kind == MethodId::Kind::PPThreshold ? pp_threshold_dataset(observed, w, cfg.tau)
                                                         : pp_weighted_dataset(observed, w);
      } else {
        SweepInputs in;
        in.data = &data;
        in.observed = &observed;
        in.clustering = &clustering;
        in.pairwise = pairwise ? &*pairwise : nullptr;
        rep = representative(cfg, in, method, derive_seed(cfg.seed, 5, 0));
      }
      write_representative(rep, out_path(g, "representative.csv"));
    } else if (*reg) {
      stage = "regress";
      const Family family = family_from_string(rg_family);
      if (rg_formula.empty())
        rg_formula = family == Family::Linear ? cfg.downstream.linear_formula : cfg.downstream.logistic_formula;
      const ModelSpec spec = ModelSpec::parse(rg_formula, family);
      const Schema schema = read_schema(rg_schema);
      const CsvTable table = read_csv(rg_data);
      const Dataset data = dataset_from_table(schema, table);
      std::vector<double> weights;
      if (table.has_column(rg_weight_col)) {
        for (const auto& row : table.rows) {
          double w = 0;
          if (!parse_number(row[table.column(rg_weight_col)], w)) throw StructuralError("bad weight '" + row[table.column(rg_weight_col)] + "'");
          weights.push_back(w);
        }
      }
      GlmMcmc m = cfg.downstream.mcmc;
      m.seed = derive_seed(cfg.seed, 6, family == Family::Linear ? 0 : 1);
      if (rg_chains) m.chains = *rg_chains;
      if (rg_warmup) m.warmup = *rg_warmup;
      if (rg_iters) m.iters = *rg_iters;
      m.validate();
      const Design design = build_design(data, weights, spec);
      const PosteriorSamples post = fit(design, spec, m);

      CsvTable draws;
      draws.header = post.columns;
      if (family == Family::Linear) draws.header.push_back("sigma");
      for (Eigen::Index d = 0; d < post.beta.rows(); ++d) {
        std::vector<std::string> row;
        for (Eigen::Index k = 0; k < post.beta.cols(); ++k) row.push_back(format_number(post.beta(d, k)));
        if (family == Family::Linear) row.push_back(format_number(post.sigma[static_cast<std::size_t>(d)]));
        draws.rows.push_back(std::move(row));
      }
      write_csv(draws, out_path(g, "draws.csv"));

      CsvTable iv;
      iv.header = {"term", "mean", "low", "high", "rhat_max", "converged"};
      const auto intervals = credible_intervals(post);
      const Eigen::VectorXd mean = post.mean();
      for (std::size_t k = 0; k < intervals.size(); ++k)
        iv.rows.push_back({post.columns[k], format_number(mean(static_cast<Eigen::Index>(k))),
                           format_number(intervals[k].low), format_number(intervals[k].high),
                           format_number(post.max_rhat), post.converged ? "1" : "0"});
      write_csv(iv, out_path(g, "intervals.csv"));
      if (!post.converged)
        std::cerr << "warning: max split R-hat " << post.max_rhat << " exceeds " << m.rhat_threshold << "\n";

      if (!rg_test.empty()) {
        const Dataset test = read_dataset(schema, {fs::path(rg_test)});
        const auto preds = predict(post, design_matrix_like(design, test, spec));
        const auto actual = response_values(test, spec);
        CsvTable pt;
        pt.header = {"row", "prediction", "actual"};
        for (std::size_t k = 0; k < preds.size(); ++k)
          pt.rows.push_back({std::to_string(k + 1), format_number(preds[k]), format_number(actual[k])});
        write_csv(pt, out_path(g, "predictions.csv"));
      }
    } else if (*eval) {
      stage = "evaluate";
      CsvTable out;
      out.header = {"method", "sigma", "replicate", "metric", "value"};
      const std::string sigma = std::isnan(ev_sigma) ? "" : format_number(ev_sigma);
      auto emit = [&](const std::string& metric, double v) {
        out.rows.push_back({ev_label, sigma, std::to_string(ev_replicate), metric, format_number(v)});
      };
      auto need = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("missing ") + what);
      };
      if (ev_metric == "kl") {
        need(!ev_schema.empty() && !ev_rep.empty() && !ev_truth.empty(), "--schema, --rep or --truth");
        const Schema schema = read_schema(ev_schema);
        const PrototypeResult rep = read_representative(schema, ev_rep);
        const Dataset truth = read_dataset(schema, {fs::path(ev_truth)});
        emit("kl", empirical_kl(rep.data, truth, {}, rep.weights));
      } else if (ev_metric == "precision_recall") {
        need(!ev_schema.empty() && !ev_inputs.empty() && !ev_estimate.empty(), "--schema, --input or --estimate");
        const Dataset observed = load_dataset(ev_schema, ev_inputs);
        const PRScore s = pairwise_precision_recall(read_clustering(ev_estimate), truth_clustering(observed));
        emit("precision", s.precision);
        emit("recall", s.recall);
      } else if (ev_metric == "mse") {
        need(!ev_predictions.empty(), "--predictions");
        const CsvTable t = read_csv(ev_predictions);
        std::vector<double> p, a;
        for (const auto& row : t.rows) {
          double x = 0, y = 0;
          if (!parse_number(row[t.column("prediction")], x) || !parse_number(row[t.column("actual")], y))
            throw StructuralError("predictions: non-numeric cell");
          p.push_back(x);
          a.push_back(y);
        }
        emit("mse", mse(p, a));
      } else if (ev_metric == "false_prototypes") {
        need(!ev_schema.empty() && !ev_rep.empty() && !ev_inputs.empty(), "--schema, --rep or --input");
        const PrototypeResult rep = read_representative(read_schema(ev_schema), ev_rep);
        const auto f = false_prototype_count(rep, load_dataset(ev_schema, ev_inputs));
        emit("false_prototypes", static_cast<double>(f.false_count));
        emit("composite_rows", static_cast<double>(f.composite_rows));
      } else {
        throw ConfigError("unknown metric '" + ev_metric + "'");
      }
      write_csv(out, out_path(g, "evaluation.csv"));
    } else if (*pipe) {
      stage = "pipeline";
      if (pp_scenario) cfg.scenario = scenario_from_string(*pp_scenario);
      if (pp_replicates) cfg.replicates = *pp_replicates;
      if (pp_sigma) cfg.generation.noise_sigma = *pp_sigma;
      cfg.validate();
      const ExperimentResult r = run_experiment(cfg, g.out_dir);
      std::cout << r.manifest.string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error [" << stage << "]: " << e.what() << "\n";
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
