#include "protolink/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "protolink/io.hpp"
#include "protolink/metrics.hpp"

namespace protolink {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seed streams derived from the master seed.
enum Stream : std::uint64_t { kGenerate = 1, kDuplicates, kSplit, kChain, kReplicate, kRegression };

std::runtime_error stage_error(const std::string& stage, const std::exception& e) {
  return std::runtime_error("stage " + stage + ": " + e.what());
}

template <class F>
auto run_stage(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw stage_error(stage, e);
  }
}

std::string metric_name(StringMetric m) {
  return m == StringMetric::JaroWinkler ? "jaro_winkler" : "normalized_levenshtein";
}

StringMetric metric_from_name(const std::string& s) {
  if (s == "jaro_winkler") return StringMetric::JaroWinkler;
  if (s == "normalized_levenshtein") return StringMetric::NormalizedLevenshtein;
  throw ConfigError("unknown string metric '" + s + "'");
}

std::string id_string(const RecordId& id) { return std::to_string(id.database) + "-" + std::to_string(id.row); }

RecordId parse_id(const std::string& s) {
  const auto dash = s.find('-');
  if (dash == std::string::npos) throw StructuralError("bad record id '" + s + "'");
  return {std::stoi(s.substr(0, dash)), std::stoi(s.substr(dash + 1))};
}

std::string opt_number(const std::optional<double>& x) { return x ? format_number(*x) : ""; }

}  // namespace

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::KnownClusters: return "known_clusters";
    case Scenario::LinkageAllVars: return "linkage_all_vars";
    case Scenario::LinkageExplanatoryOnly: return "linkage_explanatory_only";
  }
  return "?";
}

Scenario scenario_from_string(const std::string& s) {
  for (auto sc : {Scenario::KnownClusters, Scenario::LinkageAllVars, Scenario::LinkageExplanatoryOnly})
    if (s == to_string(sc)) return sc;
  throw ConfigError("unknown scenario '" + s + "'");
}

std::string MethodId::name() const {
  switch (kind) {
    case Kind::Clustering: return to_string(method);
    case Kind::PPThreshold: return "pp_threshold";
    case Kind::PPWeighted: return "pp_weighted";
    case Kind::Truth: return "true";
  }
  return "?";
}

MethodId MethodId::parse(const std::string& s) {
  if (s == "pp_threshold") return {Kind::PPThreshold, PrototypeMethod::Minimax};
  if (s == "pp_weighted") return {Kind::PPWeighted, PrototypeMethod::Minimax};
  if (s == "true" || s == "truth") return {Kind::Truth, PrototypeMethod::Minimax};
  return {Kind::Clustering, prototype_method_from_string(s)};
}

std::vector<MethodId> ExperimentConfig::effective_methods() const {
  if (!methods.empty()) return methods;
  std::vector<std::string> names;
  if (scenario == Scenario::KnownClusters)
    names = {"true", "random", "minimax", "composite"};
  else
    names = {"true", "random", "pairwise_random", "minimax", "pairwise_minimax",
             "composite", "pairwise_composite", "pp_threshold", "pp_weighted"};
  std::vector<MethodId> out;
  for (const auto& n : names) out.push_back(MethodId::parse(n));
  return out;
}

void ExperimentConfig::validate() const {
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
  if (database_split < 1) throw ConfigError("database_split must be >= 1");
  if (!(tau >= 0 && tau <= 1)) throw ConfigError("tau must lie in [0, 1]");
  generation.validate();
  downstream.mcmc.validate();
  if (scenario != Scenario::KnownClusters) {
    hyper.validate();
    mcmc.validate();
  }
  for (const auto& m : effective_methods()) {
    const bool posterior_only = m.kind == MethodId::Kind::PPThreshold || m.kind == MethodId::Kind::PPWeighted ||
                                (m.kind == MethodId::Kind::Clustering && needs_pairwise(m.method));
    if (posterior_only && scenario == Scenario::KnownClusters)
      throw ConfigError("method '" + m.name() + "' needs linkage draws; not available with known clusters");
  }
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["scenario"] = to_string(c.scenario);
  j["generation"] = {{"n_records", c.generation.n_records},
                     {"duplication_rate", c.generation.duplication_rate},
                     {"max_duplicates", c.generation.max_duplicates},
                     {"noise_sigma", c.generation.noise_sigma},
                     {"n_distorted_fields", c.generation.n_distorted_fields}};
  j["database_split"] = c.database_split;
  if (c.scenario != Scenario::KnownClusters)
    j["linkage"] = {{"a", c.hyper.a},
                    {"b", c.hyper.b},
                    {"c", c.hyper.c},
                    {"max_entities", c.hyper.max_entities},
                    {"string_metric", metric_name(c.hyper.string_metric)},
                    {"iters", c.mcmc.iters},
                    {"burn_in", c.mcmc.burn_in},
                    {"thin", c.mcmc.thin}};
  json methods = json::array();
  for (const auto& m : c.effective_methods()) methods.push_back(m.name());
  j["prototyping"] = {{"methods", methods}, {"tau", c.tau}, {"field_weights", c.field_weights}};
  const auto& d = c.downstream;
  j["downstream"] = {{"linear_formula", d.linear_formula},
                     {"logistic_formula", d.logistic_formula},
                     {"fit_linear", d.fit_linear},
                     {"fit_logistic", d.fit_logistic},
                     {"chains", d.mcmc.chains},
                     {"warmup", d.mcmc.warmup},
                     {"iters", d.mcmc.iters},
                     {"linear_truth", d.linear_truth},
                     {"logistic_truth", d.logistic_truth}};
  j["replicates"] = c.replicates;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.scenario = scenario_from_string(j.value("scenario", std::string(to_string(c.scenario))));
    if (j.contains("generation")) {
      const auto& g = j["generation"];
      c.generation.n_records = g.value("n_records", c.generation.n_records);
      c.generation.duplication_rate = g.value("duplication_rate", c.generation.duplication_rate);
      c.generation.max_duplicates = g.value("max_duplicates", c.generation.max_duplicates);
      c.generation.noise_sigma = g.value("noise_sigma", c.generation.noise_sigma);
      c.generation.n_distorted_fields = g.value("n_distorted_fields", c.generation.n_distorted_fields);
      if (g.contains("data_dir")) c.generation.data_dir = g["data_dir"].get<std::string>();
    }
    c.database_split = j.value("database_split", c.database_split);
    if (j.contains("linkage")) {
      const auto& l = j["linkage"];
      c.hyper.a = l.value("a", c.hyper.a);
      c.hyper.b = l.value("b", c.hyper.b);
      c.hyper.c = l.value("c", c.hyper.c);
      c.hyper.max_entities = l.value("max_entities", c.hyper.max_entities);
      if (l.contains("string_metric")) c.hyper.string_metric = metric_from_name(l["string_metric"]);
      c.mcmc.iters = l.value("iters", c.mcmc.iters);
      c.mcmc.burn_in = l.value("burn_in", c.mcmc.burn_in);
      c.mcmc.thin = l.value("thin", c.mcmc.thin);
    }
    if (j.contains("prototyping")) {
      const auto& p = j["prototyping"];
      if (p.contains("methods"))
        for (const auto& m : p["methods"]) c.methods.push_back(MethodId::parse(m.get<std::string>()));
      c.tau = p.value("tau", c.tau);
      if (p.contains("field_weights")) c.field_weights = p["field_weights"].get<std::map<std::string, double>>();
    }
    if (j.contains("downstream")) {
      const auto& d = j["downstream"];
      auto& ds = c.downstream;
      ds.linear_formula = d.value("linear_formula", ds.linear_formula);
      ds.logistic_formula = d.value("logistic_formula", ds.logistic_formula);
      ds.fit_linear = d.value("fit_linear", ds.fit_linear);
      ds.fit_logistic = d.value("fit_logistic", ds.fit_logistic);
      ds.mcmc.chains = d.value("chains", ds.mcmc.chains);
      ds.mcmc.warmup = d.value("warmup", ds.mcmc.warmup);
      ds.mcmc.iters = d.value("iters", ds.mcmc.iters);
      if (d.contains("linear_truth")) ds.linear_truth = d["linear_truth"].get<std::vector<double>>();
      if (d.contains("logistic_truth")) ds.logistic_truth = d["logistic_truth"].get<std::vector<double>>();
    }
    c.replicates = j.value("replicates", c.replicates);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

GeneratedData generate_data(const ExperimentConfig& config, const FrequencyTables& tables) {
  GenConfig g = config.generation;
  g.seed = derive_seed(config.seed, kGenerate);
  GeneratedData out;
  out.truth = generate_truth(g, tables);
  Rng dup = make_rng(config.seed, kDuplicates);
  out.observed = inject_duplicates(out.truth, g, tables, dup);
  if (config.database_split > 1) {
    Rng split = make_rng(config.seed, kSplit);
    out.observed = shuffle_into_databases(out.observed, config.database_split, split);
  }
  out.test = generate_test_set(g, tables);
  return out;
}

GeneratedData generate_data(const ExperimentConfig& config) {
  return generate_data(config, FrequencyTables::load(config.generation.data_dir));
}

Dataset reset_responses(const Dataset& observed, const Dataset& truth, const std::vector<std::string>& fields) {
  std::map<std::int64_t, const Record*> by_entity;
  for (const auto& r : truth.records) {
    if (!r.truth_entity) throw StructuralError("truth record without entity id");
    by_entity[*r.truth_entity] = &r;
  }
  Dataset out = observed;
  std::vector<std::pair<std::size_t, std::size_t>> cols;
  for (const auto& f : fields) cols.emplace_back(out.schema.index_of(f), truth.schema.index_of(f));
  for (auto& r : out.records) {
    if (!r.is_duplicate || !*r.is_duplicate) continue;
    if (!r.truth_entity) throw StructuralError("duplicate " + to_string(r.id) + " has no entity id");
    auto it = by_entity.find(*r.truth_entity);
    if (it == by_entity.end()) throw StructuralError("duplicate " + to_string(r.id) + " has no truth record");
    for (auto [o, t] : cols) r.values[o] = it->second->values[t];
  }
  return out;
}

LinkagePosterior link_posterior(const Dataset& observed, const ExperimentConfig& config) {
  McmcSettings m = config.mcmc;
  m.seed = derive_seed(config.seed, kChain);
  std::optional<Clustering> truth;
  if (std::all_of(observed.records.begin(), observed.records.end(), [](const Record& r) { return r.truth_entity; }))
    truth = truth_clustering(observed);
  LinkagePosterior p;
  p.chain = run_chain(observed, config.hyper, m, truth);
  p.draws = {p.chain.records, p.chain.lambda_draws};
  p.pairwise = pairwise_probabilities(p.draws);
  p.point_estimate = mpmms(p.draws);
  return p;
}

PrototypeResult representative(const ExperimentConfig& config, const SweepInputs& in, const MethodId& method,
                               std::uint64_t seed) {
  switch (method.kind) {
    case MethodId::Kind::Truth: {
      PrototypeResult out;
      out.data = in.data->truth;
      for (const auto& r : out.data.records) out.sources.push_back({false, r.id, r.id});
      out.weights.assign(out.data.size(), 1.0);
      return out;
    }
    case MethodId::Kind::PPThreshold:
    case MethodId::Kind::PPWeighted: {
      if (!in.candidates) throw ConfigError("PP methods need linkage draws");
      const PPWeights w = pp_weights(*in.candidates, seed);
      return method.kind == MethodId::Kind::PPThreshold ? pp_threshold_dataset(*in.observed, w, config.tau)
                                                        : pp_weighted_dataset(*in.observed, w);
    }
    case MethodId::Kind::Clustering: {
      DistanceSpec spec = DistanceSpec::defaults(*in.observed);
      if (!config.field_weights.empty()) spec = spec.with_weights(in.observed->schema, config.field_weights);
      Rng rng = make_rng(seed);
      return build_representative_dataset(*in.clustering, *in.observed, method.method, spec, in.pairwise, rng);
    }
  }
  throw ConfigError("unknown method");
}

namespace {

FitMetrics fit_and_score(const ExperimentConfig& config, const PrototypeResult& rep, const Dataset& test,
                         const std::string& formula, Family family, const std::vector<double>& truth_coef) {
  const ModelSpec spec = ModelSpec::parse(formula, family);
  const Design design = build_design(rep, spec);
  GlmMcmc m = config.downstream.mcmc;
  m.seed = derive_seed(config.seed, kRegression, family == Family::Linear ? 0 : 1);
  const PosteriorSamples post = fit(design, spec, m);
  FitMetrics out;
  const auto preds = predict(post, design_matrix_like(design, test, spec));
  const auto actual = response_values(test, spec);
  out.mse = mse(preds, actual);
  out.max_rhat = post.max_rhat;
  out.converged = post.converged;
  const Eigen::VectorXd mean = post.mean();
  out.mean.assign(mean.data(), mean.data() + mean.size());
  out.intervals = credible_intervals(post);
  if (truth_coef.size() == out.intervals.size()) out.coverage = coverage(out.intervals, truth_coef).rate;
  else out.coverage = std::nan("");
  return out;
}

}  // namespace

ReplicateMetrics evaluate_representative(const ExperimentConfig& config, const SweepInputs& in,
                                         const MethodId& method, const PrototypeResult& rep, int replicate) {
  ReplicateMetrics m;
  m.method = method;
  m.replicate = replicate;
  m.rows = rep.data.size();
  m.kl = empirical_kl(rep.data, in.data->truth, {}, rep.weights);
  if (method.kind != MethodId::Kind::Truth) {
    const auto f = false_prototype_count(rep, *in.observed);
    m.false_prototypes = f.false_count;
    m.composite_rows = f.composite_rows;
  }
  const auto& d = config.downstream;
  if (d.fit_linear)
    m.linear = fit_and_score(config, rep, in.data->test, d.linear_formula, Family::Linear, d.linear_truth);
  if (d.fit_logistic)
    m.logistic = fit_and_score(config, rep, in.data->test, d.logistic_formula, Family::Logistic, d.logistic_truth);
  return m;
}

std::vector<ReplicateMetrics> replicate_sweep(const ExperimentConfig& config, const SweepInputs& in,
                                              const MethodId& method) {
  const int n = method.kind == MethodId::Kind::Truth ? 1 : config.replicates;
  std::vector<ReplicateMetrics> out(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < n; ++r) {
    try {
      const auto rep = representative(config, in, method, derive_seed(config.seed, kReplicate, static_cast<std::uint64_t>(r)));
      out[static_cast<std::size_t>(r)] = evaluate_representative(config, in, method, rep, r);
    } catch (...) {
      errors[static_cast<std::size_t>(r)] = std::current_exception();
    }
  }
  for (int r = 0; r < n; ++r) {
    if (!errors[static_cast<std::size_t>(r)]) continue;
    try {
      std::rethrow_exception(errors[static_cast<std::size_t>(r)]);
    } catch (const std::exception& e) {
      throw std::runtime_error("method " + method.name() + ", replicate " + std::to_string(r) + ": " + e.what());
    }
  }
  return out;
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  if (values.empty()) return a;
  double s = 0;
  for (double v : values) s += v;
  a.mean = s / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

void write_lambda_draws(const LinkageDraws& draws, const fs::path& path) {
  CsvTable t;
  t.header.push_back("draw");
  for (const auto& id : draws.records) t.header.push_back(id_string(id));
  for (std::size_t d = 0; d < draws.draws.size(); ++d) {
    std::vector<std::string> row{std::to_string(d + 1)};
    for (int e : draws.draws[d]) row.push_back(std::to_string(e));
    t.rows.push_back(std::move(row));
  }
  write_csv(t, path);
}

LinkageDraws read_lambda_draws(const fs::path& path) {
  const CsvTable t = read_csv(path);
  if (t.header.empty() || t.header.front() != "draw") throw StructuralError("lambda draws: missing 'draw' column");
  LinkageDraws out;
  for (std::size_t k = 1; k < t.header.size(); ++k) out.records.push_back(parse_id(t.header[k]));
  for (const auto& row : t.rows) {
    std::vector<int> d;
    for (std::size_t k = 1; k < row.size(); ++k) d.push_back(std::stoi(row[k]));
    out.draws.push_back(std::move(d));
  }
  out.validate();
  return out;
}

void write_diagnostics(const ChainDiagnostics& d, const fs::path& path) {
  CsvTable t;
  t.header = {"iter", "n_unique", "precision", "recall"};
  for (std::size_t i = 0; i < d.n_unique.size(); ++i)
    t.rows.push_back({std::to_string(i + 1), std::to_string(d.n_unique[i]),
                      i < d.precision.size() ? format_number(d.precision[i]) : "",
                      i < d.recall.size() ? format_number(d.recall[i]) : ""});
  write_csv(t, path);
}

void write_pairwise(const PairwiseProbabilities& p, const std::vector<RecordId>& ids, const fs::path& path) {
  CsvTable t;
  t.header = {"i1", "j1", "i2", "j2", "prob"};
  const std::size_t n = p.record_count();
  for (const auto& [key, count] : p.counts()) {
    const auto& a = ids[key / n];
    const auto& b = ids[key % n];
    t.rows.push_back({std::to_string(a.database), std::to_string(a.row), std::to_string(b.database),
                      std::to_string(b.row), format_number(static_cast<double>(count) / static_cast<double>(p.draw_count()))});
  }
  write_csv(t, path);
}

PairwiseProbabilities read_pairwise(const std::vector<RecordId>& ids, std::size_t n_draws, const fs::path& path) {
  const CsvTable t = read_csv(path);
  std::map<RecordId, std::size_t> pos;
  for (std::size_t k = 0; k < ids.size(); ++k) pos[ids[k]] = k;
  const std::size_t c[5] = {t.column("i1"), t.column("j1"), t.column("i2"), t.column("j2"), t.column("prob")};
  kernels::PairCounts counts;
  for (const auto& row : t.rows) {
    auto a = pos.at({std::stoi(row[c[0]]), std::stoi(row[c[1]])});
    auto b = pos.at({std::stoi(row[c[2]]), std::stoi(row[c[3]])});
    if (a > b) std::swap(a, b);
    double prob = 0;
    parse_number(row[c[4]], prob);
    counts.emplace_back(static_cast<std::uint64_t>(a) * ids.size() + b,
                        static_cast<std::uint32_t>(std::llround(prob * static_cast<double>(n_draws))));
  }
  std::sort(counts.begin(), counts.end());
  return {ids.size(), n_draws, std::move(counts)};
}

void write_clustering(const Clustering& c, const fs::path& path) {
  CsvTable t;
  t.header = {"database", "row", "cluster"};
  for (std::size_t k = 0; k < c.size(); ++k)
    t.rows.push_back({std::to_string(c.records()[k].database), std::to_string(c.records()[k].row),
                      id_string(c.labels()[k])});
  write_csv(t, path);
}

Clustering read_clustering(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const auto db = t.column("database"), row = t.column("row"), cl = t.column("cluster");
  std::vector<RecordId> ids;
  std::vector<std::int64_t> keys;
  std::map<std::string, std::int64_t> labels;
  for (const auto& r : t.rows) {
    ids.push_back({std::stoi(r[db]), std::stoi(r[row])});
    keys.push_back(labels.try_emplace(r[cl], static_cast<std::int64_t>(labels.size())).first->second);
  }
  return Clustering(ids, keys);
}

void write_pp_weights(const PPWeights& w, const fs::path& path) {
  CsvTable t;
  t.header = {"database", "row", "weight"};
  for (std::size_t k = 0; k < w.records.size(); ++k)
    t.rows.push_back({std::to_string(w.records[k].database), std::to_string(w.records[k].row), format_number(w.weight[k])});
  write_csv(t, path);
}

PPWeights read_pp_weights(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const auto db = t.column("database"), row = t.column("row"), wc = t.column("weight");
  std::vector<std::pair<RecordId, double>> rows;
  for (const auto& r : t.rows) {
    double w = 0;
    if (!parse_number(r[wc], w)) throw StructuralError("ppweights: bad weight '" + r[wc] + "'");
    rows.push_back({{std::stoi(r[db]), std::stoi(r[row])}, w});
  }
  std::sort(rows.begin(), rows.end());
  PPWeights out;
  for (const auto& [id, w] : rows) {
    out.records.push_back(id);
    out.weight.push_back(w);
  }
  return out;
}

void write_representative(const PrototypeResult& rep, const fs::path& path) {
  CsvTable t = dataset_to_table(rep.data, false);
  t.header.push_back("source");
  t.header.push_back("weight");
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& s = rep.sources[k];
    t.rows[k].push_back(s.composite ? "composite:" + id_string(s.cluster_label) : "record:" + id_string(s.record));
    t.rows[k].push_back(format_number(rep.weights[k]));
  }
  write_csv(t, path);
}

void write_metrics(const std::vector<ReplicateMetrics>& metrics, const ExperimentConfig& config, const fs::path& path) {
  CsvTable t;
  t.header = {"scenario", "sigma", "method", "replicate", "rows", "kl", "false_prototypes", "composite_rows",
              "linear_mse", "linear_coverage", "linear_max_rhat", "logistic_mse", "logistic_coverage",
              "logistic_max_rhat"};
  auto fit_cells = [](const std::optional<FitMetrics>& f) -> std::vector<std::string> {
    if (!f) return {"", "", ""};
    return {format_number(f->mse), std::isnan(f->coverage) ? "" : format_number(f->coverage), format_number(f->max_rhat)};
  };
  for (const auto& m : metrics) {
    std::vector<std::string> row{to_string(config.scenario), format_number(config.generation.noise_sigma), m.method.name(),
                                 std::to_string(m.replicate), std::to_string(m.rows), format_number(m.kl),
                                 m.false_prototypes ? std::to_string(*m.false_prototypes) : "",
                                 std::to_string(m.composite_rows)};
    for (auto& c : fit_cells(m.linear)) row.push_back(std::move(c));
    for (auto& c : fit_cells(m.logistic)) row.push_back(std::move(c));
    t.rows.push_back(std::move(row));
  }
  write_csv(t, path);
}

namespace {

void write_intervals(const std::vector<ReplicateMetrics>& metrics, const ExperimentConfig& config,
                     const std::vector<std::string>& linear_terms, const std::vector<std::string>& logistic_terms,
                     const fs::path& path) {
  CsvTable t;
  t.header = {"method", "replicate", "family", "term", "mean", "low", "high", "truth"};
  auto emit = [&](const ReplicateMetrics& m, const FitMetrics& f, const char* family,
                  const std::vector<std::string>& terms, const std::vector<double>& truth) {
    for (std::size_t k = 0; k < f.intervals.size(); ++k)
      t.rows.push_back({m.method.name(), std::to_string(m.replicate), family, k < terms.size() ? terms[k] : "",
                        format_number(f.mean[k]), format_number(f.intervals[k].low), format_number(f.intervals[k].high),
                        truth.size() == f.intervals.size() ? format_number(truth[k]) : ""});
  };
  for (const auto& m : metrics) {
    if (m.linear) emit(m, *m.linear, "linear", linear_terms, config.downstream.linear_truth);
    if (m.logistic) emit(m, *m.logistic, "logistic", logistic_terms, config.downstream.logistic_truth);
  }
  write_csv(t, path);
}

void write_summary(const std::vector<ReplicateMetrics>& metrics, const std::vector<MethodId>& methods,
                   const fs::path& path) {
  CsvTable t;
  t.header = {"method", "metric", "mean", "sd"};
  for (const auto& method : methods) {
    std::map<std::string, std::vector<double>> values;
    for (const auto& m : metrics) {
      if (!(m.method == method)) continue;
      values["rows"].push_back(static_cast<double>(m.rows));
      values["kl"].push_back(m.kl);
      if (m.false_prototypes) values["false_prototypes"].push_back(static_cast<double>(*m.false_prototypes));
      if (m.linear) {
        values["linear_mse"].push_back(m.linear->mse);
        if (!std::isnan(m.linear->coverage)) values["linear_coverage"].push_back(m.linear->coverage);
      }
      if (m.logistic) {
        values["logistic_mse"].push_back(m.logistic->mse);
        if (!std::isnan(m.logistic->coverage)) values["logistic_coverage"].push_back(m.logistic->coverage);
      }
    }
    for (const auto& [name, v] : values) {
      const Aggregate a = aggregate(v);
      t.rows.push_back({method.name(), name, format_number(a.mean), opt_number(a.sd)});
    }
  }
  write_csv(t, path);
}

std::vector<std::string> term_names(const Dataset& data, const std::string& formula, Family family) {
  try {
    return build_design(data, {}, ModelSpec::parse(formula, family)).columns;
  } catch (const std::exception&) {
    return {};
  }
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StructuralError("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int k = 0; k < len; ++k) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[k]);
  return hex.str();
}

json build_manifest(const ExperimentConfig& config, const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) {
      const auto rel = fs::relative(e.path(), dir);
      if (rel == "manifest.json" || rel == "timings.json") continue;
      files.push_back(rel);
    }
  std::sort(files.begin(), files.end());
  json artifacts = json::array();
  for (const auto& f : files) artifacts.push_back({{"path", f.generic_string()}, {"sha256", sha256_file(dir / f)}});
  json seeds = {{"master", config.seed},
                {"generation", derive_seed(config.seed, kGenerate)},
                {"duplicates", derive_seed(config.seed, kDuplicates)},
                {"split", derive_seed(config.seed, kSplit)},
                {"chain", derive_seed(config.seed, kChain)},
                {"regression", derive_seed(config.seed, kRegression)}};
  return {{"version", kVersion}, {"config", config_to_json(config)}, {"seeds", seeds}, {"artifacts", artifacts}};
}

ExperimentResult run_experiment(const ExperimentConfig& config, const fs::path& out_dir) {
  config.validate();
  fs::create_directories(out_dir);
  json timings = json::object();
  using clock = std::chrono::steady_clock;
  auto timed = [&](const std::string& stage, auto&& f) {
    const auto t0 = clock::now();
    auto result = run_stage(stage, f);
    timings[stage] = std::chrono::duration<double>(clock::now() - t0).count();
    return result;
  };

  const GeneratedData data = timed("generate", [&] {
    GeneratedData d = generate_data(config);
    write_dataset(d.truth, out_dir / "data" / "truth.csv");
    write_dataset(d.observed, out_dir / "data" / "observed.csv");
    write_dataset(d.test, out_dir / "data" / "test.csv");
    write_schema(d.observed.schema, out_dir / "data" / "schema.json");
    return d;
  });

  std::optional<LinkagePosterior> posterior;
  if (config.scenario != Scenario::KnownClusters) {
    posterior = timed("link", [&] {
      LinkagePosterior p = link_posterior(data.observed, config);
      write_lambda_draws(p.draws, out_dir / "linkage" / "lambda_draws.csv");
      write_diagnostics(p.chain.diagnostics, out_dir / "linkage" / "diagnostics.csv");
      return p;
    });
    timed("summarize", [&] {
      write_pairwise(posterior->pairwise, posterior->draws.records, out_dir / "summaries" / "pairwise.csv");
      write_clustering(posterior->point_estimate, out_dir / "summaries" / "mpmms.csv");
      return 0;
    });
  }

  const Dataset observed = config.scenario == Scenario::LinkageExplanatoryOnly
                               ? reset_responses(data.observed, data.truth,
                                                 {ModelSpec::parse(config.downstream.linear_formula).response,
                                                  ModelSpec::parse(config.downstream.logistic_formula).response})
                               : data.observed;
  const Clustering clustering = posterior ? posterior->point_estimate : truth_clustering(observed);
  const auto methods = config.effective_methods();
  const bool want_pp = std::any_of(methods.begin(), methods.end(), [](const MethodId& m) {
    return m.kind == MethodId::Kind::PPThreshold || m.kind == MethodId::Kind::PPWeighted;
  });
  std::optional<PPCandidates> candidates;
  if (want_pp)
    candidates = timed("pp_candidates", [&] {
      DistanceSpec spec = DistanceSpec::defaults(observed);
      if (!config.field_weights.empty()) spec = spec.with_weights(observed.schema, config.field_weights);
      PPCandidates c = pp_candidates(posterior->draws, observed, spec);
      write_pp_weights(pp_weights(c, derive_seed(config.seed, kReplicate, 0)), out_dir / "summaries" / "ppweights.csv");
      return c;
    });

  SweepInputs in;
  in.data = &data;
  in.observed = &observed;
  in.clustering = &clustering;
  in.pairwise = posterior ? &posterior->pairwise : nullptr;
  in.candidates = candidates ? &*candidates : nullptr;

  ExperimentResult result;
  for (const auto& method : methods) {
    auto metrics = timed("prototype+regress:" + method.name(), [&] {
      write_representative(representative(config, in, method, derive_seed(config.seed, kReplicate, 0)),
                           out_dir / "prototypes" / (method.name() + ".csv"));
      return replicate_sweep(config, in, method);
    });
    result.metrics.insert(result.metrics.end(), metrics.begin(), metrics.end());
  }

  timed("evaluate", [&] {
    write_metrics(result.metrics, config, out_dir / "metrics.csv");
    write_intervals(result.metrics, config, term_names(data.truth, config.downstream.linear_formula, Family::Linear),
                    term_names(data.truth, config.downstream.logistic_formula, Family::Logistic),
                    out_dir / "intervals.csv");
    write_summary(result.metrics, methods, out_dir / "summary.csv");
    return 0;
  });

  result.manifest = out_dir / "manifest.json";
  {
    std::ofstream m(result.manifest);
    m << build_manifest(config, out_dir).dump(2) << "\n";
  }
  std::ofstream(out_dir / "timings.json") << timings.dump(2) << "\n";
  return result;
}

}  // namespace protolink
