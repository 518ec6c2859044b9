#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "protolink/pipeline.hpp"
#include "test_util.hpp"

using namespace protolink;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small(Scenario scenario, int replicates = 2) {
  ExperimentConfig c;
  c.seed = 21;
  c.scenario = scenario;
  c.generation.n_records = 40;
  c.mcmc.iters = 300;
  c.mcmc.burn_in = 100;
  c.mcmc.thin = 4;
  c.downstream.mcmc = GlmMcmc{2, 100, 100, 1, 1.05};
  c.replicates = replicates;
  return c;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

CsvTable read_table(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

int run(const std::string& args) {
  const std::string cmd = std::string(PROTOLINK_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("known-clusters experiment writes a complete, reproducible output tree") {
  const ExperimentConfig cfg = small(Scenario::KnownClusters);
  const fs::path a = testutil::temp_dir("pipe_a"), b = testutil::temp_dir("pipe_b");
  const ExperimentResult r = run_experiment(cfg, a);

  const auto methods = cfg.effective_methods();
  CHECK(methods.size() == 4);
  // The truth baseline is fitted once.
  CHECK(r.metrics.size() == (methods.size() - 1) * 2 + 1);
  for (const char* f : {"data/truth.csv", "data/observed.csv", "data/test.csv", "data/schema.json", "metrics.csv",
                        "intervals.csv", "summary.csv", "manifest.json", "prototypes/minimax.csv"})
    CHECK_MESSAGE(fs::exists(a / f), f);
  CHECK_FALSE(fs::exists(a / "linkage"));

  for (const auto& m : r.metrics) {
    CAPTURE(m.method.name());
    REQUIRE(m.linear);
    REQUIRE(m.logistic);
    CHECK(m.linear->intervals.size() == 4);
    CHECK(std::isfinite(m.linear->mse));
    if (m.method.kind == MethodId::Kind::Truth) {
      CHECK_FALSE(m.false_prototypes.has_value());
      CHECK(m.rows == 40);
    } else {
      CHECK(m.false_prototypes.has_value());
    }
  }

  const auto manifest = read_json(r.manifest);
  CHECK(manifest["version"] == kVersion);
  CHECK(config_from_json(manifest["config"]).seed == cfg.seed);
  for (const auto& art : manifest["artifacts"]) {
    const std::string path = art["path"];
    CHECK(path != "manifest.json");
    CHECK(art["sha256"] == sha256_file(a / path));
  }

  run_experiment(cfg, b);
  CHECK(read_json(b / "manifest.json")["artifacts"] == manifest["artifacts"]);
}

TEST_CASE("configuration JSON round trip and validation") {
  ExperimentConfig c = small(Scenario::LinkageAllVars, 7);
  c.methods = {MethodId::parse("pp_weighted"), MethodId::parse("pairwise_minimax")};
  c.field_weights = {{"first_name", 0.5}, {"last_name", 0.5}};
  c.tau = 0.4;
  const auto j = config_to_json(c);
  CHECK(config_to_json(config_from_json(j)) == j);
  CHECK(config_from_json(j).methods == c.methods);

  ExperimentConfig bad = small(Scenario::KnownClusters);
  bad.methods = {MethodId::parse("pairwise_composite")};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.methods = {MethodId::parse("pp_threshold")};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(MethodId::parse("nearest"), ConfigError);
  CHECK(small(Scenario::LinkageAllVars).effective_methods().size() == 9);
}

TEST_CASE("both linkage scenarios share the same linkage posterior") {
  const ExperimentConfig all = small(Scenario::LinkageAllVars);
  ExperimentConfig expl = all;
  expl.scenario = Scenario::LinkageExplanatoryOnly;
  const GeneratedData d = generate_data(all);
  CHECK(format_csv(dataset_to_table(d.observed)) == format_csv(dataset_to_table(generate_data(expl).observed)));
  const auto p1 = link_posterior(d.observed, all);
  const auto p2 = link_posterior(d.observed, expl);
  CHECK(p1.draws.draws == p2.draws.draws);
  CHECK(p1.point_estimate == p2.point_estimate);

  const Dataset reset = reset_responses(d.observed, d.truth, {"bp", "high_bp"});
  const std::size_t bp = reset.schema.index_of("bp"), income = reset.schema.index_of("income");
  bool income_changed = false;
  for (std::size_t k = 0; k < reset.size(); ++k) {
    const auto& r = reset.records[k];
    const auto& t = d.truth.records[static_cast<std::size_t>(*r.truth_entity - 1)];
    CHECK(r.values[bp] == t.values[bp]);
    income_changed |= r.values[income] != t.values[income];
  }
  CHECK(income_changed);
}

TEST_CASE("replicate aggregation") {
  CHECK_FALSE(aggregate({4.0}).sd.has_value());
  CHECK(aggregate({4.0}).mean == 4.0);
  const Aggregate a = aggregate({1, 3});
  CHECK(a.mean == 2.0);
  CHECK(*a.sd == doctest::Approx(std::sqrt(2.0)));

  const ExperimentConfig cfg = small(Scenario::KnownClusters, 1);
  const fs::path dir = testutil::temp_dir("pipe_single");
  run_experiment(cfg, dir);
  const CsvTable s = read_table(dir / "summary.csv");
  for (const auto& row : s.rows) CHECK(row[s.column("sd")].empty());
}

TEST_CASE("deterministic methods have zero spread across replicates") {
  ExperimentConfig cfg = small(Scenario::KnownClusters, 3);
  cfg.methods = {MethodId::parse("composite"), MethodId::parse("random")};
  cfg.downstream.fit_linear = cfg.downstream.fit_logistic = false;
  const auto r = run_experiment(cfg, testutil::temp_dir("pipe_spread"));
  std::vector<double> composite, random;
  for (const auto& m : r.metrics) (m.method.method == PrototypeMethod::Composite ? composite : random).push_back(m.kl);
  REQUIRE(composite.size() == 3);
  CHECK(*aggregate(composite).sd == 0.0);
  CHECK(*aggregate(random).sd > 0.0);
}

TEST_CASE("command-line stages chain and report failures") {
  const fs::path d = testutil::temp_dir("cli");
  const std::string out = " --out-dir " + d.string() + " ";
  const std::string schema = (d / "schema.json").string(), observed = (d / "observed.csv").string();
  REQUIRE(run("--seed 3" + out + "generate -n 40") == 0);
  REQUIRE(run(out + "link --schema " + schema + " -i " + observed + " --iters 200 --burn-in 50 --thin 5") == 0);
  const std::string draws = (d / "lambda_draws.csv").string();
  CHECK(run(out + "summarize --draws " + draws + " --schema " + schema + " -i " + observed) == 0);
  CHECK(fs::exists(d / "mpmms.csv"));
  CHECK(fs::exists(d / "ppweights.csv"));
  CHECK(run(out + "prototype --method pairwise_minimax --schema " + schema + " -i " + observed + " --draws " + draws) == 0);
  const std::string rep = (d / "representative.csv").string();
  CHECK(run(out + "regress --data " + rep + " --schema " + schema + " --test " + (d / "test.csv").string() +
            " --chains 2 --warmup 100 --iters 100") == 0);
  CHECK(fs::exists(d / "intervals.csv"));
  CHECK(run(out + "evaluate --metric mse --predictions " + (d / "predictions.csv").string()) == 0);
  CHECK(run(out + "evaluate --metric kl --schema " + schema + " --rep " + rep + " --truth " + (d / "truth.csv").string()) == 0);

  CHECK(run(out + "evaluate --metric bogus") != 0);
  CHECK(run(out + "link --schema " + schema + " -i " + observed + " --iters 10 --burn-in 50") != 0);
  CHECK(run(out + "prototype --method pairwise_minimax --schema " + schema + " -i " + observed) != 0);
  CHECK(run("--threads -1 generate") != 0);
}
