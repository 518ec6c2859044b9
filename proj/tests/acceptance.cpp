// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [n_seeds] [replicates] [skip-runtime]
//
// Seeded criteria pass when at least 80% of the seeds agree.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "partition_oracle.hpp"
#include "protolink/pipeline.hpp"
#include "test_util.hpp"

using namespace protolink;
namespace fs = std::filesystem;

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

struct Criterion {
  std::string title;
  int passed = 0;
  int total = 0;
  bool seeded = true;
  bool single_ok = false;  // unseeded criteria
  std::ostringstream detail;

  void record(bool ok, const std::string& note) {
    ++total;
    passed += ok;
    detail << "    " << (ok ? "ok  " : "miss") << "  " << note << "\n";
  }
  bool pass() const { return seeded ? total > 0 && passed * 10 >= total * 8 : single_ok; }
};

std::string fmt(double x, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << x;
  return s.str();
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------- criterion 1

Dataset one_field(FieldKind kind, const std::vector<std::string>& xs) {
  Dataset ds;
  ds.schema.fields = {testutil::field("v", kind, FieldRole::Linkage)};
  for (std::size_t j = 0; j < xs.size(); ++j) {
    Record r;
    r.id = {1, static_cast<int>(j) + 1};
    r.values = {xs[j]};
    ds.records.push_back(r);
  }
  return ds;
}

void sampler_correctness(Criterion& c, std::uint64_t seed) {
  const std::vector<double> alpha{2.0 / 3, 1.0 / 3};
  Hyperparams cat;
  cat.a = 1;
  cat.b = 1;
  cat.max_entities = 3;
  const auto exact_cat =
      oracle::enumerate_posterior({0, 0, 1}, alpha, 3, cat.a, cat.b, [&](int w, int) { return alpha[static_cast<std::size_t>(w)]; });
  const double tv_cat = oracle::chain_tv(one_field(FieldKind::Categorical, {"A", "A", "B"}), cat, exact_cat, 200000, seed);

  Hyperparams str;
  str.a = 1;
  str.b = 3;
  str.c = 1.5;
  str.max_entities = 3;
  const std::vector<std::string> support{"ab", "ac"};
  auto f = [&](int w, int y) {
    double z = 0;
    for (std::size_t k = 0; k < support.size(); ++k)
      z += alpha[k] * std::exp(-str.c * normalized_levenshtein(support[k], support[static_cast<std::size_t>(y)]));
    return alpha[static_cast<std::size_t>(w)] *
           std::exp(-str.c * normalized_levenshtein(support[static_cast<std::size_t>(w)], support[static_cast<std::size_t>(y)])) / z;
  };
  const auto exact_str = oracle::enumerate_posterior({0, 0, 1}, alpha, 3, str.a, str.b, f);
  const double tv_str = oracle::chain_tv(one_field(FieldKind::String, {"ab", "ab", "ac"}), str, exact_str, 200000, seed + 1000);
  c.record(tv_cat < 0.02 && tv_str < 0.02,
           "seed " + std::to_string(seed) + ": TV categorical " + fmt(tv_cat) + ", string " + fmt(tv_str));
}

// ------------------------------------------------------------ criteria 2 - 8

struct MethodSummary {
  double kl = 0, mse = 0, false_count = 0, coverage = 0;
  std::vector<double> width;  // per coefficient, first `interval_reps` replicates
};

MethodSummary summarize(const std::vector<ReplicateMetrics>& ms, std::size_t interval_reps) {
  MethodSummary s;
  std::vector<double> kl, mse, fp, cov;
  for (const auto& m : ms) {
    kl.push_back(m.kl);
    if (m.false_prototypes) fp.push_back(static_cast<double>(*m.false_prototypes));
    if (m.linear) mse.push_back(m.linear->mse);
  }
  const std::size_t k = std::min(interval_reps, ms.size());
  for (std::size_t r = 0; r < k; ++r) {
    const auto& lin = *ms[r].linear;
    if (s.width.empty()) s.width.assign(lin.intervals.size(), 0.0);
    for (std::size_t j = 0; j < lin.intervals.size(); ++j)
      s.width[j] += (lin.intervals[j].high - lin.intervals[j].low) / static_cast<double>(k);
    cov.push_back(lin.coverage);
  }
  s.kl = mean_of(kl);
  s.mse = mean_of(mse);
  s.false_count = fp.empty() ? std::nan("") : mean_of(fp);
  s.coverage = mean_of(cov);
  return s;
}

std::map<std::string, MethodSummary> sweep(const ExperimentConfig& cfg, const SweepInputs& in,
                                           const std::vector<std::string>& methods, std::size_t interval_reps) {
  std::map<std::string, MethodSummary> out;
  for (const auto& name : methods) out[name] = summarize(replicate_sweep(cfg, in, MethodId::parse(name)), interval_reps);
  return out;
}

struct Criteria {
  Criterion c[12];
};

void paper_scale_seed(Criteria& all, std::uint64_t seed, int replicates) {
  const auto t0 = clock_type::now();
  ExperimentConfig base;
  base.seed = seed;
  base.generation.n_records = 500;
  base.mcmc.iters = 3000;
  base.mcmc.burn_in = 500;
  base.mcmc.thin = 10;
  base.downstream.fit_logistic = false;
  base.replicates = replicates;
  const std::string tag = "seed " + std::to_string(seed);

  // Linkage fields do not depend on the response noise, so one chain serves
  // every noise level.
  base.scenario = Scenario::LinkageAllVars;
  const GeneratedData d1 = generate_data(base);
  const LinkagePosterior post = link_posterior(d1.observed, base);
  {
    const auto pr = pairwise_precision_recall(post.point_estimate, truth_clustering(d1.observed));
    const auto& dg = post.chain.diagnostics;
    std::vector<double> p(dg.precision.begin() + base.mcmc.burn_in, dg.precision.end());
    std::vector<double> r(dg.recall.begin() + base.mcmc.burn_in, dg.recall.end());
    const double pi = mean_of(p), ri = mean_of(r);
    const bool ok = pr.precision >= 0.80 && pr.recall >= 0.85 && std::abs(pi - pr.precision) <= 0.10 &&
                    std::abs(ri - pr.recall) <= 0.10;
    all.c[2].record(ok, tag + ": MPMMS precision " + fmt(pr.precision) + " recall " + fmt(pr.recall) +
                            "; per-iteration " + fmt(pi) + " / " + fmt(ri));
  }

  bool c3 = true, c4 = true, c5 = true, c6 = true, c7 = true, c8 = true;
  std::string n3, n4, n5, n6, n7, n8;
  for (double sigma : {1.0, 2.0, 5.0}) {
    ExperimentConfig cfg = base;
    cfg.generation.noise_sigma = sigma;
    const GeneratedData data = generate_data(cfg);
    const std::string s = " s=" + fmt(sigma, 1) + ":";

    // Ground-truth clusters.
    {
      ExperimentConfig k = cfg;
      k.scenario = Scenario::KnownClusters;
      const Clustering truth = truth_clustering(data.observed);
      SweepInputs in;
      in.data = &data;
      in.observed = &data.observed;
      in.clustering = &truth;
      auto m = sweep(k, in, {"true", "random", "minimax", "composite"}, 0);
      const auto &mm = m["minimax"], &rd = m["random"], &cp = m["composite"], &tr = m["true"];
      c3 &= mm.kl < cp.kl && mm.kl < rd.kl;
      n3 += s + " KL minimax " + fmt(mm.kl, 3) + " composite " + fmt(cp.kl, 3) + " random " + fmt(rd.kl, 3);
      c4 &= tr.mse <= mm.mse && mm.mse < rd.mse && std::abs(mm.mse - tr.mse) <= 0.30 * tr.mse;
      n4 += s + " MSE true " + fmt(tr.mse, 3) + " minimax " + fmt(mm.mse, 3) + " random " + fmt(rd.mse, 3);
      c7 &= mm.false_count < rd.false_count;
      n7 += s + " minimax " + fmt(mm.false_count, 3) + " random " + fmt(rd.false_count, 3);
    }

    DistanceSpec spec = DistanceSpec::defaults(data.observed);
    // Response and predictors all subject to linkage error.
    {
      ExperimentConfig a = cfg;
      a.scenario = Scenario::LinkageAllVars;
      const PPCandidates cand = pp_candidates(post.draws, data.observed, spec);
      SweepInputs in;
      in.data = &data;
      in.observed = &data.observed;
      in.clustering = &post.point_estimate;
      in.pairwise = &post.pairwise;
      in.candidates = &cand;
      auto m = sweep(a, in,
                     {"pp_threshold", "pp_weighted", "minimax", "composite", "random", "pairwise_random",
                      "pairwise_minimax"},
                     20);
      double good = -1e300, bad = 1e300;
      for (const char* g : {"pp_threshold", "pp_weighted", "minimax"}) good = std::max(good, m[g].mse);
      for (const char* b : {"random", "pairwise_random", "pairwise_minimax"}) bad = std::min(bad, m[b].mse);
      bool ok = good < bad;
      if (sigma == 1.0) ok &= good < m["composite"].mse && m["composite"].mse < bad;
      c5 &= ok;
      n5 += s + " worst good " + fmt(good, 3) + " composite " + fmt(m["composite"].mse, 3) + " best bad " + fmt(bad, 3);

      const auto &ppw = m["pp_weighted"], &mm = m["minimax"], &ppt = m["pp_threshold"];
      bool wider = !ppw.width.empty() && ppw.width.size() == mm.width.size();
      for (std::size_t j = 0; wider && j < ppw.width.size(); ++j) wider = ppw.width[j] > mm.width[j];
      c8 &= wider && ppt.coverage >= mm.coverage;
      n8 += s + " width ratio(int) " + (ppw.width.empty() ? "nan" : fmt(ppw.width[0] / mm.width[0], 3)) +
            " coverage ppt " + fmt(ppt.coverage, 3) + " minimax " + fmt(mm.coverage, 3);
    }
    // Response free of linkage error.
    {
      ExperimentConfig e = cfg;
      e.scenario = Scenario::LinkageExplanatoryOnly;
      const Dataset reset = reset_responses(data.observed, data.truth, {"bp", "high_bp"});
      const PPCandidates cand = pp_candidates(post.draws, reset, DistanceSpec::defaults(reset));
      SweepInputs in;
      in.data = &data;
      in.observed = &reset;
      in.clustering = &post.point_estimate;
      in.pairwise = &post.pairwise;
      in.candidates = &cand;
      auto m = sweep(e, in, {"true", "pp_threshold", "minimax"}, 0);
      const double tr = m["true"].mse;
      c6 &= std::abs(m["pp_threshold"].mse - tr) <= 0.10 * tr && std::abs(m["minimax"].mse - tr) <= 0.10 * tr;
      n6 += s + " MSE true " + fmt(tr, 3) + " pp_threshold " + fmt(m["pp_threshold"].mse, 3) + " minimax " +
            fmt(m["minimax"].mse, 3);
    }
  }
  all.c[3].record(c3, tag + n3);
  all.c[4].record(c4, tag + n4);
  all.c[5].record(c5, tag + n5);
  all.c[6].record(c6, tag + n6);
  all.c[7].record(c7, tag + n7);
  all.c[8].record(c8, tag + n8);
  std::cerr << "  " << tag << " done in " << fmt(seconds_since(t0), 3) << " s\n";
}

// ---------------------------------------------------------------- criterion 9

Dataset toy(const std::vector<double>& y, const std::vector<double>& x, const std::vector<int>& hb) {
  Schema s;
  s.fields = {testutil::field("y", FieldKind::Numeric), testutil::field("x", FieldKind::Numeric),
              testutil::field("hb", FieldKind::Categorical)};
  std::ostringstream csv;
  csv.precision(17);
  csv << "y,x,hb\n";
  for (std::size_t i = 0; i < x.size(); ++i) csv << y[i] << ',' << x[i] << ',' << hb[i] << '\n';
  return testutil::from_csv(s, csv.str());
}

double log1pexp(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

void regression_oracles(Criterion& c, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> noise(0, 1.5);
  std::uniform_real_distribution<double> ux(-2, 2);
  std::vector<double> y, x;
  std::vector<int> hb;
  for (int i = 0; i < 40; ++i) {
    x.push_back(ux(g));
    y.push_back(1 + 0.7 * x.back() + noise(g));
    hb.push_back(std::bernoulli_distribution(1 / (1 + std::exp(-(0.5 + 1.2 * x.back()))))(g) ? 1 : 0);
  }
  const Dataset ds = toy(y, x, hb);
  const GlmMcmc mc{4, 500, 5000, seed, 1.05};

  // Linear, known sigma, against the Gaussian conjugate posterior.
  ModelSpec lin = ModelSpec::parse("y ~ x");
  lin.standardize = false;
  lin.autoscale = false;
  lin.fixed_sigma = 1.5;
  const Design d = build_design(ds, {}, lin);
  Eigen::Matrix2d q = d.x.transpose() * d.x / 2.25;
  q(0, 0) += 1 / (lin.intercept_prior_sd * lin.intercept_prior_sd);
  q(1, 1) += 1 / (lin.coef_prior_sd * lin.coef_prior_sd);
  const Eigen::Matrix2d cov = q.inverse();
  const Eigen::Vector2d exact = cov * d.x.transpose() * d.y / 2.25;
  const auto pl = fit_linear(d, lin, mc);
  double lin_err = 0;
  for (int j = 0; j < 2; ++j) {
    const double sd = std::sqrt((pl.beta.col(j).array() - pl.mean()(j)).square().mean());
    lin_err = std::max({lin_err, std::abs(pl.mean()(j) - exact(j)) / std::abs(exact(j)),
                        std::abs(sd - std::sqrt(cov(j, j))) / std::sqrt(cov(j, j))});
  }

  // Logistic against 2-d grid quadrature.
  ModelSpec lg = ModelSpec::parse("hb ~ x", Family::Logistic);
  lg.standardize = false;
  const Design dl = build_design(ds, {}, lg);
  const double lo = -5, hi = 7, step = 0.01;
  std::vector<double> logs;
  double lmax = -1e300;
  for (double b0 = lo; b0 <= hi; b0 += step)
    for (double b1 = lo; b1 <= hi; b1 += step) {
      double l = -0.5 * (b0 * b0 / (lg.intercept_prior_sd * lg.intercept_prior_sd) + b1 * b1 / (lg.coef_prior_sd * lg.coef_prior_sd));
      for (Eigen::Index i = 0; i < dl.x.rows(); ++i) {
        const double t = b0 + b1 * dl.x(i, 1);
        l += dl.y(i) * t - log1pexp(t);
      }
      logs.push_back(l);
      lmax = std::max(lmax, l);
    }
  double z = 0, m0 = 0, m1 = 0;
  std::size_t k = 0;
  for (double b0 = lo; b0 <= hi; b0 += step)
    for (double b1 = lo; b1 <= hi; b1 += step) {
      const double p = std::exp(logs[k++] - lmax);
      z += p;
      m0 += p * b0;
      m1 += p * b1;
    }
  const auto pg = fit_logistic(dl, lg, mc);
  const double log_err = std::max(std::abs(pg.mean()(0) - m0 / z) / std::abs(m0 / z), std::abs(pg.mean()(1) - m1 / z) / std::abs(m1 / z));

  // Doubled weights against duplicated rows.
  std::vector<double> y2, x2;
  std::vector<int> hb2;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (int rep = 0; rep < 2; ++rep) {
      y2.push_back(y[i]);
      x2.push_back(x[i]);
      hb2.push_back(hb[i]);
    }
  const std::vector<double> w(x.size(), 2.0);
  const ModelSpec plain = ModelSpec::parse("y ~ x");
  const auto a = fit_linear(build_design(ds, w, plain), plain, mc);
  const auto b = fit_linear(build_design(toy(y2, x2, hb2), {}, plain), plain, GlmMcmc{4, 500, 5000, seed + 7, 1.05});
  double z_max = 0;
  for (int j = 0; j < 2; ++j) {
    const double sd = std::sqrt((b.beta.col(j).array() - b.mean()(j)).square().mean());
    const double se = sd * std::sqrt(2.0 / static_cast<double>(b.beta.rows()));
    z_max = std::max(z_max, std::abs(a.mean()(j) - b.mean()(j)) / se);
  }
  c.record(lin_err <= 0.02 && log_err <= 0.05 && z_max < 4,
           "seed " + std::to_string(seed) + ": linear rel err " + fmt(lin_err, 3) + ", logistic rel err " +
               fmt(log_err, 3) + ", weight/replication z " + fmt(z_max, 3));
}

// --------------------------------------------------------------- criterion 10

void metric_oracles(Criterion& c, std::uint64_t seed) {
  const std::vector<double> p{0.25, 0.75}, q{0.5, 0.5};
  const double hand = 0.25 * std::log(0.25 / 0.5) + 0.75 * std::log(0.75 / 0.5);
  const double kl_err = std::abs(kl_divergence(p, q) - hand);

  // Same two cells through the empirical estimator: truth F,F,F,M against
  // representative F,M, with the pseudo-count added by hand.
  Schema s;
  s.fields = {testutil::field("sex", FieldKind::Categorical)};
  const Dataset truth = testutil::from_csv(s, "sex\nF\nF\nF\nM\n");
  const Dataset rep = testutil::from_csv(s, "sex\nF\nM\n");
  KlOptions opt;
  opt.fields = {"sex"};
  const double qf = 3.25 / 4.5, qm = 1.25 / 4.5;
  const double emp_err = std::abs(empirical_kl(rep, truth, opt) - (0.5 * std::log(0.5 / qf) + 0.5 * std::log(0.5 / qm)));

  std::mt19937_64 g(seed);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + g() % 30;
    const auto pred = testutil::random_labels(g, n, 1 + static_cast<int>(g() % n));
    const auto tl = testutil::random_labels(g, n, 1 + static_cast<int>(g() % n));
    const std::vector<std::int64_t> tr(tl.begin(), tl.end());
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const bool a = pred[i] == pred[j], b = tr[i] == tr[j];
        tp += a && b;
        fp += a && !b;
        fn += !a && b;
      }
    const auto sc = precision_recall_from_labels(pred, tr);
    const double pe = tp + fp ? double(tp) / double(tp + fp) : 1.0;
    const double re = tp + fn ? double(tp) / double(tp + fn) : 1.0;
    mismatches += sc.tp != tp || sc.fp != fp || sc.fn != fn || sc.precision != pe || sc.recall != re;
  }
  c.record(kl_err <= 1e-6 && emp_err <= 1e-6 && mismatches == 0,
           "seed " + std::to_string(seed) + ": KL err " + fmt(kl_err, 2) + ", empirical KL err " + fmt(emp_err, 2) +
               ", precision/recall mismatches " + std::to_string(mismatches) + "/200");
}

// --------------------------------------------------------------- criterion 11

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void determinism(Criterion& c) {
  ExperimentConfig cfg;
  cfg.seed = 2024;
  cfg.scenario = Scenario::LinkageAllVars;
  const fs::path a = testutil::temp_dir("acceptance_run_a"), b = testutil::temp_dir("acceptance_run_b");
  auto t0 = clock_type::now();
  const auto ra = run_experiment(cfg, a);
  const double ta = seconds_since(t0);
  t0 = clock_type::now();
  const auto rb = run_experiment(cfg, b);
  const double tb = seconds_since(t0);
  const bool same = slurp(ra.manifest) == slurp(rb.manifest);
  const bool fast = std::max(ta, tb) < 1800;
  c.single_ok = same && fast;
  c.detail << "    manifests " << (same ? "identical" : "DIFFER") << "; paper-scale pipeline wall time " << fmt(ta, 4)
           << " s and " << fmt(tb, 4) << " s (limit 1800 s)\n";
}

}  // namespace

int main(int argc, char** argv) {
  const int n_seeds = argc > 1 ? std::max(1, std::atoi(argv[1])) : 10;
  const int replicates = argc > 2 ? std::max(1, std::atoi(argv[2])) : 100;
  const auto start = clock_type::now();
  Criteria all;
  const char* titles[] = {"",
                          "sampler matches exact partition posterior",
                          "linkage precision/recall band",
                          "KL ordering on ground-truth clusters",
                          "MSE ordering on ground-truth clusters",
                          "MSE ordering with linkage error in all variables",
                          "MSE regime with error-free response",
                          "false-prototype ordering",
                          "error propagation in credible intervals",
                          "regression oracles",
                          "metric oracles",
                          "determinism and paper-scale runtime"};
  for (int k = 1; k <= 11; ++k) all.c[k].title = titles[k];
  all.c[11].seeded = false;

  try {
    for (int s = 1; s <= n_seeds; ++s) {
      const auto seed = static_cast<std::uint64_t>(s);
      sampler_correctness(all.c[1], seed);
      regression_oracles(all.c[9], seed);
      metric_oracles(all.c[10], seed);
    }
    std::cerr << "oracle criteria done after " << fmt(seconds_since(start), 4) << " s\n";
    for (int s = 1; s <= n_seeds; ++s) paper_scale_seed(all, static_cast<std::uint64_t>(s), replicates);
    if (argc > 3 && std::string(argv[3]) == "skip-runtime")
      all.c[11].detail << "    skipped on request\n";
    else
      determinism(all.c[11]);
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << "\n";
    return 2;
  }

  int failed = 0;
  for (int k = 1; k <= 11; ++k) {
    const auto& c = all.c[k];
    std::cout << "criterion " << k << ": " << (c.pass() ? "PASS" : "FAIL") << "  " << c.title;
    if (c.seeded) std::cout << " (" << c.passed << "/" << c.total << " seeds)";
    std::cout << "\n" << c.detail.str();
    failed += !c.pass();
  }
  std::cout << "total wall time " << fmt(seconds_since(start), 5) << " s\n";
  return failed == 0 ? 0 : 1;
}
