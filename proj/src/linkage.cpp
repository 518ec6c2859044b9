#include "protolink/linkage.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "protolink/io.hpp"
#include "protolink/metrics.hpp"

namespace protolink {

void Hyperparams::validate() const {
  if (!(a > 0) || !(b > 0)) throw ConfigError("Beta shapes a, b must be positive");
  if (!(c > 0)) throw ConfigError("distortion steepness c must be positive");
  if (max_entities < 0) throw ConfigError("max_entities must be >= 1 (or 0 for the record count)");
}

void McmcSettings::validate() const {
  if (burn_in < 0) throw ConfigError("burn_in must be >= 0");
  if (iters <= burn_in) throw ConfigError("iters must exceed burn_in");
  if (thin < 1) throw ConfigError("thin must be >= 1");
}

int FieldPrior::find(const std::string& value) const {
  auto it = index.find(value);
  return it == index.end() ? -1 : it->second;
}

std::string linkage_value(const FieldSchema& field, const Value& v) {
  if (const double* x = std::get_if<double>(&v)) {
    if (field.is_date) return linkage_date_string(static_cast<int>(*x));
    return format_number(*x);
  }
  return std::get<std::string>(v);
}

EmpiricalPrior build_empirical_prior(const Dataset& dataset, const std::vector<std::size_t>& linkage_fields) {
  EmpiricalPrior prior;
  for (auto k : linkage_fields) {
    const auto& f = dataset.schema.fields.at(k);
    FieldPrior fp;
    fp.schema_field = k;
    fp.name = f.name;
    if (f.kind == FieldKind::String || (f.kind == FieldKind::Numeric && f.is_date)) {
      fp.string_kernel = true;
    } else if (f.kind == FieldKind::Categorical || f.kind == FieldKind::Ordinal) {
      fp.string_kernel = false;
    } else {
      throw StructuralError("linkage field '" + f.name + "' must be string, categorical or date");
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& r : dataset.records) ++counts[linkage_value(f, r.values[k])];
    if (counts.empty()) throw StructuralError("linkage field '" + f.name + "' has no values");
    const double n = static_cast<double>(dataset.size());
    for (const auto& [value, count] : counts) {
      fp.index.emplace(value, static_cast<int>(fp.support.size()));
      fp.support.push_back(value);
      fp.alpha.push_back(static_cast<double>(count) / n);
    }
    prior.fields.push_back(std::move(fp));
  }
  return prior;
}

EmpiricalPrior build_empirical_prior(const Dataset& dataset) {
  return build_empirical_prior(dataset, dataset.schema.linkage_fields());
}

double distortion_kernel(const std::string& w, const std::string& y, std::size_t field, const EmpiricalPrior& prior,
                         const Hyperparams& hyper) {
  const auto& fp = prior.fields.at(field);
  const int wi = fp.find(w);
  const int yi = fp.find(y);
  if (wi < 0 || yi < 0) throw StructuralError("distortion_kernel: value outside the support of " + fp.name);
  if (!fp.string_kernel) return fp.alpha[static_cast<std::size_t>(wi)];
  double z = 0;
  for (std::size_t k = 0; k < fp.support.size(); ++k)
    z += fp.alpha[k] * std::exp(-hyper.c * string_distance(hyper.string_metric, fp.support[k], y));
  return fp.alpha[static_cast<std::size_t>(wi)] * std::exp(-hyper.c * string_distance(hyper.string_metric, w, y)) / z;
}

GibbsSampler::GibbsSampler(const Dataset& dataset, const EmpiricalPrior& prior, const Hyperparams& hyper)
    : prior_(prior), hyper_(hyper) {
  hyper_.validate();
  n_records_ = dataset.size();
  max_entities_ = hyper.max_entities > 0 ? hyper.max_entities : static_cast<int>(n_records_);
  const std::size_t L = prior_.fields.size();
  if (L == 0) throw ConfigError("no linkage fields");

  x_.resize(n_records_ * L);
  database_.resize(n_records_);
  for (std::size_t r = 0; r < n_records_; ++r) {
    const auto& rec = dataset.records[r];
    database_[r] = rec.id.database - 1;
    for (std::size_t l = 0; l < L; ++l) {
      const auto& fp = prior_.fields[l];
      const int v = fp.find(linkage_value(dataset.schema.fields[fp.schema_field], rec.values[fp.schema_field]));
      if (v < 0) throw StructuralError("record " + to_string(rec.id) + " has a value outside the prior support");
      x_[r * L + l] = v;
    }
  }
  n_databases_ = dataset.database_count();
  database_sizes_ = dataset.database_sizes();

  tables_.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    const auto& fp = prior_.fields[l];
    if (fp.string_kernel)
      tables_[l].table = kernels::distortion_table_omp(fp.support, fp.alpha, hyper_.c, hyper_.string_metric);
  }
}

double GibbsSampler::kernel(std::size_t l, int w, int y) const {
  const auto& fp = prior_.fields[l];
  if (!fp.string_kernel) return fp.alpha[static_cast<std::size_t>(w)];
  const auto& t = tables_[l].table;
  return t.f[static_cast<std::size_t>(w) * t.n + static_cast<std::size_t>(y)];
}

// P(X = x | Y = y) with the distortion flag summed out.
double GibbsSampler::agreement_likelihood(std::size_t l, int x, int y, double beta) const {
  return beta * kernel(l, x, y) + (x == y ? 1.0 - beta : 0.0);
}

// P(X = x) for a record placed on an empty entity, Y integrated against G.
double GibbsSampler::new_entity_marginal(std::size_t l, int x, double beta) const {
  const auto& fp = prior_.fields[l];
  const double a = fp.alpha[static_cast<std::size_t>(x)];
  const double h = fp.string_kernel ? tables_[l].table.h[static_cast<std::size_t>(x)] : a;
  return (1.0 - beta) * a + beta * h;
}

LinkageState GibbsSampler::initial_state() const {
  if (static_cast<std::size_t>(max_entities_) < n_records_)
    throw ConfigError("all-singleton start needs max_entities >= number of records");
  const std::size_t L = field_count();
  LinkageState s;
  s.lambda.resize(n_records_);
  s.y.assign(static_cast<std::size_t>(max_entities_), {});
  s.z.assign(n_records_, std::vector<std::uint8_t>(L, 0));
  s.beta.assign(static_cast<std::size_t>(n_databases_), std::vector<double>(L, hyper_.a / (hyper_.a + hyper_.b)));
  for (std::size_t r = 0; r < n_records_; ++r) {
    s.lambda[r] = static_cast<int>(r);
    s.y[r].resize(L);
    for (std::size_t l = 0; l < L; ++l) s.y[r][l] = value(r, l);
  }
  return s;
}

void GibbsSampler::sample_latent_values(std::size_t l, std::span<const std::size_t> members, const LinkageState& state,
                                        std::vector<double>& w, Rng& rng, int& out) const {
  const auto& fp = prior_.fields[l];
  const std::size_t n = fp.support.size();
  w.assign(fp.alpha.begin(), fp.alpha.end());
  for (auto r : members) {
    const int x = value(r, l);
    const double beta = state.beta[static_cast<std::size_t>(database_[r])][l];
    const double kxx = kernel(l, x, x);
    if (fp.string_kernel) {
      const double* row = &tables_[l].table.f[static_cast<std::size_t>(x) * n];
      double top = 0;
      for (std::size_t y = 0; y < n; ++y) {
        w[y] *= beta * row[y];
        top = std::max(top, w[y]);
      }
      w[static_cast<std::size_t>(x)] *= (beta * kxx + 1.0 - beta) / (beta * kxx);
      top = std::max(top, w[static_cast<std::size_t>(x)]);
      if (top < 1e-200)
        for (auto& v : w) v /= top;
    } else {
      // beta * alpha(x) multiplies every candidate and cancels.
      w[static_cast<std::size_t>(x)] *= (beta * kxx + 1.0 - beta) / (beta * kxx);
    }
  }
  out = static_cast<int>(categorical(rng, w));
}

void GibbsSampler::sweep(LinkageState& s, Rng& rng) const {
  const std::size_t L = field_count();
  const auto M = static_cast<std::size_t>(max_entities_);

  std::vector<int> size(M, 0);
  for (int e : s.lambda) ++size[static_cast<std::size_t>(e)];
  std::vector<int> yflat(M * L, -1);
  std::vector<int> occupied;
  std::vector<int> slot(M, -1);
  std::vector<int> free_list;
  for (std::size_t e = M; e-- > 0;) {
    if (size[e] > 0) {
      for (std::size_t l = 0; l < L; ++l) yflat[e * L + l] = s.y[e][l];
    } else {
      free_list.push_back(static_cast<int>(e));
    }
  }
  for (std::size_t e = 0; e < M; ++e)
    if (size[e] > 0) {
      slot[e] = static_cast<int>(occupied.size());
      occupied.push_back(static_cast<int>(e));
    }

  std::vector<double> w;
  std::vector<const double*> rows(L);
  std::vector<double> flat_kernel(L);
  std::vector<int> xs(L);

  // Entity assignments.
  for (std::size_t r = 0; r < n_records_; ++r) {
    const auto e0 = static_cast<std::size_t>(s.lambda[r]);
    if (--size[e0] == 0) {
      const int moved = occupied.back();
      occupied[static_cast<std::size_t>(slot[e0])] = moved;
      slot[static_cast<std::size_t>(moved)] = slot[e0];
      occupied.pop_back();
      slot[e0] = -1;
      std::fill_n(yflat.begin() + static_cast<std::ptrdiff_t>(e0 * L), L, -1);
      free_list.push_back(static_cast<int>(e0));
    }

    const auto& beta = s.beta[static_cast<std::size_t>(database_[r])];
    double new_weight = static_cast<double>(M - occupied.size());
    for (std::size_t l = 0; l < L; ++l) {
      xs[l] = value(r, l);
      new_weight *= new_entity_marginal(l, xs[l], beta[l]);
      if (prior_.fields[l].string_kernel) {
        rows[l] = &tables_[l].table.f[static_cast<std::size_t>(xs[l]) * tables_[l].table.n];
      } else {
        rows[l] = nullptr;
        flat_kernel[l] = prior_.fields[l].alpha[static_cast<std::size_t>(xs[l])];
      }
    }

    const std::size_t K = occupied.size();
    w.resize(K + 1);
    double total = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const int* ye = &yflat[static_cast<std::size_t>(occupied[k]) * L];
      double p = 1.0;
      for (std::size_t l = 0; l < L; ++l) {
        const double kern = rows[l] ? rows[l][ye[l]] : flat_kernel[l];
        p *= beta[l] * kern + (ye[l] == xs[l] ? 1.0 - beta[l] : 0.0);
      }
      w[k] = p;
      total += p;
    }
    w[K] = new_weight;
    total += new_weight;

    const std::size_t pick = categorical(rng, w, total);
    int e;
    if (pick == K) {
      e = free_list.back();
      free_list.pop_back();
      slot[static_cast<std::size_t>(e)] = static_cast<int>(occupied.size());
      occupied.push_back(e);
      // Latent values of the new entity given this single record.
      std::vector<std::size_t> one{r};
      for (std::size_t l = 0; l < L; ++l) {
        int v = 0;
        sample_latent_values(l, one, s, w, rng, v);
        yflat[static_cast<std::size_t>(e) * L + l] = v;
      }
    } else {
      e = occupied[pick];
    }
    s.lambda[r] = e;
    ++size[static_cast<std::size_t>(e)];
  }

  // Latent values of occupied entities.
  std::vector<std::vector<std::size_t>> members(M);
  for (std::size_t r = 0; r < n_records_; ++r) members[static_cast<std::size_t>(s.lambda[r])].push_back(r);
  for (std::size_t e = 0; e < M; ++e) {
    if (members[e].empty()) {
      s.y[e].clear();
      continue;
    }
    s.y[e].resize(L);
    for (std::size_t l = 0; l < L; ++l) sample_latent_values(l, members[e], s, w, rng, s.y[e][l]);
  }

  // Distortion flags: forced on disagreement, otherwise a two-way draw.
  std::vector<std::vector<double>> distorted(static_cast<std::size_t>(n_databases_), std::vector<double>(L, 0.0));
  for (std::size_t r = 0; r < n_records_; ++r) {
    const auto db = static_cast<std::size_t>(database_[r]);
    const auto& ye = s.y[static_cast<std::size_t>(s.lambda[r])];
    for (std::size_t l = 0; l < L; ++l) {
      const int x = value(r, l);
      std::uint8_t flag = 1;
      if (ye[l] == x) {
        const double beta = s.beta[db][l];
        const double on = beta * kernel(l, x, x);
        flag = uniform01(rng) * (on + 1.0 - beta) < on ? 1 : 0;
      }
      s.z[r][l] = flag;
      distorted[db][l] += flag;
    }
  }

  // Distortion rates: conjugate Beta update.
  for (std::size_t db = 0; db < static_cast<std::size_t>(n_databases_); ++db)
    for (std::size_t l = 0; l < L; ++l) {
      const double n = static_cast<double>(database_sizes_[db]);
      s.beta[db][l] = beta_draw(rng, hyper_.a + distorted[db][l], hyper_.b + n - distorted[db][l]);
    }
}

void GibbsSampler::check_invariants(const LinkageState& s) const {
  const std::size_t L = field_count();
  if (s.lambda.size() != n_records_) throw std::logic_error("lambda size mismatch");
  for (std::size_t r = 0; r < n_records_; ++r) {
    const int e = s.lambda[r];
    if (e < 0 || e >= max_entities_) throw std::logic_error("entity index out of range");
    const auto& ye = s.y[static_cast<std::size_t>(e)];
    if (ye.size() != L) throw std::logic_error("occupied entity without latent values");
    for (std::size_t l = 0; l < L; ++l) {
      if (ye[l] < 0 || static_cast<std::size_t>(ye[l]) >= prior_.fields[l].support.size())
        throw std::logic_error("latent value outside support");
      if (s.z[r][l] == 0 && ye[l] != value(r, l)) throw std::logic_error("z = 0 but record disagrees with entity");
    }
  }
  for (const auto& per_db : s.beta)
    for (double b : per_db)
      if (!(b > 0 && b < 1)) throw std::logic_error("distortion rate outside (0, 1)");
}

LinkageState gibbs_sweep(const LinkageState& state, const Dataset& dataset, const EmpiricalPrior& prior,
                         const Hyperparams& hyper, Rng& rng) {
  GibbsSampler sampler(dataset, prior, hyper);
  LinkageState next = state;
  sampler.sweep(next, rng);
  return next;
}

ChainOutput run_chain(const Dataset& dataset, const Hyperparams& hyper, const McmcSettings& mcmc,
                      const std::optional<Clustering>& truth) {
  hyper.validate();
  mcmc.validate();
  ChainOutput out;
  out.hyper = hyper;
  out.mcmc = mcmc;
  out.records = dataset.ids();

  GibbsSampler sampler(dataset, build_empirical_prior(dataset), hyper);
  LinkageState state = sampler.initial_state();
  Rng rng = make_rng(mcmc.seed, 0x6c696e6bULL);

  std::vector<std::int64_t> truth_labels;
  if (truth) {
    if (truth->records() != out.records) throw StructuralError("truth clustering covers different records");
    for (const auto& l : truth->labels())
      truth_labels.push_back((static_cast<std::int64_t>(l.database) << 32) | static_cast<std::uint32_t>(l.row));
  }

#ifdef NDEBUG
  constexpr int kCheckEvery = 500;
#else
  constexpr int kCheckEvery = 1;
#endif

  out.lambda_draws.reserve(static_cast<std::size_t>(mcmc.draw_count()));
  for (int t = 1; t <= mcmc.iters; ++t) {
    sampler.sweep(state, rng);
    if (t % kCheckEvery == 0) sampler.check_invariants(state);

    std::vector<int> occupied(static_cast<std::size_t>(sampler.max_entities()), 0);
    int n_unique = 0;
    for (int e : state.lambda)
      if (!occupied[static_cast<std::size_t>(e)]++) ++n_unique;
    out.diagnostics.n_unique.push_back(n_unique);
    if (truth) {
      auto pr = precision_recall_from_labels(state.lambda, truth_labels);
      out.diagnostics.precision.push_back(pr.precision);
      out.diagnostics.recall.push_back(pr.recall);
    }
    if (t > mcmc.burn_in && (t - mcmc.burn_in) % mcmc.thin == 0) {
      std::vector<int> draw(state.lambda);
      for (auto& e : draw) ++e;
      out.lambda_draws.push_back(std::move(draw));
    }
  }
  return out;
}

}  // namespace protolink
