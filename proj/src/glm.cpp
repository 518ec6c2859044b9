#include "protolink/glm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "protolink/diagnostics.hpp"
#include "protolink/io.hpp"

namespace protolink {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(trim(part));
  return out;
}

std::string label(const Value& v) {
  return std::holds_alternative<double>(v) ? format_number(std::get<double>(v)) : std::get<std::string>(v);
}

// Columns contributed by one field: names and a per-record value function.
struct FactorColumns {
  std::vector<std::string> names;
  std::vector<std::function<double(const Record&)>> values;
};

FactorColumns factor_columns(const Schema& schema, const std::string& name,
                             std::map<std::string, std::vector<std::string>>& levels, const Dataset& data) {
  const std::size_t k = schema.index_of(name);
  const auto& f = schema.fields[k];
  FactorColumns out;
  switch (f.kind) {
    case FieldKind::Numeric:
      out.names.push_back(name);
      out.values.emplace_back([k](const Record& r) { return r.number(k); });
      break;
    case FieldKind::Ordinal:
      out.names.push_back(name);
      out.values.emplace_back([k, &f](const Record& r) {
        const int rank = f.ordinal_rank(label(r.values[k]));
        if (rank < 0) throw StructuralError("value outside the ordinal levels of '" + f.name + "'");
        return static_cast<double>(rank);
      });
      break;
    case FieldKind::Categorical: {
      auto it = levels.find(name);
      if (it == levels.end()) {
        std::vector<std::string> lv = f.categories;
        if (lv.empty()) {
          std::set<std::string> seen;
          for (const auto& r : data.records) seen.insert(label(r.values[k]));
          lv.assign(seen.begin(), seen.end());
        }
        it = levels.emplace(name, std::move(lv)).first;
      }
      const auto& lv = it->second;
      for (std::size_t j = 1; j < lv.size(); ++j) {
        out.names.push_back(name + "[" + lv[j] + "]");
        out.values.emplace_back([k, level = lv[j]](const Record& r) { return label(r.values[k]) == level ? 1.0 : 0.0; });
      }
      break;
    }
    case FieldKind::String:
      throw ConfigError("string field '" + name + "' cannot be a predictor");
  }
  return out;
}

struct Columns {
  std::vector<std::string> names;
  std::vector<std::function<double(const Record&)>> values;
};

Columns model_columns(const Dataset& data, const ModelSpec& spec, std::map<std::string, std::vector<std::string>>& levels) {
  Columns cols;
  cols.names.push_back("(Intercept)");
  cols.values.emplace_back([](const Record&) { return 1.0; });
  for (const auto& term : spec.terms) {
    Columns acc;
    acc.names.push_back("");
    acc.values.emplace_back([](const Record&) { return 1.0; });
    for (const auto& factor : term.factors) {
      FactorColumns fc = factor_columns(data.schema, factor, levels, data);
      Columns next;
      for (std::size_t a = 0; a < acc.names.size(); ++a)
        for (std::size_t b = 0; b < fc.names.size(); ++b) {
          next.names.push_back(acc.names[a].empty() ? fc.names[b] : acc.names[a] + ":" + fc.names[b]);
          next.values.emplace_back([fa = acc.values[a], fb = fc.values[b]](const Record& r) { return fa(r) * fb(r); });
        }
      acc = std::move(next);
    }
    for (std::size_t a = 0; a < acc.names.size(); ++a) {
      cols.names.push_back(acc.names[a]);
      cols.values.push_back(acc.values[a]);
    }
  }
  return cols;
}

Eigen::MatrixXd fill(const Dataset& data, const Columns& cols) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(cols.names.size()));
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t j = 0; j < cols.names.size(); ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cols.values[j](data.records[i]);
  return x;
}

Eigen::MatrixXd standardized(const Design& d) {
  Eigen::MatrixXd z = d.x;
  for (Eigen::Index j = 1; j < z.cols(); ++j) z.col(j) = (z.col(j).array() - d.center(j)) / d.scale(j);
  return z;
}

Eigen::VectorXd prior_sd(const Design& d, const ModelSpec& spec) {
  Eigen::VectorXd sd(d.x.cols());
  sd(0) = spec.intercept_prior_sd;
  for (Eigen::Index j = 1; j < sd.size(); ++j) sd(j) = spec.coef_prior_sd;
  return sd;
}

// Standardized -> raw coefficients.
Eigen::VectorXd to_raw(const Eigen::VectorXd& b, const Design& d) {
  Eigen::VectorXd out = b;
  for (Eigen::Index j = 1; j < b.size(); ++j) {
    out(j) = b(j) / d.scale(j);
    out(0) -= b(j) * d.center(j) / d.scale(j);
  }
  return out;
}

double sd_of(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

// Univariate slice sampler with stepping out and shrinkage.
template <class F>
double slice_sample(double x0, F&& logf, double width, Rng& rng) {
  const double f0 = logf(x0);
  const double level = f0 + std::log(uniform01(rng));
  double lo = x0 - width * uniform01(rng);
  double hi = lo + width;
  for (int k = 0; k < 50 && logf(lo) > level; ++k) lo -= width;
  for (int k = 0; k < 50 && logf(hi) > level; ++k) hi += width;
  for (int k = 0; k < 200; ++k) {
    const double x = lo + (hi - lo) * uniform01(rng);
    if (logf(x) > level) return x;
    (x < x0 ? lo : hi) = x;
  }
  return x0;
}

Eigen::VectorXd mvn_draw(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower, Rng& rng) {
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = standard_normal(rng);
  return mean + chol_lower * z;
}

void finish(PosteriorSamples& out, const std::vector<std::vector<Eigen::VectorXd>>& per_chain,
            const std::vector<std::vector<double>>& sigma_chain, const GlmMcmc& mcmc) {
  const auto p = static_cast<Eigen::Index>(out.columns.size());
  const std::size_t chains = per_chain.size();
  const std::size_t kept = per_chain.front().size();
  out.beta.resize(static_cast<Eigen::Index>(chains * kept), p);
  Eigen::Index row = 0;
  for (const auto& c : per_chain)
    for (const auto& b : c) out.beta.row(row++) = b.transpose();
  for (const auto& c : sigma_chain) out.sigma.insert(out.sigma.end(), c.begin(), c.end());

  out.max_rhat = 1.0;
  if (chains >= 2 && kept >= 4) {
    for (Eigen::Index j = 0; j < p; ++j) {
      std::vector<std::vector<double>> series(chains);
      for (std::size_t c = 0; c < chains; ++c)
        for (const auto& b : per_chain[c]) series[c].push_back(b(j));
      out.max_rhat = std::max(out.max_rhat, split_rhat(series));
    }
    if (!sigma_chain.front().empty()) out.max_rhat = std::max(out.max_rhat, split_rhat(sigma_chain));
  }
  out.converged = out.max_rhat < mcmc.rhat_threshold;
}

void check_rows(const Design& d) {
  if (d.w.size() != d.x.rows()) throw StructuralError("weight count does not match design rows");
  if ((d.w.array() < 0).any()) throw ConfigError("weights must be non-negative");
  if (!(d.w.sum() > 0)) throw ConfigError("weights are all zero");
  const auto effective = (d.w.array() > 0).count();
  if (effective < d.x.cols() + 1) throw ConfigError("need more rows than model terms");
}

}  // namespace

const char* to_string(Family f) { return f == Family::Linear ? "linear" : "logistic"; }

Family family_from_string(const std::string& s) {
  if (s == "linear" || s == "gaussian") return Family::Linear;
  if (s == "logistic" || s == "binomial") return Family::Logistic;
  throw ConfigError("unknown family '" + s + "'");
}

std::string Term::name() const {
  std::string out;
  for (const auto& f : factors) out += (out.empty() ? "" : ":") + f;
  return out;
}

ModelSpec ModelSpec::parse(const std::string& formula, Family family) {
  const auto tilde = formula.find('~');
  if (tilde == std::string::npos) throw ConfigError("formula needs '~': " + formula);
  ModelSpec spec;
  spec.family = family;
  spec.response = trim(formula.substr(0, tilde));
  if (spec.response.empty()) throw ConfigError("formula has no response: " + formula);
  for (const auto& t : split(formula.substr(tilde + 1), '+')) {
    if (t.empty() || t == "1") continue;
    Term term;
    for (const auto& f : split(t, ':')) {
      if (f.empty()) throw ConfigError("empty factor in term '" + t + "'");
      term.factors.push_back(f);
    }
    spec.terms.push_back(std::move(term));
  }
  return spec;
}

std::string ModelSpec::formula() const {
  std::string out = response + " ~ ";
  if (terms.empty()) return out + "1";
  for (std::size_t k = 0; k < terms.size(); ++k) out += (k ? " + " : "") + terms[k].name();
  return out;
}

void ModelSpec::validate(const Schema& schema) const {
  const auto& r = schema.fields[schema.index_of(response)];
  if (family == Family::Linear && r.kind != FieldKind::Numeric)
    throw ConfigError("linear response '" + response + "' must be numeric");
  if (family == Family::Logistic && r.kind == FieldKind::String)
    throw ConfigError("logistic response '" + response + "' must be 0/1");
  for (const auto& t : terms)
    for (const auto& f : t.factors) schema.index_of(f);
  if (!(coef_prior_sd > 0) || !(intercept_prior_sd > 0) || !(sigma_rate > 0))
    throw ConfigError("prior scales must be positive");
  if (fixed_sigma && !(*fixed_sigma > 0)) throw ConfigError("fixed sigma must be positive");
}

std::vector<double> response_values(const Dataset& data, const ModelSpec& spec) {
  const std::size_t k = data.schema.index_of(spec.response);
  std::vector<double> y;
  y.reserve(data.size());
  for (const auto& r : data.records) {
    if (spec.family == Family::Linear) {
      y.push_back(r.number(k));
      continue;
    }
    const std::string v = label(r.values[k]);
    if (v == "1" || v == "true") y.push_back(1.0);
    else if (v == "0" || v == "false") y.push_back(0.0);
    else throw StructuralError("logistic response '" + spec.response + "' has non-binary value " + v);
  }
  return y;
}

Design build_design(const Dataset& data, std::span<const double> weights, const ModelSpec& spec) {
  spec.validate(data.schema);
  if (!weights.empty() && weights.size() != data.size()) throw StructuralError("weight count does not match rows");
  Design d;
  const Columns cols = model_columns(data, spec, d.levels);
  d.columns = cols.names;
  d.x = fill(data, cols);
  const auto y = response_values(data, spec);
  d.y = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  d.w = weights.empty() ? Eigen::VectorXd::Ones(d.x.rows())
                        : Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(weights.data(), d.x.rows()));
  d.center = Eigen::VectorXd::Zero(d.x.cols());
  d.scale = Eigen::VectorXd::Ones(d.x.cols());
  for (Eigen::Index j = 1; j < d.x.cols(); ++j) {
    const double s = sd_of(d.x.col(j));
    if (!(s > 0)) throw ConfigError("degenerate design column '" + d.columns[static_cast<std::size_t>(j)] + "'");
    if (spec.standardize) {
      d.center(j) = d.x.col(j).mean();
      d.scale(j) = s;
    }
  }
  return d;
}

Design build_design(const PrototypeResult& rep, const ModelSpec& spec) {
  return build_design(rep.data, rep.weights, spec);
}

Eigen::MatrixXd design_matrix_like(const Design& fitted, const Dataset& data, const ModelSpec& spec) {
  auto levels = fitted.levels;
  const Columns cols = model_columns(data, spec, levels);
  if (cols.names != fitted.columns) throw StructuralError("design columns do not match the fitted model");
  return fill(data, cols);
}

void GlmMcmc::validate() const {
  if (chains < 1 || warmup < 0 || iters < 1) throw ConfigError("invalid regression MCMC settings");
}

Eigen::VectorXd PosteriorSamples::mean() const { return beta.colwise().mean().transpose(); }

PosteriorSamples fit_linear(const Design& d, const ModelSpec& spec, const GlmMcmc& mcmc) {
  mcmc.validate();
  check_rows(d);
  const Eigen::MatrixXd z = standardized(d);
  const double sw = d.w.sum();
  double y_center = 0, y_scale = 1;
  if (spec.autoscale) {
    y_center = d.w.dot(d.y) / sw;
    y_scale = std::sqrt(d.w.dot((d.y.array() - y_center).square().matrix()) / sw);
    if (!(y_scale > 0)) y_scale = 1;
  }
  const Eigen::VectorXd yc = (d.y.array() - y_center) / y_scale;
  const Eigen::MatrixXd zw = z.transpose() * d.w.asDiagonal();
  const Eigen::MatrixXd a = zw * z;
  const Eigen::VectorXd b = zw * yc;
  const double c = (d.w.array() * yc.array().square()).sum();
  const std::optional<double> fixed_sigma =
      spec.fixed_sigma ? std::optional<double>(*spec.fixed_sigma / y_scale) : std::nullopt;
  const Eigen::VectorXd sd = prior_sd(d, spec);
  const Eigen::VectorXd prior_prec = sd.array().square().inverse();
  // Exact fits leave no residual; keep sigma off zero at rounding level.
  const double rss_floor = 1e-20 * std::max(c, 1.0);

  PosteriorSamples out;
  out.family = Family::Linear;
  out.columns = d.columns;
  out.center = d.center;
  out.scale = d.scale;

  const auto chains = static_cast<std::size_t>(mcmc.chains);
  std::vector<std::vector<Eigen::VectorXd>> draws(chains);
  std::vector<std::vector<double>> sigmas(chains);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(chains); ++ci) {
    const auto chain = static_cast<std::size_t>(ci);
    Rng rng = make_rng(mcmc.seed, chain);
    Eigen::MatrixXd q0 = a;
    q0.diagonal() += prior_prec;
    Eigen::VectorXd beta = q0.ldlt().solve(b);
    const double rss0 = std::max(c - 2 * beta.dot(b) + beta.dot(a * beta), 1e-12);
    double sigma = fixed_sigma ? *fixed_sigma : std::sqrt(rss0 / sw) * std::exp(standard_normal(rng) * 0.5);
    double log_sigma = std::log(sigma);

    for (int t = 0; t < mcmc.warmup + mcmc.iters; ++t) {
      const double s2 = sigma * sigma;
      Eigen::MatrixXd q = a / s2;
      q.diagonal() += prior_prec;
      const Eigen::LLT<Eigen::MatrixXd> llt(q);
      const Eigen::VectorXd mean = llt.solve(b / s2);
      Eigen::VectorXd e(mean.size());
      for (Eigen::Index j = 0; j < e.size(); ++j) e(j) = standard_normal(rng);
      beta = mean + llt.matrixU().solve(e);

      if (!fixed_sigma) {
        const Eigen::VectorXd resid = yc - z * beta;
        const double rss = std::max((d.w.array() * resid.array().square()).sum(), rss_floor);
        auto logf = [&](double u) { return -(sw - 1) * u - rss / (2 * std::exp(2 * u)) - spec.sigma_rate * std::exp(u); };
        log_sigma = slice_sample(log_sigma, logf, 1.0, rng);
        sigma = std::exp(log_sigma);
      }
      if (t >= mcmc.warmup) {
        Eigen::VectorXd raw = to_raw(beta, d) * y_scale;
        raw(0) += y_center;
        draws[chain].push_back(std::move(raw));
        if (!fixed_sigma) sigmas[chain].push_back(sigma * y_scale);
      }
    }
  }
  finish(out, draws, sigmas, mcmc);
  if (spec.fixed_sigma) out.sigma.assign(chains * static_cast<std::size_t>(mcmc.iters), *spec.fixed_sigma);
  return out;
}

namespace {

struct LogisticTarget {
  const Eigen::MatrixXd& z;
  const Eigen::VectorXd& y;
  const Eigen::VectorXd& w;
  Eigen::VectorXd prior_prec;

  double log_density(const Eigen::VectorXd& beta) const {
    const Eigen::VectorXd eta = z * beta;
    double ll = 0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      if (w(i) == 0) continue;
      const double e = eta(i);
      const double log1pexp = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
      ll += w(i) * (y(i) * e - log1pexp);
    }
    return ll - 0.5 * (beta.array().square() * prior_prec.array()).sum();
  }

  // Newton iterations for the mode; returns the negative Hessian there.
  Eigen::MatrixXd mode(Eigen::VectorXd& beta, int max_iter = 100) const {
    Eigen::MatrixXd info;
    for (int it = 0; it < max_iter; ++it) {
      const Eigen::VectorXd eta = z * beta;
      const Eigen::ArrayXd p = 1.0 / (1.0 + (-eta.array()).exp());
      const Eigen::VectorXd grad =
          z.transpose() * (w.array() * (y.array() - p)).matrix() - (prior_prec.array() * beta.array()).matrix();
      info = z.transpose() * (w.array() * p * (1 - p)).matrix().asDiagonal() * z;
      info.diagonal() += prior_prec;
      const Eigen::VectorXd step = info.ldlt().solve(grad);
      double scale = 1.0;
      const double f0 = log_density(beta);
      while (scale > 1e-6 && log_density(beta + scale * step) < f0 - 1e-12) scale *= 0.5;
      beta += scale * step;
      if (step.norm() * scale < 1e-10) break;
    }
    const Eigen::VectorXd eta = z * beta;
    const Eigen::ArrayXd p = 1.0 / (1.0 + (-eta.array()).exp());
    info = z.transpose() * (w.array() * p * (1 - p)).matrix().asDiagonal() * z;
    info.diagonal() += prior_prec;
    return info;
  }
};

bool separable(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  LogisticTarget flat{z, y, w, Eigen::VectorXd::Constant(z.cols(), 1e-10)};
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(z.cols());
  flat.mode(beta, 60);
  if (beta.cwiseAbs().maxCoeff() < 50) return false;
  const Eigen::VectorXd eta = z * beta;
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    if (w(i) > 0 && (2 * y(i) - 1) * eta(i) <= 0) return false;
  return true;
}

}  // namespace

PosteriorSamples fit_logistic(const Design& d, const ModelSpec& spec, const GlmMcmc& mcmc) {
  mcmc.validate();
  check_rows(d);
  for (Eigen::Index i = 0; i < d.y.size(); ++i)
    if (d.y(i) != 0 && d.y(i) != 1) throw StructuralError("logistic response must be 0/1");
  const Eigen::MatrixXd z = standardized(d);
  const Eigen::VectorXd sd = prior_sd(d, spec);
  LogisticTarget target{z, d.y, d.w, sd.array().square().inverse().matrix()};

  Eigen::VectorXd mode = Eigen::VectorXd::Zero(z.cols());
  const Eigen::MatrixXd info = target.mode(mode);
  const Eigen::MatrixXd laplace = info.inverse();
  const Eigen::MatrixXd laplace_chol = Eigen::LLT<Eigen::MatrixXd>(laplace).matrixL();
  const double base_scale = 2.38 / std::sqrt(static_cast<double>(z.cols()));

  PosteriorSamples out;
  out.family = Family::Logistic;
  out.columns = d.columns;
  out.center = d.center;
  out.scale = d.scale;
  out.separation = separable(z, d.y, d.w);

  const auto chains = static_cast<std::size_t>(mcmc.chains);
  std::vector<std::vector<Eigen::VectorXd>> draws(chains);
  std::vector<double> accept(chains, 0.0);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(chains); ++ci) {
    const auto chain = static_cast<std::size_t>(ci);
    Rng rng = make_rng(mcmc.seed, chain);
    Eigen::VectorXd beta = mvn_draw(mode, laplace_chol, rng);
    double lp = target.log_density(beta);
    double scale = base_scale;
    int window_accepts = 0, kept_accepts = 0;
    for (int t = 0; t < mcmc.warmup + mcmc.iters; ++t) {
      const Eigen::VectorXd prop = mvn_draw(beta, laplace_chol * scale, rng);
      const double lp_prop = target.log_density(prop);
      const bool ok = std::log(uniform01(rng)) < lp_prop - lp;
      if (ok) {
        beta = prop;
        lp = lp_prop;
      }
      if (t < mcmc.warmup) {
        window_accepts += ok;
        if ((t + 1) % 50 == 0) {
          scale *= std::exp(static_cast<double>(window_accepts) / 50.0 - 0.3);
          window_accepts = 0;
        }
      } else {
        kept_accepts += ok;
        draws[chain].push_back(to_raw(beta, d));
      }
    }
    accept[chain] = static_cast<double>(kept_accepts) / mcmc.iters;
  }
  finish(out, draws, std::vector<std::vector<double>>(chains), mcmc);
  double acc = 0;
  for (double a : accept) acc += a;
  out.acceptance = acc / static_cast<double>(chains);
  return out;
}

PosteriorSamples fit(const Design& design, const ModelSpec& spec, const GlmMcmc& mcmc) {
  return spec.family == Family::Linear ? fit_linear(design, spec, mcmc) : fit_logistic(design, spec, mcmc);
}

std::vector<double> predict(const PosteriorSamples& posterior, const Eigen::MatrixXd& x) {
  if (x.cols() != posterior.beta.cols()) throw StructuralError("prediction design has the wrong number of columns");
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  if (posterior.family == Family::Linear) {
    const Eigen::VectorXd m = x * posterior.mean();
    for (Eigen::Index i = 0; i < m.size(); ++i) out[static_cast<std::size_t>(i)] = m(i);
    return out;
  }
  const Eigen::MatrixXd eta = x * posterior.beta.transpose();  // rows x draws
  for (Eigen::Index i = 0; i < eta.rows(); ++i)
    out[static_cast<std::size_t>(i)] = (1.0 / (1.0 + (-eta.row(i).array()).exp())).mean();
  return out;
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw StructuralError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<Interval> credible_intervals(const PosteriorSamples& posterior, double level) {
  if (posterior.beta.rows() < 100) throw ConfigError("credible intervals need at least 100 draws");
  if (!(level > 0 && level < 1)) throw ConfigError("credible level must lie in (0, 1)");
  const double tail = (1 - level) / 2;
  std::vector<Interval> out;
  for (Eigen::Index j = 0; j < posterior.beta.cols(); ++j) {
    std::vector<double> col(posterior.beta.col(j).data(), posterior.beta.col(j).data() + posterior.beta.rows());
    out.push_back({quantile(col, tail), quantile(col, 1 - tail)});
  }
  return out;
}

}  // namespace protolink
