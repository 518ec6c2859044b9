#include "protolink/prototyping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "protolink/io.hpp"
#include "protolink/kernels.hpp"

namespace protolink {

namespace {

std::string label_of(const Value& v) {
  return std::holds_alternative<double>(v) ? format_number(std::get<double>(v)) : std::get<std::string>(v);
}

// Weighted vote over keys; ties drawn uniformly.
template <class Key>
Key vote(const std::map<Key, double>& tally, Rng& rng) {
  double top = -1;
  for (const auto& [k, w] : tally) top = std::max(top, w);
  std::vector<const Key*> tied;
  for (const auto& [k, w] : tally)
    if (w >= top * (1 - 1e-12)) tied.push_back(&k);
  return *tied[tied.size() == 1 ? 0 : uniform_index(rng, tied.size())];
}

constexpr int kPad = -1;

std::string vote_string(const std::vector<const std::string*>& values, std::span<const double> weights, Rng& rng) {
  std::size_t len = 0;
  for (const auto* s : values) len = std::max(len, s->size());
  std::string out;
  for (std::size_t pos = 0; pos < len; ++pos) {
    std::map<int, double> tally;
    for (std::size_t m = 0; m < values.size(); ++m) {
      const auto& s = *values[m];
      tally[pos < s.size() ? static_cast<unsigned char>(s[pos]) : kPad] += weights[m];
    }
    const int c = vote(tally, rng);
    if (c != kPad) out.push_back(static_cast<char>(c));
  }
  return out;
}

std::vector<double> uniform_or(std::span<const double> weights, std::size_t n) {
  if (weights.empty()) return std::vector<double>(n, 1.0);
  if (weights.size() != n) throw StructuralError("weights do not match cluster size");
  return {weights.begin(), weights.end()};
}

std::vector<double> pairwise_row_sums(std::span<const std::size_t> cluster, const PairwiseProbabilities& p) {
  std::vector<double> w(cluster.size(), 0.0);
  if (cluster.size() == 1) {
    w[0] = 1.0;
    return w;
  }
  for (std::size_t a = 0; a < cluster.size(); ++a)
    for (std::size_t b = 0; b < cluster.size(); ++b)
      if (a != b) w[a] += p(cluster[a], cluster[b]);
  if (std::all_of(w.begin(), w.end(), [](double x) { return x <= 0; })) std::fill(w.begin(), w.end(), 1.0);
  return w;
}

Dataset empty_like(const Dataset& d) {
  Dataset out;
  out.schema = d.schema;
  out.provenance = d.provenance;
  return out;
}

void number_rows(Dataset& d) {
  for (std::size_t k = 0; k < d.records.size(); ++k) d.records[k].id = RecordId{1, static_cast<int>(k + 1)};
}

}  // namespace

DistanceSpec DistanceSpec::defaults(const Dataset& dataset) {
  DistanceSpec spec;
  const auto& fields = dataset.schema.fields;
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (fields[k].role == FieldRole::Id) continue;
    FieldDistance fd;
    fd.field = k;
    if (fields[k].kind == FieldKind::Numeric) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (const auto& r : dataset.records)
        if (const double* x = std::get_if<double>(&r.values[k])) {
          lo = std::min(lo, *x);
          hi = std::max(hi, *x);
        }
      if (!std::isfinite(lo)) lo = hi = 0;
      fd.lo = lo;
      fd.hi = hi > lo ? hi : lo + 1;
    }
    spec.fields.push_back(fd);
  }
  for (auto& fd : spec.fields) fd.weight = 1.0 / static_cast<double>(spec.fields.size());
  return spec;
}

DistanceSpec DistanceSpec::with_weights(const Schema& schema, const std::map<std::string, double>& weights) const {
  DistanceSpec out = *this;
  for (const auto& [name, w] : weights) {
    const std::size_t k = schema.index_of(name);
    if (std::none_of(out.fields.begin(), out.fields.end(), [&](const FieldDistance& fd) { return fd.field == k; }))
      throw ConfigError("field '" + name + "' is not part of the distance");
    if (!(w >= 0)) throw ConfigError("field weight for '" + name + "' must be non-negative");
  }
  double total = 0;
  for (auto& fd : out.fields) {
    auto it = weights.find(schema.fields[fd.field].name);
    fd.weight = it == weights.end() ? 0.0 : it->second;
    total += fd.weight;
  }
  if (!(total > 0)) throw ConfigError("field weights sum to zero");
  for (auto& fd : out.fields) fd.weight /= total;
  return out;
}

void DistanceSpec::validate(const Schema& schema) const {
  double total = 0;
  for (const auto& fd : fields) {
    if (fd.field >= schema.size()) throw ConfigError("distance field index out of range");
    if (!(fd.weight >= 0)) throw ConfigError("distance weights must be non-negative");
    if (schema.fields[fd.field].kind == FieldKind::Numeric &&
        (!std::isfinite(fd.lo) || !std::isfinite(fd.hi) || !(fd.hi > fd.lo)))
      throw ConfigError("numeric scale bounds for '" + schema.fields[fd.field].name + "' must satisfy lo < hi");
    total += fd.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("distance weights must sum to 1");
}

double record_distance(const Record& a, const Record& b, const Schema& schema, const DistanceSpec& spec) {
  double d = 0;
  for (const auto& fd : spec.fields) {
    if (fd.weight == 0) continue;
    const auto& f = schema.fields[fd.field];
    const Value& va = a.values[fd.field];
    const Value& vb = b.values[fd.field];
    double part = 0;
    switch (f.kind) {
      case FieldKind::String:
        part = string_distance(fd.metric, label_of(va), label_of(vb));
        break;
      case FieldKind::Numeric: {
        const double* x = std::get_if<double>(&va);
        const double* y = std::get_if<double>(&vb);
        if (!x || !y || !std::isfinite(*x) || !std::isfinite(*y))
          throw StructuralError("non-finite numeric value in field '" + f.name + "'");
        part = std::min(1.0, std::abs(*x - *y) / (fd.hi - fd.lo));
        break;
      }
      case FieldKind::Categorical:
        part = label_of(va) == label_of(vb) ? 0.0 : 1.0;
        break;
      case FieldKind::Ordinal: {
        const int ra = f.ordinal_rank(label_of(va));
        const int rb = f.ordinal_rank(label_of(vb));
        if (ra < 0 || rb < 0) throw StructuralError("value outside the ordinal levels of '" + f.name + "'");
        const auto levels = f.ordinal_levels.size();
        part = levels > 1 ? std::abs(ra - rb) / static_cast<double>(levels - 1) : 0.0;
        break;
      }
    }
    d += fd.weight * part;
  }
  return std::min(d, 1.0);
}

std::size_t minimax_prototype(std::span<const std::size_t> cluster, const Dataset& dataset, const DistanceSpec& spec,
                              Rng& rng) {
  if (cluster.empty()) throw StructuralError("minimax_prototype: empty cluster");
  const auto best = kernels::minimax_argmin_set(cluster, [&](std::size_t a, std::size_t b) {
    return record_distance(dataset.records[a], dataset.records[b], dataset.schema, spec);
  });
  return best.size() == 1 ? best.front() : best[uniform_index(rng, best.size())];
}

std::size_t random_prototype(std::span<const std::size_t> cluster, std::span<const double> weights, Rng& rng) {
  if (cluster.empty()) throw StructuralError("random_prototype: empty cluster");
  if (cluster.size() == 1) return cluster.front();
  if (weights.empty()) return cluster[uniform_index(rng, cluster.size())];
  if (weights.size() != cluster.size()) throw StructuralError("random_prototype: weights do not match cluster");
  for (double w : weights)
    if (!(w > 0)) throw ConfigError("random_prototype: weights must be positive");
  return cluster[categorical(rng, weights)];
}

Record composite_record(std::span<const std::size_t> cluster, std::span<const double> weights, const Dataset& dataset,
                        Rng& rng) {
  if (cluster.empty()) throw StructuralError("composite_record: empty cluster");
  const std::vector<double> w = uniform_or(weights, cluster.size());
  if (cluster.size() == 1) {
    Record r = dataset.records[cluster.front()];
    r.is_duplicate.reset();
    return r;
  }
  const auto& schema = dataset.schema;
  Record out;
  out.values.resize(schema.size());
  for (std::size_t k = 0; k < schema.size(); ++k) {
    const auto& f = schema.fields[k];
    if (f.kind == FieldKind::Numeric) {
      double num = 0, den = 0;
      for (std::size_t m = 0; m < cluster.size(); ++m) {
        num += w[m] * dataset.records[cluster[m]].number(k);
        den += w[m];
      }
      double mean = num / den;
      if (f.is_date) mean = std::round(mean);
      out.values[k] = mean;
    } else if (f.kind == FieldKind::String) {
      std::vector<const std::string*> values;
      for (auto r : cluster) values.push_back(&dataset.records[r].text(k));
      out.values[k] = vote_string(values, w, rng);
    } else {
      std::map<std::string, double> tally;
      for (std::size_t m = 0; m < cluster.size(); ++m) tally[label_of(dataset.records[cluster[m]].values[k])] += w[m];
      out.values[k] = vote(tally, rng);
    }
  }
  const auto& first = dataset.records[cluster.front()].truth_entity;
  const bool unanimous = std::all_of(cluster.begin(), cluster.end(),
                                     [&](std::size_t r) { return dataset.records[r].truth_entity == first; });
  if (unanimous) out.truth_entity = first;
  return out;
}

const char* to_string(PrototypeMethod m) {
  switch (m) {
    case PrototypeMethod::Random: return "random";
    case PrototypeMethod::PairwiseRandom: return "pairwise_random";
    case PrototypeMethod::Minimax: return "minimax";
    case PrototypeMethod::PairwiseMinimax: return "pairwise_minimax";
    case PrototypeMethod::Composite: return "composite";
    case PrototypeMethod::PairwiseComposite: return "pairwise_composite";
  }
  return "?";
}

PrototypeMethod prototype_method_from_string(const std::string& s) {
  for (auto m : {PrototypeMethod::Random, PrototypeMethod::PairwiseRandom, PrototypeMethod::Minimax,
                 PrototypeMethod::PairwiseMinimax, PrototypeMethod::Composite, PrototypeMethod::PairwiseComposite})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown prototyping method '" + s + "'");
}

bool needs_pairwise(PrototypeMethod m) {
  return m == PrototypeMethod::PairwiseRandom || m == PrototypeMethod::PairwiseMinimax ||
         m == PrototypeMethod::PairwiseComposite;
}

PrototypeResult build_representative_dataset(const Clustering& clustering, const Dataset& dataset,
                                             PrototypeMethod method, const DistanceSpec& spec,
                                             const PairwiseProbabilities* pairwise, Rng& rng) {
  if (needs_pairwise(method) && !pairwise)
    throw ConfigError(std::string("method '") + to_string(method) + "' needs pairwise probabilities");
  if (clustering.records() != dataset.ids()) throw StructuralError("clustering and dataset cover different records");
  if (pairwise && pairwise->record_count() != dataset.size())
    throw StructuralError("pairwise probabilities cover a different record count");
  spec.validate(dataset.schema);

  const auto clusters = clustering.clusters();
  const std::uint64_t base = rng();
  std::vector<Record> rows(clusters.size());
  std::vector<RowSource> sources(clusters.size());
  const auto n_clusters = static_cast<std::ptrdiff_t>(clusters.size());

#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t ci = 0; ci < n_clusters; ++ci) {
    const auto k = static_cast<std::size_t>(ci);
    const auto& cluster = clusters[k];
    Rng crng = make_rng(base, k);
    RowSource src;
    src.cluster_label = dataset.records[cluster.front()].id;
    std::size_t chosen = cluster.front();
    switch (method) {
      case PrototypeMethod::Random:
        chosen = random_prototype(cluster, {}, crng);
        break;
      case PrototypeMethod::PairwiseRandom:
        chosen = random_prototype(cluster, pairwise_row_sums(cluster, *pairwise), crng);
        break;
      case PrototypeMethod::Minimax:
        chosen = minimax_prototype(cluster, dataset, spec, crng);
        break;
      case PrototypeMethod::PairwiseMinimax: {
        const auto best = kernels::minimax_argmin_set(
            std::span<const std::size_t>(cluster), [&](std::size_t a, std::size_t b) { return 1.0 - (*pairwise)(a, b); });
        chosen = best.size() == 1 ? best.front() : best[uniform_index(crng, best.size())];
        break;
      }
      case PrototypeMethod::Composite:
      case PrototypeMethod::PairwiseComposite: {
        std::vector<double> w;
        if (method == PrototypeMethod::PairwiseComposite) w = pairwise_row_sums(cluster, *pairwise);
        rows[k] = composite_record(cluster, w, dataset, crng);
        src.composite = cluster.size() > 1;
        break;
      }
    }
    if (!src.composite) {
      if (method != PrototypeMethod::Composite && method != PrototypeMethod::PairwiseComposite)
        rows[k] = dataset.records[chosen];
      src.record = dataset.records[chosen].id;
    }
    sources[k] = src;
  }

  PrototypeResult out;
  out.data = empty_like(dataset);
  out.data.records = std::move(rows);
  number_rows(out.data);
  out.sources = std::move(sources);
  out.weights.assign(out.sources.size(), 1.0);
  return out;
}

PrototypeResult pp_threshold_dataset(const Dataset& dataset, const PPWeights& weights, double tau) {
  if (weights.records != dataset.ids()) throw StructuralError("PP weights cover different records");
  PrototypeResult out;
  out.data = empty_like(dataset);
  for (auto r : pp_threshold(weights, tau)) {
    out.data.records.push_back(dataset.records[r]);
    out.sources.push_back({false, dataset.records[r].id, dataset.records[r].id});
  }
  number_rows(out.data);
  out.weights.assign(out.sources.size(), 1.0);
  return out;
}

PrototypeResult pp_weighted_dataset(const Dataset& dataset, const PPWeights& weights) {
  if (weights.records != dataset.ids()) throw StructuralError("PP weights cover different records");
  PrototypeResult out;
  out.data = empty_like(dataset);
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    if (!(weights.weight[r] > 0)) continue;
    out.data.records.push_back(dataset.records[r]);
    out.sources.push_back({false, dataset.records[r].id, dataset.records[r].id});
    out.weights.push_back(weights.weight[r]);
  }
  number_rows(out.data);
  return out;
}

FalsePrototypes false_prototype_count(const PrototypeResult& result, const Dataset& source) {
  FalsePrototypes out;
  for (const auto& s : result.sources) {
    if (s.composite) {
      ++out.composite_rows;
      continue;
    }
    const auto& rec = source.records[source.position(s.record)];
    if (!rec.is_duplicate) throw StructuralError("record " + to_string(rec.id) + " has no duplicate flag");
    if (*rec.is_duplicate) ++out.false_count;
  }
  return out;
}

}  // namespace protolink
