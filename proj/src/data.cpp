#include "protolink/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

namespace protolink {

const char* to_string(FieldKind k) {
  switch (k) {
    case FieldKind::String: return "string";
    case FieldKind::Numeric: return "numeric";
    case FieldKind::Categorical: return "categorical";
    case FieldKind::Ordinal: return "ordinal";
  }
  return "?";
}

const char* to_string(FieldRole r) {
  switch (r) {
    case FieldRole::Linkage: return "linkage";
    case FieldRole::Downstream: return "downstream";
    case FieldRole::Both: return "both";
    case FieldRole::Id: return "id";
  }
  return "?";
}

FieldKind field_kind_from_string(const std::string& s) {
  if (s == "string") return FieldKind::String;
  if (s == "numeric") return FieldKind::Numeric;
  if (s == "categorical") return FieldKind::Categorical;
  if (s == "ordinal") return FieldKind::Ordinal;
  throw StructuralError("unknown field kind '" + s + "'");
}

FieldRole field_role_from_string(const std::string& s) {
  if (s == "linkage") return FieldRole::Linkage;
  if (s == "downstream") return FieldRole::Downstream;
  if (s == "both") return FieldRole::Both;
  if (s == "id") return FieldRole::Id;
  throw StructuralError("unknown field role '" + s + "'");
}

int FieldSchema::ordinal_rank(const std::string& label) const {
  auto it = std::find(ordinal_levels.begin(), ordinal_levels.end(), label);
  return it == ordinal_levels.end() ? -1 : static_cast<int>(it - ordinal_levels.begin());
}

std::optional<std::size_t> Schema::find(const std::string& name) const {
  for (std::size_t k = 0; k < fields.size(); ++k)
    if (fields[k].name == name) return k;
  return std::nullopt;
}

std::size_t Schema::index_of(const std::string& name) const {
  if (auto k = find(name)) return *k;
  throw StructuralError("schema has no field '" + name + "'");
}

std::vector<std::size_t> Schema::linkage_fields() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < fields.size(); ++k)
    if (fields[k].feeds_linkage()) out.push_back(k);
  return out;
}

std::vector<std::size_t> Schema::downstream_fields() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < fields.size(); ++k)
    if (fields[k].feeds_downstream()) out.push_back(k);
  return out;
}

std::string to_string(const RecordId& id) {
  return std::to_string(id.database) + ":" + std::to_string(id.row);
}

int Dataset::database_count() const {
  int n = 0;
  for (const auto& r : records) n = std::max(n, r.id.database);
  return n;
}

std::vector<std::size_t> Dataset::database_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(database_count()), 0);
  for (const auto& r : records) ++sizes[static_cast<std::size_t>(r.id.database - 1)];
  return sizes;
}

std::vector<RecordId> Dataset::ids() const {
  std::vector<RecordId> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.id);
  return out;
}

std::size_t Dataset::position(const RecordId& id) const {
  auto it = std::lower_bound(records.begin(), records.end(), id,
                             [](const Record& r, const RecordId& x) { return r.id < x; });
  if (it == records.end() || it->id != id)
    throw StructuralError("record " + to_string(id) + " not in dataset");
  return static_cast<std::size_t>(it - records.begin());
}

void renumber_rows(Dataset& dataset) {
  int db = 0;
  int row = 0;
  for (auto& r : dataset.records) {
    if (r.id.database < db) throw StructuralError("records not grouped by database");
    if (r.id.database != db) {
      db = r.id.database;
      row = 0;
    }
    r.id.row = ++row;
  }
}

Clustering::Clustering(std::vector<RecordId> records, std::span<const std::int64_t> group_keys) {
  if (records.size() != group_keys.size())
    throw StructuralError("clustering: record and key counts differ");
  std::vector<std::size_t> order(records.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return records[a] < records[b]; });

  records_.reserve(records.size());
  std::vector<std::int64_t> keys;
  keys.reserve(records.size());
  for (auto k : order) {
    if (!records_.empty() && records_.back() == records[k])
      throw StructuralError("clustering: duplicate record " + to_string(records[k]));
    records_.push_back(records[k]);
    keys.push_back(group_keys[k]);
  }
  // records_ is sorted, so the first occurrence of each key is its minimum member.
  std::unordered_map<std::int64_t, RecordId> first;
  labels_.reserve(records_.size());
  for (std::size_t k = 0; k < records_.size(); ++k) {
    auto [it, inserted] = first.try_emplace(keys[k], records_[k]);
    labels_.push_back(it->second);
  }
}

const RecordId& Clustering::label_of(const RecordId& id) const {
  auto it = std::lower_bound(records_.begin(), records_.end(), id);
  if (it == records_.end() || *it != id)
    throw StructuralError("record " + to_string(id) + " not in clustering");
  return labels_[static_cast<std::size_t>(it - records_.begin())];
}

std::vector<std::vector<std::size_t>> Clustering::clusters() const {
  std::map<RecordId, std::vector<std::size_t>> by_label;
  for (std::size_t k = 0; k < records_.size(); ++k) by_label[labels_[k]].push_back(k);
  std::vector<std::vector<std::size_t>> out;
  out.reserve(by_label.size());
  for (auto& [label, members] : by_label) out.push_back(std::move(members));
  return out;
}

std::size_t Clustering::cluster_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < records_.size(); ++k)
    if (labels_[k] == records_[k]) ++n;
  return n;
}

std::vector<int> Clustering::dense_labels() const {
  std::vector<int> out(records_.size());
  int next = 0;
  for (const auto& members : clusters()) {
    for (auto k : members) out[k] = next;
    ++next;
  }
  return out;
}

Clustering Clustering::restricted_to(std::span<const RecordId> subset) const {
  std::vector<RecordId> recs(subset.begin(), subset.end());
  std::vector<std::int64_t> keys;
  keys.reserve(recs.size());
  for (const auto& id : recs) {
    const auto& l = label_of(id);
    keys.push_back((static_cast<std::int64_t>(l.database) << 32) | static_cast<std::uint32_t>(l.row));
  }
  return Clustering(std::move(recs), keys);
}

Clustering clusters_from_lambda(const std::map<RecordId, std::int64_t>& lambda) {
  std::vector<RecordId> ids;
  std::vector<std::int64_t> keys;
  ids.reserve(lambda.size());
  keys.reserve(lambda.size());
  for (const auto& [id, entity] : lambda) {
    ids.push_back(id);
    keys.push_back(entity);
  }
  return Clustering(std::move(ids), keys);
}

Clustering clusters_from_lambda(std::span<const RecordId> ids, std::span<const int> lambda) {
  if (ids.size() != lambda.size()) throw StructuralError("lambda does not cover every record");
  std::vector<std::int64_t> keys(lambda.begin(), lambda.end());
  return Clustering(std::vector<RecordId>(ids.begin(), ids.end()), keys);
}

Clustering clusters_from_lambda(const Dataset& dataset, const std::map<RecordId, std::int64_t>& lambda) {
  for (const auto& r : dataset.records)
    if (!lambda.contains(r.id)) throw StructuralError("lambda missing record " + to_string(r.id));
  if (lambda.size() != dataset.size()) throw StructuralError("lambda names records outside the dataset");
  return clusters_from_lambda(lambda);
}

Clustering truth_clustering(const Dataset& dataset) {
  std::vector<std::int64_t> keys;
  keys.reserve(dataset.size());
  for (const auto& r : dataset.records) {
    if (!r.truth_entity) throw StructuralError("record " + to_string(r.id) + " has no truth entity");
    keys.push_back(*r.truth_entity);
  }
  return Clustering(dataset.ids(), keys);
}

std::vector<Violation> validate_dataset(const Dataset& dataset) {
  std::vector<Violation> out;
  const auto& schema = dataset.schema;

  for (const auto& f : schema.fields) {
    if (f.kind == FieldKind::Ordinal) {
      std::set<std::string> uniq(f.ordinal_levels.begin(), f.ordinal_levels.end());
      if (f.ordinal_levels.empty() || uniq.size() != f.ordinal_levels.size())
        out.push_back({RecordId{0, 0}, f.name, "ordinal levels must be non-empty and duplicate-free"});
    }
  }

  std::map<int, int> expected_row;
  RecordId prev{0, 0};
  for (const auto& r : dataset.records) {
    if (r.id.database < 1 || r.id.row < 1)
      out.push_back({r.id, "", "record id components must be >= 1"});
    if (!(prev < r.id)) out.push_back({r.id, "", "record ids not unique and increasing"});
    prev = r.id;
    int& want = expected_row[r.id.database];
    if (r.id.row != ++want) out.push_back({r.id, "", "row index inconsistent with position"});

    if (r.values.size() != schema.size()) {
      out.push_back({r.id, "", "value count does not match schema"});
      continue;
    }
    for (std::size_t k = 0; k < schema.size(); ++k) {
      const auto& f = schema.fields[k];
      const auto& v = r.values[k];
      switch (f.kind) {
        case FieldKind::Numeric:
          if (!std::holds_alternative<double>(v))
            out.push_back({r.id, f.name, "cannot parse '" + std::get<std::string>(v) + "' as a number"});
          else if (!std::isfinite(std::get<double>(v)))
            out.push_back({r.id, f.name, "non-finite numeric value"});
          else if (f.is_date && std::get<double>(v) != std::floor(std::get<double>(v)))
            out.push_back({r.id, f.name, "date offset is not an integer day"});
          break;
        case FieldKind::Ordinal:
          if (!std::holds_alternative<std::string>(v))
            out.push_back({r.id, f.name, "ordinal value must be a label"});
          else if (f.ordinal_rank(std::get<std::string>(v)) < 0)
            out.push_back({r.id, f.name, "'" + std::get<std::string>(v) + "' is not a declared level"});
          break;
        case FieldKind::Categorical:
          if (!std::holds_alternative<std::string>(v))
            out.push_back({r.id, f.name, "categorical value must be a label"});
          else if (!f.categories.empty() &&
                   std::find(f.categories.begin(), f.categories.end(), std::get<std::string>(v)) ==
                       f.categories.end())
            out.push_back({r.id, f.name, "'" + std::get<std::string>(v) + "' is not a declared category"});
          break;
        case FieldKind::String:
          if (!std::holds_alternative<std::string>(v))
            out.push_back({r.id, f.name, "string field holds a number"});
          break;
      }
    }
  }
  return out;
}

}  // namespace protolink
