#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace protolink {

/// Thrown when an input violates a structural precondition (missing ids,
/// mismatched record universes, malformed schema).
struct StructuralError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown for invalid user configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class FieldKind { String, Numeric, Categorical, Ordinal };
enum class FieldRole { Linkage, Downstream, Both, Id };

const char* to_string(FieldKind k);
const char* to_string(FieldRole r);
FieldKind field_kind_from_string(const std::string& s);
FieldRole field_role_from_string(const std::string& s);

struct FieldSchema {
  std::string name;
  FieldKind kind = FieldKind::String;
  FieldRole role = FieldRole::Downstream;
  std::vector<std::string> ordinal_levels;  // Ordinal only, in increasing order
  std::vector<std::string> categories;      // optional declared categories (Categorical)
  // Numeric fields flagged as dates hold integer day offsets from 1970-01-01.
  bool is_date = false;

  bool feeds_linkage() const { return role == FieldRole::Linkage || role == FieldRole::Both; }
  bool feeds_downstream() const { return role == FieldRole::Downstream || role == FieldRole::Both; }
  /// Position of `label` in ordinal_levels, or -1.
  int ordinal_rank(const std::string& label) const;
};

struct Schema {
  std::vector<FieldSchema> fields;
  std::string truth_column = "truth_entity";
  std::string duplicate_column = "is_duplicate";

  std::size_t size() const { return fields.size(); }
  /// Index of the named field; throws StructuralError when absent.
  std::size_t index_of(const std::string& name) const;
  std::optional<std::size_t> find(const std::string& name) const;
  std::vector<std::size_t> linkage_fields() const;
  std::vector<std::size_t> downstream_fields() const;
};

struct RecordId {
  int database = 1;  // i >= 1
  int row = 1;       // j >= 1
  auto operator<=>(const RecordId&) const = default;
};

std::string to_string(const RecordId& id);

using Value = std::variant<double, std::string>;

struct Record {
  RecordId id;
  std::vector<Value> values;
  std::optional<std::int64_t> truth_entity;
  std::optional<bool> is_duplicate;

  double number(std::size_t field) const { return std::get<double>(values[field]); }
  const std::string& text(std::size_t field) const { return std::get<std::string>(values[field]); }
};

/// Records are stored flat in canonical (database, row) order; row indices
/// run 1..n_i within each database.
struct Dataset {
  Schema schema;
  std::vector<Record> records;
  std::string provenance;

  std::size_t size() const { return records.size(); }
  int database_count() const;
  std::vector<std::size_t> database_sizes() const;
  std::vector<RecordId> ids() const;
  /// Flat position of a record id; throws StructuralError when absent.
  std::size_t position(const RecordId& id) const;
};

/// Reassigns RecordIds so that they match the records' positions; database
/// indices are preserved and rows renumbered 1..n_i. Records must already be
/// grouped by database in increasing order.
void renumber_rows(Dataset& dataset);

/// A partition of records. Labels are canonical: the smallest RecordId in
/// each cluster, so two Clusterings over the same records compare equal iff
/// they describe the same partition.
class Clustering {
 public:
  Clustering() = default;
  /// `records` and `groups` are parallel; any group key type is accepted via
  /// integer keys. Canonicalizes labels.
  Clustering(std::vector<RecordId> records, std::span<const std::int64_t> group_keys);

  const std::vector<RecordId>& records() const { return records_; }
  const std::vector<RecordId>& labels() const { return labels_; }
  std::size_t size() const { return records_.size(); }
  const RecordId& label_of(const RecordId& id) const;
  /// Clusters as lists of positions into records(), ordered by label.
  std::vector<std::vector<std::size_t>> clusters() const;
  std::size_t cluster_count() const;
  /// Integer label per record position (dense, ordered by canonical label).
  std::vector<int> dense_labels() const;
  Clustering restricted_to(std::span<const RecordId> subset) const;

  bool operator==(const Clustering&) const = default;

 private:
  std::vector<RecordId> records_;  // sorted
  std::vector<RecordId> labels_;
};

/// Groups records sharing a latent-entity index.
Clustering clusters_from_lambda(const std::map<RecordId, std::int64_t>& lambda);
Clustering clusters_from_lambda(std::span<const RecordId> ids, std::span<const int> lambda);
/// Ensures the map covers every record of `dataset`, then clusters.
Clustering clusters_from_lambda(const Dataset& dataset, const std::map<RecordId, std::int64_t>& lambda);

/// Partition by ground-truth entity id; throws StructuralError when a record
/// lacks one.
Clustering truth_clustering(const Dataset& dataset);

struct Violation {
  RecordId record;
  std::string field;
  std::string message;
};

std::vector<Violation> validate_dataset(const Dataset& dataset);

}  // namespace protolink
