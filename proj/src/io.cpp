#include "protolink/io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

namespace protolink {

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw StructuralError("csv has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::has_column(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

namespace {

std::vector<std::vector<std::string>> split_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  bool any = false;
  for (std::size_t k = 0; k < text.size(); ++k) {
    char c = text[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < text.size() && text[k + 1] == '"') {
          cell += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    switch (c) {
      case '"': quoted = true; any = true; break;
      case ',': row.push_back(std::move(cell)); cell.clear(); any = true; break;
      case '\r': break;
      case '\n':
        if (any || !cell.empty()) {
          row.push_back(std::move(cell));
          rows.push_back(std::move(row));
        }
        row.clear();
        cell.clear();
        any = false;
        break;
      default: cell += c; any = true;
    }
  }
  if (quoted) throw StructuralError("csv: unterminated quoted cell");
  if (any || !cell.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string quote(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

CsvTable parse_csv(const std::string& text) {
  auto rows = split_csv(text);
  CsvTable t;
  if (rows.empty()) return t;
  t.header = std::move(rows.front());
  for (std::size_t k = 1; k < rows.size(); ++k) {
    if (rows[k].size() != t.header.size())
      throw StructuralError("csv: row " + std::to_string(k + 1) + " has " + std::to_string(rows[k].size()) +
                            " cells, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(rows[k]));
  }
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StructuralError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

std::string format_csv(const CsvTable& table) {
  std::string out;
  auto emit = [&out](const std::vector<std::string>& row) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out += ',';
      out += quote(row[k]);
    }
    out += '\n';
  };
  emit(table.header);
  for (const auto& r : table.rows) emit(r);
  return out;
}

void write_csv(const CsvTable& table, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StructuralError("cannot write " + path.string());
  out << format_csv(table);
}

std::string format_number(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

bool parse_number(const std::string& token, double& out) {
  if (token.empty()) return false;
  const char* first = token.data();
  if (*first == '+') ++first;
  auto res = std::from_chars(first, token.data() + token.size(), out);
  return res.ec == std::errc() && res.ptr == token.data() + token.size();
}

std::string format_date(int days) {
  using namespace std::chrono;
  year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

int parse_date(const std::string& iso) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  char tail = 0;
  if (std::sscanf(iso.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3)
    throw StructuralError("not a yyyy-mm-dd date: '" + iso + "'");
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) throw StructuralError("invalid calendar date: '" + iso + "'");
  return static_cast<int>(sys_days{ymd}.time_since_epoch().count());
}

std::string linkage_date_string(int days) {
  using namespace std::chrono;
  year_month_day ymd{sys_days{std::chrono::days{days}}};
  return std::to_string(static_cast<int>(ymd.year())) + "-" + std::to_string(static_cast<unsigned>(ymd.month())) +
         "-" + std::to_string(static_cast<unsigned>(ymd.day()));
}

nlohmann::json schema_to_json(const Schema& schema) {
  nlohmann::json fields = nlohmann::json::array();
  for (const auto& f : schema.fields) {
    nlohmann::json jf = {{"name", f.name}, {"kind", to_string(f.kind)}, {"role", to_string(f.role)}};
    if (f.kind == FieldKind::Ordinal) jf["levels"] = f.ordinal_levels;
    if (!f.categories.empty()) jf["categories"] = f.categories;
    if (f.is_date) jf["date"] = true;
    fields.push_back(std::move(jf));
  }
  return {{"fields", fields}, {"truth_column", schema.truth_column}, {"duplicate_column", schema.duplicate_column}};
}

Schema schema_from_json(const nlohmann::json& j) {
  Schema s;
  if (!j.contains("fields") || !j["fields"].is_array()) throw StructuralError("schema: missing 'fields' array");
  for (const auto& jf : j["fields"]) {
    FieldSchema f;
    f.name = jf.at("name").get<std::string>();
    f.kind = field_kind_from_string(jf.at("kind").get<std::string>());
    f.role = field_role_from_string(jf.value("role", std::string("downstream")));
    if (jf.contains("levels")) f.ordinal_levels = jf["levels"].get<std::vector<std::string>>();
    if (jf.contains("categories")) f.categories = jf["categories"].get<std::vector<std::string>>();
    f.is_date = jf.value("date", false);
    if (f.is_date && f.kind != FieldKind::Numeric) throw StructuralError("schema: date field '" + f.name + "' must be numeric");
    s.fields.push_back(std::move(f));
  }
  s.truth_column = j.value("truth_column", s.truth_column);
  s.duplicate_column = j.value("duplicate_column", s.duplicate_column);
  return s;
}

Schema read_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StructuralError("cannot open " + path.string());
  try {
    return schema_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw StructuralError("schema " + path.string() + ": " + e.what());
  }
}

void write_schema(const Schema& schema, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw StructuralError("cannot write " + path.string());
  out << schema_to_json(schema).dump(2) << '\n';
}

std::string format_value(const FieldSchema& field, const Value& v) {
  if (const double* x = std::get_if<double>(&v)) {
    if (field.is_date) return format_date(static_cast<int>(*x));
    return format_number(*x);
  }
  return std::get<std::string>(v);
}

Value parse_value(const FieldSchema& field, const std::string& cell) {
  if (field.kind != FieldKind::Numeric) return cell;
  if (field.is_date) {
    try {
      return static_cast<double>(parse_date(cell));
    } catch (const StructuralError&) {
      return cell;
    }
  }
  double x = 0;
  if (parse_number(cell, x)) return x;
  return cell;
}

Dataset dataset_from_table(const Schema& schema, const CsvTable& table, int default_database) {
  Dataset ds;
  ds.schema = schema;
  std::vector<std::size_t> cols;
  for (const auto& f : schema.fields) cols.push_back(table.column(f.name));
  const bool has_db = table.has_column("database");
  const std::size_t db_col = has_db ? table.column("database") : 0;
  const bool has_truth = table.has_column(schema.truth_column);
  const std::size_t truth_col = has_truth ? table.column(schema.truth_column) : 0;
  const bool has_dup = table.has_column(schema.duplicate_column);
  const std::size_t dup_col = has_dup ? table.column(schema.duplicate_column) : 0;

  // Stable grouping by database keeps within-database row order.
  std::map<int, std::vector<const std::vector<std::string>*>> groups;
  for (const auto& row : table.rows) {
    int db = default_database;
    if (has_db) {
      double x = 0;
      if (!parse_number(row[db_col], x) || x < 1 || x != static_cast<int>(x))
        throw StructuralError("csv: bad database index '" + row[db_col] + "'");
      db = static_cast<int>(x);
    }
    groups[db].push_back(&row);
  }
  for (const auto& [db, rows] : groups) {
    int j = 0;
    for (const auto* row : rows) {
      Record r;
      r.id = {db, ++j};
      r.values.reserve(cols.size());
      for (std::size_t k = 0; k < cols.size(); ++k) r.values.push_back(parse_value(schema.fields[k], (*row)[cols[k]]));
      if (has_truth && !(*row)[truth_col].empty()) {
        double x = 0;
        if (!parse_number((*row)[truth_col], x)) throw StructuralError("csv: bad truth entity '" + (*row)[truth_col] + "'");
        r.truth_entity = static_cast<std::int64_t>(x);
      }
      if (has_dup && !(*row)[dup_col].empty()) {
        const auto& c = (*row)[dup_col];
        r.is_duplicate = (c == "1" || c == "true" || c == "TRUE");
      }
      ds.records.push_back(std::move(r));
    }
  }
  return ds;
}

CsvTable dataset_to_table(const Dataset& dataset, bool with_database_column) {
  CsvTable t;
  bool any_truth = false;
  bool any_dup = false;
  for (const auto& r : dataset.records) {
    any_truth = any_truth || r.truth_entity.has_value();
    any_dup = any_dup || r.is_duplicate.has_value();
  }
  if (with_database_column) t.header.push_back("database");
  for (const auto& f : dataset.schema.fields) t.header.push_back(f.name);
  if (any_truth) t.header.push_back(dataset.schema.truth_column);
  if (any_dup) t.header.push_back(dataset.schema.duplicate_column);
  t.rows.reserve(dataset.size());
  for (const auto& r : dataset.records) {
    std::vector<std::string> row;
    row.reserve(t.header.size());
    if (with_database_column) row.push_back(std::to_string(r.id.database));
    for (std::size_t k = 0; k < dataset.schema.size(); ++k) row.push_back(format_value(dataset.schema.fields[k], r.values[k]));
    if (any_truth) row.push_back(r.truth_entity ? std::to_string(*r.truth_entity) : "");
    if (any_dup) row.push_back(r.is_duplicate ? (*r.is_duplicate ? "1" : "0") : "");
    t.rows.push_back(std::move(row));
  }
  return t;
}

Dataset read_dataset(const Schema& schema, const std::vector<std::filesystem::path>& csv_paths) {
  Dataset out;
  out.schema = schema;
  for (std::size_t k = 0; k < csv_paths.size(); ++k) {
    auto part = dataset_from_table(schema, read_csv(csv_paths[k]), static_cast<int>(k) + 1);
    for (auto& r : part.records) out.records.push_back(std::move(r));
  }
  std::stable_sort(out.records.begin(), out.records.end(),
                   [](const Record& a, const Record& b) { return a.id.database < b.id.database; });
  renumber_rows(out);
  return out;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& csv_path) {
  write_csv(dataset_to_table(dataset), csv_path);
}

}  // namespace protolink
