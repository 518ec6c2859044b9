#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "protolink/data.hpp"

namespace protolink {

/// Plain CSV table: a header row plus string cells. Quoted cells are
/// supported on read and emitted when a cell contains a comma or quote.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index; throws StructuralError when absent.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text);
void write_csv(const CsvTable& table, const std::filesystem::path& path);
std::string format_csv(const CsvTable& table);

/// Shortest round-trip decimal form.
std::string format_number(double x);
/// Parses a full token as a double; returns false on any trailing garbage.
bool parse_number(const std::string& token, double& out);

/// ISO yyyy-mm-dd <-> days since 1970-01-01.
std::string format_date(int days);
int parse_date(const std::string& iso);
/// Unpadded "YYYY-M-D" form used when a date feeds the string linkage model.
std::string linkage_date_string(int days);

nlohmann::json schema_to_json(const Schema& schema);
Schema schema_from_json(const nlohmann::json& j);
Schema read_schema(const std::filesystem::path& path);
void write_schema(const Schema& schema, const std::filesystem::path& path);

/// Formats a value for CSV according to its field (dates as ISO strings).
std::string format_value(const FieldSchema& field, const Value& v);
/// Parses a CSV cell. Numeric cells that fail to parse are kept as strings so
/// validate_dataset can report them.
Value parse_value(const FieldSchema& field, const std::string& cell);

/// Builds a dataset from a table. If the table has a "database" column,
/// records are grouped by it; otherwise every row belongs to `default_database`.
Dataset dataset_from_table(const Schema& schema, const CsvTable& table, int default_database = 1);
CsvTable dataset_to_table(const Dataset& dataset, bool with_database_column = true);

/// Reads one or more CSV files; file k (0-based) defaults to database k+1.
Dataset read_dataset(const Schema& schema, const std::vector<std::filesystem::path>& csv_paths);
void write_dataset(const Dataset& dataset, const std::filesystem::path& csv_path);

}  // namespace protolink
