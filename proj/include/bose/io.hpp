#pragma once

// Result records, plot-ready tables and the output directory they land in.
//
// Everything written here is a deterministic function of (config, seed):
// numbers are printed with round-trip precision and wall-clock times are kept
// out of the record files (they go to timing.json).

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bose/common.hpp"
#include "json.hpp"

namespace bose::io {

inline constexpr std::string_view kCodeVersion = "1.0.0";

/// Output path exists and the caller did not ask to overwrite it.
class OutputError : public Error {
 public:
  using Error::Error;
};

/// Shortest text that parses back to the same double.
std::string format_number(double x);

/// One measured or computed number. A missing std_error marks an exact value.
struct ResultRecord {
  std::string config_hash;
  std::string observable;
  double value = 0.0;
  std::optional<double> std_error;
  std::optional<double> ess;
  double wall_time = 0.0;
  std::string version{kCodeVersion};

  static ResultRecord exact(std::string observable, double value);
  static ResultRecord measured(std::string observable, Estimate e, std::optional<double> ess = std::nullopt);

  [[nodiscard]] bool is_exact() const { return !std_error.has_value(); }
};

/// Record files omit wall_time so that reruns are byte-identical.
std::string records_csv_header();
std::string to_csv_row(const ResultRecord& r);
nlohmann::json to_json(const ResultRecord& r);
ResultRecord record_from_json(const nlohmann::json& j);

using Cell = std::variant<double, long long, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row);
  [[nodiscard]] std::string csv() const;
  /// Same rows with extra leading columns.
  [[nodiscard]] Table prefixed(const std::vector<std::string>& cols, const std::vector<Cell>& values) const;
  void append(const Table& other);
};

nlohmann::json to_json(const Table& t);
Table table_from_json(const nlohmann::json& j);

/// Everything an experiment produces, before it touches the disk.
struct ExperimentOutput {
  std::vector<ResultRecord> records;
  std::vector<std::pair<std::string, Table>> tables;          // name -> table, written as <name>.csv
  std::vector<std::pair<std::string, nlohmann::json>> documents;  // written as <name>.json
  bool failed = false;    // an invariant check inside the experiment failed
  bool complete = true;   // false when a sweep limit paused a chain
  std::string message;

  void add_table(std::string name, Table t) { tables.emplace_back(std::move(name), std::move(t)); }
  void add_document(std::string name, nlohmann::json j) { documents.emplace_back(std::move(name), std::move(j)); }
};

nlohmann::json to_json(const ExperimentOutput& out);
ExperimentOutput output_from_json(const nlohmann::json& j);

/// A relative output path is placed under $BOSE_OUTPUT_ROOT when that is set.
std::filesystem::path resolve_output(const std::string& configured);

/// Writes via a temporary file and rename, so a crash never leaves half a file.
void write_file(const std::filesystem::path& p, std::string_view content);
std::string read_file(const std::filesystem::path& p);

/// records.csv, records.json, <table>.csv, <doc>.json into dir.
void write_output(const std::filesystem::path& dir, const ExperimentOutput& out);

/// Refuses a directory that already holds results unless force is set.
void claim_directory(const std::filesystem::path& dir, bool force);

}  // namespace bose::io
