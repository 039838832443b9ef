#include "bose/io.hpp"

#include <fmt/format.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace bose::io {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_number(double x) { return fmt::format("{}", x); }

ResultRecord ResultRecord::exact(std::string observable, double value) {
  ResultRecord r;
  r.observable = std::move(observable);
  r.value = value;
  return r;
}

ResultRecord ResultRecord::measured(std::string observable, Estimate e, std::optional<double> ess) {
  ResultRecord r;
  r.observable = std::move(observable);
  r.value = e.value;
  r.std_error = e.error;
  r.ess = ess;
  return r;
}

std::string records_csv_header() { return "config_hash,observable,value,std_error,ess,version"; }

std::string to_csv_row(const ResultRecord& r) {
  return fmt::format("{},{},{},{},{},{}", r.config_hash, r.observable, format_number(r.value),
                     r.std_error ? format_number(*r.std_error) : std::string("exact"),
                     r.ess ? format_number(*r.ess) : std::string(), r.version);
}

json to_json(const ResultRecord& r) {
  json j;
  j["config_hash"] = r.config_hash;
  j["observable"] = r.observable;
  j["value"] = r.value;
  if (r.std_error) {
    j["std_error"] = *r.std_error;
  } else {
    j["std_error"] = "exact";
  }
  j["ess"] = r.ess ? json(*r.ess) : json(nullptr);
  j["version"] = r.version;
  return j;
}

ResultRecord record_from_json(const json& j) {
  ResultRecord r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.observable = j.at("observable").get<std::string>();
  r.value = j.at("value").is_null() ? std::nan("") : j.at("value").get<double>();
  if (j.at("std_error").is_number()) r.std_error = j.at("std_error").get<double>();
  if (j.at("ess").is_number()) r.ess = j.at("ess").get<double>();
  r.version = j.at("version").get<std::string>();
  return r;
}

namespace {

std::string cell_text(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  if (const auto* i = std::get_if<long long>(&c)) return std::to_string(*i);
  const auto& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + '"';
}

json cell_json(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return *d;
  if (const auto* i = std::get_if<long long>(&c)) return *i;
  return std::get<std::string>(c);
}

Cell cell_from_json(const json& j) {
  if (j.is_number_integer()) return j.get<long long>();
  if (j.is_number()) return j.get<double>();
  if (j.is_null()) return std::nan("");
  return j.get<std::string>();
}

}  // namespace

void Table::add(std::vector<Cell> row) {
  if (row.size() != columns.size()) {
    throw ArgumentError(fmt::format("table row has {} cells, expected {}", row.size(), columns.size()));
  }
  rows.push_back(std::move(row));
}

std::string Table::csv() const {
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
  out += '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + cell_text(row[i]);
    out += '\n';
  }
  return out;
}

Table Table::prefixed(const std::vector<std::string>& cols, const std::vector<Cell>& values) const {
  Table t;
  t.columns = cols;
  t.columns.insert(t.columns.end(), columns.begin(), columns.end());
  for (const auto& row : rows) {
    auto r = values;
    r.insert(r.end(), row.begin(), row.end());
    t.rows.push_back(std::move(r));
  }
  return t;
}

void Table::append(const Table& other) {
  if (columns.empty() && rows.empty()) columns = other.columns;
  if (other.columns != columns) throw ArgumentError("appending a table with different columns");
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

json to_json(const Table& t) {
  json rows = json::array();
  for (const auto& row : t.rows) {
    json r = json::array();
    for (const auto& c : row) r.push_back(cell_json(c));
    rows.push_back(std::move(r));
  }
  return {{"columns", t.columns}, {"rows", rows}};
}

Table table_from_json(const json& j) {
  Table t;
  t.columns = j.at("columns").get<std::vector<std::string>>();
  for (const auto& r : j.at("rows")) {
    std::vector<Cell> row;
    for (const auto& c : r) row.push_back(cell_from_json(c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

json to_json(const ExperimentOutput& out) {
  json records = json::array();
  for (const auto& r : out.records) records.push_back(to_json(r));
  json tables = json::array();
  for (const auto& [name, t] : out.tables) tables.push_back({{"name", name}, {"table", to_json(t)}});
  json docs = json::array();
  for (const auto& [name, d] : out.documents) docs.push_back({{"name", name}, {"document", d}});
  return {{"records", records}, {"tables", tables}, {"documents", docs}, {"failed", out.failed},
          {"message", out.message}};
}

ExperimentOutput output_from_json(const json& j) {
  ExperimentOutput out;
  for (const auto& r : j.at("records")) out.records.push_back(record_from_json(r));
  for (const auto& t : j.at("tables")) out.add_table(t.at("name"), table_from_json(t.at("table")));
  for (const auto& d : j.at("documents")) out.add_document(d.at("name"), d.at("document"));
  out.failed = j.at("failed").get<bool>();
  out.message = j.at("message").get<std::string>();
  return out;
}

fs::path resolve_output(const std::string& configured) {
  fs::path p(configured);
  if (p.is_relative()) {
    if (const char* root = std::getenv("BOSE_OUTPUT_ROOT"); root != nullptr && *root != '\0') {
      return fs::path(root) / p;
    }
  }
  return p;
}

void write_file(const fs::path& p, std::string_view content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw OutputError("cannot open " + tmp.string() + " for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) throw OutputError("write to " + tmp.string() + " failed");
  }
  fs::rename(tmp, p);
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw ConfigError("cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_output(const fs::path& dir, const ExperimentOutput& out) {
  std::string csv = records_csv_header() + '\n';
  json records = json::array();
  for (const auto& r : out.records) {
    csv += to_csv_row(r) + '\n';
    records.push_back(to_json(r));
  }
  write_file(dir / "records.csv", csv);
  write_file(dir / "records.json", records.dump(2) + '\n');
  for (const auto& [name, t] : out.tables) write_file(dir / (name + ".csv"), t.csv());
  for (const auto& [name, d] : out.documents) write_file(dir / (name + ".json"), d.dump(2) + '\n');
}

void claim_directory(const fs::path& dir, bool force) {
  const bool taken = fs::exists(dir / "records.csv") || fs::exists(dir / "manifest.json");
  if (taken && !force) {
    throw OutputError("output directory " + dir.string() + " already holds results; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

}  // namespace bose::io
