#include "seqtx/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "seqtx/errors.hpp"

namespace seqtx {

namespace {

nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double from_number(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  return NAN;
}

std::string csv_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

}  // namespace

bool Results::pass() const {
  if (!error.empty()) return false;
  for (const auto& c : checks)
    if (c.hard && !c.pass) return false;
  return true;
}

nlohmann::json to_json(const Check& c) {
  nlohmann::json j;
  j["stage"] = c.stage;
  j["name"] = c.name;
  j["pass"] = c.pass;
  j["hard"] = c.hard;
  j["note"] = c.note;
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [k, v] : c.metrics) m[k] = number(v);
  j["metrics"] = m;
  nlohmann::json t;
  t["columns"] = c.table.columns;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : c.table.rows) {
    nlohmann::json r = nlohmann::json::array();
    for (double v : row) r.push_back(number(v));
    rows.push_back(r);
  }
  t["rows"] = rows;
  j["table"] = t;
  return j;
}

Check check_from_json(const nlohmann::json& j) {
  Check c;
  c.stage = j.at("stage").get<std::string>();
  c.name = j.at("name").get<std::string>();
  c.pass = j.at("pass").get<bool>();
  c.hard = j.at("hard").get<bool>();
  c.note = j.at("note").get<std::string>();
  for (const auto& [k, v] : j.at("metrics").items()) c.metrics[k] = from_number(v);
  c.table.columns = j.at("table").at("columns").get<std::vector<std::string>>();
  for (const auto& row : j.at("table").at("rows")) {
    std::vector<double> r;
    for (const auto& v : row) r.push_back(from_number(v));
    c.table.rows.push_back(std::move(r));
  }
  return c;
}

nlohmann::json summary_json(const Results& r) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["overall"] = r.pass() ? "pass" : "fail";
  std::size_t failed = 0;
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : r.checks) {
    auto cj = to_json(c);
    cj.erase("table");
    if (!c.table.rows.empty()) cj["csv"] = c.stage + "_" + c.name + ".csv";
    checks.push_back(cj);
    if (!c.pass) ++failed;
  }
  j["checks"] = checks;
  j["check_count"] = r.checks.size();
  j["failed_count"] = failed;
  if (!r.failed_stage.empty()) j["failed_stage"] = r.failed_stage;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

void write_csv(const Table& t, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << "# schema_version=" << kSchemaVersion << "\n";
  for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << t.columns[i];
  out << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_number(row[i]);
    out << "\n";
  }
}

void emit_report(const Results& r, const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  std::ofstream f(out / "summary.json");
  if (!f) throw ConfigError("cannot write to output directory " + out.string());
  f << summary_json(r).dump(2) << "\n";
  for (const auto& c : r.checks)
    if (!c.table.rows.empty()) write_csv(c.table, out / (c.stage + "_" + c.name + ".csv"));
}

}  // namespace seqtx
