#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqtx/grid.hpp"

namespace seqtx {

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct Check {
  std::string stage;
  std::string name;
  bool pass = true;
  bool hard = true;  ///< soft checks are reported but do not fail the run
  std::map<std::string, double> metrics;
  std::string note;
  Table table;  ///< written as <stage>_<name>.csv when nonempty
};

struct Results {
  std::vector<Check> checks;
  std::string failed_stage;
  std::string error;  ///< numeric failure message, empty otherwise

  bool pass() const;
};

nlohmann::json to_json(const Check& c);
Check check_from_json(const nlohmann::json& j);

/// summary.json plus one CSV per check with a table.  Doubles are written in
/// shortest round-trip form, non-finite values as strings.
nlohmann::json summary_json(const Results& r);
void emit_report(const Results& r, const std::filesystem::path& out);
void write_csv(const Table& t, const std::filesystem::path& file);

}  // namespace seqtx
