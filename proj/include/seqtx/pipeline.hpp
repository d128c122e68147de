#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "seqtx/config.hpp"
#include "seqtx/report.hpp"
#include "seqtx/rpf.hpp"

namespace seqtx {

/// Stage names in execution order.  "spectral" expands to its four parts.
const std::vector<std::string>& stage_order();
std::vector<std::string> expand_stages(const std::vector<std::string>& requested);
std::vector<std::string> default_stages();

struct PipelineOptions {
  std::filesystem::path out = "out";
  bool force = false;
  bool use_cache = true;
};

struct PipelineRun {
  Results results;
  int exit_code = 0;
  std::vector<std::string> computed;  ///< stages run this time (not from cache)
};

/// 0 pass, 2 failed hard check, 3 numeric failure.
int exit_code(const Results& r);

/// Runs the stages in dependency order, caching each stage's checks under
/// out/cache keyed by a hash of its config section and the code version, and
/// writes the report.  Stops after the first stage with a failed hard check.
PipelineRun run_pipeline(const RunConfig& cfg, const std::vector<std::string>& stages,
                         const PipelineOptions& opt);

std::string code_version();

/// h.csv, nu.csv and lambda.json for one triplet.
void write_triplet(const RpfTriplet& t, double alpha, const std::filesystem::path& dir);

}  // namespace seqtx
