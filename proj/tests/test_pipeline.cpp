#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "seqtx/errors.hpp"
#include "seqtx/pipeline.hpp"

using namespace seqtx;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("seqtx-test-" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

RunConfig small() {
  RunConfig c;
  c.grid = 512;
  c.depth = 30;
  c.cone_samples = 20;
  c.cone_triples = 300;
  c.spectral_n_max = 40;
  c.spectral_norm_n_max = 20;
  c.sim_replicas = 2000;
  c.sim_rungs = {64, 256};
  return c;
}

}  // namespace

TEST_CASE("config round trip") {
  RunConfig c;
  c.map_family = "mp";
  c.map_beta = 0.3;
  c.spectral_t = {0.05, 0.125};
  c.seed = 99;
  std::istringstream in(c.to_text());
  CHECK(RunConfig::parse(in) == c);

  std::istringstream comments("# comment\nmap.family = mp   # trailing\n\nmap.beta=0.25\n");
  const auto p = RunConfig::parse(comments);
  CHECK(p.map_family == "mp");
  CHECK(p.map_beta == 0.25);
}

TEST_CASE("config errors") {
  RunConfig c;
  CHECK_THROWS_AS(c.set("no.such.key", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("grid", "abc"), ConfigError);
  c.grid = 1000;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  std::istringstream bad("map.family = mp\nmap.beta = 1.5\n");
  CHECK_THROWS_AS(RunConfig::parse(bad), ConfigError);
  std::istringstream noeq("grid 512\n");
  CHECK_THROWS_AS(RunConfig::parse(noeq), ConfigError);
}

TEST_CASE("report files") {
  const auto out = scratch("report");
  Results empty;
  emit_report(empty, out);
  const auto j = nlohmann::json::parse(slurp(out / "summary.json"));
  CHECK(j["check_count"] == 0);
  CHECK(j["overall"] == "pass");
  CHECK(j["schema_version"] == kSchemaVersion);

  Results one;
  Check c;
  c.stage = "s-check";
  c.name = "compute_s";
  c.pass = false;
  c.metrics = {{"s", 1.5}, {"bad", std::nan("")}};
  c.table.columns = {"a", "b"};
  c.table.rows = {{1, 2}};
  one.checks.push_back(c);
  emit_report(one, out);
  const auto k = nlohmann::json::parse(slurp(out / "summary.json"));
  CHECK(k["overall"] == "fail");
  CHECK(slurp(out / "s-check_compute_s.csv").rfind("# schema_version=1", 0) == 0);
  const auto back = check_from_json(to_json(c));
  CHECK(back.metrics.at("s") == 1.5);
  CHECK(std::isnan(back.metrics.at("bad")));
  CHECK(back.pass == false);
  fs::remove_all(out);
}

TEST_CASE("stage selection") {
  CHECK(expand_stages({"spectral", "pairing"}).size() == 5);
  CHECK(expand_stages({"simulate", "rpf"}).front() == "rpf");
  CHECK_THROWS_AS(expand_stages({"bogus"}), ConfigError);
}

TEST_CASE("pipeline exit codes") {
  const auto out = scratch("exit");
  PipelineOptions opt;
  opt.out = out;
  const auto none = run_pipeline(small(), {}, opt);
  CHECK(none.exit_code == 0);
  CHECK(none.results.checks.empty());

  auto osc = small();
  osc.map_family = "mp";
  osc.potential_kind = "cos";
  osc.potential_t = 2.0;
  const auto r = run_pipeline(osc, {"s-check", "rpf"}, opt);
  CHECK(r.exit_code == 2);
  CHECK(r.results.failed_stage == "s-check");
  CHECK(r.results.checks.size() == 1);
  fs::remove_all(out);
}

TEST_CASE("pipeline reruns are byte identical") {
  const auto a = scratch("det-a"), b = scratch("det-b");
  PipelineOptions opt;
  opt.out = a;
  const std::vector<std::string> stages{"pairing", "s-check", "rpf", "spectral.pressure", "simulate"};
  const auto first = run_pipeline(small(), stages, opt);
  CHECK(first.exit_code == 0);
  const auto cached = run_pipeline(small(), stages, opt);
  CHECK(cached.computed.empty());
  opt.out = b;
  run_pipeline(small(), stages, opt);
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
    ++compared;
  }
  CHECK(compared >= 4);
  CHECK(slurp(a / "rpf" / "h.csv") == slurp(b / "rpf" / "h.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}
