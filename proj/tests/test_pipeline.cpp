#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "qfluct/config.hpp"
#include "qfluct/emulator.hpp"
#include "qfluct/errors.hpp"
#include "qfluct/pipeline.hpp"
#include "qfluct/records.hpp"

using namespace qfluct;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("qfluct_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

// Small but complete run: one short telegraph on top of flat decay
// rates, cheap fit budgets, no PSD model (the trace is too short for
// two decades of frequency coverage).
PipelineConfig small_config(const fs::path& dir) {
  PipelineConfig config = default_config();
  config.output_dir = dir.string();
  config.stages = stage_chain();
  config.seed = 5;
  config.plan.tau_s = {5e-7, 1e-6, 2e-6, 3e-6, 4.5e-6, 6e-6};
  config.plan.reps_per_script = 400;
  config.schedule.rtn = {{30e3, 0.05, 0.0, 0.0, 0}};
  config.fit.de.population = 12;
  config.fit.de.max_generations = 80;
  config.fit.n_bootstrap = 4;
  config.fit.bootstrap_population = 8;
  config.fit.bootstrap_max_generations = 40;
  config.hierarchy.lambda_ll = -8.0;
  config.hierarchy.l_min = 2;
  config.hierarchy.spread_steps = 1;
  config.psd.segment_length = 128;
  config.psd.fit_model = false;
  return config;
}

}  // namespace

TEST_CASE("the full chain runs and leaves every artifact behind") {
  const fs::path dir = fresh_dir("full");
  const RunManifest manifest = run_pipeline(small_config(dir));
  CHECK(manifest.ok);
  REQUIRE(manifest.stages.size() == stage_chain().size());
  for (const char* name :
       {"records.tsv", "records.tsv.meta.json", "ground_truth.tsv", "ingested.tsv",
        "streams.json", "probabilities.tsv", "trace.tsv", "hierarchy.json",
        "segments_level1.tsv", "states_level1.tsv", "rates.json", "psd.tsv",
        "physics.json", "report.json", "manifest.json"}) {
    INFO(name);
    CHECK(fs::exists(dir / name));
  }
  const json report = load_json(dir / "report.json");
  CHECK(report.at("tool_version") == kToolVersion);
  CHECK(report.at("config_hash") == config_digest(small_config(dir)));

  const json manifest_json = load_json(dir / "manifest.json");
  CHECK(manifest_json.at("ok") == true);
  // Stages ran in canonical order.
  for (std::size_t i = 0; i < stage_chain().size(); ++i)
    CHECK(manifest_json.at("stages").at(i).at("name") == stage_chain()[i]);

  // The hierarchy found the telegraph.
  const json hier = load_json(dir / "hierarchy.json");
  CHECK(hier.at("n_levels").get<int>() >= 1);
  const json level1 = hier.at("levels").at(0);
  CHECK(level1.at("active") == true);
  CHECK(level1.at("f_delta_median_hz").get<double>() == doctest::Approx(30e3).epsilon(0.25));
}

TEST_CASE("two directories, one configuration, identical bytes") {
  const fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
  PipelineConfig ca = small_config(a), cb = small_config(b);
  run_pipeline(ca);
  run_pipeline(cb);
  for (const char* name : {"records.tsv", "probabilities.tsv", "trace.tsv",
                           "states_level1.tsv", "psd.tsv"}) {
    INFO(name);
    CHECK(slurp(a / name) == slurp(b / name));
  }
}

TEST_CASE("rerunning one stage from disk reproduces its output") {
  const fs::path dir = fresh_dir("isolation");
  PipelineConfig config = small_config(dir);
  run_pipeline(config);
  const std::string trace_before = slurp(dir / "trace.tsv");
  const std::string states_before = slurp(dir / "states_level1.tsv");

  config.stages = {"fit"};
  run_pipeline(config);
  CHECK(slurp(dir / "trace.tsv") == trace_before);

  config.stages = {"segment"};
  run_pipeline(config);
  CHECK(slurp(dir / "states_level1.tsv") == states_before);

  // The rewritten manifest describes only what ran.
  const json manifest_json = load_json(dir / "manifest.json");
  REQUIRE(manifest_json.at("stages").size() == 1);
  CHECK(manifest_json.at("stages").at(0).at("name") == "segment");
}

TEST_CASE("stage selections run in canonical order regardless of spelling") {
  const fs::path dir = fresh_dir("order");
  PipelineConfig config = small_config(dir);
  config.stages = {"emulate"};
  run_pipeline(config);
  config.stages = {"average", "ingest"};
  const RunManifest manifest = run_pipeline(config);
  REQUIRE(manifest.stages.size() == 2);
  CHECK(manifest.stages[0].name == "ingest");
  CHECK(manifest.stages[1].name == "average");
}

TEST_CASE("a missing upstream artifact names the stage to run") {
  const fs::path dir = fresh_dir("missing");
  PipelineConfig config = small_config(dir);
  config.stages = {"average"};
  CHECK_THROWS_WITH_AS(run_pipeline(config),
                       doctest::Contains("ingest"), DataError);
  // The manifest still lands on disk with the failure recorded.
  const json manifest_json = load_json(dir / "manifest.json");
  CHECK(manifest_json.at("ok") == false);
}

TEST_CASE("an empty stage list writes an empty manifest and stops") {
  const fs::path dir = fresh_dir("empty");
  PipelineConfig config = small_config(dir);
  config.stages = {};
  const RunManifest manifest = run_pipeline(config);
  CHECK(manifest.ok);
  CHECK(manifest.stages.empty());
  CHECK(fs::exists(dir / "manifest.json"));
}

TEST_CASE("a qubit column splits into independent streams") {
  const fs::path dir = fresh_dir("split");
  fs::create_directories(dir);

  // Two genuine single-qubit streams, interleaved line by line into one
  // file with a trailing qubit column.
  PipelineConfig config = small_config(dir);
  config.plan.reps_per_script = 40;
  const EmulatedExperiment ea = emulate_experiment(config.plan, config.schedule, 11);
  const EmulatedExperiment eb = emulate_experiment(config.plan, config.schedule, 12);
  write_records(dir / "a.tsv", ea.data);
  write_records(dir / "b.tsv", eb.data);

  std::istringstream la(slurp(dir / "a.tsv")), lb(slurp(dir / "b.tsv"));
  std::string line_a, line_b;
  std::getline(la, line_a);
  std::getline(lb, line_b);
  std::ofstream merged(dir / "merged.tsv");
  merged << line_a << "\tqubit\n";
  while (std::getline(la, line_a) && std::getline(lb, line_b))
    merged << line_a << "\t5\n" << line_b << "\t7\n";
  merged.close();
  fs::copy_file(dir / "a.tsv.meta.json", dir / "merged.tsv.meta.json");

  config.records_path = (dir / "merged.tsv").string();
  config.stages = {"ingest"};
  const RunManifest manifest = run_pipeline(config);
  CHECK(manifest.ok);

  const json streams = load_json(dir / "streams.json");
  REQUIRE(streams.size() == 2);
  CHECK(streams.at(0).at("qubit") == 5);
  CHECK(streams.at(1).at("qubit") == 7);

  // Each split stream is the original single-qubit stream, bit for bit.
  const Dataset da = read_records(dir / "ingested_q5.tsv");
  const Dataset db = read_records(dir / "ingested_q7.tsv");
  CHECK(da.outcomes == ea.data.outcomes);
  CHECK(db.outcomes == eb.data.outcomes);
  CHECK(da.t_s == ea.data.t_s);
}
