#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "qfluct/config.hpp"
#include "qfluct/errors.hpp"
#include "qfluct/manifest.hpp"
#include "qfluct/pipeline.hpp"
#include "qfluct/serialize.hpp"
#include "qfluct/tabular.hpp"

namespace {

struct Cli {
  std::string config_path;
  std::string output_dir, records, cache_dir;
  uint64_t seed = 0;
  int workers = 0;
  std::vector<double> w_g;
  long fixed_window = 0;
  double lambda_ll = 0.0;
  long l_min = 0;
  double sigma_floor = 0.0;
  int max_levels = 0;
  double rate_window = 0.0;
  std::string psd_parameter;
  long segment_length = 0;
  double overlap = -1.0;
  bool no_psd_model = false;
  double f0 = 0.0, alpha = 0.0, f_delta_max = 0.0, f_delta2 = 0.0;
  double t_lo = 0.0, t_hi = 0.0, x_lo = 0.0, x_hi = 0.0;
  int n_bootstrap = -1;
  int population = 0;
  int max_generations = 0;
  std::vector<std::string> stages;
};

// Every stage subcommand shares the same override surface; flags the
// user actually passed win over the config file.
void add_common(CLI::App* sub, Cli& cli) {
  sub->add_option("-c,--config", cli.config_path, "configuration file (JSON)");
  sub->add_option("-o,--output-dir", cli.output_dir, "artifact directory");
  sub->add_option("--records", cli.records, "external records file for ingest");
  sub->add_option("--cache-dir", cli.cache_dir, "scratch directory");
  sub->add_option("--seed", cli.seed, "global random seed");
  sub->add_option("--workers", cli.workers, "worker thread count");
  sub->add_option("--w-g", cli.w_g, "gaussian window widths, one per qubit stream");
  sub->add_option("--fixed-window", cli.fixed_window,
                  "use a fixed rectangular window of this half-width");
  sub->add_option("--lambda-ll", cli.lambda_ll, "segmentation threshold (negative; 0 = auto)");
  sub->add_option("--l-min", cli.l_min, "minimum segment length (0 = auto)");
  sub->add_option("--sigma-floor", cli.sigma_floor, "state-model sigma floor, Hz");
  sub->add_option("--max-levels", cli.max_levels, "hierarchy depth cap");
  sub->add_option("--rate-window", cli.rate_window, "level-1 running rate window, s");
  sub->add_option("--psd-parameter", cli.psd_parameter, "delta_f, gamma1 or gamma_phi");
  sub->add_option("--segment-length", cli.segment_length, "Welch segment length");
  sub->add_option("--overlap", cli.overlap, "Welch segment overlap fraction");
  sub->add_flag("--no-psd-model", cli.no_psd_model, "skip the PSD model fit");
  sub->add_option("--f0", cli.f0, "qubit frequency, Hz");
  sub->add_option("--alpha", cli.alpha, "anharmonicity, Hz (negative)");
  sub->add_option("--f-delta-max", cli.f_delta_max, "maximal parity splitting override, Hz");
  sub->add_option("--f-delta2", cli.f_delta2, "level-2 splitting override, Hz");
  sub->add_option("--t-lo", cli.t_lo, "TLS bath temperature, lower bound, K");
  sub->add_option("--t-hi", cli.t_hi, "TLS bath temperature, upper bound, K");
  sub->add_option("--x-lo", cli.x_lo, "TLS displacement, lower bound, m");
  sub->add_option("--x-hi", cli.x_hi, "TLS displacement, upper bound, m");
  sub->add_option("--n-bootstrap", cli.n_bootstrap, "bootstrap replicas per slice");
  sub->add_option("--population", cli.population, "optimizer population size");
  sub->add_option("--max-generations", cli.max_generations, "optimizer generation cap");
}

qfluct::PipelineConfig build_config(const CLI::App* sub, const Cli& cli) {
  qfluct::PipelineConfig cfg;
  if (!cli.config_path.empty()) {
    const std::string text = qfluct::read_text_file(cli.config_path);
    cfg = qfluct::config_from_json(qfluct::parse_json(text, "config file"));
  } else {
    cfg = qfluct::default_config();
  }
  const auto passed = [&](const char* name) { return sub->count(name) > 0; };
  if (passed("--output-dir")) cfg.output_dir = cli.output_dir;
  if (passed("--records")) cfg.records_path = cli.records;
  if (passed("--cache-dir")) cfg.cache_dir = cli.cache_dir;
  if (passed("--seed")) cfg.seed = cli.seed;
  if (passed("--workers")) cfg.workers = cli.workers;
  if (passed("--w-g")) cfg.averaging.w_g = cli.w_g;
  if (passed("--fixed-window")) {
    cfg.averaging.gaussian = false;
    cfg.averaging.w_fixed = cli.fixed_window;
  }
  if (passed("--lambda-ll")) cfg.hierarchy.lambda_ll = cli.lambda_ll;
  if (passed("--l-min")) cfg.hierarchy.l_min = cli.l_min;
  if (passed("--sigma-floor")) cfg.hierarchy.hmm.sigma_floor = cli.sigma_floor;
  if (passed("--max-levels")) cfg.hierarchy.max_levels = cli.max_levels;
  if (passed("--rate-window")) cfg.hierarchy.rate_window_s = cli.rate_window;
  if (passed("--psd-parameter")) cfg.psd.parameter = cli.psd_parameter;
  if (passed("--segment-length")) cfg.psd.segment_length = cli.segment_length;
  if (passed("--overlap")) cfg.psd.overlap = cli.overlap;
  if (passed("--no-psd-model")) cfg.psd.fit_model = false;
  if (passed("--f0")) cfg.physics.f0_hz = cli.f0;
  if (passed("--alpha")) cfg.physics.alpha_hz = cli.alpha;
  if (passed("--f-delta-max")) cfg.physics.f_delta_max_hz = cli.f_delta_max;
  if (passed("--f-delta2")) cfg.physics.f_delta2_hz = cli.f_delta2;
  if (passed("--t-lo")) cfg.physics.t_lo_k = cli.t_lo;
  if (passed("--t-hi")) cfg.physics.t_hi_k = cli.t_hi;
  if (passed("--x-lo")) cfg.physics.x_lo_m = cli.x_lo;
  if (passed("--x-hi")) cfg.physics.x_hi_m = cli.x_hi;
  if (passed("--n-bootstrap")) cfg.fit.n_bootstrap = cli.n_bootstrap;
  if (passed("--population")) cfg.fit.de.population = cli.population;
  if (passed("--max-generations")) cfg.fit.de.max_generations = cli.max_generations;
  return cfg;
}

int run(const qfluct::PipelineConfig& cfg) {
  const qfluct::RunManifest manifest = qfluct::run_pipeline(cfg);
  for (const qfluct::StageRecord& s : manifest.stages) {
    std::printf("%-8s %s  %.0f ms\n", s.name.c_str(), s.ok ? "ok" : "FAILED", s.wall_ms);
    for (const std::string& w : s.warnings) std::printf("  warning: %s\n", w.c_str());
  }
  if (!cfg.output_dir.empty())
    std::printf("manifest: %s/manifest.json\n", cfg.output_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"time-resolved qubit noise reconstruction"};
  app.set_version_flag("--version", qfluct::kToolVersion);
  app.require_subcommand(1);
  Cli cli;

  // One subcommand per pipeline stage, plus `pipeline` for a full run.
  std::vector<std::pair<CLI::App*, std::string>> stage_subs;
  for (const std::string& name : qfluct::stage_chain()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " stage");
    add_common(sub, cli);
    stage_subs.emplace_back(sub, name);
  }
  CLI::App* pipe = app.add_subcommand("pipeline", "run the configured stage selection");
  add_common(pipe, cli);
  pipe->add_option("--stages", cli.stages, "override the stage selection");

  CLI::App* conf = app.add_subcommand("config", "configuration helpers");
  conf->require_subcommand(1);
  conf->add_subcommand("init", "print the default configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (conf->parsed()) {
      std::cout << qfluct::config_to_json(qfluct::default_config()).dump(2) << "\n";
      return 0;
    }
    if (pipe->parsed()) {
      qfluct::PipelineConfig cfg = build_config(pipe, cli);
      if (pipe->count("--stages")) cfg.stages = cli.stages;
      return run(cfg);
    }
    for (const auto& [sub, name] : stage_subs) {
      if (!sub->parsed()) continue;
      qfluct::PipelineConfig cfg = build_config(sub, cli);
      cfg.stages = {name};
      return run(cfg);
    }
    return 2;
  } catch (const qfluct::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const qfluct::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const qfluct::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
