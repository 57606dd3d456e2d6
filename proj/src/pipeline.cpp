#include "qfluct/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string_view>

#include "qfluct/averaging.hpp"
#include "qfluct/emulator.hpp"
#include "qfluct/errors.hpp"
#include "qfluct/hdfa.hpp"
#include "qfluct/noisefit.hpp"
#include "qfluct/physics.hpp"
#include "qfluct/records.hpp"
#include "qfluct/serialize.hpp"
#include "qfluct/spectral.hpp"
#include "qfluct/tabular.hpp"

namespace qfluct {

namespace fs = std::filesystem;

namespace {

double median_of_sorted_copy(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct StreamRef {
  long qubit = -1;  // -1 for an unlabeled single stream
  std::string suffix;
  std::string records;  // file name relative to the output directory
};

class Runner {
 public:
  Runner(const PipelineConfig& config, RunManifest& manifest)
      : config_(config), manifest_(manifest), dir_(config.output_dir) {
    cache_ = config.cache_dir;
    if (cache_.empty())
      if (const char* env = std::getenv("QFLUCT_CACHE_DIR")) cache_ = env;
    if (cache_.empty()) cache_ = dir_;
  }

  void run_stage(const std::string& name) {
    manifest_.stages.push_back(StageRecord{});
    rec_ = &manifest_.stages.back();
    rec_->name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (name == "emulate")
        emulate();
      else if (name == "ingest")
        ingest();
      else if (name == "average")
        average();
      else if (name == "fit")
        fit();
      else if (name == "segment")
        segment();
      else if (name == "rates")
        rates();
      else if (name == "psd")
        psd();
      else if (name == "physics")
        physics();
      else
        report();
    } catch (...) {
      rec_->ok = false;
      manifest_.ok = false;
      rec_->wall_ms = elapsed_ms(t0);
      throw;
    }
    rec_->wall_ms = elapsed_ms(t0);
  }

 private:
  static double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  }

  fs::path in(const fs::path& p) {
    rec_->inputs[p.string()] = file_digest(p);
    return p;
  }

  fs::path out(const fs::path& p) {
    rec_->outputs[p.string()] = file_digest(p);
    return p;
  }

  void out_table(const fs::path& p) {
    out(p);
    out(p.string() + ".schema.json");
  }

  void warn(std::string message) { rec_->warnings.push_back(std::move(message)); }

  fs::path require(const fs::path& p, const std::string& producer) const {
    if (!fs::exists(p))
      throw DataError(p.string() + " is missing; run the " + producer + " stage first");
    return p;
  }

  static std::string level_name(const char* base, const std::string& suffix, int level,
                                const char* ext) {
    return std::string(base) + suffix + "_level" + std::to_string(level) + ext;
  }

  // ---- streams.json ----

  void write_streams(const std::vector<StreamRef>& streams) {
    nlohmann::json j = nlohmann::json::array();
    for (const StreamRef& s : streams) {
      nlohmann::json e;
      e["qubit"] = s.qubit;
      e["suffix"] = s.suffix;
      e["records"] = s.records;
      j.push_back(e);
    }
    write_text_file(dir_ / "streams.json", j.dump(2) + "\n");
    out(dir_ / "streams.json");
  }

  std::vector<StreamRef> load_streams() {
    const fs::path p = require(dir_ / "streams.json", "ingest");
    const nlohmann::json j = parse_json(read_text_file(in(p)), "stream listing");
    if (!j.is_array()) throw DataError("stream listing must be a JSON array");
    std::vector<StreamRef> streams;
    for (const auto& e : j) {
      StreamRef s;
      s.qubit = e.at("qubit").get<long>();
      s.suffix = e.at("suffix").get<std::string>();
      s.records = e.at("records").get<std::string>();
      streams.push_back(s);
    }
    if (streams.empty()) throw DataError("stream listing is empty");
    return streams;
  }

  double window_for(std::size_t stream_index) const {
    const auto& w = config_.averaging.w_g;
    return w[std::min(stream_index, w.size() - 1)];
  }

  // ---- emulate ----

  void emulate() {
    config_.plan.validate();
    config_.schedule.validate();
    EmulatedExperiment ex =
        emulate_experiment(config_.plan, config_.schedule, config_.seed, config_.workers);
    const fs::path records = dir_ / "records.tsv";
    write_records(records, ex.data);
    // The sidecar carries the generating schedule next to the plan so a
    // downstream consumer can recover the ground truth configuration.
    const fs::path meta = records.string() + ".meta.json";
    nlohmann::json m = parse_json(read_text_file(meta), "record metadata");
    m["schedule"] = schedule_to_json(config_.schedule);
    write_text_file(meta, m.dump(2) + "\n");
    write_ground_truth(dir_ / "ground_truth.tsv", ex.truth, ex.data.t_s);
    out(records);
    out(meta);
    out_table(dir_ / "ground_truth.tsv");
  }

  // ---- ingest ----

  // Splits an optional `qubit` column into independent per-qubit streams;
  // otherwise passes the single stream through. Re-emission through the
  // canonical writer normalizes formatting, and all-zero timestamps are
  // reconstructed from the plan's script times (uniform fallback warns).
  void ingest() {
    const fs::path source = config_.records_path.empty()
                                ? require(dir_ / "records.tsv", "emulate")
                                : fs::path(config_.records_path);
    if (!fs::exists(source)) throw DataError("records file not found: " + source.string());
    in(source);
    in(source.string() + ".meta.json");

    const std::string text = read_text_file(source);
    const std::size_t eol = text.find('\n');
    if (eol == std::string::npos) throw DataError("records file has no header row");
    const std::string header = text.substr(0, eol);
    std::vector<std::string> columns;
    {
      std::stringstream ss(header);
      std::string c;
      while (std::getline(ss, c, '\t')) columns.push_back(c);
    }
    long qubit_col = -1;
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == "qubit") qubit_col = static_cast<long>(i);

    std::vector<StreamRef> streams;
    if (qubit_col < 0) {
      Dataset data = read_records(source);
      fix_timestamps(data);
      StreamRef s;
      s.records = "ingested.tsv";
      write_records(dir_ / s.records, data);
      out(dir_ / s.records);
      out(dir_ / (s.records + ".meta.json"));
      streams.push_back(s);
    } else {
      streams = split_parallel(source, text, columns, qubit_col);
    }
    write_streams(streams);
  }

  std::vector<StreamRef> split_parallel(const fs::path& source, const std::string& text,
                                        const std::vector<std::string>& columns, long qubit_col) {
    const std::string meta_text = read_text_file(source.string() + ".meta.json");
    std::string header7;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (static_cast<long>(i) == qubit_col) continue;
      if (!header7.empty()) header7 += '\t';
      header7 += columns[i];
    }
    // qubit id -> reassembled lines without the qubit field
    std::map<long, std::string> bodies;
    std::size_t pos = text.find('\n') + 1;
    long line_no = 1;
    while (pos < text.size()) {
      ++line_no;
      std::size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      if (end > pos) {
        const std::string_view line(text.data() + pos, end - pos);
        std::string rest;
        long qubit = -1;
        std::size_t field = 0, start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
          if (i == line.size() || line[i] == '\t') {
            const std::string_view cell = line.substr(start, i - start);
            if (static_cast<long>(field) == qubit_col) {
              try {
                qubit = std::stol(std::string(cell));
              } catch (...) {
                throw DataError("line " + std::to_string(line_no) + ": bad qubit id '" +
                                std::string(cell) + "'");
              }
            } else {
              if (!rest.empty()) rest += '\t';
              rest += std::string(cell);
            }
            ++field;
            start = i + 1;
          }
        }
        if (field != columns.size())
          throw DataError("line " + std::to_string(line_no) + ": expected " +
                          std::to_string(columns.size()) + " fields, found " +
                          std::to_string(field));
        if (qubit < 0) throw DataError("line " + std::to_string(line_no) + ": negative qubit id");
        std::string& body = bodies[qubit];
        if (body.empty()) body = header7 + '\n';
        body += rest;
        body += '\n';
      }
      pos = end + 1;
    }
    if (bodies.empty()) throw DataError("records file has no data rows");

    std::vector<StreamRef> streams;
    fs::create_directories(cache_);
    for (auto& [qubit, body] : bodies) {
      const fs::path tmp = cache_ / ("split_q" + std::to_string(qubit) + ".tsv");
      write_text_file(tmp, body);
      write_text_file(tmp.string() + ".meta.json", meta_text);
      Dataset data = read_records(tmp);
      fix_timestamps(data);
      fs::remove(tmp);
      fs::remove(tmp.string() + ".meta.json");
      StreamRef s;
      s.qubit = qubit;
      s.suffix = "_q" + std::to_string(qubit);
      s.records = "ingested" + s.suffix + ".tsv";
      write_records(dir_ / s.records, data);
      out(dir_ / s.records);
      out(dir_ / (s.records + ".meta.json"));
      streams.push_back(s);
    }
    return streams;
  }

  void fix_timestamps(Dataset& data) {
    bool all_zero = true;
    for (double t : data.t_s)
      if (t != 0.0) {
        all_zero = false;
        break;
      }
    if (!all_zero || data.t_s.size() < 2) return;
    std::vector<std::string> notes;
    data.t_s = reconstruct_timestamps(config_.plan, &notes);
    for (std::string& n : notes) warn(std::move(n));
  }

  // ---- average ----

  void average() {
    const auto streams = load_streams();
    for (std::size_t k = 0; k < streams.size(); ++k) {
      const Dataset data = read_records(in(dir_ / streams[k].records));
      const ProbabilitySeries series = config_.averaging.gaussian
                                           ? gaussian_average(data, window_for(k))
                                           : fixed_average(data, config_.averaging.w_fixed);
      write_probabilities(streams[k].suffix, series);
    }
  }

  void write_probabilities(const std::string& suffix, const ProbabilitySeries& series) {
    static const char* kBasisLetters = "XYZ";
    Table t;
    t.columns = {"repetition", "t_s", "n_eff", "flags"};
    std::vector<std::string> desc = {"repetition index", "repetition start time, s",
                                     "effective sample count of the window",
                                     "bit flags (1 = truncated edge window)"};
    for (long i = 0; i < series.n_tau(); ++i)
      for (int b = 0; b < 3; ++b) {
        t.columns.push_back(std::string("p_") + std::to_string(i) + "_" + kBasisLetters[b]);
        desc.push_back("averaged outcome probability, tau index " + std::to_string(i) +
                       ", basis " + kBasisLetters[b]);
      }
    for (long r = 0; r < series.n_reps(); ++r) {
      std::vector<std::string> row = {format_int(r), format_double(series.t_s[r]),
                                      format_double(series.n_eff[r]),
                                      format_int(static_cast<long long>(series.flags[r]))};
      for (long i = 0; i < series.n_tau(); ++i)
        for (int b = 0; b < 3; ++b) row.push_back(format_double(series.p[b](i, r)));
      t.append_row(row);
    }
    const fs::path path = dir_ / ("probabilities" + suffix + ".tsv");
    write_table(path, t, desc);
    nlohmann::json meta;
    meta["tau_s"] = std::vector<double>(series.tau_s.data(), series.tau_s.data() + series.n_tau());
    meta["window"] = series.window;
    meta["gaussian"] = series.gaussian;
    write_text_file(path.string() + ".meta.json", meta.dump(2) + "\n");
    out_table(path);
    out(path.string() + ".meta.json");
  }

  ProbabilitySeries read_probabilities(const std::string& suffix) {
    const fs::path path = require(dir_ / ("probabilities" + suffix + ".tsv"), "average");
    const nlohmann::json meta =
        parse_json(read_text_file(in(path.string() + ".meta.json")), "probability metadata");
    const Table t = parse_table(read_text_file(in(path)));
    ProbabilitySeries series;
    const std::vector<double> tau = meta.at("tau_s").get<std::vector<double>>();
    series.tau_s = Eigen::Map<const Eigen::ArrayXd>(tau.data(), static_cast<long>(tau.size()));
    series.window = meta.at("window").get<double>();
    series.gaussian = meta.at("gaussian").get<bool>();
    const long n_reps = static_cast<long>(t.rows());
    const long n_tau = series.tau_s.size();
    series.t_s.resize(n_reps);
    series.n_eff.resize(n_reps);
    series.flags.resize(n_reps);
    for (int b = 0; b < 3; ++b) series.p[b].resize(n_tau, n_reps);
    const std::size_t col_t = t.column_index("t_s");
    const std::size_t col_neff = t.column_index("n_eff");
    const std::size_t col_flags = t.column_index("flags");
    const std::size_t col_p0 = t.column_index("p_0_X");
    for (long r = 0; r < n_reps; ++r) {
      series.t_s[r] = t.number_at(r, col_t);
      series.n_eff[r] = t.number_at(r, col_neff);
      series.flags[r] = static_cast<uint32_t>(t.number_at(r, col_flags));
      for (long i = 0; i < n_tau; ++i)
        for (int b = 0; b < 3; ++b)
          series.p[b](i, r) = t.number_at(r, col_p0 + static_cast<std::size_t>(i * 3 + b));
    }
    return series;
  }

  // ---- fit ----

  void fit() {
    const auto streams = load_streams();
    for (std::size_t k = 0; k < streams.size(); ++k) {
      const ProbabilitySeries series = read_probabilities(streams[k].suffix);
      NoiseFitOptions options = config_.fit;
      options.seed = config_.seed;
      options.workers = config_.workers;
      const NoiseTrace trace = fit_series(series, options);
      write_trace(streams[k].suffix, trace);
    }
  }

  void write_trace(const std::string& suffix, const NoiseTrace& trace) {
    Table t;
    t.columns = {"repetition", "t_s",    "delta_f_hz", "sigma_delta_f_hz", "gamma1",
                 "sigma_gamma1", "gamma_phi", "sigma_gamma_phi", "flags"};
    for (long r = 0; r < trace.size(); ++r) {
      t.append_row({format_int(r), format_double(trace.t_s[static_cast<std::size_t>(r)]),
                    format_double(trace.delta_f_hz[r]), format_double(trace.sigma_delta_f[r]),
                    format_double(trace.gamma1[r]), format_double(trace.sigma_gamma1[r]),
                    format_double(trace.gamma_phi[r]), format_double(trace.sigma_gamma_phi[r]),
                    format_int(static_cast<long long>(trace.flags[static_cast<std::size_t>(r)]))});
    }
    const fs::path path = dir_ / ("trace" + suffix + ".tsv");
    write_table(path, t,
                {"repetition index", "repetition start time, s", "detuning estimate, Hz",
                 "bootstrap sigma of the detuning, Hz", "relaxation rate, 1/s",
                 "bootstrap sigma of gamma1, 1/s", "pure dephasing rate, 1/s",
                 "bootstrap sigma of gamma_phi, 1/s", "bit flags"});
    out_table(path);
  }

  struct TraceData {
    Eigen::ArrayXd t_s, delta_f, sigma_delta_f, gamma1, gamma_phi;
    std::vector<uint32_t> flags;
  };

  TraceData read_trace(const std::string& suffix) {
    const fs::path path = require(dir_ / ("trace" + suffix + ".tsv"), "fit");
    const Table t = parse_table(read_text_file(in(path)));
    TraceData d;
    const long n = static_cast<long>(t.rows());
    d.t_s.resize(n);
    d.delta_f.resize(n);
    d.sigma_delta_f.resize(n);
    d.gamma1.resize(n);
    d.gamma_phi.resize(n);
    d.flags.resize(static_cast<std::size_t>(n));
    const std::size_t ct = t.column_index("t_s");
    const std::size_t cd = t.column_index("delta_f_hz");
    const std::size_t cs = t.column_index("sigma_delta_f_hz");
    const std::size_t c1 = t.column_index("gamma1");
    const std::size_t cp = t.column_index("gamma_phi");
    const std::size_t cf = t.column_index("flags");
    for (long r = 0; r < n; ++r) {
      d.t_s[r] = t.number_at(r, ct);
      d.delta_f[r] = t.number_at(r, cd);
      d.sigma_delta_f[r] = t.number_at(r, cs);
      d.gamma1[r] = t.number_at(r, c1);
      d.gamma_phi[r] = t.number_at(r, cp);
      d.flags[static_cast<std::size_t>(r)] = static_cast<uint32_t>(t.number_at(r, cf));
    }
    return d;
  }

  // ---- segment ----

  void segment() {
    const auto streams = load_streams();
    for (std::size_t k = 0; k < streams.size(); ++k) {
      const TraceData trace = read_trace(streams[k].suffix);
      HierarchyOptions options = config_.hierarchy;
      options.workers = config_.workers;
      const std::vector<RtnLevel> levels =
          run_hierarchy(trace.t_s, trace.delta_f, trace.sigma_delta_f, options);
      write_hierarchy(streams[k].suffix, trace, levels, options);
    }
  }

  static double masked_aware_median(const Eigen::ArrayXd& v, const std::vector<uint32_t>& flags,
                                    bool skip_masked) {
    std::vector<double> keep;
    keep.reserve(static_cast<std::size_t>(v.size()));
    for (long i = 0; i < v.size(); ++i)
      if (!skip_masked || !(flags[static_cast<std::size_t>(i)] & kFlagMasked))
        keep.push_back(v[i]);
    if (keep.empty())
      for (long i = 0; i < v.size(); ++i) keep.push_back(v[i]);
    return median_of_sorted_copy(std::move(keep));
  }

  void write_hierarchy(const std::string& suffix, const TraceData& trace,
                       const std::vector<RtnLevel>& levels, const HierarchyOptions& options) {
    nlohmann::json j;
    j["n_levels"] = levels.size();
    j["levels"] = nlohmann::json::array();
    for (const RtnLevel& level : levels) {
      nlohmann::json e;
      e["level"] = level.level;
      e["lambda_ll"] = level.lambda_ll;
      e["l_min"] = level.l_min;
      e["lambda_auto"] = !(config_.hierarchy.lambda_ll < 0.0);
      e["l_min_auto"] = config_.hierarchy.l_min < 2;
      e["n_segments"] = level.segments.size();
      e["transitions"] = level.transitions;
      e["zero_delta_fraction"] = level.zero_delta_fraction;
      e["active"] = level.active;
      e["tau_min_s"] = level.rates.tau_min_s;
      e["rate_window_s"] =
          options.rate_window_s * std::pow(10.0, static_cast<double>(level.level - 1));
      e["f_c_median_hz"] = masked_aware_median(level.series.f_c, level.series.flags, false);
      e["f_delta_median_hz"] = masked_aware_median(level.series.f_delta, level.series.flags, true);
      if (!level.lambda_curve.candidates.size()) {
        e["lambda_curve"] = nullptr;
      } else {
        nlohmann::json c;
        c["candidates"] = std::vector<double>(
            level.lambda_curve.candidates.data(),
            level.lambda_curve.candidates.data() + level.lambda_curve.candidates.size());
        c["n_cp"] = std::vector<double>(
            level.lambda_curve.n_cp.data(),
            level.lambda_curve.n_cp.data() + level.lambda_curve.n_cp.size());
        c["flat"] = level.lambda_curve.flat;
        c["warning"] = level.lambda_curve.warning;
        e["lambda_curve"] = c;
        if (!level.lambda_curve.warning.empty()) warn(level.lambda_curve.warning);
      }
      if (level.lmin_curve.candidates.empty()) {
        e["lmin_curve"] = nullptr;
      } else {
        nlohmann::json c;
        c["candidates"] = level.lmin_curve.candidates;
        c["rmse"] = std::vector<double>(
            level.lmin_curve.rmse.data(),
            level.lmin_curve.rmse.data() + level.lmin_curve.rmse.size());
        e["lmin_curve"] = c;
      }
      j["levels"].push_back(e);
      write_level_tables(suffix, trace, level);
    }
    const Eigen::ArrayXd recon = hierarchy_reconstruction(levels);
    j["reconstruction_rmse_hz"] =
        std::sqrt((recon - trace.delta_f).square().mean());
    const fs::path path = dir_ / ("hierarchy" + suffix + ".json");
    write_text_file(path, j.dump(2) + "\n");
    out(path);
  }

  void write_level_tables(const std::string& suffix, const TraceData& trace,
                          const RtnLevel& level) {
    Table seg;
    seg.columns = {"begin", "end",      "s_last",  "f_c_hz",         "f_delta_hz",
                   "sigma1_fc_hz", "sigma1_fdelta_hz", "mean_ll10", "n_blocks", "flags"};
    for (const Segment& s : level.segments) {
      seg.append_row({format_int(s.begin), format_int(s.end),
                      format_int(s.s.empty() ? 0 : s.s.back()), format_double(s.f_c),
                      format_double(s.f_delta), format_double(s.sigma1_fc),
                      format_double(s.sigma1_fdelta), format_double(s.mean_ll10),
                      format_int(static_cast<long long>(s.blocks.size())),
                      format_int(static_cast<long long>(s.flags))});
    }
    const fs::path seg_path = dir_ / level_name("segments", suffix, level.level, ".tsv");
    write_table(seg_path, seg,
                {"first point index", "one past the last point index", "state at the last point",
                 "segment center frequency, Hz", "segment splitting, Hz",
                 "first-kind sigma of f_c, Hz", "first-kind sigma of f_delta, Hz",
                 "mean per-point log10 likelihood", "constant-state block count", "bit flags"});
    out_table(seg_path);

    Table st;
    st.columns = {"index",      "t_s",       "f_in_hz",       "sigma_in_hz", "f_c_hz",
                  "f_delta_hz", "sigma_fc_hz", "sigma_fdelta_hz", "s",       "flags"};
    const long n = level.f_in.size();
    for (long i = 0; i < n; ++i) {
      st.append_row({format_int(i), format_double(trace.t_s[i]), format_double(level.f_in[i]),
                     format_double(level.sigma_in[i]), format_double(level.series.f_c[i]),
                     format_double(level.series.f_delta[i]), format_double(level.sigma_fc[i]),
                     format_double(level.sigma_fdelta[i]),
                     format_int(level.series.s[static_cast<std::size_t>(i)]),
                     format_int(static_cast<long long>(
                         level.series.flags[static_cast<std::size_t>(i)]))});
    }
    const fs::path st_path = dir_ / level_name("states", suffix, level.level, ".tsv");
    write_table(st_path, st,
                {"point index", "time, s", "level input frequency, Hz",
                 "level input sigma, Hz", "segment center at this point, Hz",
                 "segment splitting at this point, Hz", "total sigma of f_c, Hz",
                 "total sigma of f_delta, Hz", "telegraph state (-1 low, +1 high)",
                 "bit flags (256 = masked)"});
    out_table(st_path);
  }

  // ---- rates ----

  void rates() {
    const auto streams = load_streams();
    for (const StreamRef& stream : streams) {
      const fs::path hier_path = require(dir_ / ("hierarchy" + stream.suffix + ".json"),
                                         "segment");
      const nlohmann::json hier =
          parse_json(read_text_file(in(hier_path)), "hierarchy summary");
      nlohmann::json j;
      j["levels"] = nlohmann::json::array();
      for (const auto& e : hier.at("levels")) {
        const int level = e.at("level").get<int>();
        const fs::path st_path =
            require(dir_ / level_name("states", stream.suffix, level, ".tsv"), "segment");
        const Table st = parse_table(read_text_file(in(st_path)));
        const long n = static_cast<long>(st.rows());
        std::vector<signed char> state(static_cast<std::size_t>(n));
        std::vector<double> t(static_cast<std::size_t>(n));
        std::vector<uint32_t> flags(static_cast<std::size_t>(n));
        const std::size_t ct = st.column_index("t_s");
        const std::size_t cs = st.column_index("s");
        const std::size_t cf = st.column_index("flags");
        for (long i = 0; i < n; ++i) {
          t[static_cast<std::size_t>(i)] = st.number_at(i, ct);
          state[static_cast<std::size_t>(i)] = st.number_at(i, cs) > 0 ? 1 : 0;
          flags[static_cast<std::size_t>(i)] = static_cast<uint32_t>(st.number_at(i, cf));
        }
        const RateSummary summary = switching_rates(
            state.data(), t.data(), flags.data(), n, e.at("tau_min_s").get<double>(),
            e.at("rate_window_s").get<double>(), config_.hierarchy.gap_factor);
        nlohmann::json r;
        r["level"] = level;
        r["tau_min_s"] = summary.tau_min_s;
        r["up"] = rate_to_json(summary.up);
        r["down"] = rate_to_json(summary.down);
        j["levels"].push_back(r);
        write_rate_series(stream.suffix, level, summary.running);
        if (!summary.up.correctable || !summary.down.correctable)
          warn("level " + std::to_string(level) +
               ": censoring correction out of range; raw rates reported");
      }
      const fs::path path = dir_ / ("rates" + stream.suffix + ".json");
      write_text_file(path, j.dump(2) + "\n");
      out(path);
    }
  }

  static nlohmann::json rate_to_json(const RateEstimate& e) {
    nlohmann::json j;
    j["raw_hz"] = e.raw;
    j["raw_ci_hz"] = {e.raw_ci_lo, e.raw_ci_hi};
    j["corrected_hz"] = e.corrected;
    j["corrected_ci_hz"] = {e.corrected_ci_lo, e.corrected_ci_hi};
    j["transitions"] = e.transitions;
    j["dwell_s"] = e.dwell_s;
    j["correctable"] = e.correctable;
    return j;
  }

  void write_rate_series(const std::string& suffix, int level, const RateSeries& series) {
    Table t;
    t.columns = {"t_s", "up_hz", "down_hz", "flags"};
    for (long i = 0; i < series.t_s.size(); ++i) {
      t.append_row({format_double(series.t_s[i]), format_double(series.up[i]),
                    format_double(series.down[i]),
                    format_int(static_cast<long long>(series.flags[static_cast<std::size_t>(i)]))});
    }
    const fs::path path = dir_ / level_name("rates", suffix, level, ".tsv");
    write_table(path, t,
                {"window center, s", "running low->high rate, 1/s (NaN when empty)",
                 "running high->low rate, 1/s (NaN when empty)", "bit flags"});
    out_table(path);
  }

  // ---- psd ----

  void psd() {
    const auto streams = load_streams();
    for (std::size_t k = 0; k < streams.size(); ++k) {
      const TraceData trace = read_trace(streams[k].suffix);
      const Eigen::ArrayXd& x = config_.psd.parameter == "gamma1"
                                    ? trace.gamma1
                                    : (config_.psd.parameter == "gamma_phi" ? trace.gamma_phi
                                                                            : trace.delta_f);
      WelchOptions options;
      options.segment_length = config_.psd.segment_length;
      options.overlap = config_.psd.overlap;
      const PsdEstimate estimate = welch_psd_nonuniform(trace.t_s, x, options);
      Table pt;
      pt.columns = {"f_hz", "psd"};
      for (long i = 0; i < estimate.f_hz.size(); ++i)
        pt.append_row({format_double(estimate.f_hz[i]), format_double(estimate.psd[i])});
      const fs::path path = dir_ / ("psd" + streams[k].suffix + ".tsv");
      write_table(path, pt,
                  {"frequency, Hz", "one-sided power spectral density, " +
                                        config_.psd.parameter + " units squared per Hz"});
      out_table(path);

      if (!config_.psd.fit_model) continue;
      if (!config_.averaging.gaussian) {
        warn("psd model fit skipped: only the gaussian window transfer is modelled");
        continue;
      }
      const PsdModel model = fit_psd_model(estimate, window_for(k), config_.seed);
      nlohmann::json m;
      m["amplitude"] = model.amplitude;
      m["alpha"] = model.alpha;
      m["floor"] = model.floor;
      m["w_g"] = model.w_g;
      m["converged"] = model.converged;
      m["n_segments"] = estimate.n_segments;
      const fs::path mpath = dir_ / ("psd_model" + streams[k].suffix + ".json");
      write_text_file(mpath, m.dump(2) + "\n");
      out(mpath);
      if (!model.converged) warn("psd model fit hit its generation cap");
    }
  }

  // ---- physics ----

  void physics() {
    const auto streams = load_streams();
    for (const StreamRef& stream : streams) physics_stream(stream);
  }

  void physics_stream(const StreamRef& stream) {
    const PhysicsConfig& cfg = config_.physics;
    if (!(cfg.f0_hz > 0) || !(cfg.alpha_hz < 0))
      throw ConfigError("physics stage needs f0_hz > 0 and alpha_hz < 0");
    const TransmonCalibration cal = calibrate_ec_ej(cfg.f0_hz, cfg.alpha_hz, cfg.cutoff);
    const TransmonLevels levels = diagonalize_transmon(cal.ec_hz, cal.ej_hz, 0.0, cfg.cutoff);
    const double disp_analytic = charge_dispersion_analytic(cal.ec_hz, cal.xi);
    const double disp_numerical = charge_dispersion_numerical(cal.ec_hz, cal.ej_hz, cfg.cutoff);
    const double f_delta_max = cfg.f_delta_max_hz > 0 ? cfg.f_delta_max_hz : disp_numerical;

    nlohmann::json j;
    j["calibration"] = {{"ec_hz", cal.ec_hz},
                        {"ej_hz", cal.ej_hz},
                        {"xi", cal.xi},
                        {"iterations", cal.iterations},
                        {"f01_hz", levels.f01_hz},
                        {"f12_hz", levels.f12_hz},
                        {"n01", levels.n01}};
    j["dispersion"] = {{"analytic_hz", disp_analytic},
                       {"numerical_hz", disp_numerical},
                       {"f_delta_max_hz", f_delta_max}};

    // Level 1 carries the charge-parity splitting; its per-point f_delta
    // maps to a quasi-static charge offset.
    const fs::path l1_path = require(dir_ / level_name("states", stream.suffix, 1, ".tsv"),
                                     "segment");
    const Table l1 = parse_table(read_text_file(in(l1_path)));
    const long n1 = static_cast<long>(l1.rows());
    Eigen::ArrayXd f_delta1(n1), t1(n1);
    {
      const std::size_t cd = l1.column_index("f_delta_hz");
      const std::size_t ct = l1.column_index("t_s");
      for (long i = 0; i < n1; ++i) {
        f_delta1[i] = l1.number_at(i, cd);
        t1[i] = l1.number_at(i, ct);
      }
    }
    const ChargeOffsetSeries offsets = extract_charge_offset(f_delta1, f_delta_max);
    long clipped = 0;
    {
      Table ct;
      ct.columns = {"t_s", "n_g", "flags"};
      for (long i = 0; i < n1; ++i) {
        if (offsets.flags[static_cast<std::size_t>(i)] & kFlagClipped) ++clipped;
        ct.append_row({format_double(t1[i]), format_double(offsets.n_g[i]),
                       format_int(static_cast<long long>(
                           offsets.flags[static_cast<std::size_t>(i)]))});
      }
      const fs::path path = dir_ / ("charge_offset" + stream.suffix + ".tsv");
      write_table(path, ct,
                  {"time, s", "charge offset in electron pairs, folded to [0, 1/4]",
                   "bit flags (16 = clipped)"});
      out_table(path);
    }
    j["charge_offset"] = {{"n_points", n1}, {"n_clipped", clipped}};
    if (clipped > 0)
      warn(std::to_string(clipped) + " points exceeded the maximal splitting and were clipped");

    j["jumps"] = nullptr;
    j["tls"] = nullptr;
    const fs::path hier_path = require(dir_ / ("hierarchy" + stream.suffix + ".json"), "segment");
    const nlohmann::json hier = parse_json(read_text_file(in(hier_path)), "hierarchy summary");
    const std::size_t n_levels = hier.at("n_levels").get<std::size_t>();
    if (n_levels >= 2) {
      physics_tls(stream, cfg, cal, levels, hier, t1, offsets, j);
    } else {
      warn("hierarchy has a single level; charge jump and TLS analysis skipped");
    }

    const fs::path path = dir_ / ("physics" + stream.suffix + ".json");
    write_text_file(path, j.dump(2) + "\n");
    out(path);
  }

  void physics_tls(const StreamRef& stream, const PhysicsConfig& cfg,
                   const TransmonCalibration& cal, const TransmonLevels& levels,
                   const nlohmann::json& hier, const Eigen::ArrayXd& t1,
                   const ChargeOffsetSeries& offsets, nlohmann::json& j) {
    // Switch times of the slower level-2 process mark charge jumps.
    const fs::path l2_path = require(dir_ / level_name("states", stream.suffix, 2, ".tsv"),
                                     "segment");
    const Table l2 = parse_table(read_text_file(in(l2_path)));
    const long n2 = static_cast<long>(l2.rows());
    std::vector<double> switch_times;
    {
      const std::size_t ct = l2.column_index("t_s");
      const std::size_t cs = l2.column_index("s");
      const std::size_t cf = l2.column_index("flags");
      double prev_t = 0.0;
      int prev_s = 0;
      bool have_prev = false;
      for (long i = 0; i < n2; ++i) {
        const bool masked = static_cast<uint32_t>(l2.number_at(i, cf)) & kFlagMasked;
        const int s = l2.number_at(i, cs) > 0 ? 1 : -1;
        const double t = l2.number_at(i, ct);
        if (masked) {
          have_prev = false;
          continue;
        }
        if (have_prev && s != prev_s) switch_times.push_back(0.5 * (prev_t + t));
        prev_t = t;
        prev_s = s;
        have_prev = true;
      }
    }
    const ChargeJumpStats jumps = charge_jump_statistics(offsets.n_g, t1, switch_times);
    {
      Table ht;
      ht.columns = {"bin_lo", "bin_hi", "count"};
      for (long b = 0; b + 1 < jumps.bin_edges.size(); ++b)
        ht.append_row({format_double(jumps.bin_edges[b]), format_double(jumps.bin_edges[b + 1]),
                       format_int(static_cast<long long>(jumps.counts[b]))});
      const fs::path path = dir_ / ("ng_jumps_hist" + stream.suffix + ".tsv");
      write_table(path, ht, {"bin lower edge", "bin upper edge", "jump count"});
      out_table(path);
    }
    j["jumps"] = {{"dng_mode", jumps.value},
                  {"sigma", jumps.sigma},
                  {"n_jumps", jumps.n_jumps},
                  {"flags", jumps.flags}};
    if (jumps.flags & kFlagLowStatistics)
      warn("fewer than 5 charge jumps; the jump amplitude is unreliable");

    const fs::path rates_path = dir_ / ("rates" + stream.suffix + ".json");
    if (!fs::exists(rates_path)) {
      warn("rates output missing; TLS inversion skipped (run the rates stage)");
      return;
    }
    const nlohmann::json rates = parse_json(read_text_file(in(rates_path)), "rate summary");
    double nu_up = 0.0, nu_down = 0.0;
    bool found = false;
    for (const auto& e : rates.at("levels")) {
      if (e.at("level").get<int>() != 2) continue;
      nu_up = e.at("up").at("corrected_hz").get<double>();
      nu_down = e.at("down").at("corrected_hz").get<double>();
      found = true;
    }
    if (!found || !(nu_up > 0) || !(nu_down > 0)) {
      warn("level-2 switching rates unavailable; TLS inversion skipped");
      return;
    }

    double f_delta2 = cfg.f_delta2_hz;
    if (!(f_delta2 > 0)) {
      for (const auto& e : hier.at("levels"))
        if (e.at("level").get<int>() == 2) f_delta2 = e.at("f_delta_median_hz").get<double>();
    }
    if (!(f_delta2 > 0)) {
      warn("level-2 splitting is zero; TLS inversion skipped");
      return;
    }

    TransmonSpec spec;
    spec.f0_hz = cfg.f0_hz;
    spec.alpha_hz = cfg.alpha_hz;
    spec.ec_hz = cal.ec_hz;
    spec.ej_hz = cal.ej_hz;
    spec.xi = cal.xi;

    nlohmann::json corners = nlohmann::json::array();
    double lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
    bool any = false;
    for (double t_k : {cfg.t_lo_k, cfg.t_hi_k}) {
      const double f_tls = tls_energy_from_rates(nu_up, nu_down, t_k);
      for (double x_m : {cfg.x_lo_m, cfg.x_hi_m}) {
        nlohmann::json c;
        c["t_k"] = t_k;
        c["x_m"] = x_m;
        c["f_tls_hz"] = f_tls;
        try {
          const TlsParams p =
              invert_tls_model(jumps.value, f_delta2, spec, levels.n01, f_tls, x_m);
          c["epsilon_hz"] = p.epsilon_hz;
          c["delta_hz"] = p.delta_hz;
          c["d_parallel_e_angstrom"] = p.d_parallel_e_angstrom;
          const double vals[3] = {p.epsilon_hz, p.delta_hz, p.d_parallel_e_angstrom};
          for (int i = 0; i < 3; ++i) {
            lo[i] = any ? std::min(lo[i], vals[i]) : vals[i];
            hi[i] = any ? std::max(hi[i], vals[i]) : vals[i];
          }
          any = true;
        } catch (const NumericalError& err) {
          c["error"] = err.what();
          warn(std::string("TLS corner failed: ") + err.what());
        }
        corners.push_back(c);
      }
    }
    nlohmann::json tls;
    tls["nu_up_hz"] = nu_up;
    tls["nu_down_hz"] = nu_down;
    tls["f_delta2_hz"] = f_delta2;
    tls["corners"] = corners;
    if (any) {
      tls["epsilon_range_hz"] = {lo[0], hi[0]};
      tls["delta_range_hz"] = {lo[1], hi[1]};
      tls["d_parallel_range_e_angstrom"] = {lo[2], hi[2]};
    }
    j["tls"] = tls;
  }

  // ---- report ----

  void report() {
    const auto streams = load_streams();
    nlohmann::json j;
    j["tool_version"] = manifest_.tool_version;
    j["config_hash"] = manifest_.config_hash;
    j["streams"] = nlohmann::json::array();
    for (const StreamRef& stream : streams) {
      nlohmann::json e;
      e["qubit"] = stream.qubit;
      e["suffix"] = stream.suffix;
      e["plots"] = nlohmann::json::object();
      e["plots"]["trace"] = "trace" + stream.suffix + ".tsv";
      const fs::path hier_path = dir_ / ("hierarchy" + stream.suffix + ".json");
      if (fs::exists(hier_path)) {
        const nlohmann::json hier =
            parse_json(read_text_file(in(hier_path)), "hierarchy summary");
        nlohmann::json levels = nlohmann::json::array();
        for (const auto& h : hier.at("levels")) {
          nlohmann::json l;
          for (const char* key : {"level", "f_c_median_hz", "f_delta_median_hz", "transitions",
                                  "zero_delta_fraction", "active", "lambda_ll", "l_min"})
            l[key] = h.at(key);
          levels.push_back(l);
        }
        e["hierarchy"] = {{"n_levels", hier.at("n_levels")},
                          {"reconstruction_rmse_hz", hier.at("reconstruction_rmse_hz")},
                          {"levels", levels}};
        nlohmann::json panels = nlohmann::json::array();
        for (const auto& h : hier.at("levels")) {
          const int lv = h.at("level").get<int>();
          panels.push_back(level_name("states", stream.suffix, lv, ".tsv"));
        }
        e["plots"]["hierarchy_panels"] = panels;
      }
      attach_json(e, "rates", dir_ / ("rates" + stream.suffix + ".json"));
      attach_json(e, "psd_model", dir_ / ("psd_model" + stream.suffix + ".json"));
      attach_json(e, "physics", dir_ / ("physics" + stream.suffix + ".json"));
      if (fs::exists(dir_ / ("psd" + stream.suffix + ".tsv")))
        e["plots"]["psd"] = "psd" + stream.suffix + ".tsv";
      if (fs::exists(dir_ / ("charge_offset" + stream.suffix + ".tsv")))
        e["plots"]["charge_offset"] = "charge_offset" + stream.suffix + ".tsv";
      if (fs::exists(dir_ / ("ng_jumps_hist" + stream.suffix + ".tsv")))
        e["plots"]["ng_jumps_hist"] = "ng_jumps_hist" + stream.suffix + ".tsv";
      j["streams"].push_back(e);
    }
    const fs::path path = dir_ / "report.json";
    write_text_file(path, j.dump(2) + "\n");
    out(path);
  }

  void attach_json(nlohmann::json& e, const char* key, const fs::path& path) {
    if (!fs::exists(path)) return;
    e[key] = parse_json(read_text_file(in(path)), key);
  }

  const PipelineConfig& config_;
  RunManifest& manifest_;
  fs::path dir_;
  fs::path cache_;
  StageRecord* rec_ = nullptr;
};

}  // namespace

RunManifest run_pipeline(const PipelineConfig& config) {
  config.validate();
  RunManifest manifest;
  manifest.config_hash = config_digest(config);
  manifest.seed = config.seed;
  if (config.stages.empty()) {
    if (!config.output_dir.empty()) {
      fs::create_directories(config.output_dir);
      write_manifest(fs::path(config.output_dir) / "manifest.json", manifest);
    }
    return manifest;
  }
  fs::create_directories(config.output_dir);
  const fs::path manifest_path = fs::path(config.output_dir) / "manifest.json";
  Runner runner(config, manifest);
  for (const std::string& name : stage_chain()) {
    if (std::find(config.stages.begin(), config.stages.end(), name) == config.stages.end())
      continue;
    try {
      runner.run_stage(name);
    } catch (...) {
      write_manifest(manifest_path, manifest);
      throw;
    }
    write_manifest(manifest_path, manifest);
  }
  return manifest;
}

}  // namespace qfluct
