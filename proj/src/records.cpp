#include "qfluct/records.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "qfluct/errors.hpp"
#include "qfluct/serialize.hpp"
#include "qfluct/tabular.hpp"

namespace qfluct {

void Dataset::validate() const {
  plan.validate();
  const long reps = plan.total_repetitions();
  if (static_cast<long>(t_s.size()) != reps)
    throw DataError("timestamp count " + std::to_string(t_s.size()) +
                    " does not match plan repetitions " + std::to_string(reps));
  if (outcomes.size() != static_cast<std::size_t>(reps) * static_cast<std::size_t>(n_circuits()))
    throw DataError("outcome count does not match plan (repetitions x circuits)");
  for (std::size_t r = 1; r < t_s.size(); ++r)
    if (t_s[r] < t_s[r - 1]) throw DataError("timestamps are not non-decreasing");
  for (uint8_t o : outcomes)
    if (o > 1) throw DataError("outcomes must be 0 or 1");
}

nlohmann::json plan_to_json(const ExperimentPlan& plan) {
  nlohmann::json j;
  j["tau_s"] = plan.tau_s;
  j["n_scripts"] = plan.n_scripts;
  j["reps_per_script"] = plan.reps_per_script;
  j["t_other_s"] = plan.t_other_s;
  if (!plan.script_start_s.empty()) j["script_start_s"] = plan.script_start_s;
  if (!plan.script_duration_s.empty()) j["script_duration_s"] = plan.script_duration_s;
  return j;
}

ExperimentPlan plan_from_json(const nlohmann::json& j) {
  ExperimentPlan plan;
  try {
    plan.tau_s = j.at("tau_s").get<std::vector<double>>();
    plan.n_scripts = j.at("n_scripts").get<int>();
    plan.reps_per_script = j.at("reps_per_script").get<long>();
    plan.t_other_s = j.at("t_other_s").get<double>();
    if (j.contains("script_start_s"))
      plan.script_start_s = j.at("script_start_s").get<std::vector<double>>();
    if (j.contains("script_duration_s"))
      plan.script_duration_s = j.at("script_duration_s").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed plan metadata: ") + e.what());
  }
  plan.validate();
  return plan;
}

nlohmann::json parse_json(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse " + what + ": " + e.what());
  }
}

void write_records(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "script\trepetition\ttau_index\ttau_s\tbasis\toutcome\tt_s\n";
  const int n_tau = static_cast<int>(data.plan.tau_s.size());
  std::vector<std::string> tau_text(n_tau);
  for (int i = 0; i < n_tau; ++i) tau_text[i] = format_double(data.plan.tau_s[i]);
  for (long r = 0; r < data.n_reps(); ++r) {
    const long script = r / data.plan.reps_per_script;
    const std::string rep_text = std::to_string(r);
    const std::string t_text = format_double(data.t_s[static_cast<std::size_t>(r)]);
    for (int i = 0; i < n_tau; ++i) {
      for (int b = 0; b < 3; ++b) {
        out << script << '\t' << rep_text << '\t' << i << '\t' << tau_text[i] << '\t'
            << basis_letter(static_cast<Basis>(b)) << '\t'
            << int(data.outcome(r, i * 3 + b)) << '\t' << t_text << '\n';
      }
    }
  }
  if (!out) throw DataError("short write: " + path.string());
  out.close();
  nlohmann::json meta;
  meta["plan"] = plan_to_json(data.plan);
  write_text_file(path.string() + ".meta.json", meta.dump(2) + "\n");
}

namespace {

const char* next_field(const char* p, const char* end, std::string_view& field) {
  const char* start = p;
  while (p < end && *p != '\t' && *p != '\n') ++p;
  field = std::string_view(start, static_cast<std::size_t>(p - start));
  return p < end ? p + 1 : p;
}

long parse_long(std::string_view s) {
  long value = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw DataError("bad integer field '" + std::string(s) + "'");
  return value;
}

double parse_num(std::string_view s) {
  double value = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw DataError("bad numeric field '" + std::string(s) + "'");
  return value;
}

}  // namespace

Dataset read_records(const std::filesystem::path& path) {
  const std::string meta_text = read_text_file(path.string() + ".meta.json");
  const nlohmann::json meta = parse_json(meta_text, "record metadata");
  if (!meta.contains("plan")) throw DataError("record metadata lacks a plan");
  Dataset data;
  data.plan = plan_from_json(meta.at("plan"));
  const long reps = data.plan.total_repetitions();
  const int circuits = data.plan.circuits_per_repetition();
  data.t_s.assign(static_cast<std::size_t>(reps), 0.0);
  data.outcomes.assign(static_cast<std::size_t>(reps) * static_cast<std::size_t>(circuits), 0);
  std::vector<uint8_t> seen(data.outcomes.size(), 0);

  const std::string text = read_text_file(path);
  const char* p = text.data();
  const char* end = p + text.size();
  while (p < end && *p != '\n') ++p;  // skip header
  if (p < end) ++p;
  std::string_view f[7];
  while (p < end) {
    if (*p == '\n') {
      ++p;
      continue;
    }
    for (int i = 0; i < 7; ++i) p = next_field(p, end, f[i]);
    const long rep = parse_long(f[1]);
    const long tau_index = parse_long(f[2]);
    if (rep < 0 || rep >= reps) throw DataError("repetition index out of range");
    if (tau_index < 0 || tau_index * 3 >= circuits) throw DataError("tau index out of range");
    const Basis basis = parse_basis(std::string(f[4]));
    const long outcome = parse_long(f[5]);
    if (outcome != 0 && outcome != 1) throw DataError("outcome must be 0 or 1");
    const std::size_t slot = static_cast<std::size_t>(rep) * static_cast<std::size_t>(circuits) +
                             static_cast<std::size_t>(tau_index * 3 + static_cast<int>(basis));
    if (seen[slot]) throw DataError("duplicate record for repetition " + std::to_string(rep));
    seen[slot] = 1;
    data.outcomes[slot] = static_cast<uint8_t>(outcome);
    data.t_s[static_cast<std::size_t>(rep)] = parse_num(f[6]);
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i])
      throw DataError("incomplete repetition: missing circuit " +
                      std::to_string(i % static_cast<std::size_t>(circuits)) + " of repetition " +
                      std::to_string(i / static_cast<std::size_t>(circuits)));
  data.validate();
  return data;
}

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& truth,
                        const std::vector<double>& t_s) {
  if (truth.delta_f_hz.size() != t_s.size())
    throw DataError("ground truth length does not match timestamps");
  Table t;
  t.columns = {"repetition", "t_s", "delta_f_hz", "gamma1", "gamma_phi"};
  for (std::size_t k = 0; k < truth.rtn_states.size(); ++k)
    t.columns.push_back("state_" + std::to_string(k));
  for (std::size_t r = 0; r < t_s.size(); ++r) {
    std::vector<std::string> row = {format_int(static_cast<long long>(r)), format_double(t_s[r]),
                                    format_double(truth.delta_f_hz[r]),
                                    format_double(truth.gamma1[r]),
                                    format_double(truth.gamma_phi[r])};
    for (const auto& level : truth.rtn_states) row.push_back(std::to_string(int(level[r])));
    t.append_row(row);
  }
  std::vector<std::string> desc = {"repetition index", "repetition start time, s",
                                   "true detuning, Hz", "true relaxation rate, 1/s",
                                   "true pure dephasing rate, 1/s"};
  for (std::size_t k = 0; k < truth.rtn_states.size(); ++k)
    desc.push_back("telegraph level " + std::to_string(k) + " state (0 low, 1 high)");
  write_table(path, t, desc);
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
  const Table t = read_table(path);
  GroundTruth truth;
  const std::size_t rows = t.rows();
  const std::size_t df = t.column_index("delta_f_hz");
  const std::size_t g1 = t.column_index("gamma1");
  const std::size_t gp = t.column_index("gamma_phi");
  std::vector<std::size_t> state_cols;
  for (std::size_t c = 0; c < t.columns.size(); ++c)
    if (t.columns[c].rfind("state_", 0) == 0) state_cols.push_back(c);
  truth.rtn_states.assign(state_cols.size(), std::vector<signed char>(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    truth.delta_f_hz.push_back(t.number_at(r, df));
    truth.gamma1.push_back(t.number_at(r, g1));
    truth.gamma_phi.push_back(t.number_at(r, gp));
    for (std::size_t k = 0; k < state_cols.size(); ++k)
      truth.rtn_states[k][r] = static_cast<signed char>(t.number_at(r, state_cols[k]));
  }
  return truth;
}

}  // namespace qfluct
