// cvrctl: command-line front end for the CVR toolkit.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "cvr/linear_pf.hpp"
#include "cvr/milp.hpp"
#include "cvr/oracle.hpp"
#include "cvr/sim.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace cvr;

namespace {

constexpr const char* kToolVersion = "1.0.0";

enum Exit { kOk = 0, kInput = 1, kSolve = 2, kInternal = 3 };

std::string default_profiles(const std::string& feeder) {
  fs::path f(feeder);
  return (f.parent_path() / (f.stem().string() + ".profiles.csv")).string();
}

std::string hex64(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

fs::path output_root(const std::string& explicit_out) {
  if (!explicit_out.empty()) return explicit_out;
  const char* env = std::getenv("CVR_OUTPUT_ROOT");
  fs::path root = env && *env ? fs::path(env) : fs::path("runs");
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::gmtime(&now));
  return root / stamp;
}

void write_manifest(const fs::path& dir, const std::string& command, const std::string& config_text,
                    const std::string& feeder_path, std::uint64_t seed, const std::vector<std::string>& outputs) {
  json m;
  m["command"] = command;
  m["config_hash"] = hex64(fnv1a(config_text));
  m["feeder_hash"] = hex64(fnv1a(read_text_file(feeder_path)));
  m["seed"] = seed;
  m["tool_version"] = kToolVersion;
  m["outputs"] = outputs;
  std::ofstream(dir / "manifest.json", std::ios::binary) << m.dump(2) << '\n';
}

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// --- validate ---------------------------------------------------------------

int cmd_validate(const std::string& feeder, std::string profiles) {
  const FeederModel model = load_feeder(feeder);
  if (profiles.empty()) profiles = default_profiles(feeder);
  if (!model.pvs.empty()) {
    if (!fs::exists(profiles)) throw InputError("profile file '" + profiles + "' not found");
    check_profile_refs(model, ProfileSet::load_csv(profiles));
  }
  std::cout << "ok: " << model.buses.size() << " buses, " << model.lines.size() << " lines, " << model.regulators.size()
            << " regulators, " << model.capacitors.size() << " capacitors, " << model.loads.size() << " loads, "
            << model.pvs.size() << " pv units\n";
  return kOk;
}

// --- powerflow --------------------------------------------------------------

OperatingPoint operating_point(const FeederModel& model, double load_scale, double pv_fraction) {
  OperatingPoint op;
  op.load_scale = load_scale;
  op.pv_p.assign(model.pvs.size(), PerPhase<double>{});
  for (std::size_t u = 0; u < model.pvs.size(); ++u)
    for (Phase p : kAllPhases)
      if (model.pvs[u].phases.has(p)) op.pv_p[u][index(p)] = pv_fraction * model.pvs[u].p_max;
  return op;
}

int cmd_powerflow(const std::string& feeder, const std::string& method, double load_scale, double pv_fraction,
                  const std::string& out) {
  const FeederModel model = load_feeder(feeder);
  const OperatingPoint op = operating_point(model, load_scale, pv_fraction);
  const ControlSetpoints controls = ControlSetpoints::neutral(model);
  std::optional<LinearPfSolution> lin;
  std::optional<ComplexState> exact;
  if (method == "linear" || method == "compare") lin = solve_linear_pf(model, op, controls);
  if (method == "oracle" || method == "compare") exact = sweep_solve(model, op, controls);

  std::ostringstream csv;
  csv << "bus,phase" << (lin ? ",v_linear" : "") << (exact ? ",v_oracle" : "") << '\n';
  for (std::size_t b = 0; b < model.buses.size(); ++b)
    for (Phase p : kAllPhases) {
      if (!model.buses[b].phases.has(p)) continue;
      csv << model.buses[b].id << ',' << to_char(p);
      if (lin) csv << ',' << fmt(lin->magnitude(b, p), "%.10f");
      if (exact) csv << ',' << fmt(exact->magnitude(b, p), "%.10f");
      csv << '\n';
    }
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream(fs::path(out) / "voltages.csv", std::ios::binary) << csv.str();
    write_manifest(out, "powerflow --method " + method, "load_scale=" + fmt(load_scale) + ";pv=" + fmt(pv_fraction),
                   feeder, 0, {"voltages.csv"});
  } else {
    std::cout << csv.str();
  }
  if (method == "compare") {
    const OracleComparison c = compare_with_oracle(model, op, controls);
    std::cout << "max_dv_pu " << fmt(c.max_dv, "%.6g") << "\nmax_ds_pct " << fmt(c.max_ds_pct, "%.6g") << '\n';
  }
  return kOk;
}

// --- opf --------------------------------------------------------------------

int cmd_opf(const std::string& feeder, std::string profiles, double forecast_minute, double pv_fraction,
            double load_scale, std::optional<double> vmin, std::optional<double> vmax, double vmin_margin,
            double q_reserve, const std::string& mps) {
  FeederModel model = load_feeder(feeder);
  if (vmin || vmax)
    for (Bus& b : model.buses) {
      if (vmin) b.vmin = *vmin;
      if (vmax) b.vmax = *vmax;
    }
  OperatingPoint op = operating_point(model, load_scale, pv_fraction >= 0.0 ? pv_fraction : 0.0);
  if (pv_fraction < 0.0 && !model.pvs.empty()) {
    if (profiles.empty()) profiles = default_profiles(feeder);
    const ProfileSet ps = ProfileSet::load_csv(profiles);
    check_profile_refs(model, ps);
    for (std::size_t u = 0; u < model.pvs.size(); ++u)
      for (Phase p : kAllPhases)
        if (model.pvs[u].phases.has(p))
          op.pv_p[u][index(p)] = std::clamp(ps.value(model.pvs[u].profile_ref, forecast_minute), 0.0, 1.0) * model.pvs[u].p_max;
  }
  MilpOptions mo;
  mo.load_scale = load_scale;
  mo.vmin_margin = vmin_margin;
  mo.q_reserve = q_reserve;
  const CvrMilp milp = build_cvr_milp(model, op.pv_p, nullptr, mo);
  if (!mps.empty()) {
    std::ofstream f(mps, std::ios::binary);
    if (!f) throw InputError("cannot write " + mps);
    write_mps(milp.problem, f);
  }
  const MilpSolution sol = branch_and_bound(milp.problem);
  if (!sol.has_incumbent) {
    std::cout << "status " << to_string(sol.status) << '\n';
    return kSolve;
  }
  const ControlSetpoints sp = extract_setpoints(model, milp, sol);
  const ComplexState opt = sweep_solve(model, op, sp);
  const ComplexState base = sweep_solve(model, op, ControlSetpoints::neutral(model));
  const double kw = model.base_kw_per_phase();

  json j;
  j["status"] = to_string(sol.status);
  j["objective_pu"] = sol.objective;
  j["branches"] = sol.branches;
  j["oracle_substation_kw"] = power_audit(model, op, sp, opt).source.real() * kw;
  j["neutral_substation_kw"] = power_audit(model, op, ControlSetpoints::neutral(model), base).source.real() * kw;
  json taps = json::object(), caps = json::object(), q = json::object(), vref = json::object();
  for (std::size_t r = 0; r < model.regulators.size(); ++r)
    for (Phase p : kAllPhases)
      if (model.regulators[r].phases.has(p)) taps[model.regulators[r].id + "." + to_char(p)] = sp.taps[r][index(p)];
  for (std::size_t c = 0; c < model.capacitors.size(); ++c)
    for (Phase p : kAllPhases)
      if (model.capacitors[c].phases.has(p)) caps[model.capacitors[c].id + "." + to_char(p)] = sp.cap_on[c][index(p)] ? 1 : 0;
  for (std::size_t u = 0; u < model.pvs.size(); ++u)
    for (Phase p : kAllPhases)
      if (model.pvs[u].phases.has(p)) q[model.pvs[u].id + "." + to_char(p)] = sp.pv_q[u][index(p)];
  for (std::size_t b = 0; b < model.buses.size(); ++b)
    for (Phase p : kAllPhases)
      if (model.buses[b].phases.has(p)) vref[model.buses[b].id + "." + to_char(p)] = sp.v_ref[b][index(p)];
  j["taps"] = taps;
  j["capacitors"] = caps;
  j["q_pu"] = q;
  j["v_ref_pu"] = vref;
  std::cout << j.dump(2) << '\n';
  return kOk;
}

// --- simulate ---------------------------------------------------------------

int cmd_simulate(const std::vector<std::string>& configs, int jobs, const std::string& out) {
  const fs::path root = output_root(out);
  std::vector<ScenarioConfig> parsed;
  for (const std::string& c : configs) parsed.push_back(ScenarioConfig::load(c));
  std::vector<std::string> names;
  for (const auto& c : parsed) names.push_back(c.name);
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end()) throw InputError("scenario names must be unique");

  std::atomic<std::size_t> next{0};
  std::mutex io;
  std::vector<int> codes(parsed.size(), kOk);
  auto worker = [&] {
    for (std::size_t i = next++; i < parsed.size(); i = next++) {
      const ScenarioConfig& cfg = parsed[i];
      try {
        const FeederModel model = load_feeder(cfg.feeder);
        const ProfileSet profiles = ProfileSet::load_csv(cfg.profiles);
        const ScenarioResult res = run_two_timescale(cfg, model, profiles);
        const fs::path dir = parsed.size() == 1 && !out.empty() ? root : root / cfg.name;
        auto files = write_artifacts(model, res, dir);
        write_manifest(dir, "simulate", cfg.serialize(), cfg.feeder, cfg.seed, files);
        std::lock_guard lock(io);
        std::cout << cfg.name << ": median_pv_savfi " << fmt(res.metrics.median_pv_savfi, "%.6g") << ", violations "
                  << res.metrics.violations.node_phase_ticks << ", switching "
                  << res.metrics.tap_operations + res.metrics.cap_operations << " -> " << dir.string() << '\n';
      } catch (const SolveError& e) {
        std::lock_guard lock(io);
        std::cerr << cfg.name << ": " << e.what() << '\n';
        codes[i] = kSolve;
      } catch (const InputError& e) {
        std::lock_guard lock(io);
        std::cerr << cfg.name << ": " << e.what() << '\n';
        codes[i] = kInput;
      } catch (const std::exception& e) {
        std::lock_guard lock(io);
        std::cerr << cfg.name << ": internal error: " << e.what() << '\n';
        codes[i] = kInternal;
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(parsed.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return *std::max_element(codes.begin(), codes.end());
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conservation voltage reduction toolkit for unbalanced radial feeders"};
  app.require_subcommand(1);

  std::string feeder, profiles, method = "compare", out, mps;
  double load_scale = 1.0, pv_fraction = -1.0, forecast = 720.0, vmin_margin = 0.005, q_reserve = 0.3;
  std::optional<double> vmin, vmax;
  std::vector<std::string> configs;
  int jobs = 1;

  auto* validate = app.add_subcommand("validate", "Parse a feeder and check its invariants");
  validate->add_option("feeder", feeder, "Feeder file")->required();
  validate->add_option("--profiles", profiles, "Profile CSV (default: <feeder stem>.profiles.csv)");

  auto* pf = app.add_subcommand("powerflow", "Run the linear model, the sweep oracle, or compare them");
  pf->add_option("feeder", feeder, "Feeder file")->required();
  pf->add_option("--method", method, "linear | oracle | compare")->check(CLI::IsMember({"linear", "oracle", "compare"}));
  pf->add_option("--load-scale", load_scale, "Multiplier on every load");
  pf->add_option("--pv-fraction", pv_fraction, "PV output as a fraction of rating (default 0)");
  pf->add_option("--out", out, "Directory for voltages.csv (default: stdout)");

  auto* opf = app.add_subcommand("opf", "Solve the centralized CVR MILP for one interval");
  opf->add_option("feeder", feeder, "Feeder file")->required();
  opf->add_option("--profiles", profiles, "Profile CSV (default: <feeder stem>.profiles.csv)");
  opf->add_option("--forecast", forecast, "Minute of day whose profile value is the PV forecast");
  opf->add_option("--pv-fraction", pv_fraction, "Fixed PV forecast as a fraction of rating (overrides --forecast)");
  opf->add_option("--load-scale", load_scale, "Multiplier on every load");
  opf->add_option("--vmin", vmin, "Override every bus lower voltage bound (pu)");
  opf->add_option("--vmax", vmax, "Override every bus upper voltage bound (pu)");
  opf->add_option("--vmin-margin", vmin_margin, "Tighten voltage bounds by this many pu");
  opf->add_option("--q-reserve", q_reserve, "Fraction of inverter reactive capability kept out of the plan");
  opf->add_option("--dump-mps", mps, "Write the MILP in fixed MPS layout");

  auto* sim = app.add_subcommand("simulate", "Run two-timescale scenarios from key=value configs");
  sim->add_option("configs", configs, "Scenario config files")->required();
  sim->add_option("--jobs", jobs, "Scenarios to run in parallel")->check(CLI::PositiveNumber);
  sim->add_option("--out", out, "Output directory (default: $CVR_OUTPUT_ROOT or ./runs, timestamped)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInput;
  }

  try {
    if (*validate) return cmd_validate(feeder, profiles);
    if (*pf) return cmd_powerflow(feeder, method, load_scale, std::max(0.0, pv_fraction), out);
    if (*opf) return cmd_opf(feeder, profiles, forecast, pv_fraction, load_scale, vmin, vmax, vmin_margin, q_reserve, mps);
    if (*sim) return cmd_simulate(configs, jobs, out);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const SolveError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSolve;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}
