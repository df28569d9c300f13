// Command-line front end: model building, solving, simulation and sweeps.
// Every subcommand writes JSON/CSV artifacts under --out and prints a short
// JSON summary to stdout; failures exit nonzero with a JSON error on stderr.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mmla/io.hpp"
#include "mmla/model_build.hpp"
#include "mmla/sim.hpp"

namespace {

using namespace mmla;

constexpr const char* kResultsHeader =
    "policy,mode,episodes,truncated,spectral_efficiency,se_ci95,avg_power_w,avg_power_ci95_w,"
    "avg_power_dbm,throughput_bps,throughput_ci95_bps,mean_bits,mean_joules,mean_seconds\n";

ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return ExperimentConfig{};
  return ExperimentConfig::from_json(read_json_file(path));
}

std::filesystem::path prep_out(const std::string& out) {
  if (out.empty()) throw std::runtime_error("--out <dir> is required");
  const std::filesystem::path p(out);
  std::filesystem::create_directories(p);
  return p;
}

SimMode parse_mode(const std::string& mode) {
  if (mode == "sectored") return SimMode::kSectored;
  if (mode == "analog") return SimMode::kAnalog;
  throw std::runtime_error("unknown --mode '" + mode + "' (expected sectored|analog)");
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

const char* class_name(ActionClass c) {
  switch (c) {
    case ActionClass::kHo: return "ho";
    case ActionClass::kBt: return "bt";
    case ActionClass::kDt: return "dt";
  }
  return "?";
}

void append_metrics(std::ostringstream& csv, const EvalResult& r) {
  csv << format_double(r.se.value) << ',' << format_double(r.se.ci95) << ','
      << format_double(r.power_w.value) << ',' << format_double(r.power_w.ci95) << ','
      << format_double(watt_to_dbm(r.power_w.value)) << ','
      << format_double(r.throughput_bps.value) << ',' << format_double(r.throughput_bps.ci95)
      << ',' << format_double(r.bits.value) << ',' << format_double(r.joules.value) << ','
      << format_double(r.seconds.value);
}

void append_metrics_short(std::ostringstream& csv, const EvalResult& r) {
  csv << format_double(r.se.value) << ',' << format_double(r.se.ci95) << ','
      << format_double(r.power_w.value) << ',' << format_double(r.power_w.ci95) << ','
      << format_double(watt_to_dbm(r.power_w.value));
}

nlohmann::json metrics_json(const EvalResult& r) {
  nlohmann::json j;
  j["episodes"] = r.episodes;
  j["truncated"] = r.truncated;
  j["spectral_efficiency"] = r.se.value;
  j["se_ci95"] = r.se.ci95;
  j["avg_power_w"] = r.power_w.value;
  j["avg_power_ci95_w"] = r.power_w.ci95;
  j["throughput_bps"] = r.throughput_bps.value;
  j["throughput_ci95_bps"] = r.throughput_bps.ci95;
  return j;
}

void write_trace_csv(const std::filesystem::path& path,
                     const std::vector<EpisodeTrace>& traces) {
  std::ostringstream csv;
  csv << "episode,slot,u,bs,action,beam,duration,obs,bits,joules\n";
  for (std::size_t ep = 0; ep < traces.size(); ++ep)
    for (const TraceRow& r : traces[ep])
      csv << ep << ',' << r.slot << ',' << r.u << ',' << r.bs << ',' << class_name(r.cls) << ','
          << r.beam << ',' << r.duration << ',' << r.obs << ',' << format_double(r.bits) << ','
          << format_double(r.joules) << '\n';
  write_text_file(path.string(), csv.str());
}

int cmd_build_model(const std::string& config_path, const std::string& out,
                    std::uint64_t seed, bool seed_set) {
  ExperimentConfig cfg = load_config(config_path);
  if (seed_set) cfg.seed = seed;
  const auto dir = prep_out(out);
  const BuiltModel bm = build_model(cfg);
  write_text_file((dir / "model.json").string(), dump(model_to_json(bm, cfg)));
  write_text_file((dir / "calibration.json").string(),
                  dump(calibration_report_json(bm.codebook, bm.calibration)));
  nlohmann::json s;
  s["pairs"] = bm.model.chain.n_pairs();
  s["states"] = bm.model.chain.n_u();
  s["sbpi_count"] = {bm.model.sbpi_sets[0].size(), bm.model.sbpi_sets[1].size()};
  s["actions"] = {bm.model.actions[0].size(), bm.model.actions[1].size()};
  s["mean_duration_s"] = bm.model.d_tot_s;
  s["config_hash"] = bm.model.config_hash;
  s["out"] = dir.string();
  std::cout << s.dump() << "\n";
  return 0;
}

int cmd_solve(const std::string& model_path, const std::string& out, double p_avg_dbm,
              bool p_avg_set, bool unconstrained, double lambda0, bool lambda0_set,
              std::uint64_t seed, bool seed_set) {
  ExperimentConfig cfg;
  BuiltModel bm = model_from_json(read_json_file(model_path), &cfg);
  if (seed_set) cfg.seed = seed;
  if (unconstrained) cfg.constrained = false;
  if (p_avg_set) {
    cfg.constrained = true;
    cfg.p_avg_dbm = p_avg_dbm;
  }
  if (lambda0_set) cfg.solver.lambda0 = lambda0;
  const auto dir = prep_out(out);

  const PlanningProblem prob = PlanningProblem::from_model(bm.model);
  PolicyArtifact art = cpbvi(prob, solver_params(cfg, bm.model));
  art.config_hash = bm.model.config_hash;
  write_text_file((dir / "policy.json").string(), dump(policy_to_json(art)));
  write_text_file((dir / "convergence.csv").string(), convergence_csv(art.log));

  nlohmann::json s;
  s["converged"] = art.converged;
  s["iterations"] = art.iterations;
  s["lambda"] = art.lambda;
  s["residual_v"] = art.residual_v;
  s["hyperplanes"] = {art.q[0].size(), art.q[1].size()};
  if (!art.log.empty()) {
    s["avg_power_w"] = art.log.back().avg_power_w;
    s["spectral_efficiency"] = art.log.back().spectral_efficiency;
  }
  s["out"] = dir.string();
  std::cout << s.dump() << "\n";
  return 0;
}

int cmd_simulate(const std::string& model_path, const std::string& policy_path,
                 std::vector<std::string> policies, const std::string& mode_str, int episodes,
                 std::uint64_t seed, bool seed_set, const std::string& out, int trace_n) {
  ExperimentConfig cfg;
  BuiltModel bm = model_from_json(read_json_file(model_path), &cfg);
  if (seed_set) cfg.seed = seed;
  const SimMode mode = parse_mode(mode_str);
  const auto dir = prep_out(out);
  if (episodes <= 0) episodes = cfg.n_episodes;

  PolicyArtifact art;
  bool have_art = false;
  if (!policy_path.empty()) {
    art = policy_from_json(read_json_file(policy_path));
    if (art.config_hash != bm.model.config_hash)
      throw std::runtime_error("policy/model config hash mismatch; rebuild or re-solve");
    have_art = true;
  }
  if (policies.empty()) {
    policies = {"bheu", "fsm", "baseline", "genie"};
    if (have_art) policies.insert(policies.begin(), "cpbvi");
  }

  const std::uint64_t sim_seed = substream_seed(cfg.seed, kSimStream);
  std::ostringstream csv;
  csv << kResultsHeader;
  nlohmann::json s;
  for (const std::string& name : policies) {
    if (name == "cpbvi" && !have_art)
      throw std::runtime_error("policy 'cpbvi' needs --policy-file <policy.json>");
    auto pol = make_policy(name, bm.model, cfg, have_art ? &art : nullptr);
    const EvalResult r = evaluate(bm, cfg, *pol, mode, episodes, sim_seed);
    csv << name << ',' << mode_str << ',' << r.episodes << ',' << r.truncated << ',';
    append_metrics(csv, r);
    csv << '\n';
    s[name] = metrics_json(r);

    if (trace_n > 0) {
      const SectoredSampler samp(bm.model.chain.one_step());
      std::vector<EpisodeTrace> traces(trace_n);
      for (int ep = 0; ep < trace_n; ++ep) {
        auto rng = make_rng(sim_seed, static_cast<std::uint64_t>(ep));
        if (mode == SimMode::kSectored)
          run_episode_sectored(bm.model, samp, *pol, cfg.max_slots, rng, &traces[ep]);
        else
          run_episode_analog(bm, cfg, *pol, cfg.max_slots, rng, &traces[ep]);
      }
      write_trace_csv(dir / ("trace_" + name + ".csv"), traces);
    }
  }
  write_text_file((dir / "results.csv").string(), csv.str());
  s["out"] = dir.string();
  std::cout << s.dump() << "\n";
  return 0;
}

int cmd_sweep(const std::string& axis, const std::string& config_path,
              const std::string& mode_str, std::vector<std::string> policies,
              std::vector<double> points, int episodes, std::uint64_t seed, bool seed_set,
              const std::string& out) {
  ExperimentConfig base = load_config(config_path);
  if (seed_set) base.seed = seed;
  const SimMode mode = parse_mode(mode_str);
  const auto dir = prep_out(out);
  if (episodes <= 0) episodes = base.n_episodes;

  const bool snr_axis = axis == "snr";
  if (!snr_axis && axis != "t-dt")
    throw std::runtime_error("unknown --axis '" + axis + "' (expected snr|t-dt)");
  if (policies.empty()) {
    policies = snr_axis ? std::vector<std::string>{"bheu", "fsm", "baseline", "genie"}
                        : std::vector<std::string>{"bheu", "fsm", "baseline"};
  }
  if (points.empty()) {
    points = snr_axis ? std::vector<double>{-12, -6, 0, 6, 12, 18}
                      : std::vector<double>{2, 5, 10, 20, 30, 40, 50};
  }

  // The chain and calibration depend on neither swept variable, so the
  // expensive build happens once and each point only re-derives the actions.
  const BuiltModel bm0 = build_model(base);

  std::ostringstream csv;
  csv << "policy," << (snr_axis ? "snr_pre_db" : "t_dt")
      << ",mode,status,spectral_efficiency,se_ci95,avg_power_w,avg_power_ci95_w,avg_power_dbm,"
         "error\n";
  for (const double point : points) {
    ExperimentConfig cfg = base;
    if (snr_axis)
      cfg.snr_pre_db = point;
    else
      cfg.heuristic_t_dt = static_cast<int>(point);
    cfg.validate();

    BuiltModel bm = bm0;
    apply_config(bm.model, cfg);
    bm.model.materialize_actions(cfg.action_grid());
    const std::uint64_t sim_seed = substream_seed(cfg.seed, kSimStream);

    for (const std::string& name : policies) {
      csv << name << ',';
      if (snr_axis)
        csv << format_double(point);
      else
        csv << static_cast<int>(point);
      csv << ',' << mode_str << ',';
      try {
        if (name == "cpbvi" && !snr_axis)
          throw std::runtime_error("cpbvi plans its own payload durations");
        PolicyArtifact art;
        if (name == "cpbvi") {
          art = cpbvi(PlanningProblem::from_model(bm.model), solver_params(cfg, bm.model));
          art.config_hash = bm.model.config_hash;
        }
        auto pol = make_policy(name, bm.model, cfg, &art);
        const EvalResult r = evaluate(bm, cfg, *pol, mode, episodes, sim_seed);
        csv << "ok,";
        append_metrics_short(csv, r);
        csv << ",\n";
      } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        csv << "error,,,,,," << msg << '\n';
      }
    }
  }
  const std::string fname = snr_axis ? "sweep_snr.csv" : "sweep_t_dt.csv";
  write_text_file((dir / fname).string(), csv.str());
  nlohmann::json s;
  s["axis"] = axis;
  s["points"] = points;
  s["policies"] = policies;
  s["out"] = (dir / fname).string();
  std::cout << s.dump() << "\n";
  return 0;
}

int cmd_linkstats(const std::string& config_path, const std::string& out) {
  const ExperimentConfig cfg = load_config(config_path);
  cfg.validate();
  const JointCodebook cb = build_codebooks(cfg.scene, cfg.arrays, cfg.n_bs_beams,
                                           cfg.n_ue_beams, cfg.grid_step, cfg.coverage_min_frac);
  const SectoredCalibration cal =
      calibrate_sectored(cb, cfg.resolved_sigma_dif_sq(), cfg.guard_m);

  const double snr = cfg.snr_target();
  const double rho = cfg.rho();
  nlohmann::json j;
  j["schema"] = 1;
  j["kind"] = "linkstats";
  j["snr_pre_db"] = cfg.snr_pre_db;
  j["snr_target"] = snr;
  j["rho"] = rho;
  j["symbols"] = cfg.symbols;
  j["kappa"] = cfg.kappa;

  std::set<int> ks(cfg.bt_window_sizes.begin(), cfg.bt_window_sizes.end());
  ks.insert(static_cast<int>(cal.bs[0].sbpi.size()));
  ks.insert(static_cast<int>(cal.bs[1].sbpi.size()));
  nlohmann::json bt = nlohmann::json::array();
  for (int k : ks) {
    const BtStats st = solve_bt_threshold(k, snr, cfg.symbols, rho);
    const BtOutcome on = bt_outcome_distribution(st, true);
    const BtOutcome off = bt_outcome_distribution(st, false);
    nlohmann::json e;
    e["k"] = k;
    e["eta"] = st.eta;
    e["delta"] = st.delta;
    e["active"] = {{"p_none", on.p_none}, {"p_hit", on.p_hit}, {"p_other_each", on.p_other_each}};
    e["inactive"] = {{"p_none", off.p_none}, {"p_other_each", off.p_other_each}};
    bt.push_back(std::move(e));
  }
  j["bt"] = std::move(bt);

  const DtStats ds = solve_dt_threshold(1, snr, cfg.heuristic_t_dt, cfg.kappa, cfg.symbols, rho);
  const DtOutcome dn = dt_feedback_distribution(ds, true);
  const DtOutcome doff = dt_feedback_distribution(ds, false);
  j["dt"] = {{"eta", ds.eta},
             {"delta", ds.delta},
             {"active", {{"p_ack", dn.p_ack}, {"p_none", dn.p_none}}},
             {"inactive", {{"p_ack", doff.p_ack}, {"p_none", doff.p_none}}}};

  const OutageTarget ot = optimal_outage_target(snr, cfg.kappa, cfg.bandwidth_hz);
  j["outage"] = {{"eps_star", ot.eps},
                 {"capacity_bps", ot.capacity},
                 {"throughput_bps", ot.throughput},
                 {"spectral_efficiency", ot.throughput / cfg.bandwidth_hz}};

  const std::string text = dump(j);
  std::cout << text;
  if (!out.empty()) {
    const auto dir = prep_out(out);
    write_text_file((dir / "linkstats.json").string(), text);
  }
  return 0;
}

int cmd_analyze_fsm(const std::string& model_path, bool baseline, int t_dt,
                    const std::string& out) {
  ExperimentConfig cfg;
  const BuiltModel bm = model_from_json(read_json_file(model_path), &cfg);
  HeuristicGrid hg = cfg.heuristic_grid();
  if (t_dt > 0) hg.t_dt = t_dt;
  const FsmAnalysis fa = fsm_closed_form(bm.model, hg, baseline);

  const int n_u = bm.model.chain.n_u();
  nlohmann::json j;
  j["schema"] = 1;
  j["kind"] = "fsm-analysis";
  j["variant"] = baseline ? "baseline" : "fsm";
  j["t_dt"] = hg.t_dt;
  j["d_tot_s"] = bm.model.d_tot_s;
  nlohmann::json blocks = nlohmann::json::array();
  for (std::size_t g = 0; g < fa.nodes.size(); ++g) {
    nlohmann::json e;
    e["bs"] = fa.nodes[g].bs;
    e["mode"] = class_name(fa.nodes[g].cls);
    e["beam"] = fa.nodes[g].beam;
    e["r_bits"] = json_of_vector(fa.r_bits.segment(static_cast<long>(g) * n_u, n_u));
    e["e_joules"] = json_of_vector(fa.e_joules.segment(static_cast<long>(g) * n_u, n_u));
    blocks.push_back(std::move(e));
  }
  j["states"] = std::move(blocks);
  const double w = cfg.bandwidth_hz;
  j["entry"] = {{"state", fa.initial_state},
                {"r_bits", fa.r0_bits},
                {"e_joules", fa.e0_joules},
                {"spectral_efficiency", fa.r0_bits / (bm.model.d_tot_s * w)},
                {"avg_power_w", fa.e0_joules / bm.model.d_tot_s},
                {"avg_power_dbm", watt_to_dbm(fa.e0_joules / bm.model.d_tot_s)}};

  const std::string text = dump(j);
  std::cout << text;
  if (!out.empty()) {
    const auto dir = prep_out(out);
    write_text_file((dir / (baseline ? std::string("fsm_baseline.json")
                                     : std::string("fsm_analysis.json")))
                        .string(),
                    text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"millimeter-wave vehicular link adaptation toolkit"};
  app.require_subcommand(1);

  std::string config_path, model_path, policy_path, out, mode = "sectored", axis = "snr";
  std::vector<std::string> policies;
  std::vector<double> points;
  std::uint64_t seed = 0;
  double p_avg_dbm = 0.0, lambda0 = 0.0;
  bool unconstrained = false, baseline = false;
  int episodes = 0, trace_n = 0, t_dt = 0;

  auto* build = app.add_subcommand("build-model", "estimate the sectored model from geometry");
  build->add_option("--config", config_path, "experiment config JSON");
  auto* bseed = build->add_option("--seed", seed, "master RNG seed override");
  build->add_option("--out", out, "output directory")->required();

  auto* solve = app.add_subcommand("solve", "run the constrained point-based solver");
  solve->add_option("--model", model_path, "model.json from build-model")->required();
  auto* spow = solve->add_option("--p-avg-dbm", p_avg_dbm, "average power budget override");
  solve->add_flag("--unconstrained", unconstrained, "drop the power constraint");
  auto* slam = solve->add_option("--lambda0", lambda0, "initial dual variable");
  auto* sseed = solve->add_option("--seed", seed, "master RNG seed override");
  solve->add_option("--out", out, "output directory")->required();

  auto* sim = app.add_subcommand("simulate", "Monte-Carlo policy evaluation");
  sim->add_option("--model", model_path, "model.json from build-model")->required();
  sim->add_option("--policy-file", policy_path, "policy.json from solve (enables cpbvi)");
  sim->add_option("--policies", policies, "policy list")->delimiter(',');
  sim->add_option("--mode", mode, "sectored|analog");
  sim->add_option("--episodes", episodes, "episode count override");
  auto* mseed = sim->add_option("--seed", seed, "master RNG seed override");
  sim->add_option("--trace", trace_n, "also write per-round traces for N episodes");
  sim->add_option("--out", out, "output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "policy metrics over a parameter grid");
  sweep->add_option("--axis", axis, "snr|t-dt");
  sweep->add_option("--config", config_path, "experiment config JSON");
  sweep->add_option("--mode", mode, "sectored|analog");
  sweep->add_option("--policies", policies, "policy list")->delimiter(',');
  sweep->add_option("--points", points, "grid points override")->delimiter(',');
  sweep->add_option("--episodes", episodes, "episode count override");
  auto* wseed = sweep->add_option("--seed", seed, "master RNG seed override");
  sweep->add_option("--out", out, "output directory")->required();

  auto* link = app.add_subcommand("linkstats", "closed-form feedback and throughput tables");
  link->add_option("--config", config_path, "experiment config JSON");
  link->add_option("--out", out, "optional output directory");

  auto* fsm = app.add_subcommand("analyze-fsm", "closed-form heuristic controller metrics");
  fsm->add_option("--model", model_path, "model.json from build-model")->required();
  fsm->add_flag("--baseline", baseline, "periodic retraining variant");
  fsm->add_option("--t-dt", t_dt, "payload duration override");
  fsm->add_option("--out", out, "optional output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed())
      return cmd_build_model(config_path, out, seed, bseed->count() > 0);
    if (solve->parsed())
      return cmd_solve(model_path, out, p_avg_dbm, spow->count() > 0, unconstrained, lambda0,
                       slam->count() > 0, seed, sseed->count() > 0);
    if (sim->parsed())
      return cmd_simulate(model_path, policy_path, policies, mode, episodes, seed,
                          mseed->count() > 0, out, trace_n);
    if (sweep->parsed())
      return cmd_sweep(axis, config_path, mode, policies, points, episodes, seed,
                       wseed->count() > 0, out);
    if (link->parsed()) return cmd_linkstats(config_path, out);
    if (fsm->parsed()) return cmd_analyze_fsm(model_path, baseline, t_dt, out);
  } catch (const std::exception& e) {
    std::cerr << error_json(e.what()) << "\n";
    return 1;
  }
  std::cerr << error_json("no subcommand") << "\n";
  return 2;
}
