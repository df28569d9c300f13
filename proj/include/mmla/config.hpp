#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmla/geometry.hpp"
#include "mmla/mobility.hpp"
#include "mmla/policies.hpp"
#include "mmla/pomdp.hpp"

namespace mmla {

namespace detail {

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

inline void expect_keys(const nlohmann::json& j, const char* where,
                        std::initializer_list<const char*> keys) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool known = false;
    for (const char* k : keys)
      if (key == k) {
        known = true;
        break;
      }
    if (!known)
      throw std::invalid_argument(std::string("config: unknown key '") + key + "' in " + where);
  }
}

}  // namespace detail

struct SolverConfig {
  double lambda0 = 0.0;
  double gamma0 = 1.0;
  double eps_v = 0.01;
  double eps_e = 0.01;
  int stable_iters = 1;
  int max_iters = 2000;
  int belief_size = -1;  // -1: full deterministic seed construction
  int ssea_passes = 2;
};

/// Everything one experiment needs, loadable from a single JSON document.
/// Absent keys fall back to the reference deployment.
struct ExperimentConfig {
  SceneGeometry scene;
  ArrayConfig arrays;
  int n_bs_beams = 8;
  int n_ue_beams = 8;
  double grid_step = 0.25;
  double coverage_min_frac = 0.5;

  double noise_psd_dbm = -174.0;
  double bandwidth_hz = 100e6;
  double noise_figure_db = 10.0;
  double sigma_dif_sq = -1.0;  // < 0: derived below
  double rho_db = -15.0;
  double symbols = 100.0;
  double kappa = 0.01;

  MobilityParams mobility;
  BlockageParams blockage;

  double guard_m = -1.0;  // < 0: one BS-beam sector width
  int n_trajectories = 10000;

  bool constrained = true;
  double p_avg_dbm = 16.0;
  double snr_pre_db = 18.0;

  std::vector<int> t_dt_values = {20, 30, 40, 50};
  std::vector<int> bt_window_sizes = {2, 4};
  int t_ho = 1;

  int heuristic_t_dt = 10;
  BheuParams bheu;

  SolverConfig solver;

  int n_episodes = 10000;
  long max_slots = 1000000;
  std::uint64_t seed = 1;

  /// Diffuse power defaults 20 dB below the inverse pathloss at 10 m so the
  /// non-LOS floor sits well under any aligned beam.
  double resolved_sigma_dif_sq() const {
    if (sigma_dif_sq >= 0.0) return sigma_dif_sq;
    return 0.01 / pathloss(10.0, scene.wavelength());
  }

  ChannelParams channel() const {
    ChannelParams c;
    c.noise_psd_w_hz = dbm_to_watt(noise_psd_dbm);
    c.bandwidth_hz = bandwidth_hz;
    c.noise_figure_lin = db_to_lin(noise_figure_db);
    c.sigma_dif_sq = resolved_sigma_dif_sq();
    return c;
  }

  /// Per-beam target SNR: pre-beamforming SNR scaled by the full array gain.
  double snr_target() const {
    return db_to_lin(snr_pre_db) * arrays.bs.size() * arrays.ue.size();
  }

  double p_avg_w() const {
    return constrained ? dbm_to_watt(p_avg_dbm) : std::numeric_limits<double>::infinity();
  }

  double rho() const { return db_to_lin(rho_db); }

  ActionGrid action_grid() const {
    return {{snr_target()}, t_dt_values, bt_window_sizes, t_ho};
  }

  HeuristicGrid heuristic_grid() const {
    return {snr_target(), snr_target(), heuristic_t_dt, t_ho};
  }

  void validate() const {
    scene.validate();
    arrays.validate();
    mobility.validate();
    if (n_bs_beams < 1 || n_ue_beams < 1)
      throw std::invalid_argument("config: beam counts must be >= 1");
    if (!(grid_step > 0.0 && grid_step <= 0.25))
      throw std::invalid_argument("config: grid_step must be in (0, 0.25]");
    if (coverage_min_frac < 0.0 || coverage_min_frac > 1.0)
      throw std::invalid_argument("config: coverage_min_frac must be in [0, 1]");
    if (bandwidth_hz <= 0.0) throw std::invalid_argument("config: bandwidth must be > 0");
    if (symbols <= 0.0) throw std::invalid_argument("config: symbols must be > 0");
    if (!(kappa > 0.0 && kappa < 1.0))
      throw std::invalid_argument("config: kappa must be in (0, 1)");
    if (rho() >= 1.0) throw std::invalid_argument("config: rho must be < 1 linear");
    if (!(blockage.pi0 >= 0.0 && blockage.pi0 < 1.0))
      throw std::invalid_argument("config: pi0 must be in [0, 1)");
    if (blockage.d0 < mobility.delta_t)
      throw std::invalid_argument("config: blockage timescale below one slot");
    if (n_trajectories < 1 || n_episodes < 1 || max_slots < 1)
      throw std::invalid_argument("config: trajectory/episode/slot counts must be >= 1");
    if (t_ho < 1 || heuristic_t_dt < 2)
      throw std::invalid_argument("config: t_ho >= 1 and heuristic t_dt >= 2 required");
    for (int t : t_dt_values)
      if (t < 2) throw std::invalid_argument("config: DT durations must be >= 2");
    if (t_dt_values.empty()) throw std::invalid_argument("config: empty DT duration grid");
    for (int w : bt_window_sizes)
      if (w < 1) throw std::invalid_argument("config: BT window sizes must be >= 1");
    for (double e : {bheu.eta1, bheu.eta2, bheu.eta3})
      if (!(e >= 0.0 && e <= 1.0))
        throw std::invalid_argument("config: thresholds must be in [0, 1]");
    if (solver.gamma0 < 0.0 || solver.eps_v <= 0.0 || solver.eps_e <= 0.0 ||
        solver.stable_iters < 1 || solver.max_iters < 1 || solver.ssea_passes < 0)
      throw std::invalid_argument("config: bad solver parameters");
    if (constrained && p_avg_dbm > 200.0)
      throw std::invalid_argument("config: p_avg out of range, use null for unconstrained");
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    using detail::expect_keys;
    using detail::get_or;
    ExperimentConfig c;
    expect_keys(j, "root",
                {"scene", "arrays", "codebook", "channel", "mobility", "blockage",
                 "calibration", "model", "radio", "actions", "heuristics", "solver", "sim",
                 "seed"});
    if (j.contains("scene")) {
      const auto& s = j.at("scene");
      expect_keys(s, "scene",
                  {"segment_length", "lane_count", "lane_spacing", "bs_lateral", "bs_height",
                   "ue_height", "carrier_hz"});
      c.scene.segment_length = get_or(s, "segment_length", c.scene.segment_length);
      c.scene.lane_count = get_or(s, "lane_count", c.scene.lane_count);
      c.scene.lane_spacing = get_or(s, "lane_spacing", c.scene.lane_spacing);
      c.scene.bs_lateral = get_or(s, "bs_lateral", c.scene.bs_lateral);
      c.scene.bs_height = get_or(s, "bs_height", c.scene.bs_height);
      c.scene.ue_height = get_or(s, "ue_height", c.scene.ue_height);
      c.scene.carrier_hz = get_or(s, "carrier_hz", c.scene.carrier_hz);
    }
    if (j.contains("arrays")) {
      const auto& a = j.at("arrays");
      expect_keys(a, "arrays", {"bs", "ue"});
      for (const char* side : {"bs", "ue"}) {
        if (!a.contains(side)) continue;
        const auto& f = a.at(side);
        expect_keys(f, side, {"rows_z", "cols_y", "spacing_wl"});
        ArrayFace& face = side == std::string("bs") ? c.arrays.bs : c.arrays.ue;
        face.rows_z = get_or(f, "rows_z", face.rows_z);
        face.cols_y = get_or(f, "cols_y", face.cols_y);
        face.spacing_wl = get_or(f, "spacing_wl", face.spacing_wl);
      }
    }
    if (j.contains("codebook")) {
      const auto& b = j.at("codebook");
      expect_keys(b, "codebook", {"bs_beams", "ue_beams", "grid_step", "coverage_min_frac"});
      c.n_bs_beams = get_or(b, "bs_beams", c.n_bs_beams);
      c.n_ue_beams = get_or(b, "ue_beams", c.n_ue_beams);
      c.grid_step = get_or(b, "grid_step", c.grid_step);
      c.coverage_min_frac = get_or(b, "coverage_min_frac", c.coverage_min_frac);
    }
    if (j.contains("channel")) {
      const auto& ch = j.at("channel");
      expect_keys(ch, "channel",
                  {"noise_psd_dbm", "bandwidth_hz", "noise_figure_db", "sigma_dif_sq", "rho_db",
                   "symbols", "kappa"});
      c.noise_psd_dbm = get_or(ch, "noise_psd_dbm", c.noise_psd_dbm);
      c.bandwidth_hz = get_or(ch, "bandwidth_hz", c.bandwidth_hz);
      c.noise_figure_db = get_or(ch, "noise_figure_db", c.noise_figure_db);
      c.sigma_dif_sq = get_or(ch, "sigma_dif_sq", c.sigma_dif_sq);
      c.rho_db = get_or(ch, "rho_db", c.rho_db);
      c.symbols = get_or(ch, "symbols", c.symbols);
      c.kappa = get_or(ch, "kappa", c.kappa);
    }
    if (j.contains("mobility")) {
      const auto& m = j.at("mobility");
      expect_keys(m, "mobility", {"mu_v", "sigma_v", "gamma", "delta_t", "lane_change_prob"});
      c.mobility.mu_v = get_or(m, "mu_v", c.mobility.mu_v);
      c.mobility.sigma_v = get_or(m, "sigma_v", c.mobility.sigma_v);
      c.mobility.gamma = get_or(m, "gamma", c.mobility.gamma);
      c.mobility.delta_t = get_or(m, "delta_t", c.mobility.delta_t);
      c.mobility.lane_change_prob = get_or(m, "lane_change_prob", c.mobility.lane_change_prob);
    }
    if (j.contains("blockage")) {
      const auto& b = j.at("blockage");
      expect_keys(b, "blockage", {"pi0", "d0_s"});
      c.blockage.pi0 = get_or(b, "pi0", c.blockage.pi0);
      c.blockage.d0 = get_or(b, "d0_s", c.blockage.d0);
    }
    if (j.contains("calibration")) {
      const auto& g = j.at("calibration");
      expect_keys(g, "calibration", {"guard_m"});
      c.guard_m = get_or(g, "guard_m", c.guard_m);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      expect_keys(m, "model", {"trajectories"});
      c.n_trajectories = get_or(m, "trajectories", c.n_trajectories);
    }
    if (j.contains("radio")) {
      const auto& r = j.at("radio");
      expect_keys(r, "radio", {"p_avg_dbm", "snr_pre_db"});
      if (r.contains("p_avg_dbm") && r.at("p_avg_dbm").is_null())
        c.constrained = false;
      else
        c.p_avg_dbm = get_or(r, "p_avg_dbm", c.p_avg_dbm);
      c.snr_pre_db = get_or(r, "snr_pre_db", c.snr_pre_db);
    }
    if (j.contains("actions")) {
      const auto& a = j.at("actions");
      expect_keys(a, "actions", {"t_dt", "bt_windows", "t_ho"});
      c.t_dt_values = get_or(a, "t_dt", c.t_dt_values);
      c.bt_window_sizes = get_or(a, "bt_windows", c.bt_window_sizes);
      c.t_ho = get_or(a, "t_ho", c.t_ho);
    }
    if (j.contains("heuristics")) {
      const auto& h = j.at("heuristics");
      expect_keys(h, "heuristics", {"t_dt", "eta1", "eta2", "eta3"});
      c.heuristic_t_dt = get_or(h, "t_dt", c.heuristic_t_dt);
      c.bheu.eta1 = get_or(h, "eta1", c.bheu.eta1);
      c.bheu.eta2 = get_or(h, "eta2", c.bheu.eta2);
      c.bheu.eta3 = get_or(h, "eta3", c.bheu.eta3);
    }
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      expect_keys(s, "solver",
                  {"lambda0", "gamma0", "eps_v", "eps_e", "stable_iters", "max_iters",
                   "belief_size", "ssea_passes"});
      c.solver.lambda0 = get_or(s, "lambda0", c.solver.lambda0);
      c.solver.gamma0 = get_or(s, "gamma0", c.solver.gamma0);
      c.solver.eps_v = get_or(s, "eps_v", c.solver.eps_v);
      c.solver.eps_e = get_or(s, "eps_e", c.solver.eps_e);
      c.solver.stable_iters = get_or(s, "stable_iters", c.solver.stable_iters);
      c.solver.max_iters = get_or(s, "max_iters", c.solver.max_iters);
      c.solver.belief_size = get_or(s, "belief_size", c.solver.belief_size);
      c.solver.ssea_passes = get_or(s, "ssea_passes", c.solver.ssea_passes);
    }
    if (j.contains("sim")) {
      const auto& s = j.at("sim");
      expect_keys(s, "sim", {"episodes", "max_slots"});
      c.n_episodes = get_or(s, "episodes", c.n_episodes);
      c.max_slots = get_or(s, "max_slots", c.max_slots);
    }
    c.seed = get_or(j, "seed", c.seed);
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["scene"] = {{"segment_length", scene.segment_length},
                  {"lane_count", scene.lane_count},
                  {"lane_spacing", scene.lane_spacing},
                  {"bs_lateral", scene.bs_lateral},
                  {"bs_height", scene.bs_height},
                  {"ue_height", scene.ue_height},
                  {"carrier_hz", scene.carrier_hz}};
    j["arrays"] = {{"bs",
                    {{"rows_z", arrays.bs.rows_z},
                     {"cols_y", arrays.bs.cols_y},
                     {"spacing_wl", arrays.bs.spacing_wl}}},
                   {"ue",
                    {{"rows_z", arrays.ue.rows_z},
                     {"cols_y", arrays.ue.cols_y},
                     {"spacing_wl", arrays.ue.spacing_wl}}}};
    j["codebook"] = {{"bs_beams", n_bs_beams},
                     {"ue_beams", n_ue_beams},
                     {"grid_step", grid_step},
                     {"coverage_min_frac", coverage_min_frac}};
    j["channel"] = {{"noise_psd_dbm", noise_psd_dbm},   {"bandwidth_hz", bandwidth_hz},
                    {"noise_figure_db", noise_figure_db}, {"sigma_dif_sq", sigma_dif_sq},
                    {"rho_db", rho_db},                  {"symbols", symbols},
                    {"kappa", kappa}};
    j["mobility"] = {{"mu_v", mobility.mu_v},
                     {"sigma_v", mobility.sigma_v},
                     {"gamma", mobility.gamma},
                     {"delta_t", mobility.delta_t},
                     {"lane_change_prob", mobility.lane_change_prob}};
    j["blockage"] = {{"pi0", blockage.pi0}, {"d0_s", blockage.d0}};
    j["calibration"] = {{"guard_m", guard_m}};
    j["model"] = {{"trajectories", n_trajectories}};
    j["radio"] = {{"p_avg_dbm", constrained ? nlohmann::json(p_avg_dbm) : nlohmann::json()},
                  {"snr_pre_db", snr_pre_db}};
    j["actions"] = {{"t_dt", t_dt_values}, {"bt_windows", bt_window_sizes}, {"t_ho", t_ho}};
    j["heuristics"] = {{"t_dt", heuristic_t_dt},
                       {"eta1", bheu.eta1},
                       {"eta2", bheu.eta2},
                       {"eta3", bheu.eta3}};
    j["solver"] = {{"lambda0", solver.lambda0},   {"gamma0", solver.gamma0},
                   {"eps_v", solver.eps_v},       {"eps_e", solver.eps_e},
                   {"stable_iters", solver.stable_iters}, {"max_iters", solver.max_iters},
                   {"belief_size", solver.belief_size}, {"ssea_passes", solver.ssea_passes}};
    j["sim"] = {{"episodes", n_episodes}, {"max_slots", max_slots}};
    j["seed"] = seed;
    return j;
  }

  std::uint64_t hash() const { return detail::fnv1a64(to_json().dump()); }
};

}  // namespace mmla
