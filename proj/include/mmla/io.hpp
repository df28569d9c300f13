#pragma once

#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmla/config.hpp"
#include "mmla/model_build.hpp"
#include "mmla/solver.hpp"

namespace mmla {

inline constexpr int kModelSchema = 1;
inline constexpr int kPolicySchema = 1;

/// Shortest round-trip decimal form, deterministic across runs.
inline std::string format_double(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, p);
}

inline nlohmann::json json_of_matrix(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_of_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("matrix_of_json: expected rows");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j.at(i).size()) != cols)
      throw std::invalid_argument("matrix_of_json: ragged rows");
    for (int c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  }
  return m;
}

/// Sparse [row, col, value] triplets; zeros are dropped. Estimated chains are
/// mostly banded, so this is much smaller than the dense form.
inline nlohmann::json triplets_of_matrix(const Eigen::MatrixXd& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  nlohmann::json t = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i)
    for (int c = 0; c < m.cols(); ++c)
      if (m(i, c) != 0.0) t.push_back(nlohmann::json::array({i, c, m(i, c)}));
  j["triplets"] = std::move(t);
  return j;
}

inline Eigen::MatrixXd matrix_of_triplets(const nlohmann::json& j) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(j.at("rows").get<int>(), j.at("cols").get<int>());
  for (const auto& t : j.at("triplets")) {
    const int r = t.at(0).get<int>();
    const int c = t.at(1).get<int>();
    if (r < 0 || r >= m.rows() || c < 0 || c >= m.cols())
      throw std::invalid_argument("matrix_of_triplets: index out of range");
    m(r, c) = t.at(2).get<double>();
  }
  return m;
}

inline nlohmann::json json_of_vector(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Eigen::VectorXd vector_of_json(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j.at(i).get<double>();
  return v;
}

inline nlohmann::json calibration_to_json(const SectoredCalibration& c) {
  nlohmann::json j;
  j["sigma_dif_sq"] = c.sigma_dif_sq;
  j["guard_m"] = c.guard_m;
  for (int bs = 0; bs < 2; ++bs) {
    nlohmann::json p;
    p["sbpi"] = c.bs[bs].sbpi;
    p["upsilon"] = c.bs[bs].upsilon;
    p["sidelobe"] = c.bs[bs].sidelobe;
    p["rho"] = c.bs[bs].rho;
    j["bs"].push_back(std::move(p));
  }
  return j;
}

inline SectoredCalibration calibration_from_json(const nlohmann::json& j) {
  SectoredCalibration c;
  c.sigma_dif_sq = j.at("sigma_dif_sq").get<double>();
  c.guard_m = j.at("guard_m").get<double>();
  for (int bs = 0; bs < 2; ++bs) {
    const auto& p = j.at("bs").at(bs);
    c.bs[bs].sbpi = p.at("sbpi").get<std::vector<int>>();
    c.bs[bs].upsilon = p.at("upsilon").get<std::vector<double>>();
    c.bs[bs].sidelobe = p.at("sidelobe").get<std::vector<double>>();
    c.bs[bs].rho = p.at("rho").get<double>();
  }
  return c;
}

/// Human-readable calibration summary: per-BS regional gains and the guard
/// ratio in dB, plus the BPI -> (BS beam, UE beam) index map. Written next to
/// the model for inspection; the model file keeps linear values.
inline nlohmann::json calibration_report_json(const JointCodebook& cb,
                                              const SectoredCalibration& c) {
  nlohmann::json j;
  j["schema"] = 1;
  j["kind"] = "calibration";
  j["guard_m"] = c.guard_m;
  j["sigma_dif_sq"] = c.sigma_dif_sq;
  for (int bs = 0; bs < 2; ++bs) {
    nlohmann::json p;
    p["sbpi"] = c.bs[bs].sbpi;
    nlohmann::json ups = nlohmann::json::array();
    for (double u : c.bs[bs].upsilon) ups.push_back(lin_to_db(u));
    p["upsilon_db"] = std::move(ups);
    p["rho_db"] = lin_to_db(c.bs[bs].rho);
    nlohmann::json beams;
    for (int bpi : c.bs[bs].sbpi) {
      const auto [ci, fi] = cb.beam_indices(bpi);
      beams[std::to_string(bpi)] = nlohmann::json::array({ci, fi});
    }
    p["beam_indices"] = std::move(beams);
    j["bs"].push_back(std::move(p));
  }
  return j;
}

inline nlohmann::json action_to_json(const ActionSlice& sl) {
  nlohmann::json j;
  j["class"] = sl.spec.cls == ActionClass::kHo   ? "ho"
               : sl.spec.cls == ActionClass::kBt ? "bt"
                                                 : "dt";
  j["bpis"] = sl.spec.bpis;
  j["snr"] = sl.spec.snr;
  j["duration"] = sl.spec.duration;
  j["eta"] = sl.eta;
  j["delta"] = sl.delta;
  j["energy_j"] = sl.energy_j;
  return j;
}

/// Everything needed to reproduce the planning model without re-estimating:
/// the config (codebooks rebuild deterministically from it), the estimated
/// chain, the measured calibration and the traversal-time estimate. The
/// kernel factors themselves are derived state and are not stored.
inline nlohmann::json model_to_json(const BuiltModel& bm, const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["schema"] = kModelSchema;
  j["kind"] = "model";
  j["config"] = cfg.to_json();
  j["config_hash"] = cfg.hash();
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [s0, s1] : bm.model.chain.pairs) pairs.push_back({s0, s1});
  j["chain"]["pairs"] = std::move(pairs);
  j["chain"]["s_matrix"] = triplets_of_matrix(bm.model.chain.s_matrix);
  for (int bs = 0; bs < 2; ++bs)
    j["chain"]["blockage"].push_back(json_of_matrix(bm.model.chain.blockage[bs]));
  j["calibration"] = calibration_to_json(bm.calibration);
  j["d_tot_s"] = bm.model.d_tot_s;
  j["entry_pair_index"] = bm.model.entry_pair_index;
  j["initial_bs"] = bm.model.initial_bs;
  j["visits"] = bm.visits;
  for (int bs = 0; bs < 2; ++bs) {
    nlohmann::json acts = nlohmann::json::array();
    for (const auto& sl : bm.model.actions[bs]) acts.push_back(action_to_json(*sl));
    j["actions"].push_back(std::move(acts));
  }
  return j;
}

inline BuiltModel model_from_json(const nlohmann::json& j, ExperimentConfig* cfg_out = nullptr) {
  if (j.at("schema").get<int>() != kModelSchema)
    throw std::invalid_argument("model_from_json: unsupported schema");
  const ExperimentConfig cfg = ExperimentConfig::from_json(j.at("config"));
  if (j.at("config_hash").get<std::uint64_t>() != cfg.hash())
    throw std::invalid_argument("model_from_json: config hash mismatch");
  BuiltModel bm;
  bm.codebook =
      build_codebooks(cfg.scene, cfg.arrays, cfg.n_bs_beams, cfg.n_ue_beams, cfg.grid_step,
                      cfg.coverage_min_frac);
  bm.calibration = calibration_from_json(j.at("calibration"));

  LinkModel& m = bm.model;
  for (const auto& p : j.at("chain").at("pairs"))
    m.chain.pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  m.chain.s_matrix = matrix_of_triplets(j.at("chain").at("s_matrix"));
  for (int bs = 0; bs < 2; ++bs)
    m.chain.blockage[bs] = matrix_of_json(j.at("chain").at("blockage").at(bs));
  m.chain.assemble();
  m.calib = bm.calibration;
  m.sbpi_sets = bm.codebook.sbpi_sets;
  m.d_tot_s = j.at("d_tot_s").get<double>();
  m.entry_pair_index = j.at("entry_pair_index").get<int>();
  apply_config(m, cfg);
  m.initial_bs = j.at("initial_bs").get<int>();
  m.materialize_actions(cfg.action_grid());
  bm.visits = j.at("visits").get<std::vector<std::uint64_t>>();
  if (cfg_out) *cfg_out = cfg;
  return bm;
}

inline nlohmann::json policy_to_json(const PolicyArtifact& art) {
  nlohmann::json j;
  j["schema"] = kPolicySchema;
  j["kind"] = "policy";
  j["lambda"] = art.lambda;
  j["converged"] = art.converged;
  j["iterations"] = art.iterations;
  j["residual_v"] = art.residual_v;
  j["constraint_slack"] = art.constraint_slack;
  j["reward_scale"] = art.reward_scale;
  j["cost_scale"] = art.cost_scale;
  j["e_max_j"] = std::isfinite(art.e_max_j) ? nlohmann::json(art.e_max_j) : nlohmann::json();
  j["d_tot_s"] = art.d_tot_s;
  j["w_hz"] = art.w_hz;
  j["p_avg_w"] = std::isfinite(art.p_avg_w) ? nlohmann::json(art.p_avg_w) : nlohmann::json();
  j["seed"] = art.seed;
  j["config_hash"] = art.config_hash;
  for (int bs = 0; bs < 2; ++bs) {
    nlohmann::json q = nlohmann::json::array();
    for (const auto& h : art.q[bs]) {
      nlohmann::json hp;
      hp["action"] = h.action;
      hp["r"] = json_of_vector(h.r);
      hp["e"] = json_of_vector(h.e);
      q.push_back(std::move(hp));
    }
    j["q"].push_back(std::move(q));
  }
  nlohmann::json log = nlohmann::json::array();
  for (const auto& row : art.log)
    log.push_back({row.n, row.lambda, row.avg_power_w, row.spectral_efficiency, row.lagrangian,
                   row.max_dv});
  j["log"] = std::move(log);
  return j;
}

inline PolicyArtifact policy_from_json(const nlohmann::json& j) {
  if (j.at("schema").get<int>() != kPolicySchema)
    throw std::invalid_argument("policy_from_json: unsupported schema");
  PolicyArtifact art;
  art.lambda = j.at("lambda").get<double>();
  art.converged = j.at("converged").get<bool>();
  art.iterations = j.at("iterations").get<int>();
  art.residual_v = j.at("residual_v").get<double>();
  art.constraint_slack = j.at("constraint_slack").get<double>();
  art.reward_scale = j.at("reward_scale").get<double>();
  art.cost_scale = j.at("cost_scale").get<double>();
  art.e_max_j = j.at("e_max_j").is_null() ? std::numeric_limits<double>::infinity()
                                          : j.at("e_max_j").get<double>();
  art.d_tot_s = j.at("d_tot_s").get<double>();
  art.w_hz = j.at("w_hz").get<double>();
  art.p_avg_w = j.at("p_avg_w").is_null() ? std::numeric_limits<double>::infinity()
                                          : j.at("p_avg_w").get<double>();
  art.seed = j.at("seed").get<std::uint64_t>();
  art.config_hash = j.at("config_hash").get<std::uint64_t>();
  for (int bs = 0; bs < 2; ++bs) {
    for (const auto& hp : j.at("q").at(bs)) {
      HyperplanePair h;
      h.action = hp.at("action").get<int>();
      h.r = vector_of_json(hp.at("r"));
      h.e = vector_of_json(hp.at("e"));
      art.q[bs].push_back(std::move(h));
    }
  }
  for (const auto& row : j.at("log")) {
    art.log.push_back({row.at(0).get<int>(), row.at(1).get<double>(), row.at(2).get<double>(),
                       row.at(3).get<double>(), row.at(4).get<double>(), row.at(5).get<double>()});
  }
  return art;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << content;
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return nlohmann::json::parse(f);
}

inline std::string convergence_csv(const std::vector<ConvergenceRow>& log) {
  std::ostringstream out;
  out << "n,lambda,avg_power_w,spectral_efficiency,lagrangian,max_dv\n";
  for (const auto& r : log) {
    out << r.n << ',' << format_double(r.lambda) << ',' << format_double(r.avg_power_w) << ','
        << format_double(r.spectral_efficiency) << ',' << format_double(r.lagrangian) << ','
        << format_double(r.max_dv) << '\n';
  }
  return out.str();
}

inline std::string error_json(const std::string& message) {
  nlohmann::json j;
  j["error"] = message;
  return j.dump();
}

}  // namespace mmla
