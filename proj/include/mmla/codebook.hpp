#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include "mmla/geometry.hpp"

namespace mmla {

struct Codeword {
  Eigen::VectorXcd v;
  RayAngles target;
};

/// Joint BS/UE beam codebooks with their gain field sampled on a road grid.
///
/// A beam-pair index (BPI) j in {1..n_bs_beams*n_ue_beams} couples BS beam
/// (j-1) / n_ue_beams with UE beam (j-1) % n_ue_beams; BS and UE sweep them
/// synchronously. The grid stores, per BS, gain-to-pathloss G(j,x)/l(x) for
/// every pair at every cell (lane-major), the argmax map s*_I(x), and the
/// pruned SBPI sets S_I (pairs that win somewhere on the grid).
struct JointCodebook {
  SceneGeometry scene;
  ArrayConfig arrays;
  std::array<std::vector<Codeword>, 2> bs_words;
  std::vector<Codeword> ue_words;

  int grid_ny = 0;
  double grid_step = 0.25;
  std::array<Eigen::MatrixXd, 2> gain_over_pl;  // [bs](cell, bpi-1)
  std::array<Eigen::VectorXd, 2> path_loss;     // [bs](cell)
  std::array<std::vector<int>, 2> sbpi_grid;    // [bs][cell] -> 1-based bpi
  std::array<std::vector<int>, 2> sbpi_sets;    // sorted S_I

  int n_bpi() const { return static_cast<int>(bs_words[0].size() * ue_words.size()); }
  int n_cells() const { return scene.lane_count * grid_ny; }

  int cell_index(int lane, double y) const {
    // Clamp before the int cast so out-of-segment positions of any size
    // resolve to the nearest edge cell.
    const double fy = std::clamp(std::floor(y / grid_step), 0.0, grid_ny - 1.0);
    return lane * grid_ny + static_cast<int>(fy);
  }

  Eigen::Vector3d cell_position(int cell) const {
    const int lane = cell / grid_ny;
    const int iy = cell % grid_ny;
    return scene.ue_position(lane, (iy + 0.5) * grid_step);
  }

  std::pair<int, int> beam_indices(int bpi) const {
    const int f = static_cast<int>(ue_words.size());
    return {(bpi - 1) / f, (bpi - 1) % f};
  }
};

namespace detail {

inline RayAngles bs_beam_target(const SceneGeometry& scene, int bs, double az) {
  const Eigen::Vector3d b = scene.bs_position(bs);
  // Intersect the horizontal ray at azimuth az with the road centerline x = 0.
  const double sa = std::sin(az);
  double yc = 0.5 * scene.segment_length;
  if (std::abs(sa) > 1e-12) {
    const double t = -b.x() / sa;
    if (t > 0.0) yc = b.y() + t * std::cos(az);
  }
  yc = std::clamp(yc, 0.0, scene.segment_length);
  const Eigen::Vector3d p(0.0, yc, scene.ue_height);
  const Eigen::Vector3d d = p - b;
  return {az, std::asin(d.z() / d.norm())};
}

}  // namespace detail

/// Builds steering-vector codebooks: BS beams at azimuths splitting the road
/// segment (as seen from the BS over the centerline) into equal arcs, with
/// per-beam elevation pointed at the road surface; UE beams at uniform
/// azimuths spanning the BS directions seen along the segment, at the
/// elevation of the mid-segment arrival ray. Then evaluates all pair gains on
/// the coverage grid and prunes the SBPI sets.
///
/// Pruning keeps a pair only if it wins at least coverage_min_frac of the
/// cells the busiest pair wins; cells owned by dropped pairs are reassigned
/// to the best survivor. The wide UE beams produce sliver regions (a few
/// cells) at BS-beam crossovers where an off-diagonal pair edges out the two
/// dominant ones by a fraction of a dB; those slivers carry no protocol value
/// but would inflate the scan set, so they fold into their neighbors.
inline JointCodebook build_codebooks(const SceneGeometry& scene, const ArrayConfig& arrays,
                                     int n_bs_beams, int n_ue_beams, double grid_step = 0.25,
                                     double coverage_min_frac = 0.5) {
  scene.validate();
  arrays.validate();
  if (n_bs_beams < 1 || n_ue_beams < 1)
    throw std::invalid_argument("build_codebooks: beam counts must be >= 1");
  if (grid_step <= 0.0 || grid_step > 0.25)
    throw std::invalid_argument("build_codebooks: grid step must be in (0, 0.25] m");
  if (coverage_min_frac < 0.0 || coverage_min_frac > 1.0)
    throw std::invalid_argument("build_codebooks: coverage_min_frac must be in [0, 1]");

  JointCodebook cb;
  cb.scene = scene;
  cb.arrays = arrays;
  cb.grid_ny = std::max(1, static_cast<int>(std::lround(scene.segment_length / grid_step)));
  cb.grid_step = scene.segment_length / cb.grid_ny;

  for (int bs = 0; bs < 2; ++bs) {
    const Eigen::Vector3d b = scene.bs_position(bs);
    const auto az_of = [&](double y) {
      const Eigen::Vector3d d = Eigen::Vector3d(0.0, y, scene.ue_height) - b;
      return angles_from_unit(d.normalized()).azimuth;
    };
    const double az0 = az_of(0.0);
    const double az1 = az_of(scene.segment_length);
    const double lo = std::min(az0, az1), hi = std::max(az0, az1);
    for (int i = 0; i < n_bs_beams; ++i) {
      const double az = lo + (i + 0.5) * (hi - lo) / n_bs_beams;
      const RayAngles tgt = detail::bs_beam_target(scene, bs, az);
      cb.bs_words[bs].push_back({upa_response(tgt, arrays.bs), tgt});
    }
  }

  {
    // Arrival azimuth range toward BS 1 over the segment; front/back symmetry
    // of the planar face makes the same codewords serve BS 0.
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    const int probes = 101;
    for (int lane = 0; lane < scene.lane_count; ++lane) {
      for (int i = 0; i < probes; ++i) {
        const double y = scene.segment_length * i / (probes - 1.0);
        const double az = los_angles(scene, 1, scene.ue_position(lane, y)).aoa.azimuth;
        lo = std::min(lo, az);
        hi = std::max(hi, az);
      }
    }
    const Eigen::Vector3d mid(0.0, 0.5 * scene.segment_length, scene.ue_height);
    const double el = los_angles(scene, 1, mid).aoa.elevation;
    for (int i = 0; i < n_ue_beams; ++i) {
      const double az = lo + (i + 0.5) * (hi - lo) / n_ue_beams;
      cb.ue_words.push_back({upa_response({az, el}, arrays.ue), RayAngles{az, el}});
    }
  }

  const int n_bpi = n_bs_beams * n_ue_beams;
  const double wl = scene.wavelength();
  for (int bs = 0; bs < 2; ++bs) {
    cb.gain_over_pl[bs].resize(cb.n_cells(), n_bpi);
    cb.path_loss[bs].resize(cb.n_cells());
    cb.sbpi_grid[bs].assign(cb.n_cells(), 0);
    for (int cell = 0; cell < cb.n_cells(); ++cell) {
      const Eigen::Vector3d pos = cb.cell_position(cell);
      const LosGeometry los = los_angles(scene, bs, pos);
      const double pl = pathloss(los.distance, wl);
      cb.path_loss[bs](cell) = pl;
      const Eigen::VectorXcd dtx = upa_response(los.aod, arrays.bs);
      const Eigen::VectorXcd drx = upa_response(los.aoa, arrays.ue);
      int best = 1;
      double best_val = -1.0;
      for (int j = 1; j <= n_bpi; ++j) {
        const auto [ci, fi] = cb.beam_indices(j);
        const double g = beamforming_gain(dtx, cb.bs_words[bs][ci].v) *
                         beamforming_gain(drx, cb.ue_words[fi].v);
        cb.gain_over_pl[bs](cell, j - 1) = g / pl;
        if (g / pl > best_val) {
          best_val = g / pl;
          best = j;
        }
      }
      cb.sbpi_grid[bs][cell] = best;
    }

    std::map<int, int> coverage;
    for (int j : cb.sbpi_grid[bs]) ++coverage[j];
    int max_cov = 0;
    for (const auto& [j, n] : coverage) max_cov = std::max(max_cov, n);
    std::vector<int> keep;
    for (const auto& [j, n] : coverage)
      if (n >= coverage_min_frac * max_cov) keep.push_back(j);

    if (keep.size() < coverage.size()) {
      for (int cell = 0; cell < cb.n_cells(); ++cell) {
        int best = keep.front();
        double best_val = -1.0;
        for (int j : keep) {
          const double g = cb.gain_over_pl[bs](cell, j - 1);
          if (g > best_val) {
            best_val = g;
            best = j;
          }
        }
        cb.sbpi_grid[bs][cell] = best;
      }
    }
    std::vector<int> s(cb.sbpi_grid[bs].begin(), cb.sbpi_grid[bs].end());
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    cb.sbpi_sets[bs] = std::move(s);
  }
  return cb;
}

/// Exact strongest-BPI map at an arbitrary position: argmax of the joint
/// beamforming gain over the pruned set S_I, ties to the lowest index.
inline int sbpi_map(const JointCodebook& cb, int bs, const Eigen::Vector3d& ue_pos) {
  const LosGeometry los = los_angles(cb.scene, bs, ue_pos);
  const double pl = pathloss(los.distance, cb.scene.wavelength());
  const Eigen::VectorXcd dtx = upa_response(los.aod, cb.arrays.bs);
  const Eigen::VectorXcd drx = upa_response(los.aoa, cb.arrays.ue);
  int best = cb.sbpi_sets[bs].front();
  double best_val = -1.0;
  for (int j : cb.sbpi_sets[bs]) {
    const auto [ci, fi] = cb.beam_indices(j);
    const double g =
        beamforming_gain(dtx, cb.bs_words[bs][ci].v) * beamforming_gain(drx, cb.ue_words[fi].v) / pl;
    if (g > best_val) {
      best_val = g;
      best = j;
    }
  }
  return best;
}

/// Sectored-abstraction parameters measured from the gain field.
struct SectoredCalibration {
  struct PerBs {
    std::vector<int> sbpi;            // sorted S_I
    std::vector<double> upsilon;      // aligned gain-to-pathloss floor, per S_I entry
    std::vector<double> sidelobe;     // worst misaligned raw gain beyond the guard
    double rho = 0.0;                 // worst sidelobe-to-mainlobe SNR ratio
  };
  std::array<PerBs, 2> bs;
  double sigma_dif_sq = 0.0;
  double guard_m = 0.0;

  double upsilon_of(int bs_idx, int bpi) const {
    const auto& p = bs[bs_idx];
    const auto it = std::lower_bound(p.sbpi.begin(), p.sbpi.end(), bpi);
    if (it == p.sbpi.end() || *it != bpi)
      throw std::invalid_argument("calibration: BPI not in SBPI set");
    return p.upsilon[it - p.sbpi.begin()];
  }
};

/// Measures Upsilon_j (regional minimum of aligned G/l), worst sidelobe gains
/// and the sidelobe-to-mainlobe SNR ratio rho_I. Positions closer than
/// guard_m (along the road) to a pair's own aligned region are excluded from
/// that pair's misaligned statistics: there, detecting the neighbor is an
/// alignment success rather than a confusion event, and including them would
/// drive rho to 1 for any continuous beam pattern.
inline SectoredCalibration calibrate_sectored(const JointCodebook& cb, double sigma_dif_sq,
                                              double guard_m = -1.0) {
  if (guard_m < 0.0)
    guard_m = cb.scene.segment_length / static_cast<double>(cb.bs_words[0].size());
  SectoredCalibration cal;
  cal.sigma_dif_sq = sigma_dif_sq;
  cal.guard_m = guard_m;

  for (int bs = 0; bs < 2; ++bs) {
    auto& out = cal.bs[bs];
    out.sbpi = cb.sbpi_sets[bs];
    const int ns = static_cast<int>(out.sbpi.size());
    out.upsilon.assign(ns, std::numeric_limits<double>::infinity());
    out.sidelobe.assign(ns, 0.0);

    std::map<int, std::vector<double>> region_ys;  // bpi -> aligned y coordinates
    for (int cell = 0; cell < cb.n_cells(); ++cell)
      region_ys[cb.sbpi_grid[bs][cell]].push_back(cb.cell_position(cell).y());
    for (auto& [j, ys] : region_ys) std::sort(ys.begin(), ys.end());

    const auto y_dist = [&](int j, double y) {
      const auto& ys = region_ys.at(j);
      const auto it = std::lower_bound(ys.begin(), ys.end(), y);
      double d = std::numeric_limits<double>::infinity();
      if (it != ys.end()) d = std::min(d, *it - y);
      if (it != ys.begin()) d = std::min(d, y - *(it - 1));
      return d;
    };

    for (int k = 0; k < ns; ++k) {
      const int j = out.sbpi[k];
      for (int cell = 0; cell < cb.n_cells(); ++cell) {
        if (cb.sbpi_grid[bs][cell] == j)
          out.upsilon[k] = std::min(out.upsilon[k], cb.gain_over_pl[bs](cell, j - 1));
      }
    }
    out.rho = 0.0;
    for (int k = 0; k < ns; ++k) {
      const int j = out.sbpi[k];
      for (int cell = 0; cell < cb.n_cells(); ++cell) {
        if (cb.sbpi_grid[bs][cell] == j) continue;
        if (y_dist(j, cb.cell_position(cell).y()) <= guard_m) continue;
        const double gpl = cb.gain_over_pl[bs](cell, j - 1);
        out.sidelobe[k] = std::max(out.sidelobe[k], gpl * cb.path_loss[bs](cell));
        const double ratio = (gpl + sigma_dif_sq) / (out.upsilon[k] + sigma_dif_sq);
        out.rho = std::max(out.rho, ratio);
      }
    }
  }
  return cal;
}

/// Transmit power achieving a target average SNR on an aligned beam pair:
/// P = sigma_w^2 snr / (Upsilon_j + sigma_dif^2).
inline double power_for_target_snr(double target_snr, double upsilon_j, double sigma_dif_sq,
                                   double noise_power_w) {
  if (target_snr < 0.0) throw std::invalid_argument("power_for_target_snr: snr must be >= 0");
  if (upsilon_j + sigma_dif_sq <= 0.0)
    throw std::invalid_argument("power_for_target_snr: gain floor must be > 0");
  return noise_power_w * target_snr / (upsilon_j + sigma_dif_sq);
}

}  // namespace mmla
