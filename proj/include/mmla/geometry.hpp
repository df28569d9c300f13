#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>

#include "mmla/util.hpp"

namespace mmla {

inline constexpr double kSpeedOfLight = 2.99792458e8;  // m/s

/// Road-side deployment: a straight segment along +y, two BSs laterally
/// offset at +/- bs_lateral, arrays elevated at bs_height. Lanes are centered
/// on x = 0 and spaced lane_spacing apart. All lengths in meters, carrier in Hz.
struct SceneGeometry {
  double segment_length = 30.0;
  int lane_count = 2;
  double lane_spacing = 3.5;
  double bs_lateral = 22.0;
  double bs_height = 10.0;
  double ue_height = 1.5;
  double carrier_hz = 30e9;

  double wavelength() const { return kSpeedOfLight / carrier_hz; }

  double lane_x(int lane) const {
    return (lane - 0.5 * (lane_count - 1)) * lane_spacing;
  }

  Eigen::Vector3d bs_position(int bs) const {
    return {bs == 0 ? -bs_lateral : bs_lateral, 0.5 * segment_length, bs_height};
  }

  Eigen::Vector3d ue_position(int lane, double y) const {
    return {lane_x(lane), y, ue_height};
  }

  void validate() const {
    if (segment_length <= 0.0) throw std::invalid_argument("scene: segment_length must be > 0");
    if (lane_count < 1) throw std::invalid_argument("scene: lane_count must be >= 1");
    if (lane_count > 1 && lane_spacing <= 0.0)
      throw std::invalid_argument("scene: lane_spacing must be > 0");
    if (bs_lateral <= 0.0) throw std::invalid_argument("scene: bs_lateral must be > 0");
    if (bs_height <= 0.0) throw std::invalid_argument("scene: bs_height must be > 0");
    if (carrier_hz <= 0.0) throw std::invalid_argument("scene: carrier_hz must be > 0");
  }
};

/// One planar array face: rows_z vertical elements, cols_y horizontal
/// elements, element spacing in wavelengths (half wavelength by default).
struct ArrayFace {
  int rows_z = 1;
  int cols_y = 1;
  double spacing_wl = 0.5;

  int size() const { return rows_z * cols_y; }

  void validate() const {
    if (rows_z < 1 || cols_y < 1) throw std::invalid_argument("array: dims must be >= 1");
    if (spacing_wl <= 0.0) throw std::invalid_argument("array: spacing must be > 0");
  }
};

struct ArrayConfig {
  ArrayFace bs{32, 8, 0.5};  // same face on both BSs
  ArrayFace ue{8, 4, 0.5};

  void validate() const {
    bs.validate();
    ue.validate();
  }
};

/// Noise/diffuse parameters. noise_power() is sigma_w^2 = (1 + F) N0 W in
/// watts with F the linear noise figure.
struct ChannelParams {
  double noise_psd_w_hz = dbm_to_watt(-174.0);  // N0
  double bandwidth_hz = 100e6;                  // W_tot
  double noise_figure_lin = db_to_lin(10.0);    // F
  double sigma_dif_sq = 0.0;                    // diffuse power gain (dimensionless)

  double noise_power() const { return (1.0 + noise_figure_lin) * noise_psd_w_hz * bandwidth_hz; }

  void validate() const {
    if (noise_psd_w_hz <= 0.0 || bandwidth_hz <= 0.0)
      throw std::invalid_argument("channel: noise psd and bandwidth must be > 0");
    if (noise_figure_lin < 0.0 || sigma_dif_sq < 0.0)
      throw std::invalid_argument("channel: noise figure and diffuse power must be >= 0");
  }
};

/// Direction described in the shared frame: azimuth measured from the road
/// axis (+y) within the horizontal plane, elevation from the horizontal.
struct RayAngles {
  double azimuth = 0.0;
  double elevation = 0.0;
};

inline Eigen::Vector3d unit_from_angles(const RayAngles& a) {
  return {std::sin(a.azimuth) * std::cos(a.elevation),
          std::cos(a.azimuth) * std::cos(a.elevation), std::sin(a.elevation)};
}

inline RayAngles angles_from_unit(const Eigen::Vector3d& u) {
  return {std::atan2(u.x(), u.y()), std::asin(std::clamp(u.z(), -1.0, 1.0))};
}

/// Unit-norm planar-array steering vector for a face lying in the y-z plane.
/// Element (mz, my) sits at (0, my*d, mz*d); only the direction's y and z
/// components enter the phase, which also gives the front/back symmetry of a
/// planar face. Index is mz * cols_y + my.
inline Eigen::VectorXcd upa_response(const RayAngles& a, const ArrayFace& face) {
  face.validate();
  const Eigen::Vector3d u = unit_from_angles(a);
  const double ky = 2.0 * M_PI * face.spacing_wl * u.y();
  const double kz = 2.0 * M_PI * face.spacing_wl * u.z();
  const int m = face.size();
  Eigen::VectorXcd v(m);
  const double norm = 1.0 / std::sqrt(static_cast<double>(m));
  for (int mz = 0; mz < face.rows_z; ++mz) {
    for (int my = 0; my < face.cols_y; ++my) {
      const double phase = ky * my + kz * mz;
      v(mz * face.cols_y + my) = std::polar(norm, phase);
    }
  }
  return v;
}

/// Free-space pathloss (4 pi d / lambda)^2, linear.
inline double pathloss(double distance_m, double wavelength_m) {
  if (distance_m <= 0.0) throw std::invalid_argument("pathloss: distance must be > 0");
  if (wavelength_m <= 0.0) throw std::invalid_argument("pathloss: wavelength must be > 0");
  const double x = 4.0 * M_PI * distance_m / wavelength_m;
  return x * x;
}

struct LosGeometry {
  RayAngles aod;  // departure at the BS, toward the UE
  RayAngles aoa;  // arrival at the UE, toward the BS
  double distance = 0.0;
};

inline LosGeometry los_angles(const SceneGeometry& scene, int bs, const Eigen::Vector3d& ue_pos) {
  const Eigen::Vector3d b = scene.bs_position(bs);
  const Eigen::Vector3d d = ue_pos - b;
  const double dist = d.norm();
  if (dist <= 0.0) throw std::invalid_argument("los_angles: UE coincides with BS");
  LosGeometry g;
  g.aod = angles_from_unit(d / dist);
  g.aoa = angles_from_unit((-d / dist).eval());
  g.distance = dist;
  return g;
}

/// Transmit-side beamforming gain M_tx |d(aod)^H c|^2 for a unit-norm codeword c.
inline double beamforming_gain(const Eigen::VectorXcd& steering, const Eigen::VectorXcd& codeword) {
  if (steering.size() != codeword.size())
    throw std::invalid_argument("beamforming_gain: dimension mismatch");
  const std::complex<double> ip = steering.dot(codeword);  // conjugates steering
  return static_cast<double>(steering.size()) * std::norm(ip);
}

/// Average receive SNR: (P / sigma_w^2) (B Gtx Grx / pathloss + sigma_dif^2).
inline double average_snr(double tx_power_w, double gtx, double grx, double pl, bool los_clear,
                          double sigma_dif_sq, double noise_power_w) {
  if (tx_power_w < 0.0) throw std::invalid_argument("average_snr: power must be >= 0");
  if (pl <= 0.0) throw std::invalid_argument("average_snr: pathloss must be > 0");
  const double b = los_clear ? 1.0 : 0.0;
  return tx_power_w / noise_power_w * (b * gtx * grx / pl + sigma_dif_sq);
}

/// Normalized matched-filter statistic over L pilot symbols: exponential with
/// mean 1 + snr * L (unit mean when the signal is absent).
inline double draw_matched_filter(double snr, double symbols, std::mt19937_64& rng) {
  if (snr < 0.0 || symbols <= 0.0)
    throw std::invalid_argument("draw_matched_filter: snr >= 0 and symbols > 0 required");
  const double mean = 1.0 + snr * symbols;
  std::exponential_distribution<double> exp1(1.0);
  return mean * exp1(rng);
}

}  // namespace mmla
