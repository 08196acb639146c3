#pragma once

// HOM observables versus signal-idler delay: normalized difference-signal
// variance (NRF), its envelope pedestal, detected traces, g2, and the width
// and mode-count estimators built on them.

#include "mhom/gain_model.hpp"

#include <Eigen/Dense>

#include <string_view>
#include <vector>

namespace mhom {

enum class TraceKind { nrf_ideal, nrf_detected, nrf_pedestal, g2 };

std::string_view to_string(TraceKind kind);

/// Parameters a trace was generated from.
struct TraceDigest {
  double peak_gain = 0.0;
  double duration_ps = 0.0;
  double length_mm = 0.0;
  double walkoff_ps_per_mm = 0.0;
  Eigen::Index grid_nodes = 0;
  double omega_max = 0.0;
  double eta = 1.0;
  int m_spatial = 1;
};

struct Trace {
  Eigen::VectorXd tau;
  Eigen::VectorXd value;
  TraceKind kind = TraceKind::nrf_ideal;
  TraceDigest digest;

  void validate() const;
};

struct DetectionModel {
  double eta = 0.03;
  int m_spatial = 10;
  double noise_var = 0.0;  ///< electronic noise, photon-number units squared
  int n_pulses = 30000;

  void validate() const;
};

/// Evenly spaced delays lo, lo + step, ..., hi (hi included when it lands
/// on the lattice). Zero is hit exactly when lo / step is an integer.
Eigen::VectorXd make_tau_grid(double lo, double hi, double step);

struct NrfPair {
  Trace nrf;
  Trace pedestal;
};

/// NRF and pedestal in one pass over the spectral grid. Throws
/// ValidationError if the grid under-resolves e^{2i Omega tau}.
NrfPair nrf_and_pedestal(const Eigen::VectorXd& tau, const CrystalParams& crystal,
                         const PumpParams& pump, const SpectralGrid& grid);

Trace nrf_trace(const Eigen::VectorXd& tau, const CrystalParams& crystal, const PumpParams& pump,
                const SpectralGrid& grid);
Trace pedestal_trace(const Eigen::VectorXd& tau, const CrystalParams& crystal,
                     const PumpParams& pump, const SpectralGrid& grid);

/// value -> 1 + eta (value - 1)
Trace detected_trace(const Trace& trace, const DetectionModel& det);

/// Spectrally weighted photon number per mode, int n0^2 / int n0.
double effective_photons_per_mode(const CrystalParams& crystal, const PumpParams& pump,
                                  const SpectralGrid& grid);

/// Output cross-correlation of the two beamsplitter ports, reduced by
/// m_spatial. Loss and electronic noise drop out of g2 in this model.
Trace g2_trace(const Eigen::VectorXd& tau, const CrystalParams& crystal, const PumpParams& pump,
               const SpectralGrid& grid, const DetectionModel& det);

/// g2 from an existing NRF trace and the effective photon number.
Trace g2_from_nrf(const Trace& nrf, double n_eff, int m_spatial);

double visibility(const Trace& trace);
double visibility(const Eigen::VectorXd& values);

/// Full width at half maximum around the global maximum, with linear
/// interpolation of both crossings.
double half_max_width(const Eigen::VectorXd& tau, const Eigen::VectorXd& values);

double fwhm_narrow(const Trace& nrf, const Trace& pedestal);
double fwhm_pedestal(const Trace& pedestal);

double mode_count_g2(double g2_edge, double n_mode);
double mode_count_long(const Trace& nrf, const Trace& pedestal);

struct FwhmSweepOptions {
  double tau_half_range = 4.0;
  double tau_step = 0.005;
  int min_nodes = 2048;
};

struct FwhmSweepRow {
  double gain;
  double fwhm_ps;
};

/// Narrow-peak FWHM for each gain with the crystal held fixed.
std::vector<FwhmSweepRow> fwhm_vs_gain(const std::vector<double>& gains, const CrystalParams& crystal,
                                       const PumpParams& pump_template,
                                       const FwhmSweepOptions& opts = {});

}  // namespace mhom
