#pragma once

// Monte-Carlo pulse ensembles on a time-frequency lattice. Each lattice cell
// (pump slice t_j, frequency bin Omega_k, spatial replica) holds two
// conjugate-frequency twin pairs sampled from the Wigner distribution;
// beam 1 is delayed, mixed with beam 2 on a 50:50 beamsplitter, attenuated,
// and integrated per detector.

#include "mhom/gain_model.hpp"
#include "mhom/hom_trace.hpp"

#include <cstdint>
#include <vector>

namespace mhom {

struct LatticeSpec {
  int n_time_slices = 0;
  int n_freq_bins = 0;
  double slice_duration_ps = 0.0;
  double bin_width = 0.0;  ///< rad/ps

  /// Checks positivity, coverage of +-3 sigma_A, and bin_width * slice <= 2 pi.
  void validate(const PumpParams& pump) const;
  double time_of(int j) const { return (j - 0.5 * (n_time_slices - 1)) * slice_duration_ps; }
  double omega_of(int k) const { return (k + 0.5) * bin_width; }
};

/// One slice per coherence time 1/FWHM (rad/ps), 16 bins up to the cutoff.
LatticeSpec default_lattice(const CrystalParams& crystal, const PumpParams& pump);

struct EnsembleStats {
  double tau = 0.0;
  double mean_s1 = 0.0;
  double mean_s2 = 0.0;
  double se_mean_s1 = 0.0;
  double se_mean_s2 = 0.0;
  double nrf_hat = 1.0;
  double se_nrf = 0.0;
  double g2_hat = 1.0;
  double se_g2 = 0.0;
  int n_pulses = 0;
  long long modes_per_detector = 0;
  /// No photons in the model (G = 0): nrf_hat and g2_hat are reported as 1
  /// and their standard errors as 0.
  bool degenerate = false;
};

/// Average |V|^2 over lattice cells.
double mean_photons_per_cell(const CrystalParams& crystal, const PumpParams& pump,
                             const LatticeSpec& lattice);

/// Throws ValidationError when mean_photons_per_cell < min_photons.
void check_wigner_guard(const CrystalParams& crystal, const PumpParams& pump,
                        const LatticeSpec& lattice, double min_photons = 10.0);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

EnsembleStats simulate_ensemble(const CrystalParams& crystal, const PumpParams& pump,
                                const DetectionModel& det, const LatticeSpec& lattice, double tau,
                                std::uint64_t seed);

/// One ensemble per delay with seed derive_seed(seed, index).
std::vector<EnsembleStats> dip_scan(const CrystalParams& crystal, const PumpParams& pump,
                                    const DetectionModel& det, const LatticeSpec& lattice,
                                    const Eigen::VectorXd& tau, std::uint64_t seed);

struct LatticeExpectation {
  double nrf = 1.0;
  double g2 = 1.0;
  double mean_total = 0.0;  ///< <S1 + S2>
};

/// Exact expectation of the simulated estimators for the same lattice,
/// from Gaussian moment factorization.
LatticeExpectation lattice_expectation(const CrystalParams& crystal, const PumpParams& pump,
                                       const DetectionModel& det, const LatticeSpec& lattice,
                                       double tau);

}  // namespace mhom
