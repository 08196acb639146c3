#pragma once

// Spectral-temporal parametric gain of a collinear type-II amplifier in the
// undepleted-pump, plane-wave approximation.
//
// Units: frequency detuning Omega in rad/ps, time in ps, length in mm,
// wavelength in nm. The phase mismatch is Delta(Omega) = D * Omega with D the
// inverse-group-velocity difference in ps/mm, so Delta * l_c is dimensionless.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <span>

namespace mhom {

inline constexpr double kSpeedOfLightNmPerPs = 2.99792458e5;

struct CrystalParams {
  double length_mm = 10.0;
  double walkoff_ps_per_mm = 0.0;  ///< D >= 0; only |D| enters |Delta|^2

  void validate() const;
};

struct PumpParams {
  double peak_gain = 7.5;       ///< G at the envelope maximum
  double duration_ps = 18.0;    ///< intensity FWHM of the Gaussian pump
  double lambda_deg_nm = 709.3;
  double lambda_pump_nm = 354.7;

  void validate() const;
  /// Field-envelope standard deviation: exp(-t^2/sigma^2) is 1/2 at t = duration/2.
  double envelope_sigma_ps() const;
};

template <typename Scalar>
struct GainSample {
  std::complex<Scalar> u;
  std::complex<Scalar> v;
};

/// Quadrature grid for integrals over Omega in [0, omega_max].
struct SpectralGrid {
  Eigen::VectorXd omega;
  Eigen::VectorXd weights;
  /// A discrete line set (e.g. one frequency pair) rather than a quadrature
  /// of a continuum; exempt from the oscillation-resolution check.
  bool discrete = false;

  Eigen::Index size() const { return omega.size(); }
  double omega_max() const { return upper_limit; }
  double upper_limit = 0.0;

  void validate() const;
};

template <typename Scalar>
Scalar delta(Scalar omega, const CrystalParams& crystal) {
  return static_cast<Scalar>(crystal.walkoff_ps_per_mm) * omega;
}

template <typename Scalar>
Scalar gain_at(Scalar t, const PumpParams& pump) {
  const Scalar sigma = static_cast<Scalar>(pump.envelope_sigma_ps());
  return static_cast<Scalar>(pump.peak_gain) * std::exp(-t * t / (2 * sigma * sigma));
}

/// C(z) = cosh(sqrt z) and S(z) = sinh(sqrt z)/sqrt z continued to z < 0 as
/// cos/sin. Near z = 0 both are evaluated by their Taylor series.
template <typename Scalar>
struct BranchValues {
  Scalar c;
  Scalar s;
};

template <typename Scalar>
BranchValues<Scalar> branch_functions(Scalar z) {
  using std::abs;
  using std::sqrt;
  if (abs(z) < Scalar(1e-6)) {
    const Scalar c = 1 + z / 2 + z * z / 24 + z * z * z / 720;
    const Scalar s = 1 + z / 6 + z * z / 120 + z * z * z / 5040;
    return {c, s};
  }
  if (z > 0) {
    const Scalar r = sqrt(z);
    return {std::cosh(r), std::sinh(r) / r};
  }
  const Scalar r = sqrt(-z);
  return {std::cos(r), std::sin(r) / r};
}

/// Bogoliubov gain functions at detuning omega and pump time t.
///   u = C(z) + i (Delta l_c / 2) S(z),  v = G(t) S(z),  z = G^2 - (Delta l_c / 2)^2
/// |u|^2 - |v|^2 = 1 holds identically.
template <typename Scalar>
GainSample<Scalar> uv_at_gain(Scalar omega, Scalar gain, const CrystalParams& crystal) {
  const Scalar half_mismatch = delta(omega, crystal) * static_cast<Scalar>(crystal.length_mm) / 2;
  const Scalar z = gain * gain - half_mismatch * half_mismatch;
  const auto b = branch_functions(z);
  return {std::complex<Scalar>(b.c, half_mismatch * b.s), std::complex<Scalar>(gain * b.s, 0)};
}

template <typename Scalar>
GainSample<Scalar> uv(Scalar omega, Scalar t, const CrystalParams& crystal, const PumpParams& pump) {
  return uv_at_gain(omega, gain_at(t, pump), crystal);
}

/// |V(Omega, 0)|^2 on the grid nodes: photons per mode at the pulse peak.
Eigen::VectorXd spectrum(const SpectralGrid& grid, const CrystalParams& crystal,
                         const PumpParams& pump);

/// Smallest Omega beyond which |V(Omega, 0)|^2 < rel_threshold * |V(0, 0)|^2.
/// Side lobes are bounded by G^2 / (-z); requires D > 0 and G > 0.
double spectral_cutoff(const CrystalParams& crystal, const PumpParams& pump,
                       double rel_threshold = 1e-6);

/// Oscillation-resolving composite Gauss-Legendre grid on [0, Omega_max]:
/// node count max(min_nodes, 8 Omega_max tau_max / pi), rounded up to panels.
SpectralGrid make_spectral_grid(const CrystalParams& crystal, const PumpParams& pump,
                                double tau_max, int min_nodes = 2048);

/// Grid on a caller-chosen interval, e.g. the flat-spectrum D = 0 limit.
SpectralGrid make_uniform_grid(double omega_max, int nodes);

/// One frequency line of unit weight (single-mode-pair configuration).
SpectralGrid make_line_grid(double omega);

/// Half-width at half maximum of |V(Omega, 0)|^2 on the main lobe (rad/ps).
double spectral_hwhm(const CrystalParams& crystal, const PumpParams& pump);
double spectral_fwhm_rad_ps(const CrystalParams& crystal, const PumpParams& pump);
double spectral_fwhm_nm(const CrystalParams& crystal, const PumpParams& pump);

/// Finds D so that spectral_fwhm_nm equals target_fwhm_nm at the given gain.
CrystalParams calibrate_walkoff(double target_fwhm_nm, const PumpParams& pump,
                                double length_mm = 10.0);

struct GainCurveFit {
  double gain_per_sqrt_mw = 0.0;  ///< c in G = c * sqrt(P)
  double scale = 0.0;             ///< I = scale * sinh^2(G)
  double residual_norm = 0.0;
  int iterations = 0;
  Eigen::VectorXd residuals;
};

/// Least-squares fit of I = scale * sinh^2(c sqrt(P)).
GainCurveFit fit_gain_curve(std::span<const double> powers_mw, std::span<const double> intensities);

}  // namespace mhom
