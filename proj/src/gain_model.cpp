#include "mhom/gain_model.hpp"

#include "mhom/errors.hpp"
#include "mhom/numerics.hpp"

#include <unsupported/Eigen/NonLinearOptimization>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace mhom {

void CrystalParams::validate() const {
  if (!(length_mm > 0) || !std::isfinite(length_mm))
    throw ValidationError("crystal length must be positive");
  if (!(walkoff_ps_per_mm >= 0) || !std::isfinite(walkoff_ps_per_mm))
    throw ValidationError("walk-off slope D must be non-negative");
}

void PumpParams::validate() const {
  if (!(peak_gain >= 0) || !std::isfinite(peak_gain))
    throw ValidationError("peak gain must be non-negative");
  if (!(duration_ps > 0) || !std::isfinite(duration_ps))
    throw ValidationError("pump duration must be positive");
  if (!(lambda_deg_nm > 0) || !(lambda_pump_nm > 0))
    throw ValidationError("wavelengths must be positive");
  if (std::abs(lambda_pump_nm - lambda_deg_nm / 2) > 1e-3 * (lambda_deg_nm / 2))
    throw ValidationError("pump wavelength must equal half the degenerate wavelength within 0.1%");
}

double PumpParams::envelope_sigma_ps() const {
  return duration_ps / (2.0 * std::sqrt(std::numbers::ln2));
}

void SpectralGrid::validate() const {
  if (omega.size() == 0 || omega.size() != weights.size())
    throw ValidationError("spectral grid is empty or has mismatched weights");
  for (Eigen::Index i = 0; i < omega.size(); ++i) {
    if (!(weights(i) > 0)) throw ValidationError("spectral grid weights must be positive");
    if (omega(i) < 0) throw ValidationError("spectral grid nodes must be non-negative");
    if (i > 0 && !(omega(i) > omega(i - 1)))
      throw ValidationError("spectral grid nodes must be strictly increasing");
  }
}

Eigen::VectorXd spectrum(const SpectralGrid& grid, const CrystalParams& crystal,
                         const PumpParams& pump) {
  Eigen::VectorXd out(grid.size());
  const double g = pump.peak_gain;
  for (Eigen::Index i = 0; i < grid.size(); ++i)
    out(i) = std::norm(uv_at_gain(grid.omega(i), g, crystal).v);
  return out;
}

double spectral_cutoff(const CrystalParams& crystal, const PumpParams& pump,
                       double rel_threshold) {
  crystal.validate();
  pump.validate();
  const double g = pump.peak_gain;
  if (!(g > 0)) throw ValidationError("spectral cutoff needs a positive gain");
  if (!(crystal.walkoff_ps_per_mm > 0))
    throw ValidationError("spectral cutoff needs D > 0 (flat spectrum otherwise)");
  const double dl = crystal.walkoff_ps_per_mm * crystal.length_mm;
  const double threshold = rel_threshold * std::norm(uv_at_gain(0.0, g, crystal).v);
  // |V|^2 is decreasing on z >= 0; at z = 0 it equals G^2.
  if (g * g <= threshold) {
    const double omega_z0 = 2.0 * g / dl;
    auto f = [&](double w) { return std::norm(uv_at_gain(w, g, crystal).v) - threshold; };
    return find_root(f, 0.0, omega_z0);
  }
  // Side lobes: |V|^2 = G^2 sin^2(x)/x^2 <= G^2/x^2 with x^2 = -z.
  const double half_mismatch = std::sqrt(g * g + g * g / threshold);
  return 2.0 * half_mismatch / dl;
}

SpectralGrid make_uniform_grid(double omega_max, int nodes) {
  constexpr int order = 16;
  if (!(omega_max > 0)) throw ValidationError("grid upper limit must be positive");
  const int panels = std::max(1, (nodes + order - 1) / order);
  const auto rule = composite_gauss_legendre(0.0, omega_max, panels, order);
  SpectralGrid grid;
  grid.omega = rule.nodes;
  grid.weights = rule.weights;
  grid.upper_limit = omega_max;
  return grid;
}

SpectralGrid make_spectral_grid(const CrystalParams& crystal, const PumpParams& pump,
                                double tau_max, int min_nodes) {
  const double omega_max = spectral_cutoff(crystal, pump);
  const double needed = 8.0 * omega_max * std::abs(tau_max) / std::numbers::pi;
  const double count = std::max<double>(min_nodes, std::ceil(needed));
  if (count > 5e7) throw ValidationError("spectral grid would exceed 5e7 nodes; reduce tau range");
  return make_uniform_grid(omega_max, static_cast<int>(count));
}

SpectralGrid make_line_grid(double omega) {
  SpectralGrid grid;
  grid.omega = Eigen::VectorXd::Constant(1, omega);
  grid.weights = Eigen::VectorXd::Ones(1);
  grid.discrete = true;
  grid.upper_limit = omega;
  return grid;
}

double spectral_hwhm(const CrystalParams& crystal, const PumpParams& pump) {
  crystal.validate();
  pump.validate();
  const double g = pump.peak_gain;
  if (!(g > 0)) throw ValidationError("spectral width needs a positive gain");
  if (!(crystal.walkoff_ps_per_mm > 0))
    throw NumericalError("half-maximum not bracketed: spectrum is flat for D = 0");
  const double dl = crystal.walkoff_ps_per_mm * crystal.length_mm;
  const double peak = std::norm(uv_at_gain(0.0, g, crystal).v);
  // Main lobe ends at the first zero of S(z): sqrt(-z) = pi.
  const double first_zero = 2.0 * std::sqrt(g * g + std::numbers::pi * std::numbers::pi) / dl;
  auto f = [&](double w) { return std::norm(uv_at_gain(w, g, crystal).v) - 0.5 * peak; };
  return find_root(f, 0.0, first_zero);
}

double spectral_fwhm_rad_ps(const CrystalParams& crystal, const PumpParams& pump) {
  return 2.0 * spectral_hwhm(crystal, pump);
}

double spectral_fwhm_nm(const CrystalParams& crystal, const PumpParams& pump) {
  const double d_omega = spectral_fwhm_rad_ps(crystal, pump);
  return pump.lambda_deg_nm * pump.lambda_deg_nm * d_omega /
         (2.0 * std::numbers::pi * kSpeedOfLightNmPerPs);
}

CrystalParams calibrate_walkoff(double target_fwhm_nm, const PumpParams& pump, double length_mm) {
  if (!(target_fwhm_nm > 0)) throw ValidationError("target spectral width must be positive");
  pump.validate();
  if (!(pump.peak_gain > 0)) throw ValidationError("walk-off calibration needs a positive gain");
  CrystalParams crystal{length_mm, 1.0};
  crystal.validate();
  auto f = [&](double log_d) {
    CrystalParams trial{length_mm, std::exp(log_d)};
    return std::log(spectral_fwhm_nm(trial, pump) / target_fwhm_nm);
  };
  try {
    crystal.walkoff_ps_per_mm = std::exp(find_root(f, std::log(1e-8), std::log(1e4), 1e-15));
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("walk-off calibration failed: ") + e.what());
  }
  return crystal;
}

namespace {

// Residuals r_i = s * sinh^2(c sqrt(P_i)) - y_i with y normalized by max|I|.
struct GainCurveFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  Eigen::VectorXd sqrt_p;
  Eigen::VectorXd y;

  int inputs() const { return 2; }
  int values() const { return static_cast<int>(y.size()); }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double sh = std::sinh(x(0) * sqrt_p(i));
      fvec(i) = x(1) * sh * sh - y(i);
    }
    return 0;
  }

  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& fjac) const {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double arg = x(0) * sqrt_p(i);
      const double sh = std::sinh(arg);
      fjac(i, 0) = x(1) * std::sinh(2.0 * arg) * sqrt_p(i);
      fjac(i, 1) = sh * sh;
    }
    return 0;
  }
};

}  // namespace

GainCurveFit fit_gain_curve(std::span<const double> powers_mw, std::span<const double> intensities) {
  if (powers_mw.size() != intensities.size())
    throw ValidationError("powers and intensities differ in length");
  const auto n = static_cast<Eigen::Index>(powers_mw.size());
  if (n < 3) throw ValidationError("gain-curve fit needs at least 3 points");
  for (double p : powers_mw)
    if (!(p > 0) || !std::isfinite(p)) throw ValidationError("pump powers must be positive");
  for (double v : intensities)
    if (!std::isfinite(v)) throw ValidationError("intensities must be finite");

  double y_ref = 0.0;
  for (double v : intensities) y_ref = std::max(y_ref, std::abs(v));
  if (y_ref == 0.0) throw FitError("degenerate data: all intensities are zero", 0.0);

  GainCurveFunctor fn;
  fn.sqrt_p.resize(n);
  fn.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    fn.sqrt_p(i) = std::sqrt(powers_mw[i]);
    fn.y(i) = intensities[i] / y_ref;
  }

  // Two-point seed from the lowest- and highest-power samples. Start from
  // scale0 = I_min, solve for c0 at P_max, refine scale0 at P_min, solve again.
  const auto lo = std::distance(powers_mw.begin(), std::min_element(powers_mw.begin(), powers_mw.end()));
  const auto hi = std::distance(powers_mw.begin(), std::max_element(powers_mw.begin(), powers_mw.end()));
  const double y_min = fn.y(lo);
  const double y_max = fn.y(hi);
  if (!(y_min > 0) || !(y_max > y_min))
    throw FitError("degenerate data: intensity does not grow with pump power", 0.0);
  auto c_from = [&](double scale) { return std::asinh(std::sqrt(y_max / scale)) / fn.sqrt_p(hi); };
  double scale0 = y_min;
  double c0 = c_from(scale0);
  const double sh_lo = std::sinh(c0 * fn.sqrt_p(lo));
  scale0 = y_min / (sh_lo * sh_lo);
  c0 = c_from(scale0);

  Eigen::VectorXd x(2);
  x << c0, scale0;
  Eigen::LevenbergMarquardt<GainCurveFunctor> lm(fn);
  lm.parameters.maxfev = 2000;
  lm.parameters.xtol = 1e-15;
  lm.parameters.ftol = 1e-15;
  const auto status = lm.minimize(x);

  Eigen::VectorXd resid(n);
  fn(x, resid);
  const double norm = resid.norm() * y_ref;
  using namespace Eigen::LevenbergMarquardtSpace;
  if (status == ImproperInputParameters || status == TooManyFunctionEvaluation || !x.allFinite() ||
      !(x(0) > 0)) {
    throw FitError("gain-curve fit did not converge", norm);
  }

  GainCurveFit fit;
  fit.gain_per_sqrt_mw = x(0);
  fit.scale = x(1) * y_ref;
  fit.residual_norm = norm;
  fit.iterations = static_cast<int>(lm.iter);
  fit.residuals = resid * y_ref;
  return fit;
}

}  // namespace mhom
