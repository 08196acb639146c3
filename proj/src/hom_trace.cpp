#include "mhom/hom_trace.hpp"

#include "mhom/errors.hpp"
#include "mhom/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mhom {

std::string_view to_string(TraceKind kind) {
  switch (kind) {
    case TraceKind::nrf_ideal: return "nrf_ideal";
    case TraceKind::nrf_detected: return "nrf_detected";
    case TraceKind::nrf_pedestal: return "nrf_pedestal";
    case TraceKind::g2: return "g2";
  }
  return "unknown";
}

namespace {

void check_tau(const Eigen::VectorXd& tau) {
  if (tau.size() == 0) throw ValidationError("delay grid is empty");
  for (Eigen::Index i = 0; i < tau.size(); ++i) {
    if (!std::isfinite(tau(i))) throw ValidationError("delay grid has non-finite entries");
    if (i > 0 && !(tau(i) > tau(i - 1)))
      throw ValidationError("delay grid must be strictly increasing");
  }
}

void check_resolution(const Eigen::VectorXd& tau, const SpectralGrid& grid) {
  if (grid.discrete) return;
  const double tau_max = tau.cwiseAbs().maxCoeff();
  const double needed = 8.0 * grid.omega_max() * tau_max / std::numbers::pi;
  if (static_cast<double>(grid.size()) < needed) {
    throw ValidationError("spectral grid has " + std::to_string(grid.size()) +
                          " nodes but |tau| up to " + std::to_string(tau_max) + " ps needs " +
                          std::to_string(static_cast<long long>(std::ceil(needed))));
  }
}

TraceDigest digest_of(const CrystalParams& crystal, const PumpParams& pump,
                      const SpectralGrid& grid) {
  TraceDigest d;
  d.peak_gain = pump.peak_gain;
  d.duration_ps = pump.duration_ps;
  d.length_mm = crystal.length_mm;
  d.walkoff_ps_per_mm = crystal.walkoff_ps_per_mm;
  d.grid_nodes = grid.size();
  d.omega_max = grid.omega_max();
  return d;
}

}  // namespace

void Trace::validate() const {
  if (tau.size() != value.size()) throw ValidationError("trace tau and value lengths differ");
  check_tau(tau);
}

void DetectionModel::validate() const {
  if (!(eta > 0 && eta <= 1)) throw ValidationError("quantum efficiency must lie in (0, 1]");
  if (m_spatial < 1) throw ValidationError("spatial mode count must be at least 1");
  if (!(noise_var >= 0) || !std::isfinite(noise_var))
    throw ValidationError("electronic noise variance must be non-negative");
  if (n_pulses < 2) throw ValidationError("ensemble needs at least 2 pulses");
}

Eigen::VectorXd make_tau_grid(double lo, double hi, double step) {
  if (!(step > 0) || !std::isfinite(lo) || !std::isfinite(hi))
    throw ValidationError("delay grid needs finite bounds and a positive step");
  if (hi < lo) throw ValidationError("delay grid upper bound is below the lower bound");
  const auto n = static_cast<Eigen::Index>(std::floor((hi - lo) / step + 1e-9)) + 1;
  if (n > 50'000'000) throw ValidationError("delay grid too large");
  Eigen::VectorXd tau(n);
  // Integer multiples of step, so tau = 0 is exact whenever lo/step is integral.
  const double k0 = std::round(lo / step);
  const bool aligned = std::abs(lo / step - k0) < 1e-9;
  // Divide by 1/step when that is an integer, so 0.01 steps give -29.99, not -29.990000000000002.
  const double inv = std::round(1.0 / step);
  const bool integral_inverse = inv >= 1 && std::abs(1.0 / step - inv) < 1e-9 * inv;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double k = k0 + static_cast<double>(i);
    if (!aligned) tau(i) = lo + static_cast<double>(i) * step;
    else tau(i) = integral_inverse ? k / inv : k * step;
  }
  return tau;
}

NrfPair nrf_and_pedestal(const Eigen::VectorXd& tau, const CrystalParams& crystal,
                         const PumpParams& pump, const SpectralGrid& grid) {
  crystal.validate();
  pump.validate();
  grid.validate();
  check_tau(tau);
  check_resolution(tau, grid);

  const Eigen::Index n_omega = grid.size();
  Eigen::VectorXd wn0(n_omega);             // w * |V(Omega, 0)|^2
  Eigen::VectorXcd u0_conj_sq(n_omega);     // (U*(Omega, 0))^2
  for (Eigen::Index k = 0; k < n_omega; ++k) {
    const auto s = uv_at_gain(grid.omega(k), pump.peak_gain, crystal);
    wn0(k) = grid.weights(k) * std::norm(s.v);
    u0_conj_sq(k) = std::conj(s.u) * std::conj(s.u);
  }
  const double denom = wn0.sum();

  NrfPair out;
  out.nrf.tau = tau;
  out.nrf.value.resize(tau.size());
  out.nrf.kind = TraceKind::nrf_ideal;
  out.nrf.digest = digest_of(crystal, pump, grid);
  out.pedestal = out.nrf;
  out.pedestal.kind = TraceKind::nrf_pedestal;

  if (!(denom > 0)) {  // vacuum input: shot noise at every delay
    out.nrf.value.setOnes();
    out.pedestal.value.setOnes();
    return out;
  }

  parallel_for(static_cast<std::size_t>(tau.size()), [&](std::size_t i) {
    const double t = tau(static_cast<Eigen::Index>(i));
    const double g_t = gain_at(t, pump);
    double envelope = 0.0;
    double interference = 0.0;
    for (Eigen::Index k = 0; k < n_omega; ++k) {
      const double omega = grid.omega(k);
      envelope += wn0(k) * std::norm(uv_at_gain(omega, g_t, crystal).v);
      const double phase = 2.0 * omega * t;
      interference += wn0(k) * (u0_conj_sq(k).real() * std::cos(phase) -
                                u0_conj_sq(k).imag() * std::sin(phase));
    }
    out.pedestal.value(static_cast<Eigen::Index>(i)) = 1.0 + envelope / denom;
    out.nrf.value(static_cast<Eigen::Index>(i)) = 1.0 + (envelope + interference) / denom;
  });
  return out;
}

Trace nrf_trace(const Eigen::VectorXd& tau, const CrystalParams& crystal, const PumpParams& pump,
                const SpectralGrid& grid) {
  return nrf_and_pedestal(tau, crystal, pump, grid).nrf;
}

Trace pedestal_trace(const Eigen::VectorXd& tau, const CrystalParams& crystal,
                     const PumpParams& pump, const SpectralGrid& grid) {
  return nrf_and_pedestal(tau, crystal, pump, grid).pedestal;
}

Trace detected_trace(const Trace& trace, const DetectionModel& det) {
  if (trace.kind != TraceKind::nrf_ideal && trace.kind != TraceKind::nrf_pedestal)
    throw ValidationError("detected_trace expects an ideal NRF or pedestal trace");
  if (!(det.eta > 0 && det.eta <= 1))
    throw ValidationError("quantum efficiency must lie in (0, 1]");
  Trace out = trace;
  out.kind = TraceKind::nrf_detected;
  out.digest.eta = det.eta;
  out.value = (1.0 + det.eta * (trace.value.array() - 1.0)).matrix();
  return out;
}

double effective_photons_per_mode(const CrystalParams& crystal, const PumpParams& pump,
                                  const SpectralGrid& grid) {
  grid.validate();
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    const double n0 = std::norm(uv_at_gain(grid.omega(k), pump.peak_gain, crystal).v);
    num += grid.weights(k) * n0 * n0;
    den += grid.weights(k) * n0;
  }
  return den > 0 ? num / den : 0.0;
}

Trace g2_from_nrf(const Trace& nrf, double n_eff, int m_spatial) {
  if (nrf.kind != TraceKind::nrf_ideal) throw ValidationError("g2 needs an ideal NRF trace");
  if (!(n_eff > 0)) throw ValidationError("g2 is undefined without photons (G = 0)");
  if (m_spatial < 1) throw ValidationError("spatial mode count must be at least 1");
  // <N1 N2> = (<N+^2> - <N-^2>) / 4 with Var N+ / <N+> = 2 (1 + N_eff).
  Trace out = nrf;
  out.kind = TraceKind::g2;
  out.digest.m_spatial = m_spatial;
  const double m = m_spatial;
  out.value = (1.0 + (2.0 * (1.0 + n_eff) - nrf.value.array()) / (2.0 * n_eff * m)).matrix();
  return out;
}

Trace g2_trace(const Eigen::VectorXd& tau, const CrystalParams& crystal, const PumpParams& pump,
               const SpectralGrid& grid, const DetectionModel& det) {
  if (det.m_spatial < 1) throw ValidationError("spatial mode count must be at least 1");
  if (!(pump.peak_gain > 0)) throw ValidationError("g2 is undefined without photons (G = 0)");
  const Trace nrf = nrf_trace(tau, crystal, pump, grid);
  return g2_from_nrf(nrf, effective_photons_per_mode(crystal, pump, grid), det.m_spatial);
}

double visibility(const Eigen::VectorXd& values) {
  if (values.size() == 0) throw ValidationError("visibility of an empty trace");
  const double hi = values.maxCoeff();
  const double lo = values.minCoeff();
  if (!(hi + lo > 0)) throw ValidationError("visibility undefined: max + min <= 0");
  return (hi - lo) / (hi + lo);
}

double visibility(const Trace& trace) { return visibility(trace.value); }

double half_max_width(const Eigen::VectorXd& tau, const Eigen::VectorXd& values) {
  if (tau.size() != values.size() || tau.size() < 3)
    throw ValidationError("width extraction needs at least 3 matching samples");
  Eigen::Index peak = 0;
  const double top = values.maxCoeff(&peak);
  if (!(top > 0)) throw ValidationError("width extraction needs a positive maximum");
  const double half = 0.5 * top;
  auto cross = [&](Eigen::Index a, Eigen::Index b) {
    // values(a) >= half > values(b)
    const double f = (values(a) - half) / (values(a) - values(b));
    return tau(a) + f * (tau(b) - tau(a));
  };
  Eigen::Index i = peak;
  while (i > 0 && values(i - 1) >= half) --i;
  if (i == 0) throw NumericalError("left half-maximum crossing not bracketed by the delay grid");
  const double left = cross(i, i - 1);
  Eigen::Index j = peak;
  while (j + 1 < values.size() && values(j + 1) >= half) ++j;
  if (j + 1 == values.size())
    throw NumericalError("right half-maximum crossing not bracketed by the delay grid");
  const double right = cross(j, j + 1);
  return right - left;
}

double fwhm_narrow(const Trace& nrf, const Trace& pedestal) {
  if (nrf.tau.size() != pedestal.tau.size() || nrf.tau != pedestal.tau)
    throw ValidationError("NRF and pedestal traces must share the delay grid");
  return half_max_width(nrf.tau, nrf.value - pedestal.value);
}

double fwhm_pedestal(const Trace& pedestal) {
  return half_max_width(pedestal.tau, (pedestal.value.array() - 1.0).matrix());
}

double mode_count_g2(double g2_edge, double n_mode) {
  if (!(g2_edge > 1)) throw ValidationError("mode count needs g2 > 1");
  if (!(n_mode > 0)) throw ValidationError("mode count needs a positive photon number");
  return (1.0 + 1.0 / n_mode) / (g2_edge - 1.0);
}

double mode_count_long(const Trace& nrf, const Trace& pedestal) {
  return fwhm_pedestal(pedestal) / fwhm_narrow(nrf, pedestal);
}

std::vector<FwhmSweepRow> fwhm_vs_gain(const std::vector<double>& gains, const CrystalParams& crystal,
                                       const PumpParams& pump_template,
                                       const FwhmSweepOptions& opts) {
  for (double g : gains)
    if (!(g > 0 && g <= 12)) throw ValidationError("sweep gains must lie in (0, 12]");
  const Eigen::VectorXd tau = make_tau_grid(-opts.tau_half_range, opts.tau_half_range, opts.tau_step);
  std::vector<FwhmSweepRow> rows;
  rows.reserve(gains.size());
  for (double g : gains) {
    PumpParams pump = pump_template;
    pump.peak_gain = g;
    const SpectralGrid grid = make_spectral_grid(crystal, pump, opts.tau_half_range, opts.min_nodes);
    const NrfPair traces = nrf_and_pedestal(tau, crystal, pump, grid);
    rows.push_back({g, fwhm_narrow(traces.nrf, traces.pedestal)});
  }
  return rows;
}

}  // namespace mhom
