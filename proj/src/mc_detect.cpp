#include "mhom/mc_detect.hpp"

#include "mhom/errors.hpp"
#include "mhom/numerics.hpp"

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

namespace mhom {

namespace {

using cplx = std::complex<double>;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct CellTable {
  std::vector<cplx> u;      // U(+Omega_k, t_j), index j * n_f + k
  std::vector<double> v;
  std::vector<double> n;    // |V|^2
};

CellTable tabulate(const CrystalParams& crystal, const PumpParams& pump, const LatticeSpec& lat) {
  CellTable t;
  const std::size_t cells = static_cast<std::size_t>(lat.n_time_slices) * lat.n_freq_bins;
  t.u.resize(cells);
  t.v.resize(cells);
  t.n.resize(cells);
  for (int j = 0; j < lat.n_time_slices; ++j) {
    for (int k = 0; k < lat.n_freq_bins; ++k) {
      const auto s = uv(lat.omega_of(k), lat.time_of(j), crystal, pump);
      const std::size_t idx = static_cast<std::size_t>(j) * lat.n_freq_bins + k;
      t.u[idx] = s.u;
      t.v[idx] = s.v.real();
      t.n[idx] = std::norm(s.v);
    }
  }
  return t;
}

int slice_shift(double tau, const LatticeSpec& lat) {
  return static_cast<int>(std::llround(tau / lat.slice_duration_ps));
}

void validate_inputs(const CrystalParams& crystal, const PumpParams& pump, const DetectionModel& det,
                     const LatticeSpec& lattice, double tau) {
  crystal.validate();
  pump.validate();
  if (!(det.eta > 0 && det.eta <= 1)) throw ValidationError("quantum efficiency must lie in (0, 1]");
  det.validate();
  if (det.n_pulses < 3) throw ValidationError("jackknife needs at least 3 pulses");
  lattice.validate(pump);
  if (!std::isfinite(tau)) throw ValidationError("delay must be finite");
  if (std::abs(tau) / lattice.slice_duration_ps > 1e7) throw ValidationError("delay too large for lattice");
}

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

// Delete-one jackknife: se^2 = (n-1)/n sum (f_i - mean f_i)^2.
double jackknife_se(const std::vector<double>& replicates) {
  const double n = static_cast<double>(replicates.size());
  double mean = 0.0;
  for (double f : replicates) mean += f;
  mean /= n;
  double ss = 0.0;
  for (double f : replicates) ss += (f - mean) * (f - mean);
  return std::sqrt((n - 1.0) / n * ss);
}

}  // namespace

void LatticeSpec::validate(const PumpParams& pump) const {
  if (n_time_slices < 1 || n_freq_bins < 1)
    throw ValidationError("lattice needs at least one slice and one bin");
  if (!(slice_duration_ps > 0) || !(bin_width > 0))
    throw ValidationError("lattice slice duration and bin width must be positive");
  if (n_time_slices * slice_duration_ps < 6.0 * pump.envelope_sigma_ps() * (1.0 - 1e-12))
    throw ValidationError("lattice must span +-3 sigma of the pump envelope");
  if (bin_width * slice_duration_ps > 2.0 * std::numbers::pi * (1.0 + 1e-12))
    throw ValidationError("lattice too coarse: bin_width * slice_duration exceeds 2 pi");
}

LatticeSpec default_lattice(const CrystalParams& crystal, const PumpParams& pump) {
  LatticeSpec lat;
  lat.slice_duration_ps = 1.0 / spectral_fwhm_rad_ps(crystal, pump);
  lat.n_time_slices =
      static_cast<int>(std::ceil(6.0 * pump.envelope_sigma_ps() / lat.slice_duration_ps));
  lat.n_freq_bins = 16;
  lat.bin_width = spectral_cutoff(crystal, pump) / lat.n_freq_bins;
  return lat;
}

double mean_photons_per_cell(const CrystalParams& crystal, const PumpParams& pump,
                             const LatticeSpec& lattice) {
  const CellTable t = tabulate(crystal, pump, lattice);
  double acc = 0.0;
  for (double n : t.n) acc += n;
  return acc / static_cast<double>(t.n.size());
}

void check_wigner_guard(const CrystalParams& crystal, const PumpParams& pump,
                        const LatticeSpec& lattice, double min_photons) {
  const double n = mean_photons_per_cell(crystal, pump, lattice);
  if (!(n >= min_photons))
    throw ValidationError("Wigner guard: mean photons per cell " + std::to_string(n) + " < " +
                          std::to_string(min_photons));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

EnsembleStats simulate_ensemble(const CrystalParams& crystal, const PumpParams& pump,
                                const DetectionModel& det, const LatticeSpec& lattice, double tau,
                                std::uint64_t seed) {
  validate_inputs(crystal, pump, det, lattice, tau);
  const CellTable table = tabulate(crystal, pump, lattice);
  const int n_t = lattice.n_time_slices;
  const int n_f = lattice.n_freq_bins;
  const int shift = slice_shift(tau, lattice);
  const int q_lo = std::min(0, shift);
  const int q_hi = std::max(n_t - 1, n_t - 1 + shift);
  const long long n_slots = q_hi - q_lo + 1;
  const long long modes = n_slots * n_f * 2LL * det.m_spatial;

  std::vector<cplx> delay_phase(n_f);
  for (int k = 0; k < n_f; ++k) delay_phase[k] = std::polar(1.0, -lattice.omega_of(k) * tau);

  const double eta = det.eta;
  const double noise_sd = std::sqrt(det.noise_var);
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  const auto n_pulses = static_cast<std::size_t>(det.n_pulses);
  std::vector<double> s1(n_pulses), s2(n_pulses);

  parallel_for(n_pulses, [&](std::size_t pulse) {
    std::mt19937_64 rng(derive_seed(seed, pulse));
    boost::random::normal_distribution<double> quad(0.0, 0.5);  // Wigner vacuum quadrature
    auto vac = [&] {
      const double re = quad(rng);
      return cplx(re, quad(rng));
    };
    const std::size_t cells = static_cast<std::size_t>(n_t) * n_f;
    std::vector<cplx> a1p(cells), a1m(cells), a2p(cells), a2m(cells);
    double w1 = 0.0, w2 = 0.0;
    for (int rep = 0; rep < det.m_spatial; ++rep) {
      for (std::size_t c = 0; c < cells; ++c) {
        const cplx b1p = vac(), b2m = vac(), b1m = vac(), b2p = vac();
        const cplx u = table.u[c];
        const double v = table.v[c];
        a1p[c] = u * b1p + v * std::conj(b2m);
        a2m[c] = u * b2m + v * std::conj(b1p);
        a1m[c] = std::conj(u) * b1m + v * std::conj(b2p);
        a2p[c] = std::conj(u) * b2p + v * std::conj(b1m);
      }
      for (int q = q_lo; q <= q_hi; ++q) {
        const int src = q - shift;
        const bool has1 = src >= 0 && src < n_t;
        const bool has2 = q >= 0 && q < n_t;
        for (int k = 0; k < n_f; ++k) {
          cplx xp, xm, yp, ym;
          if (has1) {
            const std::size_t c = static_cast<std::size_t>(src) * n_f + k;
            xp = delay_phase[k] * a1p[c];
            xm = std::conj(delay_phase[k]) * a1m[c];
          } else {
            xp = vac();
            xm = vac();
          }
          if (has2) {
            const std::size_t c = static_cast<std::size_t>(q) * n_f + k;
            yp = a2p[c];
            ym = a2m[c];
          } else {
            yp = vac();
            ym = vac();
          }
          w1 += std::norm((xp + yp) * inv_sqrt2) + std::norm((xm + ym) * inv_sqrt2);
          w2 += std::norm((xp - yp) * inv_sqrt2) + std::norm((xm - ym) * inv_sqrt2);
        }
      }
    }
    // Loss with fresh vacuum, collapsed exactly to two draws per detector:
    // the vacuum component along the signal direction and the chi-square rest.
    auto detect = [&](double w) {
      double s = w;
      if (eta < 1.0) {
        boost::random::normal_distribution<double> along(0.0, 0.5 * std::sqrt(w));
        boost::random::gamma_distribution<double> rest(0.5 * (2.0 * modes - 1.0), 2.0);
        const double a = along(rng);
        const double b = (w > 0 ? a * a / w : 0.0) + 0.25 * rest(rng);
        s = eta * w + 2.0 * std::sqrt(eta * (1.0 - eta)) * a + (1.0 - eta) * b;
      }
      s -= 0.5 * static_cast<double>(modes);
      if (noise_sd > 0) s += boost::random::normal_distribution<double>(0.0, noise_sd)(rng);
      return s;
    };
    s1[pulse] = detect(w1);
    s2[pulse] = detect(w2);
  });

  EnsembleStats st;
  st.tau = tau;
  st.n_pulses = det.n_pulses;
  st.modes_per_detector = modes;
  const double n = static_cast<double>(n_pulses);
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n_pulses; ++i) {
    m1 += s1[i];
    m2 += s2[i];
  }
  m1 /= n;
  m2 /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < n_pulses; ++i) {
    const double a = s1[i] - m1;
    const double b = s2[i] - m2;
    saa += a * a;
    sbb += b * b;
    sab += a * b;
  }
  st.mean_s1 = m1;
  st.mean_s2 = m2;
  st.se_mean_s1 = std::sqrt(saa / (n - 1.0) / n);
  st.se_mean_s2 = std::sqrt(sbb / (n - 1.0) / n);
  if (!(pump.peak_gain > 0)) {
    st.degenerate = true;
    return st;
  }

  // Symmetric-ordering excess of Var(S1 - S2): 1/4 per complex mode.
  const double wigner_excess = 0.25 * 2.0 * static_cast<double>(modes);
  const double sdd = saa + sbb - 2.0 * sab;
  auto nrf_of = [&](double var_d, double mean1, double mean2) {
    return (var_d - wigner_excess) / (mean1 + mean2);
  };
  st.nrf_hat = nrf_of(sdd / (n - 1.0), m1, m2);
  st.g2_hat = 1.0 + (sab / n) / (m1 * m2);

  std::vector<double> nrf_rep(n_pulses), g2_rep(n_pulses);
  for (std::size_t i = 0; i < n_pulses; ++i) {
    const double a = s1[i] - m1;
    const double b = s2[i] - m2;
    const double d = a - b;
    const double m1i = m1 - a / (n - 1.0);
    const double m2i = m2 - b / (n - 1.0);
    const double var_d = (sdd - d * d - d * d / (n - 1.0)) / (n - 2.0);
    const double cov = (sab - a * b - a * b / (n - 1.0)) / (n - 1.0);
    nrf_rep[i] = nrf_of(var_d, m1i, m2i);
    g2_rep[i] = 1.0 + cov / (m1i * m2i);
  }
  st.se_nrf = jackknife_se(nrf_rep);
  st.se_g2 = jackknife_se(g2_rep);
  return st;
}

std::vector<EnsembleStats> dip_scan(const CrystalParams& crystal, const PumpParams& pump,
                                    const DetectionModel& det, const LatticeSpec& lattice,
                                    const Eigen::VectorXd& tau, std::uint64_t seed) {
  if (tau.size() == 0) throw ValidationError("delay grid is empty");
  std::vector<EnsembleStats> out;
  out.reserve(static_cast<std::size_t>(tau.size()));
  for (Eigen::Index i = 0; i < tau.size(); ++i)
    out.push_back(simulate_ensemble(crystal, pump, det, lattice, tau(i),
                                    derive_seed(seed, static_cast<std::uint64_t>(i))));
  return out;
}

LatticeExpectation lattice_expectation(const CrystalParams& crystal, const PumpParams& pump,
                                       const DetectionModel& det, const LatticeSpec& lattice,
                                       double tau) {
  validate_inputs(crystal, pump, det, lattice, tau);
  const CellTable t = tabulate(crystal, pump, lattice);
  const int n_t = lattice.n_time_slices;
  const int n_f = lattice.n_freq_bins;
  const int shift = slice_shift(tau, lattice);

  double mean_plus = 0.0, var_plus = 0.0, var_minus = 0.0;
  for (double n : t.n) {
    mean_plus += 4.0 * n;
    var_plus += 8.0 * n * (n + 1.0);
  }
  if (shift == 0) {
    for (int j = 0; j < n_t; ++j) {
      for (int k = 0; k < n_f; ++k) {
        const std::size_t c = static_cast<std::size_t>(j) * n_f + k;
        const double n = t.n[c];
        const cplx uc = std::conj(t.u[c]);
        const double interference =
            (uc * uc * std::polar(1.0, 2.0 * lattice.omega_of(k) * tau)).real();
        var_minus += 4.0 * n * (n + 1.0) + 4.0 * n * interference;
      }
    }
  } else {
    const int q_lo = std::min(0, shift);
    const int q_hi = std::max(n_t - 1, n_t - 1 + shift);
    for (int q = q_lo; q <= q_hi; ++q) {
      const int src = q - shift;
      for (int k = 0; k < n_f; ++k) {
        const double na = (src >= 0 && src < n_t) ? t.n[static_cast<std::size_t>(src) * n_f + k] : 0.0;
        const double nb = (q >= 0 && q < n_t) ? t.n[static_cast<std::size_t>(q) * n_f + k] : 0.0;
        var_minus += 2.0 * (2.0 * na * nb + na + nb);
      }
    }
  }
  const double m = det.m_spatial;
  mean_plus *= m;
  var_plus *= m;
  var_minus *= m;

  LatticeExpectation out;
  const double eta = det.eta;
  out.mean_total = eta * mean_plus;
  if (!(mean_plus > 0)) return out;
  const double shot = eta * (1.0 - eta) * mean_plus + 2.0 * det.noise_var;
  const double vs_minus = eta * eta * var_minus + shot;
  const double vs_plus = eta * eta * var_plus + shot;
  out.nrf = vs_minus / out.mean_total;
  out.g2 = 1.0 + (vs_plus - vs_minus) / (out.mean_total * out.mean_total);
  return out;
}

}  // namespace mhom
