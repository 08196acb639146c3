#include "mhom/errors.hpp"
#include "mhom/mc_detect.hpp"
#include "mhom/numerics.hpp"
#include "oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

using namespace mhom;

namespace {

struct Small {
  CrystalParams crystal{10.0, 0.2};
  PumpParams pump;
  LatticeSpec lattice{3, 2, 2.5, 2.4};
  DetectionModel det;
  Small() {
    pump.peak_gain = 2.0;
    pump.duration_ps = 2.0;
    det.eta = 0.5;
    det.m_spatial = 2;
    det.n_pulses = 4000;
  }
};

using cplx = std::complex<double>;

// Real 2x2 blocks for z -> alpha z and z -> beta conj(z).
void put_linear(Eigen::MatrixXd& a, Eigen::Index row, Eigen::Index col, cplx alpha) {
  a(2 * row, 2 * col) += alpha.real();
  a(2 * row, 2 * col + 1) -= alpha.imag();
  a(2 * row + 1, 2 * col) += alpha.imag();
  a(2 * row + 1, 2 * col + 1) += alpha.real();
}
void put_conjugate(Eigen::MatrixXd& a, Eigen::Index row, Eigen::Index col, cplx beta) {
  a(2 * row, 2 * col) += beta.real();
  a(2 * row, 2 * col + 1) += beta.imag();
  a(2 * row + 1, 2 * col) += beta.imag();
  a(2 * row + 1, 2 * col + 1) -= beta.real();
}

struct CovarianceOracle {
  double nrf;
  double g2;
};

// Builds the full linear map from vacuum inputs to detector modes and
// evaluates the estimators' expectations by covariance traces.
CovarianceOracle covariance_oracle(const Small& s, double tau) {
  const auto& lat = s.lattice;
  const int n_t = lat.n_time_slices, n_f = lat.n_freq_bins, m = s.det.m_spatial;
  const int shift = static_cast<int>(std::llround(tau / lat.slice_duration_ps));
  const int q_lo = std::min(0, shift), q_hi = std::max(n_t - 1, n_t - 1 + shift);
  const int slots = q_hi - q_lo + 1;

  // Inputs: 4 per cell, then 4 spare vacua per (slot, bin) for missing beams.
  const int cell_inputs = 4 * m * n_t * n_f;
  const int n_in = cell_inputs + 4 * m * slots * n_f;
  const int n_out = 4 * m * slots * n_f;  // (c1p, c1m, c2p, c2m) per slot, bin
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n_out, 2 * n_in);
  Eigen::VectorXd w_minus(n_out), w_plus(n_out), w1(n_out), w2(n_out);

  auto in_index = [&](int rep, int j, int k, int which) { return ((rep * n_t + j) * n_f + k) * 4 + which; };
  auto spare = [&](int rep, int q, int k, int which) {
    return cell_inputs + ((rep * slots + (q - q_lo)) * n_f + k) * 4 + which;
  };
  const double r = 1.0 / std::numbers::sqrt2;
  for (int rep = 0; rep < m; ++rep) {
    for (int q = q_lo; q <= q_hi; ++q) {
      for (int k = 0; k < n_f; ++k) {
        const double w = lat.omega_of(k);
        const cplx ph = std::polar(1.0, -w * tau);
        const int base = ((rep * slots + (q - q_lo)) * n_f + k) * 4;
        // Contributions of x (beam 1, delayed) and y (beam 2) at +Omega and -Omega.
        struct Term {
          int in;
          bool conj;
          cplx coef;
        };
        std::vector<Term> xp, xm, yp, ym;
        const int src = q - shift;
        if (src >= 0 && src < n_t) {
          const auto g = uv(w, lat.time_of(src), s.crystal, s.pump);
          // a1p = U b1p + V conj(b2m); a1m = U* b1m + V conj(b2p)
          xp = {{in_index(rep, src, k, 0), false, ph * g.u}, {in_index(rep, src, k, 1), true, ph * g.v}};
          xm = {{in_index(rep, src, k, 2), false, std::conj(ph) * std::conj(g.u)},
                {in_index(rep, src, k, 3), true, std::conj(ph) * g.v}};
        } else {
          xp = {{spare(rep, q, k, 0), false, 1.0}};
          xm = {{spare(rep, q, k, 1), false, 1.0}};
        }
        if (q >= 0 && q < n_t) {
          const auto g = uv(w, lat.time_of(q), s.crystal, s.pump);
          // a2p = U* b2p + V conj(b1m); a2m = U b2m + V conj(b1p)
          yp = {{in_index(rep, q, k, 3), false, std::conj(g.u)}, {in_index(rep, q, k, 2), true, g.v}};
          ym = {{in_index(rep, q, k, 1), false, g.u}, {in_index(rep, q, k, 0), true, g.v}};
        } else {
          yp = {{spare(rep, q, k, 2), false, 1.0}};
          ym = {{spare(rep, q, k, 3), false, 1.0}};
        }
        auto add = [&](int row, const std::vector<Term>& terms, double sign) {
          for (const auto& t : terms) {
            if (t.conj) put_conjugate(a, row, t.in, sign * r * t.coef);
            else put_linear(a, row, t.in, sign * r * t.coef);
          }
        };
        add(base + 0, xp, 1.0);
        add(base + 0, yp, 1.0);
        add(base + 1, xm, 1.0);
        add(base + 1, ym, 1.0);
        add(base + 2, xp, 1.0);
        add(base + 2, yp, -1.0);
        add(base + 3, xm, 1.0);
        add(base + 3, ym, -1.0);
        for (int i = 0; i < 4; ++i) {
          const bool det1 = i < 2;
          w_minus(base + i) = det1 ? 1.0 : -1.0;
          w_plus(base + i) = 1.0;
          w1(base + i) = det1 ? 1.0 : 0.0;
          w2(base + i) = det1 ? 0.0 : 1.0;
        }
      }
    }
  }
  const auto minus = oracle::quadratic_stats(a, w_minus, s.det.eta);
  const auto plus = oracle::quadratic_stats(a, w_plus, s.det.eta);
  const auto n1 = oracle::quadratic_stats(a, w1, s.det.eta);
  const auto n2 = oracle::quadratic_stats(a, w2, s.det.eta);
  const double cov12 = 0.25 * (plus.var - minus.var);
  return {minus.var / plus.mean, 1.0 + cov12 / (n1.mean * n2.mean)};
}

}  // namespace

TEST_CASE("lattice expectation agrees with a covariance-trace oracle") {
  Small s;
  for (double tau : {0.0, 0.3, -0.7, 1.2, 2.5, -5.0, 9.0}) {
    CAPTURE(tau);
    const auto e = lattice_expectation(s.crystal, s.pump, s.det, s.lattice, tau);
    const auto o = covariance_oracle(s, tau);
    CHECK(e.nrf == doctest::Approx(o.nrf).epsilon(1e-10));
    CHECK(e.g2 == doctest::Approx(o.g2).epsilon(1e-10));
  }
}

TEST_CASE("ensemble agrees with the lattice expectation") {
  Small s;
  for (double tau : {0.0, 0.4, 2.5, 9.0}) {
    CAPTURE(tau);
    const auto st = simulate_ensemble(s.crystal, s.pump, s.det, s.lattice, tau, 77);
    const auto e = lattice_expectation(s.crystal, s.pump, s.det, s.lattice, tau);
    CHECK(std::abs(st.nrf_hat - e.nrf) < 3 * st.se_nrf);
    CHECK(std::abs(st.g2_hat - e.g2) < 3 * st.se_g2);
    CHECK(st.se_nrf > 0);
    CHECK(st.se_g2 > 0);
    CHECK(std::abs(st.mean_s1 + st.mean_s2 - e.mean_total) <
          3 * std::hypot(st.se_mean_s1, st.se_mean_s2));
  }
}

TEST_CASE("far delay is shot-noise limited") {
  Small s;
  const auto st = simulate_ensemble(s.crystal, s.pump, s.det, s.lattice, 40.0, 5);
  CHECK(std::abs(st.nrf_hat - 1.0) < 3 * st.se_nrf);
}

TEST_CASE("seed determinism and schedule independence") {
  Small s;
  s.det.n_pulses = 500;
  set_thread_limit(1);
  const auto a = simulate_ensemble(s.crystal, s.pump, s.det, s.lattice, 0.2, 11);
  set_thread_limit(3);
  const auto b = simulate_ensemble(s.crystal, s.pump, s.det, s.lattice, 0.2, 11);
  set_thread_limit(0);
  CHECK(a.nrf_hat == b.nrf_hat);
  CHECK(a.g2_hat == b.g2_hat);
  CHECK(a.se_nrf == b.se_nrf);
  CHECK(a.mean_s1 == b.mean_s1);
  const auto c = simulate_ensemble(s.crystal, s.pump, s.det, s.lattice, 0.2, 12);
  CHECK(c.nrf_hat != a.nrf_hat);
}

TEST_CASE("dip scan uses derived seeds") {
  Small s;
  s.det.n_pulses = 300;
  Eigen::VectorXd tau(2);
  tau << 0.0, 1.0;
  const auto scan = dip_scan(s.crystal, s.pump, s.det, s.lattice, tau, 99);
  REQUIRE(scan.size() == 2);
  const auto one = simulate_ensemble(s.crystal, s.pump, s.det, s.lattice, 1.0, derive_seed(99, 1));
  CHECK(scan[1].nrf_hat == one.nrf_hat);
  CHECK(scan[1].g2_hat == one.g2_hat);
  CHECK_THROWS_AS(dip_scan(s.crystal, s.pump, s.det, s.lattice, Eigen::VectorXd(), 1), ValidationError);
}

TEST_CASE("jackknife error scales as 1/sqrt(n)") {
  Small s;
  s.det.n_pulses = 3000;
  const auto a = simulate_ensemble(s.crystal, s.pump, s.det, s.lattice, 0.0, 3);
  s.det.n_pulses = 30000;
  const auto b = simulate_ensemble(s.crystal, s.pump, s.det, s.lattice, 0.0, 3);
  CHECK(a.se_nrf / b.se_nrf == doctest::Approx(std::sqrt(10.0)).epsilon(0.2));
}

TEST_CASE("loss follows the affine detection law") {
  Small s;
  s.det.n_pulses = 20000;
  s.det.eta = 1.0;
  const auto full = simulate_ensemble(s.crystal, s.pump, s.det, s.lattice, 0.0, 21);
  for (double eta : {0.03, 0.3}) {
    s.det.eta = eta;
    const auto st = simulate_ensemble(s.crystal, s.pump, s.det, s.lattice, 0.0, 21);
    const double predicted = 1 + eta * (full.nrf_hat - 1);
    CHECK(std::abs(st.nrf_hat - predicted) < 3 * std::hypot(st.se_nrf, eta * full.se_nrf));
  }
}

TEST_CASE("vacuum ensemble is flagged") {
  Small s;
  s.pump.peak_gain = 0.0;
  s.det.n_pulses = 2000;
  const auto st = simulate_ensemble(s.crystal, s.pump, s.det, s.lattice, 0.0, 1);
  CHECK(st.degenerate);
  CHECK(st.nrf_hat == 1.0);
  CHECK(std::abs(st.mean_s1) < 3 * st.se_mean_s1);
  CHECK(std::abs(st.mean_s2) < 3 * st.se_mean_s2);
}

TEST_CASE("validation") {
  Small s;
  DetectionModel bad = s.det;
  bad.eta = 0.0;
  CHECK_THROWS_AS(simulate_ensemble(s.crystal, s.pump, bad, s.lattice, 0.0, 1), ValidationError);
  bad.eta = 1.2;
  CHECK_THROWS_AS(simulate_ensemble(s.crystal, s.pump, bad, s.lattice, 0.0, 1), ValidationError);
  LatticeSpec coarse = s.lattice;
  coarse.bin_width = 3.0;  // 3.0 * 2.5 > 2 pi
  CHECK_THROWS_AS(simulate_ensemble(s.crystal, s.pump, s.det, coarse, 0.0, 1), ValidationError);
  LatticeSpec short_span = s.lattice;
  short_span.n_time_slices = 2;
  CHECK_THROWS_AS(simulate_ensemble(s.crystal, s.pump, s.det, short_span, 0.0, 1), ValidationError);
}

TEST_CASE("Wigner guard and default lattice") {
  PumpParams pump;
  const CrystalParams c = calibrate_walkoff(1.3, pump);
  const LatticeSpec lat = default_lattice(c, pump);
  CHECK(lat.slice_duration_ps == doctest::Approx(1.0 / spectral_fwhm_rad_ps(c, pump)));
  CHECK(lat.n_time_slices * lat.slice_duration_ps >= 6 * pump.envelope_sigma_ps());
  CHECK_NOTHROW(lat.validate(pump));
  CHECK_NOTHROW(check_wigner_guard(c, pump, lat));
  Small s;
  CHECK_THROWS_AS(check_wigner_guard(s.crystal, s.pump, s.lattice), ValidationError);
}
