#include "mhom/errors.hpp"
#include "mhom/hom_trace.hpp"
#include "mhom/numerics.hpp"
#include "oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace mhom;

namespace {

struct Reference {
  PumpParams pump;
  CrystalParams crystal;
  Reference() : crystal(calibrate_walkoff(1.3, pump)) {}
};

const Reference& reference() {
  static const Reference p;
  return p;
}

// D = 0: the spectrum is flat, so every node carries sinh^2 G.
struct SingleMode {
  CrystalParams crystal{10.0, 0.0};
  PumpParams pump;
  SpectralGrid grid;
  double tau_far;
  explicit SingleMode(double g) {
    pump.peak_gain = g;
    const double wmax = 10.0;
    // A node of sin(2 wmax tau)/(2 wmax tau) far outside the pump envelope.
    tau_far = std::round(200.0 * wmax / std::numbers::pi) * std::numbers::pi / wmax;
    grid = make_uniform_grid(wmax, static_cast<int>(std::ceil(8 * wmax * tau_far / std::numbers::pi)) + 16);
  }
};

Trace make_trace(Eigen::VectorXd tau, Eigen::VectorXd v, TraceKind kind) {
  Trace t;
  t.tau = std::move(tau);
  t.value = std::move(v);
  t.kind = kind;
  return t;
}

}  // namespace

TEST_CASE("tau grid") {
  const auto t = make_tau_grid(-30, 30, 0.01);
  CHECK(t.size() == 6001);
  CHECK(t(3000) == 0.0);
  CHECK(t(1) == -29.99);
  CHECK(t(6000) == 30.0);
  CHECK_THROWS_AS(make_tau_grid(1, 0, 0.1), ValidationError);
  CHECK_THROWS_AS(make_tau_grid(0, 1, 0.0), ValidationError);
}

TEST_CASE("single-mode limit closed forms") {
  for (double g : {1.0, 4.0, 7.5}) {
    SingleMode sm(g);
    Eigen::VectorXd tau(2);
    tau << 0.0, sm.tau_far;
    const auto tr = nrf_and_pedestal(tau, sm.crystal, sm.pump, sm.grid);
    const double n = std::sinh(g) * std::sinh(g);
    CHECK(tr.nrf.value(0) == doctest::Approx(2 + 2 * n).epsilon(1e-12));
    CHECK(tr.pedestal.value(0) == doctest::Approx(1 + n).epsilon(1e-12));
    const double height = tr.nrf.value(0) - tr.nrf.value(1);
    CHECK(std::abs(height - (1 + 2 * n)) <= 1e-6 * (1 + 2 * n));
    // narrow component exceeds the pedestal elevation by exactly one unit of
    // shot noise, so the two agree to 1% once N >~ 100
    const double narrow = tr.nrf.value(0) - tr.pedestal.value(0);
    const double elevation = tr.pedestal.value(0) - 1;
    CHECK(narrow - elevation == doctest::Approx(1.0).epsilon(1e-6));
    if (g >= 4) CHECK(narrow == doctest::Approx(elevation).epsilon(1e-2));
  }
  CHECK(2 + 2 * std::pow(std::sinh(7.5), 2) == doctest::Approx(1.6345e6).epsilon(1e-4));
}

TEST_CASE("trace quadrature against an independent Simpson oracle") {
  const auto& p = reference();
  const double d = p.crystal.walkoff_ps_per_mm;
  const double wmax = spectral_cutoff(p.crystal, p.pump);
  Eigen::VectorXd tau(7);
  tau << -3.0, -0.4, 0.0, 0.14, 0.5, 2.0, 9.0;
  const auto grid = make_spectral_grid(p.crystal, p.pump, 9.0);
  const auto tr = nrf_and_pedestal(tau, p.crystal, p.pump, grid);
  for (Eigen::Index i = 0; i < tau.size(); ++i) {
    const auto o = oracle::nrf_simpson(tau(i), 7.5, 18.0, d, 10.0, wmax, 40000);
    CHECK(tr.nrf.value(i) == doctest::Approx(o.nrf).epsilon(1e-8));
    CHECK(tr.pedestal.value(i) == doctest::Approx(o.pedestal).epsilon(1e-8));
  }
}

TEST_CASE("limits and physical bounds") {
  const auto& p = reference();
  SUBCASE("vacuum gives shot noise") {
    PumpParams p0 = p.pump;
    p0.peak_gain = 0.0;
    const auto grid = make_uniform_grid(10.0, 2048);
    const auto tr = nrf_and_pedestal(make_tau_grid(-5, 5, 0.5), p.crystal, p0, grid);
    CHECK(tr.nrf.value.isOnes());
    CHECK(tr.pedestal.value.isOnes());
  }
  SUBCASE("far baseline") {
    Eigen::VectorXd tau(2);
    tau << -100.0, 100.0;
    const auto grid = make_spectral_grid(p.crystal, p.pump, 100.0);
    const auto tr = nrf_trace(tau, p.crystal, p.pump, grid);
    const double n_mode = std::pow(std::sinh(7.5), 2);
    const auto peak = nrf_trace(Eigen::VectorXd::Zero(1), p.crystal, p.pump, grid);
    for (Eigen::Index i = 0; i < 2; ++i)
      CHECK(std::abs(tr.value(i) - 1) < 1e-3 * (peak.value(0) - 1) / (2 * n_mode));
  }
  SUBCASE("nrf stays above shot noise") {
    const auto tau = make_tau_grid(-30, 30, 0.05);
    const auto grid = make_spectral_grid(p.crystal, p.pump, 30);
    const auto tr = nrf_and_pedestal(tau, p.crystal, p.pump, grid);
    CHECK(tr.nrf.value.minCoeff() >= 1 - 1e-6);
    CHECK(tr.pedestal.value.minCoeff() >= 1 - 1e-6);
    const Eigen::Index zero = tau.size() / 2;
    CHECK(tr.pedestal.value(zero) <= tr.nrf.value(zero));
  }
}

TEST_CASE("evenness") {
  const auto& p = reference();
  const auto tau = make_tau_grid(-20, 20, 0.1);
  const auto grid = make_spectral_grid(p.crystal, p.pump, 20);
  const auto tr = nrf_and_pedestal(tau, p.crystal, p.pump, grid);
  const auto ped = tr.pedestal.value;
  CHECK((ped - ped.reverse()).cwiseAbs().maxCoeff() <= 1e-8 * ped.maxCoeff());

  SUBCASE("flat spectrum: nrf is even") {
    SingleMode sm(3.0);
    const auto t2 = make_tau_grid(-10, 10, 0.05);
    const auto v = nrf_trace(t2, sm.crystal, sm.pump, sm.grid).value;
    CHECK((v - v.reverse()).cwiseAbs().maxCoeff() <= 1e-8 * v.maxCoeff());
  }
  SUBCASE("walk-off shifts the narrow peak to positive delay") {
    Eigen::Index arg = 0;
    (tr.nrf.value - tr.pedestal.value).maxCoeff(&arg);
    CHECK(tau(arg) > 0.0);
    CHECK(tau(arg) < 0.5);
  }
}

TEST_CASE("quadrature convergence under grid doubling") {
  const auto& p = reference();
  const auto tau = make_tau_grid(-12, 12, 0.25);
  const auto g1 = make_spectral_grid(p.crystal, p.pump, 12, 2048);
  const auto g2 = make_spectral_grid(p.crystal, p.pump, 12, 4096);
  CHECK(g2.size() == 2 * g1.size());
  const auto a = nrf_trace(tau, p.crystal, p.pump, g1).value;
  const auto b = nrf_trace(tau, p.crystal, p.pump, g2).value;
  CHECK(((a - b).array().abs() / b.array()).maxCoeff() < 1e-6);
}

TEST_CASE("grid resolution is enforced") {
  const auto& p = reference();
  const auto grid = make_spectral_grid(p.crystal, p.pump, 1.0, 64);
  Eigen::VectorXd tau(1);
  tau << 50.0;
  CHECK_THROWS_AS(nrf_trace(tau, p.crystal, p.pump, grid), ValidationError);
  CHECK_THROWS_AS(nrf_trace(Eigen::VectorXd(), p.crystal, p.pump, grid), ValidationError);
  Eigen::VectorXd bad(2);
  bad << 1.0, 0.5;
  CHECK_THROWS_AS(nrf_trace(bad, p.crystal, p.pump, grid), ValidationError);
}

TEST_CASE("parallel evaluation is schedule independent") {
  const auto& p = reference();
  const auto tau = make_tau_grid(-5, 5, 0.01);
  const auto grid = make_spectral_grid(p.crystal, p.pump, 5);
  set_thread_limit(1);
  const auto a = nrf_trace(tau, p.crystal, p.pump, grid).value;
  set_thread_limit(4);
  const auto b = nrf_trace(tau, p.crystal, p.pump, grid).value;
  set_thread_limit(0);
  CHECK(a == b);
}

TEST_CASE("detected trace") {
  const auto& p = reference();
  const auto tau = make_tau_grid(-2, 2, 0.5);
  const auto grid = make_spectral_grid(p.crystal, p.pump, 2);
  const auto tr = nrf_and_pedestal(tau, p.crystal, p.pump, grid);
  DetectionModel det;
  det.eta = 1.0;
  CHECK(detected_trace(tr.nrf, det).value == tr.nrf.value);
  det.eta = 0.03;
  const auto dn = detected_trace(tr.nrf, det);
  const auto dp = detected_trace(tr.pedestal, det);
  CHECK(dn.kind == TraceKind::nrf_detected);
  // eta (a - b) identity
  CHECK(((dn.value - dp.value) - det.eta * (tr.nrf.value - tr.pedestal.value)).cwiseAbs().maxCoeff() <=
        1e-12 * dn.value.maxCoeff());
  const auto ones = make_trace(tau, Eigen::VectorXd::Ones(tau.size()), TraceKind::nrf_ideal);
  for (double eta : {0.01, 0.03, 0.5, 1.0}) {
    det.eta = eta;
    CHECK(detected_trace(ones, det).value.isOnes(0.0));
  }
  const double n = std::pow(std::sinh(7.5), 2);
  const auto peak = make_trace(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 2 + 2 * n), TraceKind::nrf_ideal);
  det.eta = 0.03;
  CHECK(detected_trace(peak, det).value(0) == doctest::Approx(1 + 0.03 * (1 + 2 * n)));
  CHECK(detected_trace(peak, det).value(0) == doctest::Approx(4.904e4).epsilon(1e-3));
  CHECK_THROWS_AS(detected_trace(dn, det), ValidationError);
}

TEST_CASE("visibility") {
  Eigen::VectorXd c = Eigen::VectorXd::Constant(5, 2.0);
  CHECK(visibility(c) == 0.0);
  Eigen::VectorXd v(3);
  v << 1.0, 3.0, 2.0;
  CHECK(visibility(v) == 0.5);
  Eigen::VectorXd bad(2);
  bad << -1.0, 0.5;
  CHECK_THROWS_AS(visibility(bad), ValidationError);
  CHECK_THROWS_AS(visibility(Eigen::VectorXd()), ValidationError);
}

TEST_CASE("widths") {
  SUBCASE("triangle of base 2w has FWHM w") {
    const double w = 1.7;
    const auto tau = make_tau_grid(-3, 3, 0.01);
    Eigen::VectorXd tri = (1.0 - tau.array().abs() / w).max(0.0).matrix();
    CHECK(half_max_width(tau, tri) == doctest::Approx(w).epsilon(1e-12));
    const auto ped = make_trace(tau, Eigen::VectorXd::Ones(tau.size()), TraceKind::nrf_pedestal);
    const auto nrf = make_trace(tau, (1.0 + tri.array()).matrix(), TraceKind::nrf_ideal);
    CHECK(fwhm_narrow(nrf, ped) == doctest::Approx(w).epsilon(1e-12));
  }
  SUBCASE("unbracketed crossing") {
    const auto tau = make_tau_grid(-1, 1, 0.1);
    Eigen::VectorXd flat = Eigen::VectorXd::Ones(tau.size());
    CHECK_THROWS_AS(half_max_width(tau, flat), NumericalError);
  }
  SUBCASE("equal widths give one longitudinal mode") {
    const auto tau = make_tau_grid(-5, 5, 0.01);
    Eigen::VectorXd bump = (-tau.array().square()).exp().matrix();
    const auto ped = make_trace(tau, (1.0 + bump.array()).matrix(), TraceKind::nrf_pedestal);
    const auto nrf = make_trace(tau, (1.0 + 2.0 * bump.array()).matrix(), TraceKind::nrf_ideal);
    CHECK(mode_count_long(nrf, ped) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("FWHM survives the detection map") {
    const auto& p = reference();
    const auto tau = make_tau_grid(-4, 4, 0.005);
    const auto grid = make_spectral_grid(p.crystal, p.pump, 4);
    const auto tr = nrf_and_pedestal(tau, p.crystal, p.pump, grid);
    DetectionModel det;
    const double a = fwhm_narrow(tr.nrf, tr.pedestal);
    Trace dn = detected_trace(tr.nrf, det);
    Trace dp = detected_trace(tr.pedestal, det);
    dn.kind = TraceKind::nrf_ideal;
    dp.kind = TraceKind::nrf_pedestal;
    CHECK(fwhm_narrow(dn, dp) == doctest::Approx(a).epsilon(1e-9));
  }
}

TEST_CASE("mode counts") {
  const double n = std::pow(std::sinh(7.5), 2);
  CHECK(mode_count_g2(1.1, 8.17e5) == doctest::Approx(10.0).epsilon(1e-4));
  CHECK(mode_count_g2(2 + 1 / n, n) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mode_count_g2(1.05, n) == doctest::Approx(2 * mode_count_g2(1.1, n)).epsilon(1e-12));
  CHECK_THROWS_AS(mode_count_g2(1.0, n), ValidationError);
  CHECK_THROWS_AS(mode_count_g2(0.9, n), ValidationError);

  const auto& p = reference();
  auto m_long = [&](double tp) {
    PumpParams pump = p.pump;
    pump.duration_ps = tp;
    const double span = 2.5 * tp;
    const auto tau = make_tau_grid(-span, span, 0.01);
    const auto grid = make_spectral_grid(p.crystal, pump, span);
    const auto tr = nrf_and_pedestal(tau, p.crystal, pump, grid);
    return mode_count_long(tr.nrf, tr.pedestal);
  };
  const double m18 = m_long(18);
  CHECK(m18 == doctest::Approx(8.0).epsilon(0.25));
  const double m9 = m_long(9);
  const double m36 = m_long(36);
  CHECK(m36 / m18 == doctest::Approx(2.0).epsilon(0.1));
  CHECK(m18 / m9 == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("FWHM versus gain") {
  const auto& p = reference();
  const std::vector<double> gains{5.5, 6.5, 7.5};
  const auto rows = fwhm_vs_gain(gains, p.crystal, p.pump);
  REQUIRE(rows.size() == gains.size());
  CHECK(rows[0].fwhm_ps > rows[1].fwhm_ps);
  CHECK(rows[1].fwhm_ps > rows[2].fwhm_ps);
  const auto tau = make_tau_grid(-4, 4, 0.005);
  const auto grid = make_spectral_grid(p.crystal, p.pump, 4);
  const auto tr = nrf_and_pedestal(tau, p.crystal, p.pump, grid);
  CHECK(rows[2].fwhm_ps == fwhm_narrow(tr.nrf, tr.pedestal));
  CHECK_THROWS_AS(fwhm_vs_gain({0.0}, p.crystal, p.pump), ValidationError);
  CHECK_THROWS_AS(fwhm_vs_gain({13.0}, p.crystal, p.pump), ValidationError);
}

TEST_CASE("g2 trace") {
  SUBCASE("single-mode edge and multimode reduction") {
    SingleMode sm(7.5);
    Eigen::VectorXd tau(2);
    tau << 0.0, sm.tau_far;
    DetectionModel det;
    det.m_spatial = 1;
    const auto g1 = g2_trace(tau, sm.crystal, sm.pump, sm.grid, det);
    const double n = std::pow(std::sinh(7.5), 2);
    CHECK(effective_photons_per_mode(sm.crystal, sm.pump, sm.grid) == doctest::Approx(n).epsilon(1e-12));
    CHECK(g1.value(1) == doctest::Approx(2 + 1 / (2 * n)).epsilon(1e-9));
    CHECK(g1.value(1) == doctest::Approx(2.00000122).epsilon(1e-6));
    CHECK(g1.value(0) == doctest::Approx(1.0).epsilon(1e-12));
    det.m_spatial = 10;
    const auto g10 = g2_trace(tau, sm.crystal, sm.pump, sm.grid, det);
    CHECK(g10.value(1) == doctest::Approx(1 + (1 + 1 / n) / 10).epsilon(1e-6));
    CHECK(g10.value(1) == doctest::Approx(1.1).epsilon(1e-5));
    CHECK(g10.kind == TraceKind::g2);
  }
  SUBCASE("loss does not enter") {
    const auto& p = reference();
    const auto tau = make_tau_grid(-3, 3, 0.5);
    const auto grid = make_spectral_grid(p.crystal, p.pump, 3);
    DetectionModel a, b;
    b.eta = 0.9;
    CHECK(g2_trace(tau, p.crystal, p.pump, grid, a).value == g2_trace(tau, p.crystal, p.pump, grid, b).value);
  }
  SUBCASE("large m flattens toward 1") {
    const auto& p = reference();
    const auto tau = make_tau_grid(-3, 3, 0.5);
    const auto grid = make_spectral_grid(p.crystal, p.pump, 3);
    DetectionModel det;
    det.m_spatial = 1000000;
    CHECK((g2_trace(tau, p.crystal, p.pump, grid, det).value.array() - 1).abs().maxCoeff() < 1e-5);
  }
  SUBCASE("no photons") {
    SingleMode sm(0.0);
    CHECK_THROWS_AS(g2_trace(Eigen::VectorXd::Zero(1), sm.crystal, sm.pump, sm.grid, DetectionModel{}),
                    ValidationError);
  }
}
