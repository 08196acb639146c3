#pragma once

// Brute-force photon statistics in a truncated Fock basis. The delay acts on
// a frequency pair +Omega/-Omega, so the state is two identical two-mode
// squeezed vacua: pair P couples beam1(+Omega) with beam2(-Omega), pair Q
// couples beam1(-Omega) with beam2(+Omega). The 50:50 beamsplitter mixes
// equal frequencies, i.e. one member of P with one member of Q.
//
// Memory: one (S+1) x (S+1) beamsplitter block at a time, O(n_max^2).
// Time: O(n_max^4) per call.

#include <Eigen/Dense>

namespace mhom {

struct TmsvState {
  Eigen::VectorXd amplitudes;  ///< c_n on the |n, n> ladder, n = 0..n_max
  double g = 0.0;
  int n_max = 0;
};

/// Smallest truncation that keeps the four-mode statistics accurate to
/// ~1e-10 relative; never below 32.
int default_truncation(double g);

/// c_n = tanh^n(g) / cosh(g). Throws ValidationError when tanh^{2 n_max}(g)
/// is not below 1e-10.
TmsvState tmsv(double g, int n_max);
TmsvState tmsv(double g);

/// Mean photon number per beam of one pair, by direct summation.
double mean_photons(const TmsvState& state);

/// <n1 n2> / (<n1> <n2>) of one pair before any beamsplitter.
double twin_beam_g2(const TmsvState& state);

struct HomStats {
  double var_diff = 0.0;     ///< Var(N1 - N2)
  double n_total = 0.0;      ///< <N1 + N2> after the beamsplitter
  double n_total_in = 0.0;   ///< <N1 + N2> of the input state
  double mean_n1 = 0.0;
  double mean_n2 = 0.0;
  double g2_cross = 0.0;     ///< <N1 N2> / (<N1><N2>); NaN for vacuum
};

/// Beam 1 picks up e^{-i phi/2} per photon at +Omega and e^{+i phi/2} at
/// -Omega (phi = 2 Omega tau); then the 50:50 beamsplitter. Photon pairs
/// with total number above n_max are dropped; throws NumericalError if the
/// dropped probability exceeds 1e-8.
HomStats hom_stats(const TmsvState& state, double phi);

/// The beamsplitter block for total photon number s: entry (j, n) is the
/// amplitude for n photons in input 1 (s - n in input 2) to leave j photons
/// in output 1. Real orthogonal.
Eigen::MatrixXd beamsplitter_block(int s);

}  // namespace mhom
