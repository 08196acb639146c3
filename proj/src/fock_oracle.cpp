#include "mhom/fock_oracle.hpp"

#include "mhom/errors.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <string>

namespace mhom {

namespace {

constexpr int kMaxTruncation = 4000;

// Column n of the block is the eigenvector of T = c1^dag c2 + c2^dag c1 with
// eigenvalue s - 2n (T is -(a1^dag a1 - a2^dag a2) in the output basis).
// Eigenvector signs follow from a1^dag a2 |n, s-n> = sqrt((n+1)(s-n)) |n+1, s-n-1>.
Eigen::MatrixXd block_from_eigenvectors(int s) {
  if (s == 0) return Eigen::MatrixXd::Ones(1, 1);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(s + 1);
  Eigen::VectorXd sub(s);
  for (int j = 0; j < s; ++j) sub(j) = std::sqrt((j + 1.0) * (s - j));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  eig.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (eig.info() != Eigen::Success) throw NumericalError("beamsplitter eigensolver failed");

  Eigen::MatrixXd b(s + 1, s + 1);
  for (int n = 0; n <= s; ++n) b.col(n) = eig.eigenvectors().col(s - n);
  if (b.col(0).sum() < 0) b.col(0) *= -1.0;  // (c1^dag + c2^dag)^s: all entries positive
  Eigen::VectorXd raised(s + 1);
  for (int n = 0; n < s; ++n) {
    const auto v = b.col(n);
    for (int j = 0; j <= s; ++j) {
      double acc = (2.0 * j - s) * v(j);
      if (j > 0) acc += std::sqrt(j * (s - j + 1.0)) * v(j - 1);
      if (j < s) acc -= std::sqrt((j + 1.0) * (s - j)) * v(j + 1);
      raised(j) = 0.5 * acc;
    }
    if (raised.dot(b.col(n + 1)) < 0) b.col(n + 1) *= -1.0;
  }
  return b;
}

}  // namespace

Eigen::MatrixXd beamsplitter_block(int s) {
  if (s < 0 || s > kMaxTruncation) throw ValidationError("beamsplitter block size out of range");
  return block_from_eigenvectors(s);
}

int default_truncation(double g) {
  if (!(g >= 0) || !std::isfinite(g)) throw ValidationError("gain must be non-negative");
  const double t2 = std::tanh(g) * std::tanh(g);
  int n = std::max(32, static_cast<int>(std::ceil(12.0 * std::sinh(g) * std::sinh(g))));
  if (t2 == 0.0) return n;
  // Tail of the pair-sum distribution weighted by N^2: (n+1)^3 t^{2n}.
  const double log_t2 = std::log(t2);
  while (n < kMaxTruncation && 3.0 * std::log(n + 1.0) + n * log_t2 > std::log(1e-10)) ++n;
  return n;
}

TmsvState tmsv(double g, int n_max) {
  if (!(g >= 0) || !std::isfinite(g)) throw ValidationError("gain must be non-negative");
  if (n_max < 0 || n_max > kMaxTruncation)
    throw ValidationError("truncation must lie in [0, " + std::to_string(kMaxTruncation) + "]");
  const double t = std::tanh(g);
  if (g > 0 && 2.0 * n_max * std::log(t) >= std::log(1e-10))
    throw ValidationError("truncation n_max = " + std::to_string(n_max) +
                          " is inadequate: tanh^(2 n_max) >= 1e-10");
  TmsvState s;
  s.g = g;
  s.n_max = n_max;
  s.amplitudes.resize(n_max + 1);
  double c = 1.0 / std::cosh(g);
  for (int n = 0; n <= n_max; ++n) {
    s.amplitudes(n) = c;
    c *= t;
  }
  return s;
}

TmsvState tmsv(double g) { return tmsv(g, default_truncation(g)); }

double mean_photons(const TmsvState& state) {
  double acc = 0.0;
  for (int n = 0; n <= state.n_max; ++n) acc += n * state.amplitudes(n) * state.amplitudes(n);
  return acc;
}

double twin_beam_g2(const TmsvState& state) {
  double m1 = 0.0;
  double m2 = 0.0;
  for (int n = 0; n <= state.n_max; ++n) {
    const double p = state.amplitudes(n) * state.amplitudes(n);
    m1 += n * p;
    m2 += static_cast<double>(n) * n * p;
  }
  if (m1 == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return m2 / (m1 * m1);
}

HomStats hom_stats(const TmsvState& state, double phi) {
  const int n_max = state.n_max;
  if (state.amplitudes.size() != n_max + 1) throw ValidationError("malformed TMSV state");
  const Eigen::VectorXd& c = state.amplitudes;
  const double full_norm = c.squaredNorm() * c.squaredNorm();

  double p_sum = 0.0, in_total = 0.0;
  double s1 = 0.0, s2 = 0.0, s11 = 0.0, s22 = 0.0, s12 = 0.0;
  for (int s = 0; s <= n_max; ++s) {
    const Eigen::MatrixXd block = block_from_eigenvectors(s);
    Eigen::VectorXd w_re(s + 1), w_im(s + 1);
    for (int n = 0; n <= s; ++n) {
      const std::complex<double> w =
          c(n) * c(s - n) * std::polar(1.0, -0.5 * phi * (2.0 * n - s));
      w_re(n) = w.real();
      w_im(n) = w.imag();
      in_total += 2.0 * s * std::norm(w);
    }
    const Eigen::MatrixXd reversed = block.rowwise().reverse();
    const Eigen::MatrixXd a_re = block * w_re.asDiagonal() * reversed.transpose();
    const Eigen::MatrixXd a_im = block * w_im.asDiagonal() * reversed.transpose();
    for (int jp = 0; jp <= s; ++jp) {
      for (int j = 0; j <= s; ++j) {
        const double p = a_re(j, jp) * a_re(j, jp) + a_im(j, jp) * a_im(j, jp);
        const double n1 = j + jp;
        const double n2 = 2.0 * s - n1;
        p_sum += p;
        s1 += p * n1;
        s2 += p * n2;
        s11 += p * n1 * n1;
        s22 += p * n2 * n2;
        s12 += p * n1 * n2;
      }
    }
  }
  const double dropped = 1.0 - p_sum / full_norm;
  if (dropped > 1e-8)
    throw NumericalError("Fock truncation overflow: dropped probability " + std::to_string(dropped));

  HomStats out;
  out.mean_n1 = s1 / p_sum;
  out.mean_n2 = s2 / p_sum;
  out.n_total = out.mean_n1 + out.mean_n2;
  out.n_total_in = in_total / p_sum;
  const double diff2 = (s11 + s22 - 2.0 * s12) / p_sum;
  const double diff1 = out.mean_n1 - out.mean_n2;
  out.var_diff = diff2 - diff1 * diff1;
  out.g2_cross = out.mean_n1 > 0 && out.mean_n2 > 0
                     ? (s12 / p_sum) / (out.mean_n1 * out.mean_n2)
                     : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace mhom
