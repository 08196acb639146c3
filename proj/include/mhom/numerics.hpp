#pragma once

// Small numerical kernels shared by the physics modules: Gauss-Legendre
// rules, a bracketed scalar root finder, and a deterministic parallel loop.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>

namespace mhom {

/// Gauss-Legendre rule on [-1, 1] via the Golub-Welsch eigenproblem.
struct GaussLegendreRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

GaussLegendreRule gauss_legendre(int order);

/// Composite rule on [a, b]: `panels` equal panels of the given order.
/// Nodes come out strictly increasing.
GaussLegendreRule composite_gauss_legendre(double a, double b, int panels, int order);

/// Brent's method on a sign-changing bracket. Throws NumericalError when
/// f(a), f(b) do not bracket a root or the iteration budget runs out.
double find_root(const std::function<double(double)>& f, double a, double b,
                 double xtol = 1e-14, int max_iter = 200);

/// Worker count used by parallel_for; 0 means hardware concurrency.
void set_thread_limit(unsigned n);
unsigned thread_limit();

/// Runs body(i) for i in [0, n) on up to thread_limit() threads. Work is
/// split into contiguous static chunks; callers write to index-addressed
/// slots so results do not depend on the schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace mhom
