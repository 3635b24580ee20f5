#pragma once

// Dormand-Prince 5(4) with embedded error control and continuous extension.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace kinfer {

struct Tolerances {
  double rtol = 1e-8;
  double atol = 1e-11;
};

using OdeRhs = std::function<void(double t, std::span<const double> y, std::span<double> dydt)>;

struct IntegratorStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evals = 0;
};

// Integrates from times[0] (where y = y0) through every entry of `times`,
// which must be strictly monotone (increasing or decreasing). out[l] receives
// y(times[l]) from the dense output. max_step bounds |h| (0: unbounded).
// Throws NumericalError on step-size underflow, naming the failure time.
IntegratorStats integrate_dense(const OdeRhs& f, std::span<const double> y0,
                                std::span<const double> times, const Tolerances& tol,
                                double max_step, std::vector<std::vector<double>>& out);

}  // namespace kinfer
