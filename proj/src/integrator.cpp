#include "kinfer/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kinfer/common.hpp"

namespace kinfer {
namespace {

constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;

constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                 a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;

constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

constexpr double kSafe = 0.9;
// h_new / h_old is kept within [kFacMin, kFacMax].
constexpr double kFacMin = 0.2;
constexpr double kFacMax = 10.0;
constexpr double kBeta = 0.04;
constexpr std::size_t kMaxSteps = 20'000'000;

}  // namespace

IntegratorStats integrate_dense(const OdeRhs& f, std::span<const double> y0,
                                std::span<const double> times, const Tolerances& tol,
                                double max_step, std::vector<std::vector<double>>& out) {
  if (!(tol.rtol > 0.0) || !(tol.atol > 0.0)) throw ConfigError("integrator tolerances must be positive");
  const std::size_t n = y0.size();
  const std::size_t L = times.size();
  out.assign(L, std::vector<double>(y0.begin(), y0.end()));
  IntegratorStats stats;
  if (L <= 1) return stats;

  const double t0 = times.front();
  const double tend = times.back();
  const double dir = tend > t0 ? 1.0 : -1.0;
  for (std::size_t l = 1; l < L; ++l)
    if (!((times[l] - times[l - 1]) * dir > 0.0)) throw ConfigError("output times must be strictly monotone");
  const double hmax = max_step > 0.0 ? max_step : std::abs(tend - t0);

  std::vector<double> y(y0.begin(), y0.end()), ynew(n), ytmp(n);
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);
  std::vector<double> r2(n), r3(n), r4(n), r5(n);

  auto eval = [&](double t, const std::vector<double>& yy, std::vector<double>& dy) {
    f(t, yy, dy);
    ++stats.rhs_evals;
  };

  double t = t0;
  eval(t, y, k1);

  // Initial step (Hairer & Wanner, hinit).
  double h;
  {
    double dnf = 0.0, dny = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sk = tol.atol + tol.rtol * std::abs(y[i]);
      dnf += (k1[i] / sk) * (k1[i] / sk);
      dny += (y[i] / sk) * (y[i] / sk);
    }
    dnf /= std::max<std::size_t>(n, 1);
    dny /= std::max<std::size_t>(n, 1);
    h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
    h = std::min(h, hmax);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + dir * h * k1[i];
    eval(t + dir * h, ytmp, k2);
    double der2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sk = tol.atol + tol.rtol * std::abs(y[i]);
      der2 += ((k2[i] - k1[i]) / sk) * ((k2[i] - k1[i]) / sk);
    }
    der2 = std::sqrt(der2 / std::max<std::size_t>(n, 1)) / h;
    const double der12 = std::max(std::abs(der2), std::sqrt(dnf));
    const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
    h = std::min({100.0 * h, h1, hmax});
  }

  double facold = 1e-4;
  bool last_rejected = false;
  std::size_t next_out = 1;
  const double expo1 = 0.2 - kBeta * 0.75;

  while (next_out < L) {
    if (stats.accepted + stats.rejected > kMaxSteps) {
      std::ostringstream os;
      os << "integrator exceeded " << kMaxSteps << " steps at t=" << t;
      throw NumericalError(os.str());
    }
    const double remaining = std::abs(tend - t);
    bool hits_end = false;
    if (h >= remaining) {
      h = remaining;
      hits_end = true;
    }
    const double hs = dir * h;

    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + hs * a21 * k1[i];
    eval(t + c2 * hs, ytmp, k2);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + hs * (a31 * k1[i] + a32 * k2[i]);
    eval(t + c3 * hs, ytmp, k3);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + hs * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    eval(t + c4 * hs, ytmp, k4);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = y[i] + hs * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    eval(t + c5 * hs, ytmp, k5);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = y[i] + hs * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    const double tnew = hits_end ? tend : t + hs;
    eval(tnew, ytmp, k6);
    for (std::size_t i = 0; i < n; ++i)
      ynew[i] = y[i] + hs * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
    eval(tnew, ynew, k7);

    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sk = tol.atol + tol.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      const double ei = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      err += (ei / sk) * (ei / sk);
    }
    err = std::sqrt(err / std::max<std::size_t>(n, 1));
    if (!std::isfinite(err)) err = 1e10;

    const double fac11 = std::pow(err, expo1);
    double fac = fac11 / std::pow(facold, kBeta);
    fac = std::clamp(fac / kSafe, 1.0 / kFacMax, 1.0 / kFacMin);
    double hnew = h / fac;

    if (err <= 1.0) {
      facold = std::max(err, 1e-4);
      ++stats.accepted;
      for (std::size_t i = 0; i < n; ++i) {
        r2[i] = ynew[i] - y[i];
        r3[i] = hs * k1[i] - r2[i];
        r4[i] = r2[i] - hs * k7[i] - r3[i];
        r5[i] = hs * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
      }
      while (next_out < L && (hits_end || (times[next_out] - tnew) * dir <= 0.0)) {
        std::vector<double>& o = out[next_out];
        if (times[next_out] == tnew) {
          o = ynew;
        } else {
          const double theta = (times[next_out] - t) / hs;
          const double theta1 = 1.0 - theta;
          for (std::size_t i = 0; i < n; ++i)
            o[i] = y[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
        ++next_out;
      }
      y.swap(ynew);
      k1.swap(k7);
      t = tnew;
      if (last_rejected) hnew = std::min(hnew, h);
      last_rejected = false;
      h = std::min(hnew, hmax);
    } else {
      ++stats.rejected;
      hnew = h / std::min(1.0 / kFacMin, fac11 / kSafe);
      last_rejected = true;
      h = hnew;
      if (h < 10.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) {
        std::ostringstream os;
        os << "step size underflow at t=" << t;
        throw NumericalError(os.str());
      }
    }
  }
  return stats;
}

}  // namespace kinfer
