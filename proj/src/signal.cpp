#include "signal.hpp"

#include <cmath>

#include "errors.hpp"

namespace pcsrod {

Biquad butterworth_lowpass(double cutoff_hz, double rate_hz) {
  if (!(cutoff_hz > 0) || !(rate_hz > 0) || cutoff_hz >= 0.5 * rate_hz) {
    throw ConfigError("butterworth: cutoff must lie in (0, rate/2)");
  }
  const double k = std::tan(M_PI * cutoff_hz / rate_hz);
  const double norm = 1.0 / (1.0 + std::sqrt(2.0) * k + k * k);
  Biquad f;
  f.b0 = k * k * norm;
  f.b1 = 2.0 * f.b0;
  f.b2 = f.b0;
  f.a1 = 2.0 * (k * k - 1.0) * norm;
  f.a2 = (1.0 - std::sqrt(2.0) * k + k * k) * norm;
  return f;
}

namespace {

// direct form II transposed with steady-state initialization
VecX run_filter(const Biquad& f, const VecX& x) {
  VecX y(x.size());
  // state for a constant input x0 with unit DC gain
  double z1 = (f.b1 - f.a1) * x(0) + (f.b2 - f.a2) * x(0);
  double z2 = (f.b2 - f.a2) * x(0);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double out = f.b0 * x(i) + z1;
    z1 = f.b1 * x(i) - f.a1 * out + z2;
    z2 = f.b2 * x(i) - f.a2 * out;
    y(i) = out;
  }
  return y;
}

}  // namespace

VecX filtfilt(const Biquad& f, const VecX& x) {
  const Eigen::Index n = x.size();
  if (n < 4) throw DataError("filtfilt: signal too short");
  // pad until the transient decays below 1e-9 of its start (pole radius
  // sqrt(a2) for the complex Butterworth pair)
  const double pole = std::clamp(std::sqrt(std::max(f.a2, 0.0)), 1e-6, 0.999999);
  const Eigen::Index pad = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::ceil(-20.7 / std::log(pole))), 12, n - 1);
  VecX ext(n + 2 * pad);
  for (Eigen::Index i = 0; i < pad; ++i) {
    ext(i) = 2.0 * x(0) - x(pad - i);
    ext(n + pad + i) = 2.0 * x(n - 1) - x(n - 2 - i);
  }
  ext.segment(pad, n) = x;

  VecX fwd = run_filter(f, ext);
  VecX rev = fwd.reverse();
  VecX back = run_filter(f, rev);
  VecX out = back.reverse().segment(pad, n);
  return out;
}

int filter_edge_samples(double cutoff_hz, double rate_hz, int signal_len) {
  const int edge = static_cast<int>(std::ceil(rate_hz / cutoff_hz));
  return std::min(edge, std::max(0, signal_len / 2 - 1));
}

VecX central_derivative(const VecX& x, double dt) {
  const Eigen::Index n = x.size();
  if (n < 3) throw DataError("derivative: need at least 3 samples");
  VecX d(n);
  for (Eigen::Index i = 1; i + 1 < n; ++i) d(i) = (x(i + 1) - x(i - 1)) / (2.0 * dt);
  d(0) = (-3.0 * x(0) + 4.0 * x(1) - x(2)) / (2.0 * dt);
  d(n - 1) = (3.0 * x(n - 1) - 4.0 * x(n - 2) + x(n - 3)) / (2.0 * dt);
  return d;
}

VecX central_second_derivative(const VecX& x, double dt) {
  const Eigen::Index n = x.size();
  if (n < 4) throw DataError("derivative: need at least 4 samples");
  VecX d(n);
  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    d(i) = (x(i + 1) - 2.0 * x(i) + x(i - 1)) / (dt * dt);
  }
  d(0) = (2.0 * x(0) - 5.0 * x(1) + 4.0 * x(2) - x(3)) / (dt * dt);
  d(n - 1) = (2.0 * x(n - 1) - 5.0 * x(n - 2) + 4.0 * x(n - 3) - x(n - 4)) / (dt * dt);
  return d;
}

}  // namespace pcsrod
