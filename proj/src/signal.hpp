#pragma once

#include "lie.hpp"

namespace pcsrod {

// Second-order Butterworth low-pass biquad (bilinear transform).
struct Biquad {
  double b0, b1, b2, a1, a2;
};

Biquad butterworth_lowpass(double cutoff_hz, double rate_hz);

// Zero-phase filtering: odd-reflection padding, steady-state initial
// conditions, one forward and one backward pass.
VecX filtfilt(const Biquad& f, const VecX& x);

// Number of edge samples contaminated by the filter transient; callers mark
// these frames excluded.
int filter_edge_samples(double cutoff_hz, double rate_hz, int signal_len);

// Central differences with 2nd-order one-sided ends.
VecX central_derivative(const VecX& x, double dt);
VecX central_second_derivative(const VecX& x, double dt);

}  // namespace pcsrod
