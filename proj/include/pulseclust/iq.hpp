#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>

#include "pulseclust/random.hpp"

namespace pulseclust {

using ComplexArray = Eigen::ArrayXcd;

/// Complex baseband sample sequence with its sampling rate.
struct IqSignal {
  ComplexArray samples;
  double sample_rate_hz = 0.0;

  IqSignal() = default;
  IqSignal(ComplexArray s, double rate);

  Eigen::Index size() const { return samples.size(); }
};

/// Low-pass FIR filter designed by design_lowpass (odd tap count, unit DC gain).
struct FirFilter {
  Eigen::ArrayXd taps;
  double cutoff_hz = 0.0;

  Eigen::Index group_delay() const { return (taps.size() - 1) / 2; }
};

/// Mean of |s|^2 over all samples.
double signal_power(const IqSignal& signal);

/// Mean of |s|^2 over the nonzero support only; the reference power for SNR
/// control so that zero padding does not deflate it. Returns 0 for an
/// all-zero signal.
double pulse_power(const IqSignal& signal);

/// Adds complex white Gaussian noise so that pulse_power / noise_power equals
/// 10^(snr_db/10). Real and imaginary components each carry half the noise
/// variance.
IqSignal add_awgn(const IqSignal& signal, double snr_db, RandomSource& rng);

/// Windowed-sinc (Hamming) low-pass design, DC gain normalized to 1.
/// Requires 0 < cutoff_hz < sample_rate_hz/2 and an odd num_taps.
FirFilter design_lowpass(double cutoff_hz, double sample_rate_hz, int num_taps);

/// Same-length filtering with the group delay removed (output[k] aligns with
/// input[k]; edges see zero padding).
IqSignal apply_fir(const IqSignal& signal, const FirFilter& filter);

/// Rational polyphase resampling to new_rate_hz. The L/M ratio is the best
/// rational approximation of new/old with denominator <= 1000; output length
/// is round(len * new/old) and FIR group delay is compensated so the output
/// aligns temporally with the input.
IqSignal resample(const IqSignal& signal, double new_rate_hz);

namespace detail {
/// Best rational approximation p/q of x with q <= max_den (continued fractions).
std::pair<std::int64_t, std::int64_t> rational_approx(double x, std::int64_t max_den);
}  // namespace detail

}  // namespace pulseclust
