#include "pulseclust/iq.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace pulseclust {

IqSignal::IqSignal(ComplexArray s, double rate)
    : samples(std::move(s)), sample_rate_hz(rate) {
  if (samples.size() == 0) throw std::invalid_argument("IqSignal: empty sample sequence");
  if (!(sample_rate_hz > 0.0)) throw std::invalid_argument("IqSignal: sample_rate_hz must be > 0");
}

double signal_power(const IqSignal& signal) {
  if (signal.samples.size() == 0) throw std::invalid_argument("signal_power: empty signal");
  return signal.samples.abs2().mean();
}

double pulse_power(const IqSignal& signal) {
  if (signal.samples.size() == 0) throw std::invalid_argument("pulse_power: empty signal");
  double acc = 0.0;
  Eigen::Index support = 0;
  for (Eigen::Index k = 0; k < signal.samples.size(); ++k) {
    const double p = std::norm(signal.samples[k]);
    if (p > 0.0) {
      acc += p;
      ++support;
    }
  }
  return support > 0 ? acc / static_cast<double>(support) : 0.0;
}

IqSignal add_awgn(const IqSignal& signal, double snr_db, RandomSource& rng) {
  if (signal.samples.size() == 0) throw std::invalid_argument("add_awgn: empty signal");
  const double noise_var = pulse_power(signal) * std::pow(10.0, -snr_db / 10.0);
  const double sigma = std::sqrt(noise_var);
  ComplexArray out = signal.samples;
  for (Eigen::Index k = 0; k < out.size(); ++k) out[k] += sigma * rng.complex_normal();
  return {std::move(out), signal.sample_rate_hz};
}

FirFilter design_lowpass(double cutoff_hz, double sample_rate_hz, int num_taps) {
  if (!(sample_rate_hz > 0.0)) throw std::invalid_argument("design_lowpass: sample rate must be > 0");
  if (!(cutoff_hz > 0.0) || cutoff_hz >= sample_rate_hz / 2.0)
    throw std::invalid_argument("design_lowpass: cutoff must lie in (0, sample_rate/2)");
  if (num_taps < 1 || num_taps % 2 == 0)
    throw std::invalid_argument("design_lowpass: num_taps must be odd and positive");

  const double fn = 2.0 * cutoff_hz / sample_rate_hz;  // cutoff in cycles/sample * 2
  const int center = (num_taps - 1) / 2;
  Eigen::ArrayXd taps(num_taps);
  for (int i = 0; i < num_taps; ++i) {
    const double n = i - center;
    const double sinc = n == 0.0 ? fn : std::sin(std::numbers::pi * fn * n) / (std::numbers::pi * n);
    const double w = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (num_taps - 1));
    taps[i] = sinc * w;
  }
  taps /= taps.sum();  // unit DC gain
  return {std::move(taps), cutoff_hz};
}

IqSignal apply_fir(const IqSignal& signal, const FirFilter& filter) {
  const Eigen::Index n = signal.samples.size();
  const Eigen::Index delay = filter.group_delay();
  ComplexArray out = ComplexArray::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    const Eigen::Index base = k + delay;  // center the kernel on sample k
    for (Eigen::Index t = 0; t < filter.taps.size(); ++t) {
      const Eigen::Index src = base - t;
      if (src >= 0 && src < n) acc += filter.taps[t] * signal.samples[src];
    }
    out[k] = acc;
  }
  return {std::move(out), signal.sample_rate_hz};
}

namespace detail {

std::pair<std::int64_t, std::int64_t> rational_approx(double x, std::int64_t max_den) {
  if (!(x > 0.0)) throw std::invalid_argument("rational_approx: x must be > 0");
  // Continued-fraction convergents p/q until q would exceed max_den; then take
  // the best semiconvergent still inside the cap.
  std::int64_t p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  double r = x;
  for (int iter = 0; iter < 64; ++iter) {
    const auto a = static_cast<std::int64_t>(std::floor(r));
    std::int64_t p2 = a * p1 + p0;
    std::int64_t q2 = a * q1 + q0;
    if (q2 > max_den) {
      // largest k with q0 + k*q1 <= max_den
      const std::int64_t k = (max_den - q0) / q1;
      const std::int64_t ps = p0 + k * p1, qs = q0 + k * q1;
      // pick the closer of the semiconvergent and the previous convergent
      if (qs > 0 && std::abs(x - double(ps) / double(qs)) < std::abs(x - double(p1) / double(q1)))
        return {ps, qs};
      return {p1, q1};
    }
    p0 = p1; q0 = q1; p1 = p2; q1 = q2;
    const double frac = r - static_cast<double>(a);
    if (frac < 1e-12) break;
    r = 1.0 / frac;
  }
  return {p1, q1};
}

}  // namespace detail

namespace {

// Blackman windowed-sinc prototype for the polyphase resampler; flatter
// passband than the Hamming design, which the round-trip tolerance needs.
Eigen::ArrayXd resample_prototype(double cutoff_hz, double sample_rate_hz, int num_taps) {
  const double fn = 2.0 * cutoff_hz / sample_rate_hz;
  const int center = (num_taps - 1) / 2;
  Eigen::ArrayXd taps(num_taps);
  for (int i = 0; i < num_taps; ++i) {
    const double n = i - center;
    const double sinc = n == 0.0 ? fn : std::sin(std::numbers::pi * fn * n) / (std::numbers::pi * n);
    const double x = 2.0 * std::numbers::pi * i / (num_taps - 1);
    taps[i] = sinc * (0.42 - 0.5 * std::cos(x) + 0.08 * std::cos(2.0 * x));
  }
  taps /= taps.sum();
  return taps;
}

}  // namespace

IqSignal resample(const IqSignal& signal, double new_rate_hz) {
  if (!(new_rate_hz > 0.0)) throw std::invalid_argument("resample: new_rate_hz must be > 0");
  const double old_rate = signal.sample_rate_hz;
  const double ratio = new_rate_hz / old_rate;
  const auto [up, down] = detail::rational_approx(ratio, 1000);

  const Eigen::Index n_in = signal.samples.size();
  const auto n_out = static_cast<Eigen::Index>(std::llround(static_cast<double>(n_in) * ratio));

  // Anti-alias/anti-image prototype at the upsampled rate old*L, cutting at
  // min(old, new)/2 Hz, gain L to restore amplitude after zero stuffing.
  // Cached per (L, M): the normalized cutoff min(1/L, 1/M) depends only on
  // the rational ratio.
  std::shared_ptr<const Eigen::ArrayXd> taps;
  {
    static std::mutex cache_mutex;
    static std::map<std::pair<std::int64_t, std::int64_t>, std::shared_ptr<const Eigen::ArrayXd>>
        cache;
    std::lock_guard<std::mutex> lock(cache_mutex);
    auto& slot = cache[{up, down}];
    if (!slot) {
      const int taps_per_phase = 32;
      int num_taps = static_cast<int>(up) * taps_per_phase + 1;
      if (num_taps % 2 == 0) ++num_taps;
      const double fn = std::min(0.999999, std::min(1.0 / up, 1.0 / down));
      slot = std::make_shared<const Eigen::ArrayXd>(
          resample_prototype(0.5 * fn * up * old_rate, up * old_rate, num_taps) *
          static_cast<double>(up));
    }
    taps = slot;
  }

  const Eigen::Index num_taps = taps->size();
  const Eigen::Index delay = (num_taps - 1) / 2;
  ComplexArray out = ComplexArray::Zero(std::max<Eigen::Index>(n_out, 1));
  for (Eigen::Index m = 0; m < n_out; ++m) {
    // virtual upsampled-domain position, group delay folded in
    const Eigen::Index pos = m * down + delay;
    std::complex<double> acc = 0.0;
    // only taps hitting nonzero stuffed samples: t with (pos - t) % up == 0
    Eigen::Index t0 = pos % up;
    for (Eigen::Index t = t0; t < num_taps; t += up) {
      const Eigen::Index src = (pos - t) / up;
      if (src >= 0 && src < n_in) acc += (*taps)[t] * signal.samples[src];
    }
    out[m] = acc;
  }
  return {std::move(out), new_rate_hz};
}

}  // namespace pulseclust
