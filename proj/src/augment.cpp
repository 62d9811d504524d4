#include "pulseclust/augment.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pulseclust {

IqSignal freq_offset(const IqSignal& signal, double f0_hz, double theta_rad) {
  const double w = 2.0 * std::numbers::pi * f0_hz / signal.sample_rate_hz;
  ComplexArray out(signal.samples.size());
  for (Eigen::Index k = 0; k < out.size(); ++k)
    out[k] = signal.samples[k] * std::polar(1.0, w * static_cast<double>(k) + theta_rad);
  return {std::move(out), signal.sample_rate_hz};
}

IqSignal add_noise_aug(const IqSignal& signal, double gamma, RandomSource& rng) {
  if (gamma < 0.0) throw std::invalid_argument("add_noise_aug: gamma must be >= 0");
  ComplexArray out = signal.samples;
  for (Eigen::Index k = 0; k < out.size(); ++k) out[k] += gamma * rng.complex_normal();
  return {std::move(out), signal.sample_rate_hz};
}

IqSignal complex_conjugate(const IqSignal& signal) {
  return {signal.samples.conjugate(), signal.sample_rate_hz};
}

IqSignal time_mask(const IqSignal& signal, Eigen::Index mask_start, Eigen::Index mask_end) {
  if (mask_start < 0 || mask_start > mask_end || mask_end > signal.samples.size())
    throw std::invalid_argument("time_mask: need 0 <= start <= end <= length");
  ComplexArray out = signal.samples;
  out.segment(mask_start, mask_end - mask_start).setZero();
  return {std::move(out), signal.sample_rate_hz};
}

namespace {

IqSignal fit_to_frame(IqSignal s, Eigen::Index frame_len) {
  const Eigen::Index n = s.samples.size();
  if (n == frame_len) return s;
  ComplexArray out = ComplexArray::Zero(frame_len);
  if (n > frame_len) {
    out = s.samples.segment((n - frame_len) / 2, frame_len);  // center crop
  } else {
    out.segment((frame_len - n) / 2, n) = s.samples;  // center pad
  }
  return {std::move(out), s.sample_rate_hz};
}

}  // namespace

IqSignal random_resample(const IqSignal& signal, double new_rate_hz, Eigen::Index frame_len) {
  return fit_to_frame(resample(signal, new_rate_hz), frame_len);
}

ComplexArray clarke_fading(Eigen::Index num_samples, double sample_rate_hz,
                           double max_doppler_hz, int num_sinusoids, RandomSource& rng) {
  if (num_sinusoids < 1) throw std::invalid_argument("clarke_fading: need at least one sinusoid");
  const int m_count = num_sinusoids;
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  Eigen::ArrayXd omega(m_count), alpha(m_count), beta(m_count);
  for (int m = 1; m <= m_count; ++m) {
    const double arrival = ((2.0 * m - 1.0) * std::numbers::pi + theta) / (4.0 * m_count);
    omega[m - 1] = 2.0 * std::numbers::pi * max_doppler_hz * std::cos(arrival) / sample_rate_hz;
    alpha[m - 1] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    beta[m - 1] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(m_count));
  Eigen::ArrayXd time_idx = Eigen::ArrayXd::LinSpaced(num_samples, 0.0, num_samples - 1.0);
  Eigen::ArrayXd hi = Eigen::ArrayXd::Zero(num_samples);
  Eigen::ArrayXd hq = Eigen::ArrayXd::Zero(num_samples);
  for (int m = 0; m < m_count; ++m) {
    hi += (omega[m] * time_idx + alpha[m]).cos();
    hq += (omega[m] * time_idx + beta[m]).sin();
  }
  ComplexArray h(num_samples);
  h.real() = scale * hi;
  h.imag() = scale * hq;
  return h;
}

IqSignal rayleigh_fade(const IqSignal& signal, double max_doppler_hz, int num_sinusoids,
                       RandomSource& rng) {
  const ComplexArray h = clarke_fading(signal.samples.size(), signal.sample_rate_hz,
                                       max_doppler_hz, num_sinusoids, rng);
  return {signal.samples * h, signal.sample_rate_hz};
}

AugmentationTier tier_from_name(const std::string& name) {
  if (name == "weak") return AugmentationTier::kWeak;
  if (name == "moderate") return AugmentationTier::kModerate;
  if (name == "strong") return AugmentationTier::kStrong;
  throw std::invalid_argument("unknown augmentation tier: " + name);
}

const char* tier_name(AugmentationTier tier) {
  switch (tier) {
    case AugmentationTier::kWeak: return "weak";
    case AugmentationTier::kModerate: return "moderate";
    case AugmentationTier::kStrong: return "strong";
  }
  return "?";
}

AugmentationPolicy AugmentationPolicy::from_tier(AugmentationTier tier) {
  AugmentationPolicy p;
  p.tier = tier;
  switch (tier) {
    case AugmentationTier::kWeak: {
      const double probs[6] = {0.5, 0.5, 0.5, 0.5, 0.0, 0.0};
      std::copy(probs, probs + 6, p.probs);
      break;
    }
    case AugmentationTier::kModerate: {
      const double probs[6] = {0.5, 1.0, 0.5, 0.5, 0.3, 0.3};
      std::copy(probs, probs + 6, p.probs);
      break;
    }
    case AugmentationTier::kStrong: {
      const double probs[6] = {0.5, 1.0, 0.5, 0.5, 0.5, 0.5};
      std::copy(probs, probs + 6, p.probs);
      break;
    }
  }
  return p;
}

AugmentationPolicy AugmentationPolicy::from_name(const std::string& name) {
  return from_tier(tier_from_name(name));
}

IqSignal apply_policy(const IqSignal& signal, const AugmentationPolicy& policy,
                      RandomSource& rng, Eigen::Index frame_len) {
  const AugmentationParams& pr = policy.params;
  IqSignal s = fit_to_frame(signal, frame_len);

  if (rng.uniform() < policy.probs[0]) {
    const double f0 = rng.uniform(-pr.max_freq_offset_hz, pr.max_freq_offset_hz);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    s = freq_offset(s, f0, theta);
  }
  if (rng.uniform() < policy.probs[1]) {
    const double ratio = rng.uniform(pr.noise_ratio_lo, pr.noise_ratio_hi);
    s = add_noise_aug(s, std::sqrt(ratio * pulse_power(s)), rng);
  }
  if (rng.uniform() < policy.probs[2]) {
    s = complex_conjugate(s);
  }
  if (rng.uniform() < policy.probs[3]) {
    const Eigen::Index len =
        std::min<Eigen::Index>(rng.uniform_int(pr.mask_len_lo, pr.mask_len_hi), frame_len);
    const Eigen::Index start = rng.uniform_int(0, frame_len - len);
    s = time_mask(s, start, start + len);
  }
  if (rng.uniform() < policy.probs[4]) {
    // quantized to 1 MHz so the resampler's prototype cache stays small
    const double rate = 1e6 * std::round(rng.uniform(pr.resample_lo_hz, pr.resample_hi_hz) / 1e6);
    s = random_resample(s, rate, frame_len);
    s.sample_rate_hz = signal.sample_rate_hz;  // frames are consumed at the nominal rate
  }
  if (rng.uniform() < policy.probs[5]) {
    const double doppler = rng.uniform(pr.doppler_lo_hz, pr.doppler_hi_hz);
    s = rayleigh_fade(s, doppler, pr.num_sinusoids, rng);
  }
  return s;
}

}  // namespace pulseclust
