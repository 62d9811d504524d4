#pragma once

#include <Eigen/Dense>
#include <string>

#include "pulseclust/iq.hpp"
#include "pulseclust/random.hpp"

namespace pulseclust {

/// Carrier-frequency shift: y(k) * exp(j(2*pi*f0/fs*k + theta)).
IqSignal freq_offset(const IqSignal& signal, double f0_hz, double theta_rad);

/// y + gamma * n with n standard complex Gaussian (E|n|^2 = 1).
IqSignal add_noise_aug(const IqSignal& signal, double gamma, RandomSource& rng);

IqSignal complex_conjugate(const IqSignal& signal);

/// Zeroes samples in [mask_start, mask_end).
IqSignal time_mask(const IqSignal& signal, Eigen::Index mask_start, Eigen::Index mask_end);

/// Resamples to new_rate_hz, then center-crops or center-pads back to
/// frame_len so downstream tensor shapes stay constant.
IqSignal random_resample(const IqSignal& signal, double new_rate_hz, Eigen::Index frame_len);

/// Clarke sum-of-sinusoids flat-fading gain process, E|h(k)|^2 = 1.
ComplexArray clarke_fading(Eigen::Index num_samples, double sample_rate_hz,
                           double max_doppler_hz, int num_sinusoids, RandomSource& rng);

/// Multiplies the signal by a Clarke fading gain process.
IqSignal rayleigh_fade(const IqSignal& signal, double max_doppler_hz, int num_sinusoids,
                       RandomSource& rng);

enum class AugmentationTier { kWeak, kModerate, kStrong };

AugmentationTier tier_from_name(const std::string& name);
const char* tier_name(AugmentationTier tier);

/// Parameter ranges for the randomized transforms.
struct AugmentationParams {
  double max_freq_offset_hz = 10e6;      // f0 ~ U(-max, +max)
  double noise_ratio_lo = 0.3679;        // noise power range as a multiple of
  double noise_ratio_hi = 1.6487;        // the signal's pulse power
  Eigen::Index mask_len_lo = 100;
  Eigen::Index mask_len_hi = 300;
  double resample_lo_hz = 50e6;
  double resample_hi_hz = 150e6;
  double doppler_lo_hz = 50.0;
  double doppler_hi_hz = 500.0;
  int num_sinusoids = 32;
};

/// Ordered transform pipeline with per-transform selection probabilities.
struct AugmentationPolicy {
  AugmentationTier tier = AugmentationTier::kStrong;
  // order: freq offset, noise, conjugate, mask, resample, fading
  double probs[6] = {0.5, 1.0, 0.5, 0.5, 0.5, 0.5};
  AugmentationParams params;

  static AugmentationPolicy from_tier(AugmentationTier tier);
  static AugmentationPolicy from_name(const std::string& name);
};

/// Applies the policy's transforms in fixed order, each gated by an
/// independent Bernoulli draw; output is always frame_len samples.
IqSignal apply_policy(const IqSignal& signal, const AugmentationPolicy& policy,
                      RandomSource& rng, Eigen::Index frame_len);

}  // namespace pulseclust
