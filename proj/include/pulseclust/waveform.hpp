#pragma once

#include <Eigen/Dense>
#include <span>
#include <utility>
#include <vector>

#include "pulseclust/iq.hpp"
#include "pulseclust/random.hpp"

namespace pulseclust {

/// The 12 intra-pulse modulation classes, integer codes 0..11.
enum class WaveformClass : int {
  kLfm = 0,
  kNlfm = 1,
  kBpskBarker = 2,
  kCostasFm = 3,
  kFsk2 = 4,
  kFsk4 = 5,
  kT1 = 6,
  kT2 = 7,
  kT3 = 8,
  kT4 = 9,
  kLfmFsk2 = 10,
  kLfmBpsk = 11,
};

inline constexpr int kNumWaveformClasses = 12;

const char* waveform_class_name(WaveformClass wclass);

enum class SweepDirection { kUp, kDown };

/// Number of keyed chips per pulse for the FSK classes.
inline constexpr int kFskChipCount = 8;

struct ClassParams {
  double bandwidth_hz = 0.0;
  SweepDirection sweep_direction = SweepDirection::kUp;
  std::vector<int> code_bits;      // +/-1 chips for the phase-coded classes
  int num_hops = 0;                // Costas hop count (5, 7 or 10)
  double freq_separation_hz = 0.0; // FSK tone spacing
  int num_phase_states = 0;        // polytime codes
  int num_segments = 0;            // polytime codes
  std::vector<int> chip_tones;     // FSK per-chip tone indices
};

/// Modulation class plus all randomly drawn parameters of one pulse.
struct WaveformSpec {
  WaveformClass wclass = WaveformClass::kLfm;
  double carrier_hz = 15e6;
  double pulse_width_s = 7.5e-6;
  double sample_rate_hz = 100e6;
  ClassParams params;
  double phase_delay_rad = 0.0;

  Eigen::Index num_samples() const {
    return static_cast<Eigen::Index>(std::llround(pulse_width_s * sample_rate_hz));
  }
  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

/// Eq.-(3)-style two-path channel: free space with probability p0, otherwise
/// a flat Rayleigh fading gain process.
struct ChannelModel {
  double p0 = 1.0;
  int path_delay_samples = 0;
  double path_attenuation = 1.0;
  double max_doppler_hz = 100.0;
  int num_sinusoids = 32;

  void validate() const;
};

/// Class-specific instantaneous phase at sample k (radians).
double phase_function(const WaveformSpec& spec, Eigen::Index k);

/// Noise-free constant-modulus pulse:
/// samples[k] = exp(j*(theta(k) + 2*pi*fc/fs*k + theta_p)).
IqSignal synthesize(const WaveformSpec& spec);

/// Draws every class parameter uniformly from its configured range.
WaveformSpec draw_spec(WaveformClass wclass, RandomSource& rng);

/// Free-space path (attenuate + delay, output grows by the delay) with
/// probability p0, otherwise multiplicative Rayleigh fading.
IqSignal apply_channel(const IqSignal& signal, const ChannelModel& channel, RandomSource& rng);

/// Published Barker codes of length 2, 3, 4, 5, 7, 11 or 13.
std::span<const int> barker_code(int length);

/// Compound (Barker-squared) codes of length 4, 9 or 16.
std::vector<int> compound_barker(int length);

/// Fixed Costas arrays of order 5, 7 or 10 (values 1..order).
std::span<const int> costas_array(int order);

/// Coarse occupied band of the noise-free pulse relative to the carrier,
/// as (low, high) offsets in Hz. Used by spectral containment checks.
std::pair<double, double> nominal_band_hz(const WaveformSpec& spec);

}  // namespace pulseclust
