#include "pulseclust/waveform.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "pulseclust/augment.hpp"

namespace pulseclust {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr std::array<int, 2> kBarker2 = {1, -1};
constexpr std::array<int, 3> kBarker3 = {1, 1, -1};
constexpr std::array<int, 4> kBarker4 = {1, 1, -1, 1};
constexpr std::array<int, 5> kBarker5 = {1, 1, 1, -1, 1};
constexpr std::array<int, 7> kBarker7 = {1, 1, 1, -1, -1, 1, -1};
constexpr std::array<int, 11> kBarker11 = {1, 1, 1, -1, -1, -1, 1, -1, -1, 1, -1};
constexpr std::array<int, 13> kBarker13 = {1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1};

// Lexicographically smallest Costas arrays of each order; the Costas
// property is verified by the unit tests.
constexpr std::array<int, 5> kCostas5 = {1, 3, 4, 2, 5};
constexpr std::array<int, 7> kCostas7 = {1, 2, 6, 4, 7, 3, 5};
constexpr std::array<int, 10> kCostas10 = {1, 2, 4, 8, 5, 10, 9, 7, 3, 6};

double mod_two_pi(double x) {
  double r = std::fmod(x, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  return r;
}

// Symmetric chirp used inside the composite classes, sweeping -B/2 .. +B/2
// so the composite stays below Nyquist for every drawn parameter set.
double lfm_phase_symmetric(double t, double bandwidth, double width) {
  return std::numbers::pi * bandwidth * (t * t / width - t);
}

double fsk_tone_offset(const WaveformSpec& spec, double t, int num_tones) {
  const auto& p = spec.params;
  const auto chips = static_cast<Eigen::Index>(p.chip_tones.size());
  auto chip = static_cast<Eigen::Index>(std::floor(t / spec.pulse_width_s * chips));
  chip = std::clamp<Eigen::Index>(chip, 0, chips - 1);
  const double center = (num_tones - 1) / 2.0;
  return (p.chip_tones[chip] - center) * p.freq_separation_hz;
}

double bpsk_phase(const WaveformSpec& spec, double t) {
  const auto& code = spec.params.code_bits;
  const auto len = static_cast<Eigen::Index>(code.size());
  auto chip = static_cast<Eigen::Index>(std::floor(t / spec.pulse_width_s * len));
  chip = std::clamp<Eigen::Index>(chip, 0, len - 1);
  return code[chip] > 0 ? 0.0 : std::numbers::pi;
}

double polytime_phase(const WaveformSpec& spec, double t, WaveformClass wclass) {
  const double n = spec.params.num_phase_states;
  const double width = spec.pulse_width_s;
  switch (wclass) {
    case WaveformClass::kT1: {
      const double segs = spec.params.num_segments;
      auto j = std::floor(t * segs / width);
      j = std::min(j, segs - 1.0);
      return mod_two_pi(kTwoPi / n * std::floor((segs * t - j * width) * (j * n / width)));
    }
    case WaveformClass::kT2: {
      const double segs = spec.params.num_segments;
      auto j = std::floor(t * segs / width);
      j = std::min(j, segs - 1.0);
      return mod_two_pi(kTwoPi / n *
                        std::floor((segs * t - j * width) * (2.0 * j - segs + 1.0) / width * n / 2.0));
    }
    case WaveformClass::kT3: {
      const double b = spec.params.bandwidth_hz;
      return mod_two_pi(kTwoPi / n * std::floor(n * b * t * t / (2.0 * width)));
    }
    case WaveformClass::kT4: {
      const double b = spec.params.bandwidth_hz;
      return mod_two_pi(kTwoPi / n * std::floor(n * b * t * t / (2.0 * width) - n * b * t / 2.0));
    }
    default:
      throw std::logic_error("polytime_phase: not a polytime class");
  }
}

}  // namespace

const char* waveform_class_name(WaveformClass wclass) {
  switch (wclass) {
    case WaveformClass::kLfm: return "LFM";
    case WaveformClass::kNlfm: return "NLFM";
    case WaveformClass::kBpskBarker: return "BPSK";
    case WaveformClass::kCostasFm: return "CostasFM";
    case WaveformClass::kFsk2: return "2FSK";
    case WaveformClass::kFsk4: return "4FSK";
    case WaveformClass::kT1: return "T1";
    case WaveformClass::kT2: return "T2";
    case WaveformClass::kT3: return "T3";
    case WaveformClass::kT4: return "T4";
    case WaveformClass::kLfmFsk2: return "LFM-2FSK";
    case WaveformClass::kLfmBpsk: return "LFM-BPSK";
  }
  return "?";
}

std::span<const int> barker_code(int length) {
  switch (length) {
    case 2: return kBarker2;
    case 3: return kBarker3;
    case 4: return kBarker4;
    case 5: return kBarker5;
    case 7: return kBarker7;
    case 11: return kBarker11;
    case 13: return kBarker13;
    default: throw std::invalid_argument("barker_code: no Barker code of length " + std::to_string(length));
  }
}

std::vector<int> compound_barker(int length) {
  int side = 0;
  switch (length) {
    case 4: side = 2; break;
    case 9: side = 3; break;
    case 16: side = 4; break;
    default: throw std::invalid_argument("compound_barker: length must be 4, 9 or 16");
  }
  const auto outer = barker_code(side);
  const auto inner = barker_code(side);
  std::vector<int> code;
  code.reserve(length);
  for (int o : outer)
    for (int i : inner) code.push_back(o * i);
  return code;
}

std::span<const int> costas_array(int order) {
  switch (order) {
    case 5: return kCostas5;
    case 7: return kCostas7;
    case 10: return kCostas10;
    default: throw std::invalid_argument("costas_array: order must be 5, 7 or 10");
  }
}

std::pair<double, double> nominal_band_hz(const WaveformSpec& spec) {
  const auto& p = spec.params;
  const double chip_bw = p.code_bits.empty()
                             ? 0.0
                             : static_cast<double>(p.code_bits.size()) / spec.pulse_width_s;
  switch (spec.wclass) {
    case WaveformClass::kLfm:
      return p.sweep_direction == SweepDirection::kUp ? std::make_pair(0.0, p.bandwidth_hz)
                                                      : std::make_pair(-p.bandwidth_hz, 0.0);
    case WaveformClass::kNlfm:
      return {0.0, p.bandwidth_hz};
    case WaveformClass::kBpskBarker:
    case WaveformClass::kLfmBpsk: {
      const double half = spec.wclass == WaveformClass::kLfmBpsk ? p.bandwidth_hz / 2.0 : 0.0;
      return {-half - chip_bw, half + chip_bw};
    }
    case WaveformClass::kCostasFm:
      return {0.0, p.bandwidth_hz};
    case WaveformClass::kFsk2:
      return {-p.freq_separation_hz / 2.0, p.freq_separation_hz / 2.0};
    case WaveformClass::kFsk4:
      return {-1.5 * p.freq_separation_hz, 1.5 * p.freq_separation_hz};
    case WaveformClass::kT1: {
      const double b = p.num_segments * (p.num_segments - 1.0) / spec.pulse_width_s;
      return {0.0, b};
    }
    case WaveformClass::kT2: {
      const double b = p.num_segments * (p.num_segments - 1.0) / (2.0 * spec.pulse_width_s);
      return {-b, b};
    }
    case WaveformClass::kT3:
      return {0.0, p.bandwidth_hz};
    case WaveformClass::kT4:
      return {-p.bandwidth_hz / 2.0, p.bandwidth_hz / 2.0};
    case WaveformClass::kLfmFsk2:
      return {-p.bandwidth_hz / 2.0 - p.freq_separation_hz / 2.0,
              p.bandwidth_hz / 2.0 + p.freq_separation_hz / 2.0};
  }
  return {0.0, 0.0};
}

void WaveformSpec::validate() const {
  if (!(sample_rate_hz > 0.0)) throw std::invalid_argument("WaveformSpec: sample_rate_hz must be > 0");
  if (!(pulse_width_s > 0.0)) throw std::invalid_argument("WaveformSpec: pulse_width_s must be > 0");
  if (num_samples() < 16) throw std::invalid_argument("WaveformSpec: pulse must span at least 16 samples");
  switch (wclass) {
    case WaveformClass::kBpskBarker:
    case WaveformClass::kLfmBpsk:
      if (params.code_bits.empty()) throw std::invalid_argument("WaveformSpec: code_bits required");
      break;
    case WaveformClass::kFsk2:
    case WaveformClass::kFsk4:
    case WaveformClass::kLfmFsk2:
      if (params.chip_tones.empty()) throw std::invalid_argument("WaveformSpec: chip_tones required");
      break;
    case WaveformClass::kCostasFm:
      costas_array(params.num_hops);  // throws on unsupported order
      break;
    case WaveformClass::kT1:
    case WaveformClass::kT2:
    case WaveformClass::kT3:
    case WaveformClass::kT4:
      if (params.num_phase_states < 2) throw std::invalid_argument("WaveformSpec: need >= 2 phase states");
      if (wclass == WaveformClass::kT1 || wclass == WaveformClass::kT2)
        if (params.num_segments < 1) throw std::invalid_argument("WaveformSpec: need >= 1 segment");
      break;
    default:
      break;
  }
  // No aliasing of the noise-free pulse for the classes whose band is set by
  // drawn parameters. T1/T2 step quantized phases whose excursion is not a
  // drawn parameter and may fold; they are exempt here.
  if (wclass != WaveformClass::kT1 && wclass != WaveformClass::kT2) {
    const auto [lo, hi] = nominal_band_hz(*this);
    if (carrier_hz + hi >= sample_rate_hz / 2.0 || carrier_hz + lo <= -sample_rate_hz / 2.0)
      throw std::invalid_argument("WaveformSpec: occupied band crosses Nyquist");
  }
}

void ChannelModel::validate() const {
  if (p0 < 0.0 || p0 > 1.0) throw std::invalid_argument("ChannelModel: p0 must lie in [0,1]");
  if (!(path_attenuation > 0.0)) throw std::invalid_argument("ChannelModel: attenuation must be > 0");
  if (num_sinusoids < 8) throw std::invalid_argument("ChannelModel: need >= 8 sinusoids");
  if (path_delay_samples < 0) throw std::invalid_argument("ChannelModel: delay must be >= 0");
}

double phase_function(const WaveformSpec& spec, Eigen::Index k) {
  if (k < 0 || k >= spec.num_samples())
    throw std::invalid_argument("phase_function: sample index outside the pulse");
  const double t = static_cast<double>(k) / spec.sample_rate_hz;
  const auto& p = spec.params;
  switch (spec.wclass) {
    case WaveformClass::kLfm: {
      const double sign = p.sweep_direction == SweepDirection::kUp ? 1.0 : -1.0;
      return sign * std::numbers::pi * p.bandwidth_hz / spec.pulse_width_s * t * t;
    }
    case WaveformClass::kNlfm: {
      const double width = spec.pulse_width_s;
      return kTwoPi * (p.bandwidth_hz / 2.0) *
             (t - width / std::numbers::pi * std::sin(std::numbers::pi * t / width));
    }
    case WaveformClass::kBpskBarker:
      return bpsk_phase(spec, t);
    case WaveformClass::kCostasFm: {
      const auto seq = costas_array(p.num_hops);
      auto hop = static_cast<Eigen::Index>(std::floor(t / spec.pulse_width_s * p.num_hops));
      hop = std::clamp<Eigen::Index>(hop, 0, p.num_hops - 1);
      const double tone = seq[hop] * p.bandwidth_hz / p.num_hops;
      return kTwoPi * tone * t;
    }
    case WaveformClass::kFsk2:
      return kTwoPi * fsk_tone_offset(spec, t, 2) * t;
    case WaveformClass::kFsk4:
      return kTwoPi * fsk_tone_offset(spec, t, 4) * t;
    case WaveformClass::kT1:
    case WaveformClass::kT2:
    case WaveformClass::kT3:
    case WaveformClass::kT4:
      return polytime_phase(spec, t, spec.wclass);
    case WaveformClass::kLfmFsk2:
      return lfm_phase_symmetric(t, p.bandwidth_hz, spec.pulse_width_s) +
             kTwoPi * fsk_tone_offset(spec, t, 2) * t;
    case WaveformClass::kLfmBpsk:
      return lfm_phase_symmetric(t, p.bandwidth_hz, spec.pulse_width_s) + bpsk_phase(spec, t);
  }
  throw std::logic_error("phase_function: unknown class");
}

IqSignal synthesize(const WaveformSpec& spec) {
  spec.validate();
  const Eigen::Index n = spec.num_samples();
  const double carrier_step = kTwoPi * spec.carrier_hz / spec.sample_rate_hz;
  ComplexArray samples(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double phase =
        phase_function(spec, k) + carrier_step * static_cast<double>(k) + spec.phase_delay_rad;
    samples[k] = std::polar(1.0, phase);
  }
  return {std::move(samples), spec.sample_rate_hz};
}

WaveformSpec draw_spec(WaveformClass wclass, RandomSource& rng) {
  WaveformSpec spec;
  spec.wclass = wclass;
  spec.sample_rate_hz = 100e6;

  const bool wide_carrier = wclass == WaveformClass::kT3 || wclass == WaveformClass::kT4 ||
                            wclass == WaveformClass::kLfmFsk2;
  spec.carrier_hz = rng.uniform(10e6, wide_carrier ? 30e6 : 20e6);
  spec.pulse_width_s = rng.uniform(5e-6, 10e-6);

  auto& p = spec.params;
  auto draw_choice = [&rng](std::initializer_list<int> options) {
    const auto idx = rng.uniform_int(0, static_cast<std::int64_t>(options.size()) - 1);
    return *(options.begin() + idx);
  };
  auto draw_chips = [&rng](int num_tones, int count) {
    std::vector<int> tones(count);
    for (int& tone : tones) tone = static_cast<int>(rng.uniform_int(0, num_tones - 1));
    return tones;
  };

  switch (wclass) {
    case WaveformClass::kLfm:
      p.bandwidth_hz = rng.uniform(10e6, 20e6);
      p.sweep_direction = rng.uniform() < 0.5 ? SweepDirection::kUp : SweepDirection::kDown;
      break;
    case WaveformClass::kNlfm:
      p.bandwidth_hz = rng.uniform(10e6, 20e6);
      break;
    case WaveformClass::kBpskBarker: {
      const int len = draw_choice({7, 11, 13});
      const auto code = barker_code(len);
      p.code_bits.assign(code.begin(), code.end());
      break;
    }
    case WaveformClass::kCostasFm:
      p.num_hops = draw_choice({5, 7, 10});
      p.bandwidth_hz = rng.uniform(10e6, 20e6);
      break;
    case WaveformClass::kFsk2:
      p.freq_separation_hz = rng.uniform(5e6, 10e6);
      p.chip_tones = draw_chips(2, kFskChipCount);
      break;
    case WaveformClass::kFsk4:
      p.freq_separation_hz = rng.uniform(5e6, 10e6);
      p.chip_tones = draw_chips(4, kFskChipCount);
      break;
    case WaveformClass::kT1:
    case WaveformClass::kT2:
      p.num_phase_states = 2;
      p.num_segments = draw_choice({18, 20, 22});
      break;
    case WaveformClass::kT3:
    case WaveformClass::kT4:
      p.num_phase_states = 2;
      p.num_segments = draw_choice({18, 20, 22});
      p.bandwidth_hz = rng.uniform(5e6, 10e6);
      break;
    case WaveformClass::kLfmFsk2:
      p.bandwidth_hz = rng.uniform(10e6, 20e6);
      p.freq_separation_hz = rng.uniform(5e6, 10e6);
      p.chip_tones = draw_chips(2, kFskChipCount);
      break;
    case WaveformClass::kLfmBpsk: {
      p.bandwidth_hz = rng.uniform(10e6, 20e6);
      const int len = draw_choice({4, 9, 16});
      p.code_bits = compound_barker(len);
      break;
    }
  }
  spec.phase_delay_rad = rng.uniform(0.0, kTwoPi);
  spec.validate();
  return spec;
}

IqSignal apply_channel(const IqSignal& signal, const ChannelModel& channel, RandomSource& rng) {
  channel.validate();
  if (rng.uniform() < channel.p0) {
    const Eigen::Index delay = channel.path_delay_samples;
    ComplexArray out = ComplexArray::Zero(signal.samples.size() + delay);
    out.tail(signal.samples.size()) = channel.path_attenuation * signal.samples;
    return {std::move(out), signal.sample_rate_hz};
  }
  return rayleigh_fade(signal, channel.max_doppler_hz, channel.num_sinusoids, rng);
}

}  // namespace pulseclust
