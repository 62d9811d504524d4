#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pulseclust/iq.hpp"
#include "pulseclust/waveform.hpp"

namespace pulseclust {

inline constexpr Eigen::Index kFrameLen = 1024;

enum class ChannelKind : int { kFreeSpace = 0, kRayleigh = 1 };

struct SampleRecord {
  int class_id = 0;
  double snr_db = 0.0;
  ChannelKind channel_kind = ChannelKind::kFreeSpace;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::string name;
  Eigen::Index num_samples = 0;
  Eigen::Index frame_len = kFrameLen;
  double sample_rate_hz = 100e6;
  std::vector<SampleRecord> records;
};

struct DatasetLoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// Manifest missing, unparsable or inconsistent with itself.
struct ManifestError : DatasetLoadError {
  using DatasetLoadError::DatasetLoadError;
};
/// Binary payload size disagrees with the manifest.
struct LengthMismatchError : DatasetLoadError {
  using DatasetLoadError::DatasetLoadError;
};
/// Frame payload contains non-finite values.
struct DataError : DatasetLoadError {
  using DatasetLoadError::DatasetLoadError;
};

/// Frames are stored as little-endian float32, one frame of interleaved
/// I/Q pairs per sample: I0 Q0 I1 Q1 ...
class Dataset {
 public:
  DatasetManifest manifest;
  std::vector<float> frames;  // num_samples * frame_len * 2

  Eigen::Index size() const { return manifest.num_samples; }
  const float* frame_data(Eigen::Index i) const { return frames.data() + i * manifest.frame_len * 2; }
  float* frame_data(Eigen::Index i) { return frames.data() + i * manifest.frame_len * 2; }

  /// Frame i as a complex-double signal at the manifest sample rate.
  IqSignal iq_signal(Eigen::Index i) const;

  /// Frame i as a 2 x frame_len real matrix (I row, Q row).
  Eigen::MatrixXf frame_matrix(Eigen::Index i) const;

  std::vector<int> labels() const;

  void validate() const;  // throws DataError / ManifestError
};

struct GenerationConfig {
  std::vector<int> class_ids;       // classes to generate, in manifest order
  Eigen::Index per_class = 1000;    // samples per (class) or per (class, snr level)
  std::vector<double> snr_levels;   // empty: draw snr ~ U(snr_lo, snr_hi)
  double snr_lo = 5.0, snr_hi = 15.0;
  double p_free_space = 0.5;
  double sample_rate_hz = 100e6;
  Eigen::Index frame_len = kFrameLen;
  std::string name = "dataset";
  bool add_noise = true;       // false reproduces the clean reference frames
  bool random_offset = true;   // false pins every pulse to the frame start
};

/// Generic generator behind the named datasets; parallel over samples with
/// per-sample seeds derived from (seed, index).
Dataset generate_dataset(const GenerationConfig& config, std::uint64_t seed);

/// 12 classes x 1000 samples, SNR ~ U(5, 15) dB, half Rayleigh.
Dataset generate_dataset1(std::uint64_t seed, double scale = 1.0);

/// 21 SNR levels (-10..+10 dB step 1) x 200 samples x 12 classes.
Dataset generate_dataset2(std::uint64_t seed, double scale = 1.0);

/// Desk-scale 4-class set (LFM, BPSK, 2FSK, CostasFM), 200 per class.
Dataset generate_toy(std::uint64_t seed, Eigen::Index per_class = 200);

/// Toy SNR sweep at fixed levels (default -10..+10 step 5 dB).
Dataset generate_toy_sweep(std::uint64_t seed, Eigen::Index per_class_per_level = 50,
                           std::vector<double> snr_levels = {-10, -5, 0, 5, 10});

/// Writes <dir>/<name>.iq.bin and <dir>/<name>.manifest.json.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Reads the pair written by write_dataset; round-trip is bit-exact.
Dataset read_dataset(const std::filesystem::path& dir, const std::string& name);

}  // namespace pulseclust
