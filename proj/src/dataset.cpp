#include "pulseclust/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include <json.hpp>

namespace pulseclust {

namespace {

// Stream tags for per-purpose seed derivation.
constexpr std::uint64_t kSampleStream = 0x5A01;

void synthesize_sample(const GenerationConfig& config, const SampleRecord& record, float* out) {
  RandomSource rng(record.seed);
  const auto spec = [&] {
    auto s = draw_spec(static_cast<WaveformClass>(record.class_id), rng);
    s.sample_rate_hz = config.sample_rate_hz;
    return s;
  }();
  IqSignal pulse = synthesize(spec);

  ChannelModel channel;
  channel.p0 = record.channel_kind == ChannelKind::kFreeSpace ? 1.0 : 0.0;
  channel.path_attenuation = rng.uniform(0.5, 1.0);
  channel.path_delay_samples = static_cast<int>(rng.uniform_int(0, 10));
  channel.max_doppler_hz = rng.uniform(50.0, 500.0);
  IqSignal received = apply_channel(pulse, channel, rng);

  const Eigen::Index frame_len = config.frame_len;
  const Eigen::Index slack = frame_len - received.samples.size();
  if (slack < 0) throw std::logic_error("generate: pulse does not fit the frame");
  const Eigen::Index offset = config.random_offset ? rng.uniform_int(0, slack) : 0;
  ComplexArray framed = ComplexArray::Zero(frame_len);
  framed.segment(offset, received.samples.size()) = received.samples;

  IqSignal result{std::move(framed), config.sample_rate_hz};
  if (config.add_noise) result = add_awgn(result, record.snr_db, rng);
  for (Eigen::Index k = 0; k < frame_len; ++k) {
    out[2 * k] = static_cast<float>(result.samples[k].real());
    out[2 * k + 1] = static_cast<float>(result.samples[k].imag());
  }
}

}  // namespace

IqSignal Dataset::iq_signal(Eigen::Index i) const {
  const float* p = frame_data(i);
  ComplexArray samples(manifest.frame_len);
  for (Eigen::Index k = 0; k < manifest.frame_len; ++k)
    samples[k] = std::complex<double>(p[2 * k], p[2 * k + 1]);
  return {std::move(samples), manifest.sample_rate_hz};
}

Eigen::MatrixXf Dataset::frame_matrix(Eigen::Index i) const {
  const float* p = frame_data(i);
  Eigen::MatrixXf m(2, manifest.frame_len);
  for (Eigen::Index k = 0; k < manifest.frame_len; ++k) {
    m(0, k) = p[2 * k];
    m(1, k) = p[2 * k + 1];
  }
  return m;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out(manifest.records.size());
  std::transform(manifest.records.begin(), manifest.records.end(), out.begin(),
                 [](const SampleRecord& r) { return r.class_id; });
  return out;
}

void Dataset::validate() const {
  if (static_cast<Eigen::Index>(manifest.records.size()) != manifest.num_samples)
    throw ManifestError("dataset: record count does not match num_samples");
  for (const auto& r : manifest.records)
    if (r.class_id < 0 || r.class_id >= kNumWaveformClasses)
      throw ManifestError("dataset: class_id out of range: " + std::to_string(r.class_id));
  if (static_cast<Eigen::Index>(frames.size()) != manifest.num_samples * manifest.frame_len * 2)
    throw LengthMismatchError("dataset: frame payload size mismatch");
  for (float v : frames)
    if (!std::isfinite(v)) throw DataError("dataset: non-finite frame value");
}

Dataset generate_dataset(const GenerationConfig& config, std::uint64_t seed) {
  Dataset ds;
  ds.manifest.name = config.name;
  ds.manifest.frame_len = config.frame_len;
  ds.manifest.sample_rate_hz = config.sample_rate_hz;

  // Manifest order: SNR level (when fixed levels are used), then class, then
  // replicate index.
  const bool fixed_levels = !config.snr_levels.empty();
  const Eigen::Index levels = fixed_levels ? static_cast<Eigen::Index>(config.snr_levels.size()) : 1;
  Eigen::Index index = 0;
  for (Eigen::Index lvl = 0; lvl < levels; ++lvl) {
    for (int class_id : config.class_ids) {
      for (Eigen::Index rep = 0; rep < config.per_class; ++rep, ++index) {
        SampleRecord rec;
        rec.class_id = class_id;
        rec.seed = derive_seed(seed, {kSampleStream, static_cast<std::uint64_t>(index)});
        RandomSource head(rec.seed);  // independent head draws for snr/channel kind
        rec.snr_db = fixed_levels ? config.snr_levels[lvl]
                                  : head.uniform(config.snr_lo, config.snr_hi);
        rec.channel_kind = head.uniform() < config.p_free_space ? ChannelKind::kFreeSpace
                                                                : ChannelKind::kRayleigh;
        rec.seed = derive_seed(rec.seed, {0x5EED});  // body stream, decoupled from head
        ds.manifest.records.push_back(rec);
      }
    }
  }
  ds.manifest.num_samples = index;
  ds.frames.assign(static_cast<std::size_t>(index) * config.frame_len * 2, 0.0f);

  const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::thread> pool;
  std::atomic<Eigen::Index> cursor{0};
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const Eigen::Index i = cursor.fetch_add(1);
        if (i >= ds.manifest.num_samples) return;
        synthesize_sample(config, ds.manifest.records[i], ds.frame_data(i));
      }
    });
  }
  for (auto& t : pool) t.join();
  return ds;
}

namespace {
Eigen::Index scaled(Eigen::Index n, double scale) {
  return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(n * scale)));
}
std::vector<int> all_classes() {
  std::vector<int> ids(kNumWaveformClasses);
  for (int i = 0; i < kNumWaveformClasses; ++i) ids[i] = i;
  return ids;
}
}  // namespace

Dataset generate_dataset1(std::uint64_t seed, double scale) {
  GenerationConfig cfg;
  cfg.name = "dataset1";
  cfg.class_ids = all_classes();
  cfg.per_class = scaled(1000, scale);
  cfg.snr_lo = 5.0;
  cfg.snr_hi = 15.0;
  cfg.p_free_space = 0.5;
  return generate_dataset(cfg, seed);
}

Dataset generate_dataset2(std::uint64_t seed, double scale) {
  GenerationConfig cfg;
  cfg.name = "dataset2";
  cfg.class_ids = all_classes();
  cfg.per_class = scaled(200, scale);
  cfg.snr_levels.resize(21);
  for (int i = 0; i < 21; ++i) cfg.snr_levels[i] = -10.0 + i;
  cfg.p_free_space = 0.5;
  return generate_dataset(cfg, seed);
}

Dataset generate_toy(std::uint64_t seed, Eigen::Index per_class) {
  GenerationConfig cfg;
  cfg.name = "toy";
  cfg.class_ids = {static_cast<int>(WaveformClass::kLfm), static_cast<int>(WaveformClass::kBpskBarker),
                   static_cast<int>(WaveformClass::kFsk2), static_cast<int>(WaveformClass::kCostasFm)};
  cfg.per_class = per_class;
  cfg.snr_lo = 5.0;
  cfg.snr_hi = 15.0;
  cfg.p_free_space = 0.5;
  return generate_dataset(cfg, seed);
}

Dataset generate_toy_sweep(std::uint64_t seed, Eigen::Index per_class_per_level,
                           std::vector<double> snr_levels) {
  GenerationConfig cfg;
  cfg.name = "toy_sweep";
  cfg.class_ids = {static_cast<int>(WaveformClass::kLfm), static_cast<int>(WaveformClass::kBpskBarker),
                   static_cast<int>(WaveformClass::kFsk2), static_cast<int>(WaveformClass::kCostasFm)};
  cfg.per_class = per_class_per_level;
  cfg.snr_levels = std::move(snr_levels);
  cfg.p_free_space = 0.5;
  return generate_dataset(cfg, seed);
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto bin_path = dir / (dataset.manifest.name + ".iq.bin");
  {
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("write_dataset: cannot open " + bin_path.string());
    bin.write(reinterpret_cast<const char*>(dataset.frames.data()),
              static_cast<std::streamsize>(dataset.frames.size() * sizeof(float)));
  }
  nlohmann::json j;
  j["name"] = dataset.manifest.name;
  j["num_samples"] = dataset.manifest.num_samples;
  j["frame_len"] = dataset.manifest.frame_len;
  j["sample_rate_hz"] = dataset.manifest.sample_rate_hz;
  auto& recs = j["records"] = nlohmann::json::array();
  for (const auto& r : dataset.manifest.records) {
    recs.push_back({{"class_id", r.class_id},
                    {"snr_db", r.snr_db},
                    {"channel_kind", r.channel_kind == ChannelKind::kFreeSpace ? "free_space" : "rayleigh"},
                    {"seed", r.seed}});
  }
  std::ofstream mf(dir / (dataset.manifest.name + ".manifest.json"));
  mf << j.dump(2) << "\n";
}

Dataset read_dataset(const std::filesystem::path& dir, const std::string& name) {
  const auto manifest_path = dir / (name + ".manifest.json");
  std::ifstream mf(manifest_path);
  if (!mf) throw ManifestError("read_dataset: missing manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    mf >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("read_dataset: unparsable manifest: ") + e.what());
  }

  Dataset ds;
  try {
    ds.manifest.name = j.at("name").get<std::string>();
    ds.manifest.num_samples = j.at("num_samples").get<Eigen::Index>();
    ds.manifest.frame_len = j.at("frame_len").get<Eigen::Index>();
    ds.manifest.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    for (const auto& rj : j.at("records")) {
      SampleRecord r;
      r.class_id = rj.at("class_id").get<int>();
      r.snr_db = rj.at("snr_db").get<double>();
      const auto kind = rj.at("channel_kind").get<std::string>();
      if (kind == "free_space") r.channel_kind = ChannelKind::kFreeSpace;
      else if (kind == "rayleigh") r.channel_kind = ChannelKind::kRayleigh;
      else throw ManifestError("read_dataset: unknown channel_kind " + kind);
      r.seed = rj.at("seed").get<std::uint64_t>();
      ds.manifest.records.push_back(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("read_dataset: manifest schema violation: ") + e.what());
  }
  if (static_cast<Eigen::Index>(ds.manifest.records.size()) != ds.manifest.num_samples)
    throw ManifestError("read_dataset: record count does not match num_samples");
  for (const auto& r : ds.manifest.records)
    if (r.class_id < 0 || r.class_id >= kNumWaveformClasses)
      throw ManifestError("read_dataset: class_id out of range");

  const auto bin_path = dir / (name + ".iq.bin");
  std::ifstream bin(bin_path, std::ios::binary | std::ios::ate);
  if (!bin) throw LengthMismatchError("read_dataset: missing payload " + bin_path.string());
  const auto bytes = static_cast<std::uint64_t>(bin.tellg());
  const auto expected =
      static_cast<std::uint64_t>(ds.manifest.num_samples) * ds.manifest.frame_len * 2 * sizeof(float);
  if (bytes != expected)
    throw LengthMismatchError("read_dataset: payload has " + std::to_string(bytes) +
                              " bytes, expected " + std::to_string(expected));
  ds.frames.resize(expected / sizeof(float));
  bin.seekg(0);
  bin.read(reinterpret_cast<char*>(ds.frames.data()), static_cast<std::streamsize>(expected));
  for (float v : ds.frames)
    if (!std::isfinite(v)) throw DataError("read_dataset: non-finite frame value");
  return ds;
}

}  // namespace pulseclust
