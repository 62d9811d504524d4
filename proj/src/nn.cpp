#include "pulseclust/nn.hpp"

#include <cstring>
#include <map>

namespace pulseclust {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'K', 'P'};

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NamedTensors<float>& tensors,
                     const std::string& meta_json) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  os.write(kMagic, 4);
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  write_pod<std::uint64_t>(os, meta_json.size());
  os.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.ndim()));
    for (auto d : t.shape()) write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.value().data()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

namespace {

struct RawEntry {
  Shape shape;
  Eigen::ArrayXf data;
};

std::string read_entries(const std::filesystem::path& path, std::map<std::string, RawEntry>* out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));
  const auto meta_len = read_pod<std::uint64_t>(is);
  std::string meta(meta_len, '\0');
  is.read(meta.data(), static_cast<std::streamsize>(meta_len));
  const auto count = read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto ndim = read_pod<std::uint32_t>(is);
    RawEntry e;
    for (std::uint32_t d = 0; d < ndim; ++d)
      e.shape.push_back(static_cast<Eigen::Index>(read_pod<std::uint64_t>(is)));
    e.data.resize(shape_numel(e.shape));
    is.read(reinterpret_cast<char*>(e.data.data()),
            static_cast<std::streamsize>(e.data.size() * sizeof(float)));
    if (!is) throw std::runtime_error("load_checkpoint: truncated tensor data");
    if (out) (*out)[name] = std::move(e);
  }
  return meta;
}

}  // namespace

std::string load_checkpoint(const std::filesystem::path& path, NamedTensors<float>& tensors) {
  std::map<std::string, RawEntry> entries;
  std::string meta = read_entries(path, &entries);
  for (auto& [name, t] : tensors) {
    auto it = entries.find(name);
    if (it == entries.end())
      throw std::runtime_error("load_checkpoint: missing tensor " + name);
    if (it->second.shape != t.shape())
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name + ": file " +
                               shape_str(it->second.shape) + " vs model " + shape_str(t.shape()));
    t.value() = it->second.data;
  }
  return meta;
}

std::string read_checkpoint_meta(const std::filesystem::path& path) {
  return read_entries(path, nullptr);
}

}  // namespace pulseclust
