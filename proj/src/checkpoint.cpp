#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "xic/features.hpp"

namespace xic {

namespace {

constexpr char kMagic[8] = {'X', 'I', 'C', 'P', 'A', 'R', 'A', 'M'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(is), ErrorKind::Format, path + ": truncated checkpoint");
  return v;
}

NamedTensor kernel_weights(const std::string& name, const ConvKernel& k) {
  return {name + ".weight", {k.out_channels, k.in_channels, k.size, k.size}, k.weights};
}

NamedTensor kernel_bias(const std::string& name, const ConvKernel& k) {
  return {name + ".bias", {k.out_channels}, k.bias};
}

void push_extractor(std::vector<NamedTensor>& out, const std::string& prefix,
                    const FeatureExtractorParams& e) {
  out.push_back(kernel_weights(prefix + ".conv1", e.conv1));
  out.push_back(kernel_bias(prefix + ".conv1", e.conv1));
  out.push_back(kernel_weights(prefix + ".conv2", e.conv2));
  out.push_back(kernel_bias(prefix + ".conv2", e.conv2));
}

const NamedTensor& find(const std::vector<NamedTensor>& ts, const std::string& name) {
  for (const auto& t : ts)
    if (t.name == name) return t;
  fail(ErrorKind::Format, "checkpoint is missing tensor '" + name + "'");
}

ConvKernel read_kernel(const std::vector<NamedTensor>& ts, const std::string& name) {
  const NamedTensor& w = find(ts, name + ".weight");
  const NamedTensor& b = find(ts, name + ".bias");
  require(w.dims.size() == 4 && w.dims[2] == w.dims[3] && b.dims.size() == 1 &&
              b.dims[0] == w.dims[0],
          ErrorKind::Format, "checkpoint tensor '" + name + "' has unexpected dims");
  ConvKernel k(w.dims[0], w.dims[1], w.dims[2]);
  k.weights = w.data;
  k.bias = b.data;
  return k;
}

FeatureExtractorParams read_extractor(const std::vector<NamedTensor>& ts, const std::string& prefix,
                                      Modality m) {
  FeatureExtractorParams e;
  e.modality = m;
  e.conv1 = read_kernel(ts, prefix + ".conv1");
  e.conv2 = read_kernel(ts, prefix + ".conv2");
  return e;
}

}  // namespace

void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors) {
  const std::filesystem::path p(path);
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + path);
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, kVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
      std::uint64_t expect = 1;
      for (auto d : t.dims) expect *= d;
      require(expect == t.data.size(), ErrorKind::InvalidInput,
              "tensor '" + t.name + "' dims do not match payload");
      put<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
      os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(t.dims.size()));
      for (auto d : t.dims) put<std::uint64_t>(os, d);
      os.write(reinterpret_cast<const char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    require(static_cast<bool>(os), ErrorKind::Io, "failed writing " + path);
  }
  std::filesystem::rename(tmp, p);
}

std::vector<NamedTensor> load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::Io, "cannot open checkpoint " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  require(is && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, ErrorKind::Format,
          path + ": not a parameter checkpoint");
  const auto version = get<std::uint32_t>(is, path);
  require(version == kVersion, ErrorKind::Format,
          path + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = get<std::uint32_t>(is, path);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = get<std::uint32_t>(is, path);
    require(name_len < 4096, ErrorKind::Format, path + ": implausible tensor name length");
    t.name.resize(name_len);
    is.read(t.name.data(), name_len);
    const auto ndims = get<std::uint32_t>(is, path);
    require(ndims <= 8, ErrorKind::Format, path + ": implausible tensor rank");
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < ndims; ++d) {
      t.dims.push_back(get<std::uint64_t>(is, path));
      n *= t.dims.back();
    }
    require(n < (1ULL << 32), ErrorKind::Format, path + ": implausible tensor size");
    t.data.resize(n);
    is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(n * sizeof(double)));
    require(static_cast<bool>(is), ErrorKind::Format, path + ": truncated checkpoint");
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<NamedTensor> to_named(const ModelParams& p) {
  std::vector<NamedTensor> out;
  push_extractor(out, "rgb", p.rgb);
  // Shared weights are written under both names so either reader works.
  push_extractor(out, "thermal", p.thermal_extractor());
  if (p.rgbt4) push_extractor(out, "rgbt4", *p.rgbt4);
  return out;
}

ModelParams model_from_named(const std::vector<NamedTensor>& tensors, const ModelConfig& cfg) {
  ModelParams m;
  m.rgb = read_extractor(tensors, "rgb", Modality::Rgb);
  if (!cfg.share_weights) m.thermal = read_extractor(tensors, "thermal", Modality::Thermal);
  if (cfg.branches == 2 && cfg.first_input == FirstInput::Rgbt4) {
    m.rgbt4 = read_extractor(tensors, "rgbt4", Modality::Rgbt4);
    require(m.rgbt4->conv1.in_channels == 4, ErrorKind::Format,
            "rgbt4 extractor must take 4 input channels");
  }
  return m;
}

void save_checkpoint(const std::string& path, const ModelParams& p) { save_tensors(path, to_named(p)); }

ModelParams load_checkpoint(const std::string& path, const ModelConfig& cfg) {
  return model_from_named(load_tensors(path), cfg);
}

}  // namespace xic
