#include "svga/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>

namespace svga {
namespace {

constexpr char kMagic[8] = {'S', 'V', 'G', 'A', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  char b[4];
  if (!is.read(b, 4)) throw ParseError("checkpoint: truncated while reading " + what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

double get_f64(std::istream& is, const std::string& what) {
  char b[8];
  if (!is.read(b, 8)) throw ParseError("checkpoint: truncated while reading " + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& config_text,
                     const std::vector<Tensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(config_text.size()));
  os.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name().empty()) throw StateError("checkpoint: unnamed tensor cannot be saved");
    put_u32(os, static_cast<std::uint32_t>(t.name().size()));
    os.write(t.name().data(), static_cast<std::streamsize>(t.name().size()));
    put_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.values()) put_f64(os, v);
  }
  if (!os) throw IoError("checkpoint: write to '" + path + "' failed");
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kMagic))
    throw ParseError("checkpoint: '" + path + "' lacks the expected magic");
  const std::uint32_t version = get_u32(is, "version");
  if (version != kVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  CheckpointData out;
  const std::uint32_t cfg_len = get_u32(is, "config length");
  out.config_text.resize(cfg_len);
  if (cfg_len && !is.read(out.config_text.data(), cfg_len))
    throw ParseError("checkpoint: truncated config text");
  const std::uint32_t n = get_u32(is, "tensor count");
  out.tensors.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t name_len = get_u32(is, "name length");
    std::string name(name_len, '\0');
    if (name_len && !is.read(name.data(), name_len)) throw ParseError("checkpoint: truncated tensor name");
    const std::uint32_t ndim = get_u32(is, "rank of '" + name + "'");
    Shape shape(ndim);
    for (auto& d : shape) d = static_cast<int>(get_u32(is, "extent of '" + name + "'"));
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = get_f64(is, "data of '" + name + "'");
    out.tensors.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(data)));
  }
  return out;
}

void load_into_registry(const CheckpointData& ckpt, ParamRegistry& reg) {
  const auto expected = reg.saved_tensors();
  if (ckpt.tensors.size() != expected.size())
    throw StateError("checkpoint: holds " + std::to_string(ckpt.tensors.size()) +
                     " tensors, model has " + std::to_string(expected.size()));
  for (const auto& [name, src] : ckpt.tensors) {
    if (!reg.contains(name)) throw StateError("checkpoint: model has no tensor named '" + name + "'");
    Tensor dst = reg.find(name);
    if (dst.shape() != src.shape())
      throw ShapeError("checkpoint: tensor '" + name + "' has shape " + shape_str(src.shape()) +
                       ", model expects " + shape_str(dst.shape()));
    auto out = dst.mutable_values();
    auto in = src.values();
    std::copy(in.begin(), in.end(), out.begin());
  }
}

}  // namespace svga
