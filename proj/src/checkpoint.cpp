#include "pointkan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "pointkan/config.hpp"

namespace pointkan {

namespace {

constexpr char kMagic[4] = {'P', 'K', 'A', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Model& model) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);

  const std::string cfg_text = config_to_text(model.config());
  put_u64(out, cfg_text.size());
  out += cfg_text;

  ParamList blocks = model.params();
  put_u32(out, static_cast<std::uint32_t>(blocks.size()));
  for (const auto& ref : blocks) {
    put_u32(out, static_cast<std::uint32_t>(ref.name.size()));
    out += ref.name;
    put_u64(out, ref.param->size());
    for (double v : ref.param->value) put_f64(out, v);
  }

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r{buf};
  if (r.bytes(4) != std::string(kMagic, 4))
    throw std::runtime_error("checkpoint: bad magic (not a PKAN file)");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  const std::uint64_t cfg_len = r.u64();
  ModelConfig cfg = parse_config_text(r.bytes(cfg_len));
  Model model(cfg, 0);

  ParamList blocks = model.params();
  const std::uint32_t count = r.u32();
  if (count != blocks.size())
    throw std::runtime_error("checkpoint: block count mismatch (file " + std::to_string(count) +
                             ", model " + std::to_string(blocks.size()) + ")");
  for (auto& ref : blocks) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.bytes(name_len);
    if (name != ref.name)
      throw std::runtime_error("checkpoint: block order mismatch (file '" + name +
                               "', model '" + ref.name + "')");
    const std::uint64_t n = r.u64();
    if (n != ref.param->size())
      throw std::runtime_error("checkpoint: size mismatch in block '" + name + "'");
    for (std::size_t i = 0; i < n; ++i) ref.param->value[i] = r.f64();
  }
  return model;
}

}  // namespace pointkan
