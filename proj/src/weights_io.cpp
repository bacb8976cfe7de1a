#include "adkd/weights_io.hpp"

#include <cstring>
#include <fstream>

#include "adkd/errors.hpp"

namespace adkd {
namespace {

constexpr char kMagic[4] = {'A', 'D', 'K', 'D'};
constexpr char kEchoMagic[4] = {'C', 'F', 'G', 'E'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

// Cursor over the raw file bytes; every read reports the failure offset.
struct Reader {
  const std::string& bytes;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos + n > bytes.size()) {
      throw ParseError(std::string("weights file truncated while reading ") + what, pos);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(bytes[pos++]);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint8_t>(bytes[pos]) |
                      (static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes[pos + 1])) << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos + i])) << (8 * i);
    }
    pos += 4;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string v = bytes.substr(pos, n);
    pos += n;
    return v;
  }
};

}  // namespace

void save_weights(const std::string& path, const std::vector<NamedTensor>& tensors,
                  const std::string* config_echo) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  if (tensors.size() > 0xffffffffu) throw ContractError("too many tensors for weights container");
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    if (nt.name.empty() || nt.name.size() > 0xffff) {
      throw ContractError("tensor name \"" + nt.name + "\" must be 1..65535 bytes");
    }
    put_u16(out, static_cast<std::uint16_t>(nt.name.size()));
    out += nt.name;
    out.push_back(static_cast<char>(nt.tensor.rank()));
    for (int d = 0; d < nt.tensor.rank(); ++d) {
      put_u32(out, static_cast<std::uint32_t>(nt.tensor.dim(d)));
    }
    for (std::size_t i = 0; i < nt.tensor.numel(); ++i) put_f32(out, nt.tensor[i]);
  }
  if (config_echo) {
    out.append(kEchoMagic, 4);
    if (config_echo->size() > 0xffffffffu) throw ContractError("config echo too large");
    put_u32(out, static_cast<std::uint32_t>(config_echo->size()));
    out += *config_echo;
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open \"" + path + "\" for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  f.flush();
  if (!f) throw IoError("short write to \"" + path + "\"");
}

WeightsFile load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open \"" + path + "\" for reading");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r{bytes};
  if (r.str(4, "magic") != std::string(kMagic, 4)) {
    throw ParseError("not a weights file (bad magic)", 0);
  }
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw ParseError("unsupported weights format version " + std::to_string(version), 4);
  }
  const std::uint32_t count = r.u32("tensor count");

  WeightsFile out;
  out.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    const std::uint16_t name_len = r.u16("name length");
    if (name_len == 0) throw ParseError("empty tensor name", r.pos - 2);
    nt.name = r.str(name_len, "tensor name");
    const std::uint8_t rank = r.u8("rank");
    if (rank > 4) {
      throw ParseError("tensor \"" + nt.name + "\" has unsupported rank " + std::to_string(rank),
                       r.pos - 1);
    }
    std::vector<int> dims(rank);
    std::size_t numel = 1;
    for (int d = 0; d < rank; ++d) {
      const std::uint32_t v = r.u32("dimension");
      if (v == 0 || v > 0x7fffffffu) {
        throw ParseError("tensor \"" + nt.name + "\" has invalid dimension", r.pos - 4);
      }
      dims[d] = static_cast<int>(v);
      numel *= v;
    }
    std::vector<float> data(numel);
    r.need(numel * 4, "tensor payload");
    for (std::size_t j = 0; j < numel; ++j) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(r.bytes[r.pos + 4 * j + b]))
                << (8 * b);
      }
      std::memcpy(&data[j], &bits, 4);
    }
    r.pos += numel * 4;
    nt.tensor = Tensor<float>(dims, std::move(data));
    out.tensors.push_back(std::move(nt));
  }

  if (r.pos < bytes.size()) {
    const std::size_t echo_at = r.pos;
    if (r.str(4, "trailer magic") != std::string(kEchoMagic, 4)) {
      throw ParseError("unexpected bytes after tensor table", echo_at);
    }
    const std::uint32_t len = r.u32("config echo length");
    out.config_echo = r.str(len, "config echo");
    if (r.pos != bytes.size()) {
      throw ParseError("trailing bytes after config echo", r.pos);
    }
  }
  return out;
}

}  // namespace adkd
