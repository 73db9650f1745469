#include "tfnet/core/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tfnet/core/error.hpp"

namespace tfnet {
namespace {

std::uint32_t le32(const std::uint8_t* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace

PcmAudio read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kFormat, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  require(bytes.size() >= 12 && std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
              std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          ErrorKind::kFormat, path + ": not a RIFF/WAVE file");

  bool have_fmt = false;
  PcmAudio audio;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    require(body + size <= bytes.size() || std::memcmp(chunk, "data", 4) == 0, ErrorKind::kFormat,
            path + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      require(size >= 16, ErrorKind::kFormat, path + ": short fmt chunk");
      const std::uint16_t format = le16(bytes.data() + body);
      const std::uint16_t channels = le16(bytes.data() + body + 2);
      audio.sample_rate = static_cast<int>(le32(bytes.data() + body + 4));
      const std::uint16_t bits = le16(bytes.data() + body + 14);
      require(format == 1 && channels == 1 && bits == 16, ErrorKind::kFormat,
              path + ": only 16-bit PCM mono is supported");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      require(have_fmt, ErrorKind::kFormat, path + ": data chunk before fmt chunk");
      const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
      const std::size_t n = avail / 2;
      audio.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto v = static_cast<std::int16_t>(le16(bytes.data() + body + 2 * i));
        audio.samples[i] = v / 32768.0;
      }
      return audio;
    }
    pos = body + size + (size & 1u);
  }
  fail(ErrorKind::kFormat, path + ": no data chunk");
}

void write_wav(const std::string& path, const PcmAudio& audio) {
  const auto n = static_cast<std::uint32_t>(audio.samples.size());
  std::vector<std::uint8_t> out;
  out.reserve(44 + 2 * static_cast<std::size_t>(n));
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(audio.sample_rate));
  put32(out, static_cast<std::uint32_t>(audio.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, 2 * n);
  for (double s : audio.samples) {
    const double scaled = std::nearbyint(s * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put16(out, static_cast<std::uint16_t>(v));
  }
  std::ofstream file(path, std::ios::binary);
  require(static_cast<bool>(file), ErrorKind::kFormat, "cannot write " + path);
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

}  // namespace tfnet
