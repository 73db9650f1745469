#include "tfnet/bitstream/bitstream.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tfnet/core/error.hpp"

namespace tfnet::bitstream {
namespace {

constexpr char kMagic[4] = {'T', 'F', 'N', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  return v;
}

}  // namespace

void BitWriter::write(std::uint32_t value, int bits) {
  require(bits >= 0 && bits <= 32, ErrorKind::kUsage, "bit width out of range");
  require(bits == 32 || (value >> bits) == 0, ErrorKind::kFormat, "value does not fit the bit width");
  for (int b = bits - 1; b >= 0; --b) {
    if (bits_ % 8 == 0) bytes_.push_back(0);
    if ((value >> b) & 1u) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (bits_ % 8));
    ++bits_;
  }
}

std::uint32_t BitReader::read(int bits) {
  require(bits >= 0 && bits <= 32, ErrorKind::kUsage, "bit width out of range");
  require(pos_ + bits <= bytes_.size() * 8, ErrorKind::kFormat, "malformed packet: payload truncated");
  std::uint32_t v = 0;
  for (int b = 0; b < bits; ++b, ++pos_) v = (v << 1) | ((bytes_[pos_ / 8] >> (7 - pos_ % 8)) & 1u);
  return v;
}

int StreamHeader::bits_per_index() const {
  require(codebook_size >= 2 && std::has_single_bit(codebook_size), ErrorKind::kFormat,
          "codebook size " + std::to_string(codebook_size) + " is not a power of two >= 2");
  return std::countr_zero(codebook_size);
}

std::size_t StreamHeader::payload_bits() const {
  return std::size_t{frames_per_packet} * groups * bits_per_index();
}

std::size_t StreamHeader::payload_bytes() const { return (payload_bits() + 7) / 8; }

void StreamHeader::validate() const {
  require(sample_rate > 0, ErrorKind::kFormat, "header: sample rate is zero");
  require(hop_len > 0 && window_len >= hop_len, ErrorKind::kFormat, "header: bad window/hop");
  require(groups >= 1 && groups <= 4096, ErrorKind::kFormat, "header: group count out of range");
  require(frames_per_packet >= 1 && frames_per_packet <= 4096, ErrorKind::kFormat,
          "header: frames per packet out of range");
  require(bits_per_index() <= 31, ErrorKind::kFormat, "header: codebook too large");
}

std::string StreamHeader::describe() const {
  std::ostringstream s;
  s << "sample_rate=" << sample_rate << " window_len=" << window_len << " hop_len=" << hop_len
    << " groups=" << groups << " codebook_size=" << codebook_size
    << " frames_per_packet=" << frames_per_packet << " num_samples=" << num_samples;
  return s.str();
}

bool operator==(const StreamHeader& a, const StreamHeader& b) {
  return a.sample_rate == b.sample_rate && a.window_len == b.window_len && a.hop_len == b.hop_len &&
         a.groups == b.groups && a.codebook_size == b.codebook_size &&
         a.frames_per_packet == b.frames_per_packet && a.num_samples == b.num_samples;
}

Packet pack(std::span<const std::int32_t> indices, std::uint32_t seq, const StreamHeader& header) {
  const int bits = header.bits_per_index();
  require(indices.size() == header.indices_per_packet(), ErrorKind::kShape,
          "pack: expected " + std::to_string(header.indices_per_packet()) + " indices, got " +
              std::to_string(indices.size()));
  BitWriter w;
  for (std::int32_t idx : indices) {
    require(idx >= 0 && static_cast<std::uint32_t>(idx) < header.codebook_size, ErrorKind::kFormat,
            "pack: index " + std::to_string(idx) + " out of range for codebook size " +
                std::to_string(header.codebook_size));
    w.write(static_cast<std::uint32_t>(idx), bits);
  }
  return Packet{seq, w.finish()};
}

std::vector<std::int32_t> unpack(const Packet& packet, const StreamHeader& header) {
  const int bits = header.bits_per_index();
  require(packet.payload.size() == header.payload_bytes(), ErrorKind::kFormat,
          "malformed packet: payload is " + std::to_string(packet.payload.size()) + " bytes, expected " +
              std::to_string(header.payload_bytes()));
  BitReader r(packet.payload);
  std::vector<std::int32_t> out(header.indices_per_packet());
  for (auto& v : out) v = static_cast<std::int32_t>(r.read(bits));
  return out;
}

Stream packetize(std::span<const std::int32_t> indices, const StreamHeader& header) {
  header.validate();
  const std::size_t per_frame = header.groups;
  require(indices.size() % per_frame == 0, ErrorKind::kShape, "index count is not a whole number of frames");
  const std::size_t per_packet = header.indices_per_packet();
  Stream s{header, {}};
  std::vector<std::int32_t> chunk(per_packet);
  for (std::size_t off = 0, seq = 0; off < indices.size(); off += per_packet, ++seq) {
    std::fill(chunk.begin(), chunk.end(), 0);
    const std::size_t n = std::min(per_packet, indices.size() - off);
    std::copy_n(indices.begin() + off, n, chunk.begin());
    s.packets.push_back(pack(chunk, static_cast<std::uint32_t>(seq), header));
  }
  return s;
}

std::string serialize(const Stream& stream) {
  const auto& h = stream.header;
  h.validate();
  std::string out(kMagic, 4);
  for (std::uint32_t v : {h.sample_rate, h.window_len, h.hop_len, h.groups, h.codebook_size,
                          h.frames_per_packet, h.num_samples})
    put_u32(out, v);
  for (const auto& p : stream.packets) {
    require(p.payload.size() == h.payload_bytes(), ErrorKind::kFormat, "packet payload size mismatch");
    put_u32(out, p.seq);
    out.append(reinterpret_cast<const char*>(p.payload.data()), p.payload.size());
  }
  return out;
}

Stream parse(std::span<const std::uint8_t> in) {
  require(in.size() >= StreamHeader::kBytes, ErrorKind::kFormat, "truncated stream header");
  require(std::memcmp(in.data(), kMagic, 4) == 0, ErrorKind::kFormat, "not a .tfn stream (bad magic)");
  Stream s;
  auto& h = s.header;
  h.sample_rate = get_u32(in, 4);
  h.window_len = get_u32(in, 8);
  h.hop_len = get_u32(in, 12);
  h.groups = get_u32(in, 16);
  h.codebook_size = get_u32(in, 20);
  h.frames_per_packet = get_u32(in, 24);
  h.num_samples = get_u32(in, 28);
  h.validate();
  const std::size_t record = 4 + h.payload_bytes();
  const std::size_t body = in.size() - StreamHeader::kBytes;
  require(body % record == 0, ErrorKind::kFormat, "malformed packet: stream ends mid-packet");
  const std::size_t count = body / record;
  s.packets.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t pos = StreamHeader::kBytes + i * record;
    Packet p;
    p.seq = get_u32(in, pos);
    p.payload.assign(in.begin() + pos + 4, in.begin() + pos + record);
    s.packets.push_back(std::move(p));
  }
  const std::size_t frames = (std::size_t{h.num_samples} + h.hop_len - 1) / h.hop_len;
  require(frames <= s.frames(), ErrorKind::kFormat,
          "stream holds " + std::to_string(s.frames()) + " frames but the header promises " +
              std::to_string(frames));
  return s;
}

Stream parse(const std::string& bytes) {
  return parse(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()),
                                             bytes.size()));
}

void write_stream(const std::string& path, const Stream& stream) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::kFormat, "cannot write " + path);
  const std::string bytes = serialize(stream);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(f), ErrorKind::kFormat, "failed writing " + path);
}

Stream read_stream(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::kFormat, "cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

Depacketized apply_trace(const Stream& stream, const channel::PacketTrace& trace) {
  require(trace.size() == stream.packets.size(), ErrorKind::kShape,
          "trace has " + std::to_string(trace.size()) + " packets, stream has " +
              std::to_string(stream.packets.size()));
  const auto& h = stream.header;
  Depacketized d;
  d.indices.reserve(stream.frames() * h.groups);
  d.frame_received.reserve(stream.frames());
  for (std::size_t i = 0; i < stream.packets.size(); ++i) {
    const bool ok = trace.received[i] != 0;
    if (ok) {
      const auto idx = unpack(stream.packets[i], h);
      d.indices.insert(d.indices.end(), idx.begin(), idx.end());
    } else {
      d.indices.insert(d.indices.end(), h.indices_per_packet(), 0);
    }
    d.frame_received.insert(d.frame_received.end(), h.frames_per_packet, ok ? 1 : 0);
  }
  return d;
}

Depacketized depacketize(const Stream& stream) {
  channel::PacketTrace all;
  all.received.assign(stream.packets.size(), 1);
  return apply_trace(stream, all);
}

double payload_kbps(const Stream& stream) {
  const auto& h = stream.header;
  require(h.num_samples > 0, ErrorKind::kFormat, "stream has no audio duration");
  const double bits = static_cast<double>(stream.packets.size()) * h.payload_bits();
  const double seconds = static_cast<double>(h.num_samples) / h.sample_rate;
  return bits / seconds / 1000.0;
}

}  // namespace tfnet::bitstream
