#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tfnet/channel/channel.hpp"

namespace tfnet::bitstream {

/// MSB-first bit packing into bytes.
class BitWriter {
 public:
  void write(std::uint32_t value, int bits);
  std::size_t bit_count() const { return bits_; }
  /// Pads the final byte with zero bits.
  std::vector<std::uint8_t> finish() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t bits_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  /// Throws ErrorKind::kFormat ("malformed packet") past the end.
  std::uint32_t read(int bits);
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

/// Fixed header of a .tfn stream. All fields are u32 little-endian after
/// the 4-byte magic "TFN1".
struct StreamHeader {
  std::uint32_t sample_rate = 16000;
  std::uint32_t window_len = 320;
  std::uint32_t hop_len = 80;
  std::uint32_t groups = 3;
  std::uint32_t codebook_size = 1024;
  std::uint32_t frames_per_packet = 4;
  std::uint32_t num_samples = 0;  // original signal length

  static constexpr std::size_t kBytes = 4 + 7 * 4;

  int bits_per_index() const;
  std::size_t payload_bits() const;   // frames_per_packet * groups * log2(S)
  std::size_t payload_bytes() const;  // ceil(payload_bits / 8)
  std::size_t indices_per_packet() const { return std::size_t{frames_per_packet} * groups; }
  void validate() const;
  std::string describe() const;
};

bool operator==(const StreamHeader& a, const StreamHeader& b);

struct Packet {
  std::uint32_t seq = 0;
  std::vector<std::uint8_t> payload;
};

/// indices: frames_per_packet * groups values, frame-major, group-minor.
Packet pack(std::span<const std::int32_t> indices, std::uint32_t seq, const StreamHeader& header);
std::vector<std::int32_t> unpack(const Packet& packet, const StreamHeader& header);

struct Stream {
  StreamHeader header;
  std::vector<Packet> packets;

  std::size_t frames() const { return packets.size() * header.frames_per_packet; }
};

/// Groups per-frame indices into packets; a partial last packet is padded
/// with index-0 frames.
Stream packetize(std::span<const std::int32_t> indices, const StreamHeader& header);

std::string serialize(const Stream& stream);
/// Any malformed input raises ErrorKind::kFormat.
Stream parse(std::span<const std::uint8_t> bytes);
Stream parse(const std::string& bytes);

void write_stream(const std::string& path, const Stream& stream);
Stream read_stream(const std::string& path);

struct Depacketized {
  std::vector<std::int32_t> indices;          // frames * groups, zero for lost frames
  std::vector<std::uint8_t> frame_received;   // per-frame loss mask
};

/// Unpacks every packet; lost packets (per trace) yield zero indices and a
/// cleared mask for each of their frames.
Depacketized apply_trace(const Stream& stream, const channel::PacketTrace& trace);
Depacketized depacketize(const Stream& stream);

/// Coded payload bits per second of audio, in kbps. Only the
/// frames_per_packet * N * log2(S) index bits of each packet count; byte
/// padding, sequence numbers and the header do not.
double payload_kbps(const Stream& stream);

}  // namespace tfnet::bitstream
