#include "tfnet/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tfnet::nn {
namespace {

constexpr char kMagic[4] = {'T', 'F', 'N', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace

const TensorRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void Checkpoint::put(std::string name, const Shape& shape, std::vector<float> data) {
  require(data.size() == numel(shape), ErrorKind::kShape, "checkpoint tensor size mismatch: " + name);
  for (auto& t : tensors)
    if (t.name == name) {
      t.shape = shape;
      t.data = std::move(data);
      return;
    }
  tensors.push_back(TensorRecord{std::move(name), shape, std::move(data)});
}

std::string Checkpoint::to_bytes() const {
  nlohmann::json manifest;
  manifest["meta"] = meta;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    manifest["tensors"].push_back(
        {{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"count", t.data.size()}});
    offset += t.data.size();
  }
  const std::string text = manifest.dump();
  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset * 4);
  for (const auto& t : tensors)
    for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

Checkpoint Checkpoint::from_bytes(const std::string& in) {
  require(in.size() >= 16 && std::memcmp(in.data(), kMagic, 4) == 0, ErrorKind::kFormat,
          "not a tfnet checkpoint (bad magic)");
  const auto version = get_le(in, 4, 4);
  require(version == kVersion, ErrorKind::kFormat,
          "unsupported checkpoint version " + std::to_string(version));
  const auto mlen = get_le(in, 8, 8);
  require(mlen <= in.size() - 16, ErrorKind::kFormat, "truncated checkpoint manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in.substr(16, mlen));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("corrupt checkpoint manifest: ") + e.what());
  }
  const std::size_t blob = 16 + mlen;
  const std::size_t floats = (in.size() - blob) / 4;
  Checkpoint ck;
  try {
    ck.meta = manifest.at("meta");
    for (const auto& e : manifest.at("tensors")) {
      TensorRecord t;
      t.name = e.at("name").get<std::string>();
      t.shape = e.at("shape").get<Shape>();
      const auto off = e.at("offset").get<std::uint64_t>();
      const auto count = e.at("count").get<std::uint64_t>();
      require(count == numel(t.shape) && off <= floats && count <= floats - off, ErrorKind::kFormat,
              "checkpoint tensor '" + t.name + "' lies outside the blob");
      t.data.resize(count);
      for (std::uint64_t i = 0; i < count; ++i)
        t.data[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(in, blob + 4 * (off + i), 4)));
      ck.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("corrupt checkpoint manifest: ") + e.what());
  }
  return ck;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::kFormat, "cannot write checkpoint " + path);
  const std::string bytes = to_bytes();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(f), ErrorKind::kFormat, "failed writing checkpoint " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::kFormat, "cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return from_bytes(ss.str());
}

template <typename T>
void export_parameters(const ParameterList<T>& params, Checkpoint& ckpt, const std::string& prefix) {
  for (const auto* p : params) {
    std::vector<float> data(p->value.vec().begin(), p->value.vec().end());
    ckpt.put(prefix + p->name, p->value.shape(), std::move(data));
  }
}

template <typename T>
void import_parameters(const ParameterList<T>& params, const Checkpoint& ckpt, const std::string& prefix) {
  for (auto* p : params) {
    const auto* rec = ckpt.find(prefix + p->name);
    require(rec != nullptr, ErrorKind::kFormat, "checkpoint lacks tensor '" + prefix + p->name + "'");
    require(rec->shape == p->value.shape(), ErrorKind::kFormat,
            "checkpoint tensor '" + rec->name + "' has shape " + to_string(rec->shape) +
                ", model expects " + to_string(p->value.shape()));
    for (std::size_t i = 0; i < rec->data.size(); ++i) p->value[i] = static_cast<T>(rec->data[i]);
  }
}

template void export_parameters<float>(const ParameterList<float>&, Checkpoint&, const std::string&);
template void export_parameters<double>(const ParameterList<double>&, Checkpoint&, const std::string&);
template void import_parameters<float>(const ParameterList<float>&, const Checkpoint&, const std::string&);
template void import_parameters<double>(const ParameterList<double>&, const Checkpoint&, const std::string&);

}  // namespace tfnet::nn
