#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tfnet/bitstream/bitstream.hpp"
#include "tfnet/channel/channel.hpp"
#include "tfnet/codec/codec.hpp"
#include "tfnet/dsp/stft.hpp"
#include "tfnet/train/trainer.hpp"
#include "tfnet/vq/vq.hpp"

namespace py = pybind11;
using namespace tfnet;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using I32 = py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>;
using U8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

template <typename T>
py::array_t<T> to_numpy(const std::vector<T>& v) {
  py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

template <typename A>
auto span_of(const A& a) {
  require(a.ndim() == 1, ErrorKind::kShape, "expected a 1-D array");
  return std::span(a.data(), static_cast<std::size_t>(a.shape(0)));
}

nlohmann::json to_json(const py::dict& d) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(d).cast<std::string>());
}

codec::CodecConfig codec_config(const std::optional<py::dict>& overrides) {
  auto j = codec::CodecConfig{}.to_json();
  if (overrides) j.merge_patch(to_json(*overrides));
  auto cfg = codec::CodecConfig::from_json(j);
  cfg.validate();
  return cfg;
}

dsp::StftConfig stft_config(int window, int hop) {
  dsp::StftConfig c;
  c.window_len = window;
  c.hop_len = hop;
  c.validate();
  return c;
}

py::array_t<double> spectrum_to_numpy(const dsp::Spectrum& s) {
  py::array_t<double> out({s.frames, s.bins, 2});
  std::copy(s.data.begin(), s.data.end(), out.mutable_data());
  return out;
}

dsp::Spectrum spectrum_from_numpy(const F64& a) {
  require(a.ndim() == 3 && a.shape(2) == 2, ErrorKind::kShape, "spectrum must have shape (frames, bins, 2)");
  dsp::Spectrum s(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), s.data.begin());
  return s;
}

channel::ThreeStateModel channel_model(const std::optional<std::array<std::array<double, 3>, 3>>& P,
                                       const std::optional<std::array<double, 3>>& loss) {
  channel::ThreeStateModel m;
  if (P) m.P = *P;
  if (loss) m.loss = *loss;
  m.validate();
  return m;
}

bitstream::StreamHeader header_for(const codec::CodecConfig& cfg, std::size_t samples, int frames_per_packet) {
  bitstream::StreamHeader h;
  h.sample_rate = static_cast<std::uint32_t>(cfg.sample_rate);
  h.window_len = static_cast<std::uint32_t>(cfg.stft.window_len);
  h.hop_len = static_cast<std::uint32_t>(cfg.stft.hop_len);
  h.groups = static_cast<std::uint32_t>(cfg.vq_groups);
  h.codebook_size = static_cast<std::uint32_t>(cfg.vq_size);
  h.frames_per_packet = static_cast<std::uint32_t>(frames_per_packet);
  h.num_samples = static_cast<std::uint32_t>(samples);
  return h;
}

class PyCodec {
 public:
  PyCodec(const std::optional<py::dict>& config, std::uint64_t seed)
      : model_(std::make_unique<codec::Codec<float>>(codec_config(config), seed)) {}
  explicit PyCodec(std::unique_ptr<codec::Codec<float>> m) : model_(std::move(m)) {}

  py::array_t<std::int32_t> encode(const F64& samples) {
    const auto s = span_of(samples);
    std::vector<std::int32_t> idx;
    {
      py::gil_scoped_release release;
      idx = model_->encode(s);
    }
    return to_numpy(idx);
  }

  py::array_t<double> decode(const I32& indices, const std::optional<U8>& received) {
    const auto idx = span_of(indices);
    std::span<const std::uint8_t> mask;
    if (received) mask = span_of(*received);
    std::vector<double> y;
    {
      py::gil_scoped_release release;
      y = model_->decode(idx, mask);
    }
    return to_numpy(y);
  }

  py::bytes to_bytes(const F64& samples, int frames_per_packet) {
    const auto s = span_of(samples);
    const auto idx = model_->encode(s);
    return py::bytes(bitstream::serialize(
        bitstream::packetize(idx, header_for(model_->config(), s.size(), frames_per_packet))));
  }

  py::array_t<double> from_bytes(const py::bytes& data, const std::optional<U8>& packets_received) {
    const auto stream = bitstream::parse(std::string(data));
    bitstream::Depacketized d;
    if (packets_received) {
      channel::PacketTrace t;
      const auto r = span_of(*packets_received);
      t.received.assign(r.begin(), r.end());
      d = bitstream::apply_trace(stream, t);
    } else {
      d = bitstream::depacketize(stream);
    }
    auto y = model_->decode(d.indices, d.frame_received);
    y.resize(std::min<std::size_t>(y.size(), stream.header.num_samples));
    return to_numpy(y);
  }

  py::dict config() const {
    return py::module_::import("json").attr("loads")(model_->config().to_json().dump());
  }
  std::size_t parameter_count() { return model_->trainable_count(); }
  double bitrate_kbps() const { return model_->config().bitrate_kbps(); }
  int frames_for(std::size_t samples) const { return model_->frames_for(samples); }

 private:
  std::unique_ptr<codec::Codec<float>> model_;
};

}  // namespace

PYBIND11_MODULE(_tfnet, m) {
  m.doc() = "Bindings for the tfnet speech codec library.";

  auto base = py::register_exception<Error>(m, "TfnetError", PyExc_RuntimeError);
  (void)base;

  m.def(
      "stft",
      [](const F64& x, int window, int hop) {
        const auto s = span_of(x);
        return spectrum_to_numpy(dsp::stft(dsp::Waveform{{s.begin(), s.end()}, 16000}, stft_config(window, hop)));
      },
      py::arg("samples"), py::arg("window") = 320, py::arg("hop") = 80,
      "Complex STFT as an array of shape (frames, bins, 2).");
  m.def(
      "istft",
      [](const F64& spec, int window, int hop) {
        return to_numpy(dsp::istft(spectrum_from_numpy(spec), stft_config(window, hop)).samples);
      },
      py::arg("spectrum"), py::arg("window") = 320, py::arg("hop") = 80);
  m.def(
      "compress",
      [](const F64& spec, double p) { return spectrum_to_numpy(dsp::power_law_compress(spectrum_from_numpy(spec), p)); },
      py::arg("spectrum"), py::arg("power") = 0.3);
  m.def(
      "expand",
      [](const F64& spec, double p) { return spectrum_to_numpy(dsp::power_law_expand(spectrum_from_numpy(spec), p)); },
      py::arg("spectrum"), py::arg("power") = 0.3);
  m.def("cola_constant", [](int window, int hop) { return dsp::cola_constant(stft_config(window, hop)); },
        py::arg("window") = 320, py::arg("hop") = 80);

  m.def("bitrate_kbps", &vq::bitrate_kbps, py::arg("groups"), py::arg("codebook_size"), py::arg("hop_ms"));

  py::class_<PyCodec>(m, "Codec")
      .def(py::init<const std::optional<py::dict>&, std::uint64_t>(), py::arg("config") = py::none(),
           py::arg("seed") = 1)
      .def_static(
          "load", [](const std::string& path) { return PyCodec(train::load_model(path)); }, py::arg("path"))
      .def("encode", &PyCodec::encode, py::arg("samples"), "Waveform -> flat codebook indices (frames * groups).")
      .def("decode", &PyCodec::decode, py::arg("indices"), py::arg("frame_received") = py::none())
      .def("to_bytes", &PyCodec::to_bytes, py::arg("samples"), py::arg("frames_per_packet") = 4)
      .def("from_bytes", &PyCodec::from_bytes, py::arg("data"), py::arg("packets_received") = py::none())
      .def_property_readonly("config", &PyCodec::config)
      .def_property_readonly("parameter_count", &PyCodec::parameter_count)
      .def_property_readonly("bitrate_kbps", &PyCodec::bitrate_kbps)
      .def("frames_for", &PyCodec::frames_for, py::arg("samples"));

  m.def(
      "simulate_channel",
      [](std::size_t packets, std::uint64_t seed, const std::optional<std::array<std::array<double, 3>, 3>>& P,
         const std::optional<std::array<double, 3>>& loss) {
        auto t = channel::simulate(channel_model(P, loss), packets, seed);
        return to_numpy(t.received);
      },
      py::arg("packets"), py::arg("seed") = 1, py::arg("P") = py::none(), py::arg("loss") = py::none(),
      "Per-packet reception flags (1 received, 0 lost).");
  m.def(
      "stationary_loss_rate",
      [](const std::optional<std::array<std::array<double, 3>, 3>>& P, const std::optional<std::array<double, 3>>& loss) {
        return channel::stationary_loss_rate(channel_model(P, loss));
      },
      py::arg("P") = py::none(), py::arg("loss") = py::none());

  m.def(
      "pack",
      [](const I32& indices, int groups, int codebook_size, int frames_per_packet, std::uint32_t seq) {
        bitstream::StreamHeader h;
        h.groups = static_cast<std::uint32_t>(groups);
        h.codebook_size = static_cast<std::uint32_t>(codebook_size);
        h.frames_per_packet = static_cast<std::uint32_t>(frames_per_packet);
        h.validate();
        const auto p = bitstream::pack(span_of(indices), seq, h);
        return py::bytes(reinterpret_cast<const char*>(p.payload.data()), p.payload.size());
      },
      py::arg("indices"), py::arg("groups") = 3, py::arg("codebook_size") = 1024, py::arg("frames_per_packet") = 4,
      py::arg("seq") = 0, "Packs one packet worth of indices into its payload bytes.");
  m.def(
      "unpack",
      [](const py::bytes& payload, int groups, int codebook_size, int frames_per_packet) {
        bitstream::StreamHeader h;
        h.groups = static_cast<std::uint32_t>(groups);
        h.codebook_size = static_cast<std::uint32_t>(codebook_size);
        h.frames_per_packet = static_cast<std::uint32_t>(frames_per_packet);
        h.validate();
        const std::string s(payload);
        bitstream::Packet p;
        p.payload.assign(s.begin(), s.end());
        return to_numpy(bitstream::unpack(p, h));
      },
      py::arg("payload"), py::arg("groups") = 3, py::arg("codebook_size") = 1024, py::arg("frames_per_packet") = 4);
}
