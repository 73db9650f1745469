#include "tfnet/train/loss.hpp"

#include "tfnet/nn/ops.hpp"
#include "tfnet/nn/spectral.hpp"

namespace tfnet::train {

void LossConfig::validate() const {
  require(alpha > 0.0, ErrorKind::kConfig, "alpha must be positive");
  require(aux_weight >= 0.0, ErrorKind::kConfig, "aux_weight must be non-negative");
  require(power > 0.0 && power <= 1.0, ErrorKind::kConfig, "power-law exponent must lie in (0, 1]");
  require(compress_eps >= 0.0, ErrorKind::kConfig, "compress_eps must be non-negative");
}

template <typename T>
Var recon_loss(Graph<T>& g, Var decoded, Var target, const dsp::FrameTransform<T>& transform,
               const LossConfig& cfg) {
  const T p = static_cast<T>(cfg.power);
  const T eps = static_cast<T>(cfg.compress_eps);
  Var consistent = nn::stft(g, nn::istft(g, decoded, transform), transform);
  Var reference = nn::stft(g, target, transform);
  require(g.value(consistent).shape() == g.value(reference).shape(), ErrorKind::kShape,
          "recon_loss: decoded spectrum has " + to_string(g.value(consistent).shape()) +
              " frames/bins but the target yields " + to_string(g.value(reference).shape()));
  return nn::mse(g, nn::power_compress(g, consistent, p, eps), nn::power_compress(g, reference, p, eps));
}

template <typename T>
LossTerms<T> total_loss(Graph<T>& g, Var recon, Var commit, std::optional<Var> aux,
                        const LossConfig& cfg) {
  LossTerms<T> t{recon, recon, commit, aux};
  t.total = nn::add(g, recon, nn::scale(g, commit, static_cast<T>(cfg.alpha)));
  if (aux) t.total = nn::add(g, t.total, nn::scale(g, *aux, static_cast<T>(cfg.aux_weight)));
  return t;
}

template Var recon_loss<float>(Graph<float>&, Var, Var, const dsp::FrameTransform<float>&, const LossConfig&);
template Var recon_loss<double>(Graph<double>&, Var, Var, const dsp::FrameTransform<double>&, const LossConfig&);
template LossTerms<float> total_loss<float>(Graph<float>&, Var, Var, std::optional<Var>, const LossConfig&);
template LossTerms<double> total_loss<double>(Graph<double>&, Var, Var, std::optional<Var>, const LossConfig&);

double spectral_distance(const std::vector<double>& a, const std::vector<double>& b,
                         const dsp::StftConfig& stft, double power) {
  const std::size_t n = std::min(a.size(), b.size());
  require(dsp::frame_count(n, stft) > 0, ErrorKind::kShape, "signals shorter than one window");
  dsp::Waveform wa{std::vector<double>(a.begin(), a.begin() + n)};
  dsp::Waveform wb{std::vector<double>(b.begin(), b.begin() + n)};
  const auto sa = dsp::power_law_compress(dsp::stft(wa, stft), power);
  const auto sb = dsp::power_law_compress(dsp::stft(wb, stft), power);
  double acc = 0.0;
  for (std::size_t i = 0; i < sa.data.size(); ++i) acc += (sa.data[i] - sb.data[i]) * (sa.data[i] - sb.data[i]);
  return acc / static_cast<double>(sa.data.size());
}

}  // namespace tfnet::train
