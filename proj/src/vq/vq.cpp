#include "tfnet/vq/vq.hpp"

#include <bit>
#include <cmath>
#include <numeric>

#include "tfnet/nn/ops.hpp"

namespace tfnet::vq {

bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

int VqConfig::bits_per_index() const {
  require(is_power_of_two(codebook_size), ErrorKind::kConfig,
          "codebook size " + std::to_string(codebook_size) +
              " is not a power of two; fixed-length coding needs log2(S) whole bits");
  return std::countr_zero(static_cast<unsigned>(codebook_size));
}

void VqConfig::validate() const {
  require(groups >= 1 && dim >= 1, ErrorKind::kConfig, "VQ groups and dim must be positive");
  bits_per_index();
  require(codebook_size >= 2, ErrorKind::kConfig, "codebook needs at least two codewords");
  require(decay >= 0.0 && decay < 1.0, ErrorKind::kConfig, "EMA decay must lie in [0, 1)");
  require(eps > 0.0, ErrorKind::kConfig, "Laplace epsilon must be positive");
}

double bitrate_kbps(int groups, int codebook_size, double hop_ms) {
  require(groups >= 1, ErrorKind::kConfig, "group count must be positive");
  require(hop_ms > 0.0, ErrorKind::kConfig, "hop must be positive");
  const VqConfig cfg{groups, codebook_size};
  return groups * cfg.bits_per_index() / hop_ms;
}

template <typename T>
GroupCodebook<T>::GroupCodebook(const std::string& name, const VqConfig& cfg)
    : codewords(name + ".codewords", Tensor<T>(Shape{1, cfg.groups, cfg.codebook_size, cfg.dim}), false),
      ema_count(name + ".ema_count", Tensor<T>(Shape{1, 1, cfg.groups, cfg.codebook_size}, T(1)), false),
      ema_sum(name + ".ema_sum", Tensor<T>(Shape{1, cfg.groups, cfg.codebook_size, cfg.dim}), false),
      initialized_(name + ".initialized", Tensor<T>(Shape{1, 1, 1, 1}), false),
      cfg_(cfg) {
  cfg.validate();
}

template <typename T>
const T* GroupCodebook<T>::codeword(int group, int index) const {
  return codewords.value.data() +
         (static_cast<std::size_t>(group) * cfg_.codebook_size + index) * cfg_.dim;
}
template <typename T>
T* GroupCodebook<T>::codeword(int group, int index) {
  return codewords.value.data() +
         (static_cast<std::size_t>(group) * cfg_.codebook_size + index) * cfg_.dim;
}

template <typename T>
void GroupCodebook<T>::assign(const T* x, std::size_t frames, std::int32_t* indices) const {
  const int n = cfg_.groups, s = cfg_.codebook_size, k = cfg_.dim;
  for (std::size_t f = 0; f < frames; ++f)
    for (int grp = 0; grp < n; ++grp) {
      const T* v = x + f * n * k + static_cast<std::size_t>(grp) * k;
      T best = T(0);
      std::int32_t arg = 0;
      for (int j = 0; j < s; ++j) {
        const T* c = codeword(grp, j);
        T d = T(0);
        for (int i = 0; i < k; ++i) {
          const T e = v[i] - c[i];
          d += e * e;
        }
        if (j == 0 || d < best) {
          best = d;
          arg = j;
        }
      }
      indices[f * n + grp] = arg;
    }
}

template <typename T>
void GroupCodebook<T>::lookup(const std::int32_t* indices, std::size_t frames, T* out) const {
  const int n = cfg_.groups, k = cfg_.dim;
  for (std::size_t f = 0; f < frames; ++f)
    for (int grp = 0; grp < n; ++grp) {
      const std::int32_t idx = indices[f * n + grp];
      require(idx >= 0 && idx < cfg_.codebook_size, ErrorKind::kFormat,
              "codeword index " + std::to_string(idx) + " out of range");
      std::copy_n(codeword(grp, idx), k, out + f * n * k + static_cast<std::size_t>(grp) * k);
    }
}

template <typename T>
void GroupCodebook<T>::init_from(const T* x, std::size_t frames, Rng& rng) {
  require(frames > 0, ErrorKind::kShape, "cannot initialise a codebook from an empty batch");
  const int n = cfg_.groups, s = cfg_.codebook_size, k = cfg_.dim;
  for (int grp = 0; grp < n; ++grp) {
    double var = 0.0;
    for (std::size_t f = 0; f < frames; ++f)
      for (int i = 0; i < k; ++i) {
        const double v = x[f * n * k + static_cast<std::size_t>(grp) * k + i];
        var += v * v;
      }
    const double jitter = 0.01 * std::sqrt(var / (static_cast<double>(frames) * k) + 1e-12);
    std::vector<std::size_t> order(frames);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = frames; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (int j = 0; j < s; ++j) {
      const std::size_t f = order[static_cast<std::size_t>(j) % frames];
      const bool repeat = static_cast<std::size_t>(j) >= frames;
      T* c = codeword(grp, j);
      for (int i = 0; i < k; ++i) {
        double v = x[f * n * k + static_cast<std::size_t>(grp) * k + i];
        if (repeat) v += jitter * rng.normal();
        c[i] = static_cast<T>(v);
      }
    }
  }
  ema_count.value.fill(T(1));
  ema_sum.value = codewords.value;
  initialized_.value[0] = T(1);
}

template <typename T>
void GroupCodebook<T>::ema_update(const T* x, const std::int32_t* indices, std::size_t frames) {
  const int n = cfg_.groups, s = cfg_.codebook_size, k = cfg_.dim;
  const double gamma = cfg_.decay;
  std::vector<double> counts(s), sums(static_cast<std::size_t>(s) * k);
  for (int grp = 0; grp < n; ++grp) {
    std::fill(counts.begin(), counts.end(), 0.0);
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t f = 0; f < frames; ++f) {
      const std::int32_t j = indices[f * n + grp];
      counts[j] += 1.0;
      const T* v = x + f * n * k + static_cast<std::size_t>(grp) * k;
      for (int i = 0; i < k; ++i) sums[static_cast<std::size_t>(j) * k + i] += v[i];
    }
    T* cnt = ema_count.value.data() + static_cast<std::size_t>(grp) * s;
    T* sum = ema_sum.value.data() + static_cast<std::size_t>(grp) * s * k;
    double total = 0.0;
    for (int j = 0; j < s; ++j) {
      cnt[j] = static_cast<T>(gamma * cnt[j] + (1.0 - gamma) * counts[j]);
      total += cnt[j];
      for (int i = 0; i < k; ++i) {
        const std::size_t o = static_cast<std::size_t>(j) * k + i;
        sum[o] = static_cast<T>(gamma * sum[o] + (1.0 - gamma) * sums[o]);
      }
    }
    for (int j = 0; j < s; ++j) {
      const double smoothed = (cnt[j] + cfg_.eps) / (total + s * cfg_.eps) * total;
      T* c = codeword(grp, j);
      for (int i = 0; i < k; ++i)
        c[i] = static_cast<T>(sum[static_cast<std::size_t>(j) * k + i] / smoothed);
    }
  }
}

template <typename T>
int GroupCodebook<T>::dead_codes(double threshold) const {
  int dead = 0;
  for (T c : ema_count.value.vec())
    if (c < threshold) ++dead;
  return dead;
}

template <typename T>
void GroupCodebook<T>::collect(nn::ParameterList<T>& out) {
  out.push_back(&codewords);
  out.push_back(&ema_count);
  out.push_back(&ema_sum);
  out.push_back(&initialized_);
}

template <typename T>
Quantized<T> quantize(nn::Graph<T>& g, nn::Var x, const GroupCodebook<T>& cb) {
  const auto& vx = g.value(x);
  const Shape s = vx.shape();
  require(s[2] == 1 && s[3] == cb.config().channels(), ErrorKind::kShape,
          "quantize expects [B, T, 1, " + std::to_string(cb.config().channels()) + "], got " +
              to_string(s));
  const std::size_t frames = static_cast<std::size_t>(s[0]) * s[1];
  Quantized<T> q;
  q.indices.resize(frames * cb.config().groups);
  cb.assign(vx.data(), frames, q.indices.data());
  q.values = Tensor<T>(s);
  cb.lookup(q.indices.data(), frames, q.values.data());
  q.output = nn::straight_through(g, x, q.values);
  return q;
}

template <typename T>
nn::Var commitment_loss(nn::Graph<T>& g, nn::Var x, const Tensor<T>& q) {
  return nn::mse(g, x, g.constant(q));
}

double usage_entropy_bits(const std::vector<std::int32_t>& indices, int groups, int codebook_size) {
  if (indices.empty()) return 0.0;
  const std::size_t frames = indices.size() / groups;
  double total = 0.0;
  std::vector<double> hist(codebook_size);
  for (int grp = 0; grp < groups; ++grp) {
    std::fill(hist.begin(), hist.end(), 0.0);
    for (std::size_t f = 0; f < frames; ++f) hist[indices[f * groups + grp]] += 1.0;
    for (double h : hist)
      if (h > 0) {
        const double p = h / frames;
        total -= p * std::log2(p);
      }
  }
  return total / groups;
}

template class GroupCodebook<float>;
template class GroupCodebook<double>;
template Quantized<float> quantize<float>(nn::Graph<float>&, nn::Var, const GroupCodebook<float>&);
template Quantized<double> quantize<double>(nn::Graph<double>&, nn::Var, const GroupCodebook<double>&);
template nn::Var commitment_loss<float>(nn::Graph<float>&, nn::Var, const Tensor<float>&);
template nn::Var commitment_loss<double>(nn::Graph<double>&, nn::Var, const Tensor<double>&);

}  // namespace tfnet::vq
