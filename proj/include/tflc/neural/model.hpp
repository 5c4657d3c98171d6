#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "tflc/beamforming/beamforming.hpp"
#include "tflc/combination/combination.hpp"
#include "tflc/common/random.hpp"
#include "tflc/neural/layers.hpp"
#include "tflc/neural/losses.hpp"

namespace tflc::neural {

namespace fs = std::filesystem;
using beamforming::BeamformerSet;
using beamforming::Rtf;
using spectral::MultichannelSpectrogram;

enum class EntropyOn { both, final_only, first_only };

inline std::string to_string(EntropyOn e) {
  switch (e) {
    case EntropyOn::both: return "both";
    case EntropyOn::final_only: return "final";
    case EntropyOn::first_only: return "first";
  }
  return "both";
}
inline EntropyOn entropy_on_from(const std::string& s) {
  if (s == "both") return EntropyOn::both;
  if (s == "final") return EntropyOn::final_only;
  if (s == "first") return EntropyOn::first_only;
  throw UsageError("entropy target must be one of both, final, first (got '" + s + "')");
}

struct ModelConfig {
  std::size_t channels = 32;  // C; the recurrent hidden size per direction equals C
  std::size_t groups = 4;
  std::size_t kernel = 5;
  std::size_t blocks = 4;
  std::size_t lstm_layers = 2;
  spectral::StftConfig stft;
  double lambda = 0.05;
  double eps = 1e-8;
  EntropyOn entropy_on = EntropyOn::both;

  void validate() const {
    require(channels >= 1 && groups >= 1 && channels % groups == 0, "ModelConfig: channels must divide into groups");
    require(kernel % 2 == 1, "ModelConfig: kernel must be odd");
    require(blocks >= 1 && lstm_layers >= 1, "ModelConfig: need at least one block and one recurrent layer");
    require(lambda >= 0.0 && eps > 0.0, "ModelConfig: lambda >= 0 and eps > 0 required");
    stft.validate();
  }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"channels", c.channels},
          {"groups", c.groups},
          {"kernel", c.kernel},
          {"blocks", c.blocks},
          {"lstm_layers", c.lstm_layers},
          {"window_len", c.stft.window_len},
          {"hop", c.stft.hop},
          {"sample_rate", c.stft.sample_rate},
          {"lambda", c.lambda},
          {"eps", c.eps},
          {"entropy_on", to_string(c.entropy_on)}};
}

inline ModelConfig model_config_from(const nlohmann::json& j) {
  ModelConfig c;
  c.channels = j.at("channels");
  c.groups = j.at("groups");
  c.kernel = j.at("kernel");
  c.blocks = j.at("blocks");
  c.lstm_layers = j.at("lstm_layers");
  c.stft.window_len = j.at("window_len");
  c.stft.hop = j.at("hop");
  c.stft.sample_rate = j.at("sample_rate");
  c.lambda = j.at("lambda");
  c.eps = j.at("eps");
  c.entropy_on = entropy_on_from(j.at("entropy_on"));
  c.validate();
  return c;
}

/// Named parameter tensors in a fixed order.
template <class S>
struct ModelParams {
  ModelConfig cfg;
  std::vector<std::pair<std::string, Tensor<S>>> tensors;

  Tensor<S>& operator[](const std::string& name) {
    for (auto& [n, t] : tensors)
      if (n == name) return t;
    throw Error("no parameter named " + name);
  }
  const Tensor<S>& operator[](const std::string& name) const {
    return const_cast<ModelParams&>(*this)[name];
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : tensors) t.zero_grad();
  }

  /// Fresh leaves holding copies of the values (independent gradients).
  ModelParams clone() const {
    ModelParams out;
    out.cfg = cfg;
    for (const auto& [n, t] : tensors) out.tensors.emplace_back(n, Tensor<S>::from(t.shape(), t.values(), true));
    return out;
  }

  /// Copies without gradient tracking, for inference.
  ModelParams frozen() const {
    ModelParams out;
    out.cfg = cfg;
    for (const auto& [n, t] : tensors) out.tensors.emplace_back(n, Tensor<S>::from(t.shape(), t.values(), false));
    return out;
  }

  template <class D>
  ModelParams<D> cast() const {
    ModelParams<D> out;
    out.cfg = cfg;
    for (const auto& [n, t] : tensors)
      out.tensors.emplace_back(n, Tensor<D>::from(t.shape(), std::vector<D>(t.values().begin(), t.values().end()), true));
    return out;
  }
};

namespace detail {

template <class S>
Tensor<S> uniform_tensor(Rng& rng, Shape shape, double bound) {
  std::vector<S> v(numel(shape));
  for (auto& x : v) x = S(uniform(rng, -bound, bound));
  return Tensor<S>::from(std::move(shape), std::move(v), true);
}

// Four orthogonal H x H gate blocks stacked into [4H, H].
template <class S>
Tensor<S> orthogonal_recurrent(Rng& rng, std::size_t H) {
  std::vector<S> v(4 * H * H);
  for (std::size_t g = 0; g < 4; ++g) {
    Eigen::MatrixXd A(static_cast<Eigen::Index>(H), static_cast<Eigen::Index>(H));
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = gaussian(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    Eigen::MatrixXd Q = qr.householderQ();
    // Sign fix so the draw is a uniform orthogonal matrix.
    for (Eigen::Index k = 0; k < Q.cols(); ++k)
      if (qr.matrixQR()(k, k) < 0) Q.col(k) *= -1.0;
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < H; ++c)
        v[(g * H + r) * H + c] = S(Q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
  }
  return Tensor<S>::from({4 * H, H}, std::move(v), true);
}

template <class S>
void add_encoder(ModelParams<S>& p, Rng& rng, const std::string& prefix, std::size_t in_channels) {
  const auto& c = p.cfg;
  const std::size_t C = c.channels, H = c.channels;
  std::size_t cin = in_channels;
  for (std::size_t b = 0; b < c.blocks; ++b) {
    const std::string pre = prefix + ".block" + std::to_string(b);
    p.tensors.emplace_back(pre + ".conv.weight", uniform_tensor<S>(rng, {2 * C, cin, c.kernel}, std::sqrt(3.0 / double(cin * c.kernel))));
    p.tensors.emplace_back(pre + ".conv.bias", Tensor<S>::zeros({2 * C}, true));
    p.tensors.emplace_back(pre + ".norm.gamma", Tensor<S>::from({C}, std::vector<S>(C, S(1)), true));
    p.tensors.emplace_back(pre + ".norm.beta", Tensor<S>::zeros({C}, true));
    cin = C;
  }
  for (std::size_t l = 0; l < c.lstm_layers; ++l) {
    const std::size_t in = l == 0 ? C : 2 * H;
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string pre = prefix + ".lstm" + std::to_string(l) + "." + dir;
      p.tensors.emplace_back(pre + ".w_ih", uniform_tensor<S>(rng, {4 * H, in}, std::sqrt(3.0 / double(in))));
      p.tensors.emplace_back(pre + ".w_hh", orthogonal_recurrent<S>(rng, H));
      std::vector<S> bias(4 * H, S(0));
      std::fill(bias.begin() + static_cast<std::ptrdiff_t>(H), bias.begin() + static_cast<std::ptrdiff_t>(2 * H), S(1));
      p.tensors.emplace_back(pre + ".bias", Tensor<S>::from({4 * H}, std::move(bias), true));
    }
  }
  p.tensors.emplace_back(prefix + ".out.weight", uniform_tensor<S>(rng, {C, 2 * H}, std::sqrt(3.0 / double(2 * H))));
  p.tensors.emplace_back(prefix + ".out.bias", Tensor<S>::zeros({C}, true));
}

}  // namespace detail

constexpr std::size_t kMixtureInputs = 6;  // Re/Im of two mics + cos/sin EIPD
constexpr std::size_t kBeamInputs = 2;     // Re/Im of one beam

/// Fan-in uniform weights, orthogonal recurrent blocks, zero biases with
/// forget-gate bias 1, unit group-norm gains.
template <class S>
ModelParams<S> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams<S> p;
  p.cfg = cfg;
  Rng rng(seed);
  detail::add_encoder(p, rng, "mix", kMixtureInputs);
  detail::add_encoder(p, rng, "beam", kBeamInputs);
  return p;
}

/// ICGLU blocks -> stacked bidirectional recurrence over time -> channel-halving linear.
template <class S>
Tensor<S> encoder(const ModelParams<S>& p, const std::string& prefix, const Tensor<S>& input) {
  const auto& c = p.cfg;
  Tensor<S> h = input;
  for (std::size_t b = 0; b < c.blocks; ++b) {
    const std::string pre = prefix + ".block" + std::to_string(b);
    h = conv_freq(h, p[pre + ".conv.weight"], p[pre + ".conv.bias"]);
    h = glu(h);
    h = group_norm(h, p[pre + ".norm.gamma"], p[pre + ".norm.beta"], c.groups);
    h = elu(h);
  }
  for (std::size_t l = 0; l < c.lstm_layers; ++l) {
    const std::string pre = prefix + ".lstm" + std::to_string(l);
    h = bilstm(h, p[pre + ".fwd.w_ih"], p[pre + ".fwd.w_hh"], p[pre + ".fwd.bias"], p[pre + ".bwd.w_ih"],
               p[pre + ".bwd.w_hh"], p[pre + ".bwd.bias"]);
  }
  return linear_channels(h, p[prefix + ".out.weight"], p[prefix + ".out.bias"]);
}

/// cos / sin of the RTF inter-channel phase, constant over frames: [2, F, T].
template <class S>
Tensor<S> eipd_features(const Rtf& rtf, std::size_t frames) {
  require(rtf.channels() == 2, "eipd_features: two-channel RTF required");
  const std::size_t F = rtf.bins();
  auto out = Tensor<S>::zeros({2, F, frames});
  for (std::size_t f = 0; f < F; ++f) {
    const auto col = static_cast<Eigen::Index>(f);
    const double phi = std::arg(rtf.a(1, col) / rtf.a(0, col));
    for (std::size_t t = 0; t < frames; ++t) {
      out.data()[f * frames + t] = S(std::cos(phi));
      out.data()[(F + f) * frames + t] = S(std::sin(phi));
    }
  }
  return out;
}

/// Mixture-encoder input [1, 6, F, T], scaled by `gain`.
template <class S>
Tensor<S> mixture_input(const MultichannelSpectrogram& x, const Rtf& rtf, double gain) {
  require_dims(x.channels() == 2 && x.bins() == rtf.bins(), "mixture_input: two-channel mixture matching the RTF");
  const std::size_t F = x.bins(), T = x.frames(), P = F * T;
  auto out = Tensor<S>::zeros({1, kMixtureInputs, F, T});
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t p = 0; p < P; ++p) {
      out.data()[(2 * m) * P + p] = S(gain * x.data()[m * P + p].real());
      out.data()[(2 * m + 1) * P + p] = S(gain * x.data()[m * P + p].imag());
    }
  const auto e = eipd_features<S>(rtf, T);
  std::copy(e.values().begin(), e.values().end(), out.data() + 4 * P);
  return out;
}

/// Beam-encoder input [J, 2, F, T]; beams are folded into the batch axis.
template <class S>
Tensor<S> beam_input(const combination::BeamOutputs& y, double gain) {
  const std::size_t P = y.F * y.T;
  auto out = Tensor<S>::zeros({y.J, kBeamInputs, y.F, y.T});
  for (std::size_t j = 0; j < y.J; ++j)
    for (std::size_t p = 0; p < P; ++p) {
      out.data()[(2 * j) * P + p] = S(gain * y.y[j * P + p].real());
      out.data()[(2 * j + 1) * P + p] = S(gain * y.y[j * P + p].imag());
    }
  return out;
}

/// Level normalization shared by all network inputs of one mixture.
inline double input_gain(const MultichannelSpectrogram& x) {
  const std::size_t P = x.bins() * x.frames();
  double acc = 0.0;
  for (std::size_t p = 0; p < P; ++p) acc += std::norm(x.data()[p]);
  acc /= double(P);
  return acc > 0.0 ? 1.0 / std::sqrt(acc) : 1.0;
}

template <class S>
struct ForwardResult {
  Tensor<S> estimate;  // [L] waveform
  Tensor<S> alpha1, alpha2;  // [J, F, T]
  BeamformerSet refined;
};

/// Attention -> one MPDR refinement (constants, no gradient) -> attention
/// again with the same encoders -> combination -> inverse STFT. Passing
/// `frozen` skips the refinement and uses those beams instead.
template <class S>
ForwardResult<S> nn_tflc_forward(const ModelParams<S>& p, const MultichannelSpectrogram& x, const Rtf& rtf,
                                 const BeamformerSet& init, std::size_t out_len, const BeamformerSet* frozen = nullptr) {
  require(x.channels() == 2, "nn_tflc_forward: two-channel mixture required");
  require(!init.empty(), "nn_tflc_forward: need at least one initial beamformer");
  require_dims(x.bins() == p.cfg.stft.num_bins(), "nn_tflc_forward: mixture STFT does not match the model window");
  const double gain = input_gain(x);
  ForwardResult<S> r;
  const auto Q = encoder(p, "mix", mixture_input<S>(x, rtf, gain));

  const auto y1 = combination::beam_outputs(init, x);
  r.alpha1 = attention_gate(Q, encoder(p, "beam", beam_input<S>(y1, gain)));

  if (frozen) {
    r.refined = *frozen;
  } else {
    const std::size_t J = init.size(), P = x.bins() * x.frames();
    for (std::size_t j = 0; j < J; ++j) {
      std::vector<double> a(r.alpha1.data() + j * P, r.alpha1.data() + (j + 1) * P);
      for (auto& v : a) v = std::clamp(v, 0.0, 1.0);
      auto bf = beamforming::mpdr_update(beamforming::masked_covariance(x, a), rtf);
      bf.null_doa = init[j].null_doa;
      r.refined.push_back(std::move(bf));
    }
  }
  const auto y2 = combination::beam_outputs(r.refined, x);
  r.alpha2 = attention_gate(Q, encoder(p, "beam", beam_input<S>(y2, gain)));
  r.estimate = istft_op(combine_beams(r.alpha2, y2.y), p.cfg.stft, out_len);
  return r;
}

template <class S>
Tensor<S> model_loss(const ModelParams<S>& p, const ForwardResult<S>& r, const std::vector<double>& ref) {
  std::vector<Tensor<S>> alphas;
  if (p.cfg.entropy_on != EntropyOn::final_only) alphas.push_back(r.alpha1);
  if (p.cfg.entropy_on != EntropyOn::first_only) alphas.push_back(r.alpha2);
  return total_loss(r.estimate, ref, alphas, p.cfg.lambda, p.cfg.eps);
}

template <class S>
combination::WeightField to_weight_field(const Tensor<S>& alpha) {
  combination::WeightField w(alpha.dim(0), alpha.dim(1), alpha.dim(2));
  for (std::size_t i = 0; i < alpha.size(); ++i) w.alpha[i] = double(alpha.data()[i]);
  return w;
}

// ---- checkpoint container ------------------------------------------------
// "TFLCCKPT", u32 version, u32 header length, JSON header, float32 payload.

constexpr char kCheckpointMagic[8] = {'T', 'F', 'L', 'C', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class S>
std::vector<unsigned char> encode_checkpoint(const ModelParams<S>& p, const nlohmann::json& meta = nlohmann::json::object()) {
  nlohmann::json index = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : p.tensors) {
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  const std::string header = nlohmann::json{{"config", to_json(p.cfg)}, {"tensors", index}, {"meta", meta}}.dump();
  std::vector<unsigned char> out(8 + 8 + header.size() + offset * sizeof(float));
  std::memcpy(out.data(), kCheckpointMagic, 8);
  const std::uint32_t version = kCheckpointVersion, hlen = static_cast<std::uint32_t>(header.size());
  std::memcpy(out.data() + 8, &version, 4);
  std::memcpy(out.data() + 12, &hlen, 4);
  std::memcpy(out.data() + 16, header.data(), header.size());
  unsigned char* q = out.data() + 16 + header.size();
  for (const auto& [_, t] : p.tensors)
    for (S v : t.values()) {
      const float f = static_cast<float>(v);
      std::memcpy(q, &f, sizeof f);
      q += sizeof f;
    }
  return out;
}

template <class S>
ModelParams<S> decode_checkpoint(const std::vector<unsigned char>& bytes, nlohmann::json* meta = nullptr) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw ParseError("checkpoint: bad magic");
  std::uint32_t version, hlen;
  std::memcpy(&version, bytes.data() + 8, 4);
  std::memcpy(&hlen, bytes.data() + 12, 4);
  if (version != kCheckpointVersion) throw ParseError("checkpoint: unsupported version");
  if (bytes.size() < 16 + std::size_t(hlen)) throw ParseError("checkpoint: truncated header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  ModelParams<S> p;
  const std::size_t base = 16 + hlen;
  try {
    p.cfg = model_config_from(h.at("config"));
    for (const auto& t : h.at("tensors")) {
      const Shape shape = t.at("shape").get<Shape>();
      const std::size_t off = t.at("offset"), n = numel(shape);
      if (base + (off + n) * sizeof(float) > bytes.size()) throw ParseError("checkpoint: truncated payload");
      std::vector<S> v(n);
      for (std::size_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, bytes.data() + base + (off + i) * sizeof(float), sizeof f);
        v[i] = S(f);
      }
      p.tensors.emplace_back(t.at("name").get<std::string>(), Tensor<S>::from(shape, std::move(v), true));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  // Every expected tensor must be present with the expected shape.
  const auto expected = init_params<S>(p.cfg, 0);
  if (expected.tensors.size() != p.tensors.size()) throw ParseError("checkpoint: tensor count does not match config");
  for (std::size_t i = 0; i < expected.tensors.size(); ++i)
    if (expected.tensors[i].first != p.tensors[i].first ||
        expected.tensors[i].second.shape() != p.tensors[i].second.shape())
      throw ParseError("checkpoint: unexpected tensor " + p.tensors[i].first);
  if (meta) *meta = h.value("meta", nlohmann::json::object());
  return p;
}

template <class S>
void save_checkpoint(const fs::path& path, const ModelParams<S>& p, const nlohmann::json& meta = nlohmann::json::object()) {
  const auto bytes = encode_checkpoint(p, meta);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for " + path.string());
}

template <class S>
ModelParams<S> load_checkpoint(const fs::path& path, nlohmann::json* meta = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint<S>(bytes, meta);
}

}  // namespace tflc::neural
