#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "tflc/scene/corpus.hpp"
#include "tflc/scene/diffuse_noise.hpp"
#include "tflc/scene/mixture.hpp"
#include "tflc/scene/rir.hpp"
#include "tflc/scene/scene_spec.hpp"
#include "tflc/scene/speechlike.hpp"
#include "tflc/spectral/stft.hpp"

using namespace tflc;
using namespace tflc::scene;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Single-frequency cross-spectral estimate by direct projection on
// Hann-windowed segments; independent of the STFT/FFT code paths.
struct CrossSpectrum {
  double p11 = 0, p22 = 0;
  std::complex<double> p12 = 0;
};

CrossSpectrum welch_at(const std::vector<double>& a, const std::vector<double>& b, double hz, double fs,
                       std::size_t seg = 1024) {
  CrossSpectrum cs;
  std::vector<std::complex<double>> basis(seg);
  for (std::size_t n = 0; n < seg; ++n) {
    const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * n / seg);
    basis[n] = w * std::polar(1.0, -2 * std::numbers::pi * hz * n / fs);
  }
  for (std::size_t start = 0; start + seg <= a.size(); start += seg / 2) {
    std::complex<double> x = 0, y = 0;
    for (std::size_t n = 0; n < seg; ++n) {
      x += a[start + n] * basis[n];
      y += b[start + n] * basis[n];
    }
    cs.p11 += std::norm(x);
    cs.p22 += std::norm(y);
    cs.p12 += x * std::conj(y);
  }
  return cs;
}

std::vector<double> welch_psd(const std::vector<double>& x, std::size_t seg) {
  std::vector<double> psd(seg / 2 + 1, 0.0);
  std::vector<double> frame(seg);
  for (std::size_t start = 0; start + seg <= x.size(); start += seg / 2) {
    for (std::size_t n = 0; n < seg; ++n)
      frame[n] = x[start + n] * (0.5 - 0.5 * std::cos(2 * std::numbers::pi * n / seg));
    auto s = spectral::rfft(frame);
    for (std::size_t k = 0; k < psd.size(); ++k) psd[k] += std::norm(s[k]);
  }
  return psd;
}

}  // namespace

TEST(SampleScene, RespectsRangesAndSectors) {
  Rng rng(11);
  for (int n : {2, 3, 4}) {
    for (int i = 0; i < 200; ++i) {
      auto s = sample_scene(rng, n);
      EXPECT_NO_THROW(validate(s));
      EXPECT_EQ(s.n_interferers(), n);
      int a = 0, b = 0;
      for (const auto& src : s.interferers) {
        a += in_sector(src.doa_deg, 0, 65);
        b += in_sector(src.doa_deg, 115, 180);
      }
      EXPECT_LE(a, 2);
      EXPECT_LE(b, 2);
      EXPECT_EQ(a + b, n);
    }
  }
  EXPECT_THROW(sample_scene(rng, 5), PreconditionError);
  EXPECT_THROW(sample_scene(rng, 1), PreconditionError);
}

TEST(SampleScene, Deterministic) {
  Rng a(42), b(42);
  nlohmann::json ja = sample_scene(a, 3), jb = sample_scene(b, 3);
  EXPECT_EQ(ja.dump(), jb.dump());
  SceneSpec back = ja.get<SceneSpec>();
  EXPECT_EQ(nlohmann::json(back).dump(), ja.dump());
}

TEST(SampleScene, T60MeanMatchesUniform) {
  Rng rng(5);
  double sum = 0;
  for (int i = 0; i < 10000; ++i) sum += sample_scene(rng, 2).t60;
  const double mean = sum / 10000.0;
  EXPECT_GE(mean, 0.33);
  EXPECT_LE(mean, 0.37);
}

TEST(Geometry, BroadsideAndEndfireDelays) {
  SceneSpec s;
  s.array_azimuth_deg = 37.0;
  SourcePlacement end{0.0, 1.8, 1.5};
  const auto p = s.source_position(end);
  auto dist = [](const Vec3& a, const Vec3& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
  };
  // Endfire at 0 degrees: microphone 1 is farther than microphone 0 by d.
  EXPECT_NEAR(dist(p, s.mic_position(1)) - dist(p, s.mic_position(0)), s.mic_spacing, 1e-6);
  SourcePlacement broad{90.0, 1.8, 1.5};
  const auto q = s.source_position(broad);
  EXPECT_NEAR(dist(q, s.mic_position(1)), dist(q, s.mic_position(0)), 1e-12);
}

TEST(Rir, AnechoicIntegerDelayIsSinglePulse) {
  const double d = 100.0 * kSpeedOfSound / 16000.0;
  const Vec3 room{8, 6, 3}, mic{2, 3, 1.5}, src{2 + d, 3, 1.5};
  RirOptions opt;
  opt.max_order = 0;
  auto rir = simulate_rir(room, 0.3, src, mic, opt);
  ASSERT_GT(rir.taps.size(), 100u);
  EXPECT_NEAR(rir.taps[100], 1.0 / (4 * std::numbers::pi * d), 1e-12);
  for (std::size_t i = 0; i < rir.taps.size(); ++i)
    if (i != 100) EXPECT_NEAR(rir.taps[i], 0.0, 1e-12);
}

TEST(Rir, AnechoicFractionalDelay) {
  const Vec3 room{8, 6, 3}, mic{2, 3, 1.5}, src{3.7, 3.4, 1.45};
  const double d = std::hypot(1.7, 0.4, 0.05);
  RirOptions opt;
  opt.max_order = 0;
  auto rir = simulate_rir(room, 0.3, src, mic, opt);
  std::size_t peak = 0;
  double sum = 0;
  for (std::size_t i = 0; i < rir.taps.size(); ++i) {
    if (std::abs(rir.taps[i]) > std::abs(rir.taps[peak])) peak = i;
    sum += rir.taps[i];
  }
  EXPECT_EQ(peak, static_cast<std::size_t>(std::lround(d / kSpeedOfSound * 16000.0)));
  EXPECT_NEAR(sum, 1.0 / (4 * std::numbers::pi * d), 0.05 / (4 * std::numbers::pi * d));
}

TEST(Rir, MirrorSymmetry) {
  const Vec3 room{7, 6, 3};
  const Vec3 src{2.1, 2.5, 1.45}, mic{4.0, 3.2, 1.5};
  const Vec3 src_m{7 - 2.1, 2.5, 1.45}, mic_m{7 - 4.0, 3.2, 1.5};
  RirOptions opt;
  opt.beta = 0.8;
  auto a = simulate_rir(room, 0.3, src, mic, opt);
  auto b = simulate_rir(room, 0.3, src_m, mic_m, opt);
  ASSERT_EQ(a.taps.size(), b.taps.size());
  for (std::size_t i = 0; i < a.taps.size(); ++i) EXPECT_NEAR(a.taps[i], b.taps[i], 1e-12);
}

TEST(Rir, SchroederDecayMatchesT60) {
  Rng rng(99);
  for (int i = 0; i < 8; ++i) {
    auto s = sample_scene(rng, 2);
    RirOptions opt;
    opt.beta = calibrated_reflection_coefficient(s.room_dims, s.t60, s.source_position(s.target), s.mic_position(0));
    for (const auto& src : {s.target, s.interferers[0], s.interferers[1]}) {
      for (int k = 0; k < 2; ++k) {
        auto rir = simulate_rir(s.room_dims, s.t60, s.source_position(src), s.mic_position(k), opt);
        EXPECT_GE(rir.taps.size(), static_cast<std::size_t>(s.t60 * 16000));
        const double t60 = schroeder_t60(rir.taps, 16000.0);
        EXPECT_NEAR(t60, s.t60, 0.2 * s.t60) << "scene " << i;
      }
    }
  }
}

TEST(Rir, RejectsOutsidePositions) {
  EXPECT_THROW(simulate_rir({5, 5, 3}, 0.3, {6, 1, 1}, {1, 1, 1}), PreconditionError);
  EXPECT_THROW(simulate_rir({5, 5, 3}, 0.3, {1, 1, 1}, {1, 1, 3.5}), PreconditionError);
}

TEST(DiffuseNoise, SingleChannelUnitVariance) {
  Rng rng(1);
  auto w = render_diffuse_noise(1, 0.02, 160000, 16000.0, rng);
  EXPECT_NEAR(mean_power(w[0]), 1.0, 0.05);
}

TEST(DiffuseNoise, CoherenceAtOneKilohertz) {
  Rng rng(2);
  auto w = render_diffuse_noise(2, 0.02, 60 * 16000, 16000.0, rng);
  EXPECT_NEAR(mean_power(w[0]), 1.0, 0.05);
  EXPECT_NEAR(mean_power(w[1]), 1.0, 0.05);
  for (double hz : {1000.0, 3000.0, 6000.0}) {
    auto cs = welch_at(w[0], w[1], hz, 16000.0);
    const double msc = std::norm(cs.p12) / (cs.p11 * cs.p22);
    const double model = std::pow(diffuse_coherence(hz, 0.02), 2);
    EXPECT_NEAR(msc, model, 0.05) << hz << " Hz";
  }
}

TEST(DiffuseNoise, IndependentAcrossSeeds) {
  Rng a(3), b(4);
  auto x = render_diffuse_noise(2, 0.02, 64000, 16000.0, a);
  auto y = render_diffuse_noise(2, 0.02, 64000, 16000.0, b);
  double xy = 0, xx = 0, yy = 0;
  for (std::size_t i = 0; i < 64000; ++i) {
    xy += x[0][i] * y[0][i];
    xx += x[0][i] * x[0][i];
    yy += y[0][i] * y[0][i];
  }
  EXPECT_LT(std::abs(xy) / std::sqrt(xx * yy), 0.05);
}

TEST(Speechlike, LengthTiltActivity) {
  Rng rng(8);
  auto w = synth_speechlike(rng, 6.0);
  EXPECT_EQ(w.length(), 96000u);

  Rng rng2(9);
  auto longer = synth_speechlike(rng2, 30.0);
  auto psd = welch_psd(longer[0], 1024);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t k = 0; k < psd.size(); ++k) {
    const double hz = k * 16000.0 / 1024;
    if (hz < 500 || hz > 7000) continue;
    const double x = std::log2(hz), y = 10 * std::log10(psd[k]);
    sx += x, sy += y, sxx += x * x, sxy += x * y, ++n;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  EXPECT_NEAR(slope, -6.0, 3.0);

  int active = 0, frames = 0;
  for (std::size_t i = 0; i + 320 <= longer.length(); i += 320, ++frames) {
    double e = 0;
    for (std::size_t k = 0; k < 320; ++k) e += longer[0][i + k] * longer[0][i + k];
    if (10 * std::log10(e / 320 + 1e-300) > -30) ++active;
  }
  const double activity = double(active) / frames;
  EXPECT_GE(activity, 0.5);
  EXPECT_LE(activity, 0.9);
}

class MixtureTest : public ::testing::Test {
 protected:
  static spectral::Waveform dry(std::uint64_t seed, double dur = 1.5) {
    Rng r(seed);
    return synth_speechlike(r, dur);
  }
};

TEST_F(MixtureTest, CalibrationAndAdditivity) {
  Rng rng(21);
  auto spec = sample_scene(rng, 3);
  std::vector<spectral::Waveform> intf{dry(2), dry(3), dry(4)};
  auto b = synthesize_mixture(spec, dry(1), intf, rng);
  ASSERT_EQ(b.interferer_images.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NEAR(power_ratio_db(b.target_image[0], b.interferer_images[i][0]), spec.sir_db[i], 0.01);
  EXPECT_NEAR(power_ratio_db(b.target_image[0], b.noise[0]), spec.snr_db, 0.01);
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t t = 0; t < b.mixture.length(); ++t) {
      double acc = b.target_image[m][t];
      for (const auto& img : b.interferer_images) acc += img[m][t];
      acc += b.noise[m][t];
      ASSERT_EQ(b.mixture[m][t] - acc, 0.0);
    }
}

TEST_F(MixtureTest, SilentTargetRejected) {
  Rng rng(22);
  auto spec = sample_scene(rng, 2);
  auto silent = spectral::Waveform(1, 24000, 16000.0);
  EXPECT_THROW(synthesize_mixture(spec, silent, {dry(2), dry(3)}, rng), PreconditionError);
}

TEST(Corpus, DeterministicAndComplete) {
  const auto base = fs::temp_directory_path() / "tflc_corpus_test";
  fs::remove_all(base);
  CorpusConfig cfg;
  cfg.count = 10;
  cfg.split_ratio = {{2, 1.0}};
  cfg.seed = 7;
  cfg.duration_s = 1.0;
  auto m1 = generate_corpus(cfg, base / "a");
  auto m2 = generate_corpus(cfg, base / "b");
  EXPECT_EQ(slurp(base / "a" / "manifest.json"), slurp(base / "b" / "manifest.json"));
  EXPECT_EQ(slurp(base / "a" / "mix" / "mix00003.wav"), slurp(base / "b" / "mix" / "mix00003.wav"));

  auto loaded = Manifest::load(base / "a");
  ASSERT_EQ(loaded.entries.size(), 10u);
  EXPECT_TRUE(loaded.synthetic_sources);
  for (const auto& e : loaded.entries) {
    EXPECT_EQ(e.n_interferers, 2);
    auto b = load_bundle(loaded, e);
    EXPECT_EQ(b.mixture.num_channels(), 2u);
    EXPECT_EQ(b.mixture.length(), 16000u);
    EXPECT_EQ(b.interferer_images.size(), 2u);
  }
  fs::remove_all(base);
}

TEST(Corpus, SplitRatios) {
  CorpusConfig cfg;
  cfg.count = 25;
  cfg.split_ratio = {{2, 15}, {3, 5}, {4, 5}};
  auto counts = split_counts(cfg);
  ASSERT_EQ(counts.size(), 3u);
  EXPECT_EQ(counts[0], (std::pair<int, std::size_t>{2, 15}));
  EXPECT_EQ(counts[1], (std::pair<int, std::size_t>{3, 5}));
  EXPECT_EQ(counts[2], (std::pair<int, std::size_t>{4, 5}));
  cfg.count = 31;
  std::size_t total = 0;
  for (auto [n, c] : split_counts(cfg)) total += c;
  EXPECT_EQ(total, 31u);
}

TEST(Corpus, SplitManifestCounts) {
  const auto root = fs::temp_directory_path() / "tflc_corpus_split";
  fs::remove_all(root);
  CorpusConfig cfg;
  cfg.count = 5;
  cfg.split_ratio = {{2, 15}, {3, 5}, {4, 5}};
  cfg.duration_s = 0.5;
  cfg.seed = 3;
  auto m = generate_corpus(cfg, root);
  int c2 = 0, c3 = 0, c4 = 0;
  for (const auto& e : m.entries) {
    c2 += e.n_interferers == 2;
    c3 += e.n_interferers == 3;
    c4 += e.n_interferers == 4;
  }
  EXPECT_EQ(c2, 3);
  EXPECT_EQ(c3, 1);
  EXPECT_EQ(c4, 1);
  fs::remove_all(root);
}

TEST(Corpus, PoolTooSmall) {
  const auto root = fs::temp_directory_path() / "tflc_pool_small";
  fs::remove_all(root);
  fs::create_directories(root / "pool");
  Rng r(1);
  spectral::write_wav(root / "pool" / "a.wav", synth_speechlike(r, 1.0));
  CorpusConfig cfg;
  cfg.count = 1;
  cfg.duration_s = 1.0;
  cfg.source_pool = root / "pool";
  EXPECT_THROW(generate_corpus(cfg, root / "out"), PreconditionError);
  fs::remove_all(root);
}
