// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: test_acceptance [--work DIR] [criterion numbers...]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tflc/app/cli.hpp"
#include "tflc/neural/train.hpp"
#include "tflc/scene/diffuse_noise.hpp"
#include "tflc/spectral/fft.hpp"

using namespace tflc;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;
using cplx = std::complex<double>;

namespace {

fs::path work;

double seconds_since(clk::time_point t) { return std::chrono::duration<double>(clk::now() - t).count(); }

std::string fmt(const char* f, auto... v) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, v...);
  return buf;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int rc = app::run_cli(std::move(args), out, err);
  if (rc != 0) std::cerr << "  cli failed (" << rc << "): " << err.str();
  return rc;
}

void must(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error(what);
}

fs::path fresh(const std::string& name) {
  const auto p = work / name;
  fs::remove_all(p);
  return p;
}

std::vector<unsigned char> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream is(p);
  return nlohmann::json::parse(is);
}

// Small mixed corpus for the per-beamformer and per-bin checks.
const scene::Manifest& probe_corpus() {
  static std::optional<scene::Manifest> m;  // built once per process
  if (!m) {
    const auto dir = fresh("probe");
    must(cli({"gen-corpus", "--out", dir.string(), "--count", "4", "--interferers", "2,4", "--seed", "11",
              "--duration", "3"}) == 0,
         "probe corpus");
    m = scene::Manifest::load(dir);
  }
  return *m;
}

// ---- 1 --------------------------------------------------------------------

Verdict stft_reconstruction() {
  const auto t0 = clk::now();
  spectral::StftConfig cfg;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    spectral::Waveform w(1, 6 * 16000, 16000.0);
    for (auto& v : w[0]) v = n(rng);
    const auto back = spectral::istft(spectral::stft(w, cfg), cfg, w.length());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < w.length(); ++i) num += std::pow(back[0][i] - w[0][i], 2), den += w[0][i] * w[0][i];
    worst = std::max(worst, std::sqrt(num / den));
  }
  const double dt = seconds_since(t0);
  return {worst < 1e-10 && dt < 10.0,
          fmt("100 x 6 s: max relative L2 error %.2e (< 1e-10), %.1f s (< 10 s)", worst, dt)};
}

// ---- 2 --------------------------------------------------------------------

double distortion(const beamforming::Beamformer& bf, const beamforming::Rtf& rtf) {
  double worst = 0.0;
  for (Eigen::Index f = 0; f < rtf.a.cols(); ++f) {
    const cplx r = (bf.w.col(f).adjoint() * rtf.a.col(f))(0);
    worst = std::max(worst, std::abs(r - 1.0));
  }
  return worst;
}

Verdict distortionless() {
  const auto& m = probe_corpus();
  spectral::StftConfig cfg;
  double worst = 0.0;
  std::size_t count = 0;
  std::map<std::string, double> by_kind;
  auto check = [&](const std::string& kind, const beamforming::Beamformer& bf, const beamforming::Rtf& rtf) {
    const double d = distortion(bf, rtf);
    worst = std::max(worst, d);
    by_kind[kind] = std::max(by_kind[kind], d);
    ++count;
  };
  auto net = neural::init_params<double>([] {
    neural::ModelConfig c;
    c.channels = 8;
    return c;
  }(), 5).frozen();

  for (const auto& e : m.entries) {
    const auto b = scene::load_bundle(m, e);
    const auto x = spectral::stft(b.mixture, cfg);
    const auto noise = spectral::stft(b.noise_only(), cfg);
    const auto g = app::geometry_of(b.scene, cfg);
    for (bool steering : {false, true}) {
      app::MethodOptions opt;
      opt.steering_rtf = steering;
      const auto rtf = app::oracle_rtf(b, opt);
      const auto init = beamforming::initial_beamformers(rtf, beamforming::default_null_doas(e.n_interferers), g);
      for (const auto& bf : init) check("null", bf, rtf);
      check("mpdr", beamforming::mpdr_update(beamforming::sample_covariance(x), rtf), rtf);
      check("mvdr", beamforming::mpdr_update(beamforming::sample_covariance(noise), rtf, beamforming::BeamformerKind::mvdr),
            rtf);
      // Every intermediate of the iterative refinement, for all four variants.
      for (auto mode : {combination::CombineMode::tfs, combination::CombineMode::tflc})
        for (bool mvdr : {false, true}) {
          const auto& src = mvdr ? noise : x;
          auto beams = init;
          for (int it = 0; it < 5; ++it) {
            const auto alpha = combination::select_weights(combination::beam_outputs(beams, src), mode);
            for (std::size_t j = 0; j < beams.size(); ++j) {
              beams[j] = beamforming::mpdr_update(beamforming::masked_covariance(src, alpha.slice(j)), rtf,
                                                  mvdr ? beamforming::BeamformerKind::mvdr : beamforming::BeamformerKind::mpdr);
              check("refined", beams[j], rtf);
            }
          }
          const auto r = combination::iterative_refine(x, &noise, rtf, init, mode,
                                                       mvdr ? combination::CovarianceSource::mvdr
                                                            : combination::CovarianceSource::mpdr);
          for (const auto& bf : r.beams) check("refined", bf, rtf);
        }
      const auto f = neural::nn_tflc_forward(net, x, rtf, init, b.mixture.length());
      for (const auto& bf : f.refined) check("nn-refined", bf, rtf);
    }
  }
  std::string kinds;
  for (const auto& [k, v] : by_kind) kinds += fmt(" %s %.1e", k.c_str(), v);
  return {worst < 1e-8, fmt("%zu beamformers, max_f |w^H a - 1| = %.2e (< 1e-8);", count, worst) + kinds};
}

// ---- 3 --------------------------------------------------------------------

double power_of(const cplx* y, const double* a, std::size_t J) {
  cplx s = 0.0;
  for (std::size_t j = 0; j < J; ++j) s += a[j] * y[j];
  return std::norm(s);
}

// Minimum of |sum a_j y_j|^2 over a simplex grid of step h. J = 4 uses an
// exhaustive 0.02 grid followed by an exhaustive step-h grid within +-0.02
// of the coarse optimum (the objective is convex, so this still upper-bounds
// the true minimum and in practice attains the step-h grid optimum).
double grid_min(const cplx* y, std::size_t J, double h) {
  const int N = static_cast<int>(std::lround(1.0 / h));
  double best = 1e300;
  if (J == 2) {
    for (int i = 0; i <= N; ++i) {
      const double a[2] = {i * h, 1.0 - i * h};
      best = std::min(best, power_of(y, a, 2));
    }
  } else if (J == 3) {
    for (int i = 0; i <= N; ++i)
      for (int k = 0; i + k <= N; ++k) {
        const double a[3] = {i * h, k * h, (N - i - k) * h};
        best = std::min(best, power_of(y, a, 3));
      }
  } else {
    const double H = 0.02;
    const int M = 50;
    int bi = 0, bk = 0, bl = 0;
    for (int i = 0; i <= M; ++i)
      for (int k = 0; i + k <= M; ++k)
        for (int l = 0; i + k + l <= M; ++l) {
          const double a[4] = {i * H, k * H, l * H, (M - i - k - l) * H};
          const double p = power_of(y, a, 4);
          if (p < best) best = p, bi = i * 20, bk = k * 20, bl = l * 20;
        }
    for (int i = std::max(0, bi - 20); i <= std::min(N, bi + 20); ++i)
      for (int k = std::max(0, bk - 20); k <= std::min(N, bk + 20); ++k)
        for (int l = std::max(0, bl - 20); l <= std::min(N, bl + 20); ++l) {
          if (i + k + l > N) continue;
          const double a[4] = {i * h, k * h, l * h, (N - i - k - l) * h};
          best = std::min(best, power_of(y, a, 4));
        }
  }
  return best;
}

Verdict tflc_oracle() {
  const auto t0 = clk::now();
  const double h = 1e-3;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst_excess = -1e300, worst_gap = 0.0;
  bool simplex_ok = true;
  for (int b = 0; b < 10000; ++b) {
    const std::size_t J = 2 + static_cast<std::size_t>(b % 3);
    cplx y[4];
    double ymax = 0.0;
    for (std::size_t j = 0; j < J; ++j) y[j] = {n(rng), n(rng)}, ymax = std::max(ymax, std::norm(y[j]));
    double a[4];
    combination::tflc_bin(y, J, a);
    double s = 0.0;
    for (std::size_t j = 0; j < J; ++j) simplex_ok = simplex_ok && a[j] >= 0.0 && a[j] <= 1.0, s += a[j];
    simplex_ok = simplex_ok && std::abs(s - 1.0) < 1e-12;
    // Resolution bound: moving a by at most J*h in l1 changes the power by at most 2*J*h*max|y|^2.
    const double bound = 2.0 * double(J) * h * ymax;
    const double pt = power_of(y, a, J), pg = grid_min(y, J, h);
    worst_excess = std::max(worst_excess, (pt - pg) / bound);
    worst_gap = std::max(worst_gap, (pg - pt) / bound);
  }
  const double dt = seconds_since(t0);
  return {worst_excess <= 1.0 && simplex_ok && dt < 60.0,
          fmt("10^4 bins, J in {2,3,4}: max (P_tflc - P_grid)/bound = %.3g (<= 1), grid above tflc by at most "
              "%.3g bounds, simplex %s, %.1f s (< 60 s)",
              worst_excess, worst_gap, simplex_ok ? "ok" : "VIOLATED", dt)};
}

// ---- 4 --------------------------------------------------------------------

Verdict dominance() {
  const auto& m = probe_corpus();
  spectral::StftConfig cfg;
  std::size_t bins = 0, bad = 0;
  double worst = -1e300;
  for (const auto& e : m.entries) {
    const auto b = scene::load_bundle(m, e);
    app::MethodOptions opt;
    const auto out = app::run_classical(b, "tflc-mpdr", opt);
    const auto x = spectral::stft(b.mixture, cfg);
    const auto y = combination::beam_outputs(out.beams, x);
    const auto wt = combination::tfs_select(y), wl = combination::tflc_weights(y);
    std::vector<cplx> yb(y.J);
    std::vector<double> at(y.J), al(y.J);
    for (std::size_t f = 0; f < y.F; ++f)
      for (std::size_t t = 0; t < y.T; ++t) {
        double pmin = 1e300;
        for (std::size_t j = 0; j < y.J; ++j) {
          yb[j] = y(j, f, t), at[j] = wt(j, f, t), al[j] = wl(j, f, t);
          pmin = std::min(pmin, std::norm(yb[j]));
        }
        const double pl = power_of(yb.data(), al.data(), y.J), pt = power_of(yb.data(), at.data(), y.J);
        ++bins;
        worst = std::max({worst, pl - pt, pt - pmin});
        if (!(pl <= pt + 1e-12 && pt <= pmin + 1e-12)) ++bad;
      }
  }
  return {bad == 0, fmt("%zu bins over %zu processed mixtures (J = 2 and 4): %zu violations, largest excess %.2e "
                        "(tolerance 1e-12)",
                        bins, m.entries.size(), bad, worst)};
}

// ---- 5, 6 -----------------------------------------------------------------

struct Row {
  std::string method;
  double mean = 0.0;
};

std::map<std::string, double> run_table(const std::string& name, int interferers, int count, int seed,
                                        const std::vector<std::string>& methods) {
  const auto corpus = fresh(name), outputs = fresh(name + "_out");
  must(cli({"gen-corpus", "--out", corpus.string(), "--count", std::to_string(count), "--interferers",
            std::to_string(interferers), "--seed", std::to_string(seed)}) == 0,
       "gen-corpus " + name);
  for (const auto& meth : methods)
    must(cli({"run", "--corpus", corpus.string(), "--method", meth, "--iters", "5", "--out", outputs.string()}) == 0,
         "run " + meth);
  std::string list;
  for (const auto& meth : methods) list += (list.empty() ? "" : ",") + meth;
  must(cli({"evaluate", "--corpus", corpus.string(), "--outputs", outputs.string(), "--methods", list}) == 0,
       "evaluate " + name);
  std::map<std::string, double> means;
  const auto metrics = read_json(outputs / "metrics.json");
  for (const auto& g : metrics["groups"]) means[g["method"].get<std::string>()] = g["si_sdr_mean"].get<double>();
  return means;
}

Verdict table_2i() {
  const auto t0 = clk::now();
  const std::vector<std::tuple<std::string, double, double>> bands{
      {"unprocessed", -0.81, 1.00}, {"mvdr", 0.93, 1.07},     {"tfs-mvdr", 4.16, 1.38},
      {"tflc-mvdr", 4.52, 1.43},    {"tfs-mpdr", 2.45, 1.51}, {"tflc-mpdr", 2.86, 1.55}};
  std::vector<std::string> methods;
  for (const auto& [mm, _, __] : bands) methods.push_back(mm);
  auto mean = run_table("table_2i", 2, 100, 1, methods);
  const double dt = seconds_since(t0);
  bool ok = true;
  std::string detail;
  for (const auto& [mm, ref, sd] : bands) {
    const bool in = std::abs(mean[mm] - ref) <= sd;
    ok = ok && in;
    detail += fmt(" %s %.3f [%.2f, %.2f]%s;", mm.c_str(), mean[mm], ref - sd, ref + sd, in ? "" : " OUT");
  }
  const bool order = mean["tflc-mvdr"] > mean["tfs-mvdr"] && mean["tfs-mvdr"] > mean["mvdr"] &&
                     mean["mvdr"] > mean["unprocessed"] && mean["tflc-mpdr"] > mean["tfs-mpdr"];
  return {ok && order && dt < 900.0,
          "100 scenes 2I seed 1, mean SI-SDR dB:" + detail + fmt(" orderings %s; %.0f s (< 900 s)",
                                                                 order ? "hold" : "VIOLATED", dt)};
}

Verdict table_4i() {
  const std::vector<std::tuple<std::string, double, double>> bands{
      {"tfs-mvdr", 2.84, 1.2}, {"tflc-mvdr", 3.37, 1.2}, {"tfs-mpdr", -0.51, 1.5}, {"tflc-mpdr", 0.32, 1.5}};
  std::vector<std::string> methods;
  for (const auto& [mm, _, __] : bands) methods.push_back(mm);
  auto mean = run_table("table_4i", 4, 50, 2, methods);
  bool ok = true;
  std::string detail;
  for (const auto& [mm, ref, tol] : bands) {
    const bool in = std::abs(mean[mm] - ref) <= tol;
    ok = ok && in;
    detail += fmt(" %s %.3f [%.2f, %.2f]%s;", mm.c_str(), mean[mm], ref - tol, ref + tol, in ? "" : " OUT");
  }
  return {ok, "50 scenes 4I seed 2, mean SI-SDR dB:" + detail};
}

// ---- 7 --------------------------------------------------------------------

fs::path toy_checkpoint;

Verdict nn_substitutes() {
  using TD = neural::Tensor<double>;
  std::vector<std::string> parts;
  bool all = true;
  auto part = [&](const char* tag, bool ok, const std::string& text) {
    all = all && ok;
    parts.push_back(fmt("(%s) %s ", tag, ok ? "ok" : "FAIL") + text);
  };

  {  // (a) full-model gradient check
    neural::ModelConfig c;
    c.channels = 8;
    c.stft.window_len = 16;
    c.stft.hop = 8;
    auto p = neural::init_params<double>(c, 3);
    neural::TrainItem it;
    it.geometry = {0.02, 16000.0, 16, scene::kSpeedOfSound};
    std::mt19937_64 r(11);
    std::normal_distribution<double> n(0.0, 1.0);
    spectral::Waveform w(2, 40, 16000.0);
    for (auto& ch : w.channels)
      for (auto& v : ch) v = n(r);
    it.x = spectral::stft(w, c.stft);
    it.rtf = beamforming::steering_rtf(90.0, 2, c.stft.num_bins(), it.geometry);
    it.ref = w[0];
    for (auto& v : it.ref) v += 0.3 * n(r);
    it.length = 40;
    const auto init = beamforming::initial_beamformers(it.rtf, {32.5, 147.5}, it.geometry);
    const auto rep = neural::grad_check_model(p, it, init, 400, 11);
    part("a", rep.max_rel_error < 1e-4,
         fmt("gradient check, %zu entries, max rel error %.2e (< 1e-4)", rep.checked, rep.max_rel_error));
  }
  {  // (b) attention simplex on 10^6 bins
    std::mt19937_64 r(5);
    std::normal_distribution<double> n(0.0, 4.0);
    const std::size_t J = 4, C = 4, P = 1000000;
    std::vector<double> q(C * P), k(J * C * P);
    for (auto& v : q) v = n(r);
    for (auto& v : k) v = n(r);
    const auto a = neural::attention_gate(TD::from({1, C, 1000, 1000}, q), TD::from({J, C, 1000, 1000}, k));
    double worst = 0.0;
    bool range = true;
    for (std::size_t p = 0; p < P; ++p) {
      double s = 0.0;
      for (std::size_t j = 0; j < J; ++j) {
        const double v = a.data()[j * P + p];
        range = range && v >= 0.0 && v <= 1.0;
        s += v;
      }
      worst = std::max(worst, std::abs(s - 1.0));
    }
    part("b", range && worst < 1e-6, fmt("attention on 10^6 bins, max |sum - 1| %.1e (< 1e-6)", worst));
  }
  {  // (c) entropy values
    const auto uni = TD::from({2, 30, 20}, std::vector<double>(1200, 0.5));
    const double dev = std::abs(neural::entropy_loss(uni, 1e-10).item() - std::log(2.0) / 2.0);
    const double dev_default = std::abs(neural::entropy_loss(uni, 1e-8).item() - std::log(2.0) / 2.0);
    std::vector<double> hot(1200, 0.0);
    for (std::size_t p = 0; p < 600; ++p) hot[(p % 2) * 600 + p] = 1.0;
    const double h1 = neural::entropy_loss(TD::from({2, 30, 20}, hot), 1e-8).item();
    part("c", dev <= 1e-9 && std::abs(h1) < 1e-7,
         fmt("uniform |H - ln2/2| %.1e at eps 1e-10 (<= 1e-9; %.1e at eps 1e-8), one-hot %.1e (< 1e-7)", dev,
             dev_default, std::abs(h1)));
  }
  {  // (d) toy training
    const auto corpus = fresh("toy_corpus"), out = fresh("toy_train");
    must(cli({"gen-corpus", "--out", corpus.string(), "--count", "50", "--interferers", "2", "--seed", "5",
              "--duration", "1"}) == 0,
         "toy corpus");
    const auto t0 = clk::now();
    must(cli({"train", "--corpus", corpus.string(), "--out", out.string(), "--epochs", "20", "--channels", "8",
              "--groups", "4", "--window", "256", "--hop", "128", "--lr", "3e-3", "--batch", "4", "--beams", "2",
              "--seed", "3"}) == 0,
         "toy training");
    std::vector<nlohmann::json> log;
    std::ifstream is(out / "train_log.jsonl");
    for (std::string line; std::getline(is, line);) log.push_back(nlohmann::json::parse(line));
    must(log.size() == 21, "toy training log length");
    const double first = log[1]["train_si_sdr"];
    double best = first;
    for (std::size_t e = 1; e < log.size(); ++e) best = std::max(best, log[e]["train_si_sdr"].get<double>());
    const double h0 = log[0]["alpha2_entropy"], hN = log.back()["alpha2_entropy"];
    toy_checkpoint = out / "best.ckpt";
    part("d", best - first >= 3.0 && hN < h0,
         fmt("toy training 50 x 1 s, C=8, 20 epochs (%.0f s): SI-SDR epoch 1 %.2f dB, best %.2f dB, gain %.2f dB "
             "(>= 3); alpha2 entropy %.4f -> %.4f nats (must decrease)",
             seconds_since(t0), first, best, best - first, h0, hN));
  }
  {  // (e) J = 2 checkpoint at J = 4
    const auto p = neural::load_checkpoint<float>(toy_checkpoint).frozen();
    const auto& m = probe_corpus();
    std::size_t runs = 0;
    bool ok = true;
    for (const auto& e : m.entries) {
      if (e.n_interferers != 4) continue;
      const auto it = neural::prepare_item(scene::load_bundle(m, e), e.id, p.cfg.stft);
      const auto init = beamforming::initial_beamformers(it.rtf, beamforming::default_null_doas(4), it.geometry);
      const auto r = neural::nn_tflc_forward(p, it.x, it.rtf, init, it.length);
      try {
        neural::to_weight_field(r.alpha1).validate();
        neural::to_weight_field(r.alpha2).validate();
      } catch (const std::exception&) {
        ok = false;
      }
      ok = ok && r.alpha2.dim(0) == 4;
      ++runs;
    }
    part("e", ok && runs > 0, fmt("J=2 checkpoint on %zu 4I mixtures with 4 beams: weights on the simplex", runs));
  }
  std::string text;
  for (const auto& s : parts) text += s + "; ";
  return {all, text};
}

// ---- 8 --------------------------------------------------------------------

Verdict metric_checks() {
  std::mt19937_64 r(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> s(16000), e(16000);
  for (auto& v : s) v = n(r);
  for (auto& v : e) v = n(r);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] += 2.0 * s[i];
  const double base = evaluation::si_sdr(e, s);
  bool exact = true;
  double generic = 0.0;
  for (double c : {2.0, -0.5, 8.0}) {  // powers of two scale without rounding
    std::vector<double> sc(e);
    for (auto& v : sc) v *= c;
    exact = exact && evaluation::si_sdr(sc, s) == base;
  }
  for (double c : {-3.0, 0.1, 17.0}) {
    std::vector<double> sc(e);
    for (auto& v : sc) v *= c;
    generic = std::max(generic, std::abs(evaluation::si_sdr(sc, s) - base));
  }
  const auto loss = neural::si_sdr_loss(neural::Tensor<double>::from({e.size()}, e), s);
  const double vs_loss = std::abs(base + loss.item());
  // Reference plus an exactly orthogonal component of equal power.
  std::vector<double> o(16000);
  for (auto& v : o) v = n(r);
  double so = 0, ss = 0;
  for (std::size_t i = 0; i < s.size(); ++i) so += s[i] * o[i], ss += s[i] * s[i];
  for (std::size_t i = 0; i < s.size(); ++i) o[i] -= so / ss * s[i];
  double oo = 0;
  for (double v : o) oo += v * v;
  std::vector<double> mix(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) mix[i] = s[i] + o[i] * std::sqrt(ss / oo);
  const double zero = evaluation::si_sdr(mix, s);
  const bool ok = exact && generic < 1e-9 && vs_loss < 1e-9 && std::abs(zero) < 1e-9;
  return {ok, fmt("scale invariance: bit-exact for power-of-two scales %s, %.1e for others; |metric + loss| %.1e "
                  "(< 1e-9); orthogonal equal power %.1e dB (|.| < 1e-9)",
                  exact ? "yes" : "NO", generic, vs_loss, zero)};
}

// ---- 9 --------------------------------------------------------------------

Verdict diffuse_coherence() {
  Rng rng(9);
  const double fs = 16000.0, d = 0.02;
  const auto w = scene::render_diffuse_noise(2, d, 60 * 16000, fs, rng);
  // Welch estimate: 512-point Hann frames, 50 % overlap.
  const std::size_t N = 512, hop = 256, K = N / 2 + 1;
  std::vector<double> win(N);
  for (std::size_t i = 0; i < N; ++i) win[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(N));
  std::vector<double> p11(K, 0.0), p22(K, 0.0);
  std::vector<cplx> p12(K, 0.0);
  std::vector<double> f1(N), f2(N);
  for (std::size_t s = 0; s + N <= w.length(); s += hop) {
    for (std::size_t i = 0; i < N; ++i) f1[i] = w[0][s + i] * win[i], f2[i] = w[1][s + i] * win[i];
    const auto X1 = spectral::rfft(f1), X2 = spectral::rfft(f2);
    for (std::size_t k = 0; k < K; ++k) {
      p11[k] += std::norm(X1[k]);
      p22[k] += std::norm(X2[k]);
      p12[k] += X1[k] * std::conj(X2[k]);
    }
  }
  double msd = 0.0;
  std::size_t bins = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const double hz = double(k) * fs / double(N);
    if (hz < 100.0 || hz > 7000.0) continue;
    const cplx gamma = p12[k] / std::sqrt(p11[k] * p22[k]);
    const double x = 2.0 * std::numbers::pi * hz * d / scene::kSpeedOfSound;
    msd += std::norm(gamma - std::sin(x) / x);
    ++bins;
  }
  msd /= double(bins);
  return {msd < 0.05, fmt("60 s, %zu bins in 100 Hz - 7 kHz: mean squared deviation from sinc %.2e (< 0.05)", bins, msd)};
}

// ---- 10 -------------------------------------------------------------------

Verdict determinism() {
  std::vector<std::string> diffs;
  std::size_t compared = 0;
  auto same_tree = [&](const fs::path& a, const fs::path& b) {
    std::set<fs::path> files;
    for (const auto& root : {a, b})
      for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files.insert(fs::relative(e.path(), root));
    for (const auto& f : files) {
      ++compared;
      if (!fs::exists(a / f) || !fs::exists(b / f) || slurp(a / f) != slurp(b / f)) diffs.push_back(f.string());
    }
  };
  const auto base = fresh("determinism");
  for (const std::string run : {"a", "b"}) {
    const auto d = base / run;
    const std::string jobs = run == "a" ? "1" : "2";  // gen, run and evaluate must not depend on --jobs
    must(cli({"--jobs", jobs, "gen-corpus", "--out", (d / "corpus").string(), "--count", "3", "--interferers", "2,3",
              "--seed", "21", "--duration", "1.5"}) == 0,
         "gen");
    for (const std::string meth : {"tflc-mpdr", "tfs-mvdr", "mvdr"})
      must(cli({"--jobs", jobs, "run", "--corpus", (d / "corpus").string(), "--method", meth, "--out",
                (d / "out").string(), "--save-weights"}) == 0,
           "run");
    must(cli({"--jobs", jobs, "evaluate", "--corpus", (d / "corpus").string(), "--outputs", (d / "out").string()}) == 0,
         "evaluate");
    // Checkpoints: single thread, float64.
    must(cli({"train", "--corpus", (d / "corpus").string(), "--out", (d / "train").string(), "--epochs", "2",
              "--channels", "4", "--groups", "2", "--window", "256", "--hop", "128", "--batch", "2", "--seed", "4",
              "--precision", "double"}) == 0,
         "train");
    must(cli({"run", "--corpus", (d / "corpus").string(), "--method", "nn-tflc-mpdr", "--checkpoint",
              (d / "train" / "last.ckpt").string(), "--out", (d / "nn").string()}) == 0,
         "run nn");
    must(cli({"plot", "--input", (d / "out" / "tflc-mpdr" / "mix00000.weights").string(), "--out",
              (d / "plot" / "w.png").string()}) == 0,
         "plot");
  }
  // The training config echo records its own output path; compare everything else.
  fs::remove(base / "a" / "train" / "config.json");
  fs::remove(base / "b" / "train" / "config.json");
  same_tree(base / "a", base / "b");
  std::string which;
  for (const auto& d : diffs) which += " " + d;
  return {diffs.empty() && compared > 0,
          fmt("gen-corpus, run (3 methods + nn), evaluate, train, plot re-run with the same seed: %zu files compared, "
              "%zu differ",
              compared, diffs.size()) +
              which};
}

}  // namespace

int main(int argc, char** argv) {
  work = fs::current_path() / "acceptance_work";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc)
      work = argv[++i];
    else
      only.insert(std::stoi(a));
  }
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"STFT perfect reconstruction", stft_reconstruction},
      {"distortionless constraint", distortionless},
      {"TFLC oracle equivalence", tflc_oracle},
      {"per-bin dominance", dominance},
      {"classical methods, 2 interferers", table_2i},
      {"classical methods, 4 interferers", table_4i},
      {"network substitutes", nn_substitutes},
      {"SI-SDR metric", metric_checks},
      {"diffuse noise coherence", diffuse_coherence},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Verdict v;
    const auto t0 = clk::now();
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS " : "FAIL ") << std::setw(2) << id << "  " << criteria[i].first << ": " << v.detail
              << fmt(" [%.0f s]", seconds_since(t0)) << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
