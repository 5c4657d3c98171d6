#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tflc/common/error.hpp"
#include "tflc/common/parallel.hpp"
#include "tflc/scene/corpus.hpp"
#include "tflc/spectral/wav.hpp"

namespace tflc::evaluation {

namespace fs = std::filesystem;

constexpr double kClampDb = 60.0;

inline double clamp_db(double num, double den) {
  if (den <= 0.0) return num > 0.0 ? kClampDb : -kClampDb;
  if (num <= 0.0) return -kClampDb;
  return std::clamp(10.0 * std::log10(num / den), -kClampDb, kClampDb);
}

/// Scale-invariant SDR in dB, clamped to [-60, 60].
inline double si_sdr(const std::vector<double>& est, const std::vector<double>& ref) {
  require_dims(est.size() == ref.size(), "si_sdr: length mismatch");
  double rr = 0.0, er = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) rr += ref[i] * ref[i], er += est[i] * ref[i];
  require(rr > 0.0, "si_sdr: silent reference");
  const double beta = er / rr;
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double s = beta * ref[i];
    sig += s * s;
    err += (s - est[i]) * (s - est[i]);
  }
  return clamp_db(sig, err);
}

/// Scale-invariant SIR: least-squares split of `est` over the span of the
/// target and interferer references (one tap each).
inline double si_sir(const std::vector<double>& est, const std::vector<double>& target,
                     const std::vector<std::vector<double>>& interferers) {
  const auto n = static_cast<Eigen::Index>(est.size());
  require_dims(target.size() == est.size(), "si_sir: length mismatch");
  const auto k = static_cast<Eigen::Index>(interferers.size() + 1);
  Eigen::MatrixXd R(n, k);
  R.col(0) = Eigen::Map<const Eigen::VectorXd>(target.data(), n);
  for (std::size_t i = 0; i < interferers.size(); ++i) {
    require_dims(interferers[i].size() == est.size(), "si_sir: length mismatch");
    R.col(static_cast<Eigen::Index>(i + 1)) = Eigen::Map<const Eigen::VectorXd>(interferers[i].data(), n);
  }
  for (Eigen::Index c = 0; c < k; ++c) require(R.col(c).squaredNorm() > 0.0, "si_sir: silent reference");
  // Normal equations on column-normalized references; the Gram matrix is tiny.
  const Eigen::VectorXd scale = R.colwise().norm().transpose();
  const Eigen::MatrixXd Rn = R * scale.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd G = Rn.transpose() * Rn;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
  require(eig.eigenvalues().minCoeff() > 1e-10 * eig.eigenvalues().maxCoeff(),
          "si_sir: references are linearly dependent");
  const Eigen::VectorXd c = G.ldlt().solve(Rn.transpose() * Eigen::Map<const Eigen::VectorXd>(est.data(), n));
  const Eigen::VectorXd t_proj = Rn.col(0) * c(0);
  const Eigen::VectorXd i_proj = Rn.rightCols(k - 1) * c.tail(k - 1);
  return clamp_db(t_proj.squaredNorm(), i_proj.squaredNorm());
}

struct MetricRecord {
  std::string id, method, split;
  double si_sdr_db = 0.0, si_sir_db = 0.0;
};

struct Aggregate {
  std::string method, split;
  std::size_t count = 0;
  double si_sdr_mean = 0.0, si_sdr_std = 0.0;
  double si_sir_mean = 0.0, si_sir_std = 0.0;
};

struct MetricReport {
  std::vector<MetricRecord> records;  // sorted by (method, id)
  std::vector<std::string> missing;   // "<method>/<id>"
  std::vector<Aggregate> aggregates;
  bool ok() const { return missing.empty(); }
};

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= double(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / double(v.size()))};
}

/// Groups by (method, split) in sorted order. Population std.
inline std::vector<Aggregate> aggregate(const std::vector<MetricRecord>& records) {
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& r : records) {
    auto& g = groups[{r.method, r.split}];
    g.first.push_back(r.si_sdr_db);
    g.second.push_back(r.si_sir_db);
  }
  std::vector<Aggregate> out;
  for (const auto& [key, vals] : groups) {
    Aggregate a;
    a.method = key.first;
    a.split = key.second;
    a.count = vals.first.size();
    std::tie(a.si_sdr_mean, a.si_sdr_std) = mean_std(vals.first);
    std::tie(a.si_sir_mean, a.si_sir_std) = mean_std(vals.second);
    out.push_back(a);
  }
  return out;
}

// Shortest representation that parses back to the same double.
inline std::string exact(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

inline std::string to_csv(const std::vector<MetricRecord>& records) {
  std::string out = "id,method,split,si_sdr_db,si_sir_db\n";
  for (const auto& r : records)
    out += r.id + "," + r.method + "," + r.split + "," + exact(r.si_sdr_db) + "," + exact(r.si_sir_db) + "\n";
  return out;
}

inline std::vector<MetricRecord> parse_csv(const std::string& text) {
  std::vector<MetricRecord> out;
  std::size_t pos = text.find('\n');
  if (pos == std::string::npos || text.substr(0, pos) != "id,method,split,si_sdr_db,si_sir_db")
    throw ParseError("metrics csv: bad header");
  while (++pos < text.size()) {
    const std::size_t end = text.find('\n', pos);
    const std::string line = text.substr(pos, end - pos);
    pos = end == std::string::npos ? text.size() : end;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t a = 0;
    for (std::size_t b; (b = line.find(',', a)) != std::string::npos; a = b + 1) f.push_back(line.substr(a, b - a));
    f.push_back(line.substr(a));
    if (f.size() != 5) throw ParseError("metrics csv: expected 5 fields in '" + line + "'");
    MetricRecord r{f[0], f[1], f[2]};
    auto parse = [&](const std::string& s, double& v) {
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParseError("metrics csv: bad number " + s);
    };
    parse(f[3], r.si_sdr_db);
    parse(f[4], r.si_sir_db);
    out.push_back(r);
  }
  return out;
}

inline nlohmann::json to_json(const MetricReport& rep) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& a : rep.aggregates)
    groups.push_back({{"method", a.method},
                      {"split", a.split},
                      {"count", a.count},
                      {"si_sdr_mean", a.si_sdr_mean},
                      {"si_sdr_std", a.si_sdr_std},
                      {"si_sir_mean", a.si_sir_mean},
                      {"si_sir_std", a.si_sir_std}});
  return {{"groups", groups}, {"missing", rep.missing}};
}

inline fs::path output_path(const fs::path& outputs, const std::string& method, const std::string& id) {
  return outputs / method / (id + ".wav");
}

/// Scores `<outputs>/<method>/<id>.wav` against the reference-mic target and
/// interferer images of every manifest entry. Missing outputs are listed.
inline MetricReport evaluate_corpus(const scene::Manifest& manifest, const fs::path& outputs,
                                    const std::vector<std::string>& methods, unsigned jobs = 1) {
  require(!methods.empty(), "evaluate_corpus: no methods given");
  auto entries = manifest.entries;
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  struct Slot {
    std::optional<MetricRecord> rec;
    bool missing = false;
  };
  const std::size_t n = entries.size();
  std::vector<Slot> slots(methods.size() * n);
  parallel_for(slots.size(), jobs, [&](std::size_t k) {
    const auto& method = methods[k / n];
    const auto& e = entries[k % n];
    const auto path = output_path(outputs, method, e.id);
    if (!fs::exists(path)) {
      slots[k].missing = true;
      return;
    }
    const auto est = spectral::read_wav(path);
    const auto target = spectral::read_wav(manifest.root / e.target);
    std::vector<std::vector<double>> intf;
    for (const auto& p : e.interferers) intf.push_back(spectral::read_wav(manifest.root / p)[0]);
    if (est[0].size() != target[0].size())
      throw DimensionError("evaluate: " + path.string() + " has a different length from its reference");
    MetricRecord r{e.id, method, scene::split_name(e.n_interferers)};
    r.si_sdr_db = si_sdr(est[0], target[0]);
    r.si_sir_db = si_sir(est[0], target[0], intf);
    slots[k].rec = r;
  });

  MetricReport rep;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (slots[k].rec) rep.records.push_back(*slots[k].rec);
    if (slots[k].missing) rep.missing.push_back(methods[k / n] + "/" + entries[k % n].id);
  }
  rep.aggregates = aggregate(rep.records);
  return rep;
}

}  // namespace tflc::evaluation
