#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "tflc/common/error.hpp"
#include "tflc/common/random.hpp"

namespace tflc::scene {

inline constexpr double kSpeedOfSound = 343.0;

using Vec3 = std::array<double, 3>;

/// Sampling ranges for acoustic scenes. Defaults are the dual-microphone
/// mixing conditions used throughout the workbench.
struct SceneRanges {
  double length_min = 6.0, length_max = 10.0;
  double width_min = 5.0, width_max = 8.0;
  double height_min = 2.5, height_max = 3.5;
  double t60_min = 0.2, t60_max = 0.5;
  double array_height = 1.5;
  double wall_clearance = 2.5;
  double mic_spacing = 0.02;
  double target_doa_min = 80.0, target_doa_max = 100.0;
  // Interferer DOAs come from two disjoint sectors, at most two per sector.
  double sector_a_min = 0.0, sector_a_max = 65.0;
  double sector_b_min = 115.0, sector_b_max = 180.0;
  int max_per_sector = 2;
  double distance_min = 1.5, distance_max = 2.0;
  double src_height_min = 1.4, src_height_max = 1.6;
  double sir_min = 0.0, sir_max = 5.0;
  double snr_min = 10.0, snr_max = 25.0;
  double dwr_min = 15.0, dwr_max = 25.0;
};

/// One point source placed relative to the array.
struct SourcePlacement {
  double doa_deg = 90.0;
  double distance = 1.5;
  double height = 1.5;
};

struct SceneSpec {
  Vec3 room_dims{8.0, 6.0, 3.0};
  double t60 = 0.3;
  Vec3 array_center{4.0, 3.0, 1.5};
  /// Azimuth of the array axis in the horizontal plane, degrees.
  double array_azimuth_deg = 0.0;
  double mic_spacing = 0.02;
  int num_mics = 2;
  SourcePlacement target;
  std::vector<SourcePlacement> interferers;
  std::vector<double> sir_db;
  double snr_db = 15.0;
  double diffuse_to_white_db = 20.0;
  std::uint64_t seed = 0;

  int n_interferers() const { return static_cast<int>(interferers.size()); }

  // DOA convention: the axis unit vector u points from the last microphone
  // toward microphone 0, so microphone k lags microphone 0 by
  // k * d * cos(theta) / c for a far-field source at angle theta from u.
  Vec3 axis() const {
    const double a = array_azimuth_deg * std::numbers::pi / 180.0;
    return {std::cos(a), std::sin(a), 0.0};
  }
  Vec3 normal() const {
    const double a = array_azimuth_deg * std::numbers::pi / 180.0;
    return {-std::sin(a), std::cos(a), 0.0};
  }

  Vec3 mic_position(int k) const {
    const auto u = axis();
    const double off = -(k - 0.5 * (num_mics - 1)) * mic_spacing;
    return {array_center[0] + off * u[0], array_center[1] + off * u[1], array_center[2]};
  }

  Vec3 source_position(const SourcePlacement& s) const {
    const auto u = axis();
    const auto v = normal();
    const double th = s.doa_deg * std::numbers::pi / 180.0;
    const double cx = std::cos(th), sy = std::sin(th);
    return {array_center[0] + s.distance * (cx * u[0] + sy * v[0]),
            array_center[1] + s.distance * (cx * u[1] + sy * v[1]), s.height};
  }

  bool inside_room(const Vec3& p) const {
    for (int i = 0; i < 3; ++i)
      if (!(p[i] > 0.0 && p[i] < room_dims[i])) return false;
    return true;
  }
};

inline bool in_sector(double doa, double lo, double hi) { return doa >= lo && doa <= hi; }

/// Checks every field against the sampling ranges and the geometric constraints.
inline void validate(const SceneSpec& s, const SceneRanges& r = {}) {
  auto within = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  require(within(s.room_dims[0], r.length_min, r.length_max) &&
              within(s.room_dims[1], r.width_min, r.width_max) &&
              within(s.room_dims[2], r.height_min, r.height_max),
          "SceneSpec: room dimensions out of range");
  require(within(s.t60, r.t60_min, r.t60_max), "SceneSpec: t60 out of range");
  require(within(s.target.doa_deg, r.target_doa_min, r.target_doa_max), "SceneSpec: target DOA out of range");
  require(s.n_interferers() >= 2 && s.n_interferers() <= 4, "SceneSpec: interferer count must be 2..4");
  require(s.sir_db.size() == s.interferers.size(), "SceneSpec: one SIR per interferer");
  int in_a = 0, in_b = 0;
  for (const auto& i : s.interferers) {
    const bool a = in_sector(i.doa_deg, r.sector_a_min, r.sector_a_max);
    const bool b = in_sector(i.doa_deg, r.sector_b_min, r.sector_b_max);
    require(a || b, "SceneSpec: interferer DOA outside both sectors");
    in_a += a;
    in_b += b;
    require(within(i.distance, r.distance_min, r.distance_max), "SceneSpec: source distance out of range");
  }
  require(in_a <= r.max_per_sector && in_b <= r.max_per_sector, "SceneSpec: too many interferers in one sector");
  for (double sir : s.sir_db) require(within(sir, r.sir_min, r.sir_max), "SceneSpec: SIR out of range");
  require(within(s.snr_db, r.snr_min, r.snr_max), "SceneSpec: SNR out of range");
  require(within(s.diffuse_to_white_db, r.dwr_min, r.dwr_max), "SceneSpec: diffuse-to-white ratio out of range");
  for (int k = 0; k < s.num_mics; ++k) {
    const auto p = s.mic_position(k);
    for (int d = 0; d < 2; ++d)
      require(p[d] >= r.wall_clearance - s.mic_spacing && s.room_dims[d] - p[d] >= r.wall_clearance - s.mic_spacing,
              "SceneSpec: array too close to a wall");
  }
  require(s.inside_room(s.source_position(s.target)), "SceneSpec: target outside room");
  for (const auto& i : s.interferers) require(s.inside_room(s.source_position(i)), "SceneSpec: interferer outside room");
}

/// Draws a scene with every field uniform over its range; geometric
/// constraints are met by rejection.
inline SceneSpec sample_scene(Rng& rng, int n_interferers, const SceneRanges& r = {}) {
  require(n_interferers >= 2 && n_interferers <= 4, "sample_scene: n_interferers must be in {2,3,4}");
  SceneSpec s;
  s.seed = rng();
  for (;;) {
    s.room_dims = {uniform(rng, r.length_min, r.length_max), uniform(rng, r.width_min, r.width_max),
                   uniform(rng, r.height_min, r.height_max)};
    s.t60 = uniform(rng, r.t60_min, r.t60_max);
    s.mic_spacing = r.mic_spacing;
    s.array_center = {uniform(rng, r.wall_clearance, s.room_dims[0] - r.wall_clearance),
                      uniform(rng, r.wall_clearance, s.room_dims[1] - r.wall_clearance), r.array_height};
    s.array_azimuth_deg = uniform(rng, 0.0, 360.0);

    auto place = [&](double doa) {
      return SourcePlacement{doa, uniform(rng, r.distance_min, r.distance_max),
                             uniform(rng, r.src_height_min, r.src_height_max)};
    };
    s.target = place(uniform(rng, r.target_doa_min, r.target_doa_max));

    std::vector<int> sectors;
    for (;;) {
      sectors.clear();
      int a = 0;
      for (int i = 0; i < n_interferers; ++i) {
        const int sec = uniform(rng, 0.0, 1.0) < 0.5 ? 0 : 1;
        sectors.push_back(sec);
        a += sec == 0;
      }
      if (a <= r.max_per_sector && n_interferers - a <= r.max_per_sector) break;
    }
    s.interferers.clear();
    s.sir_db.clear();
    for (int sec : sectors) {
      const double doa = sec == 0 ? uniform(rng, r.sector_a_min, r.sector_a_max)
                                  : uniform(rng, r.sector_b_min, r.sector_b_max);
      s.interferers.push_back(place(doa));
    }
    for (int i = 0; i < n_interferers; ++i) s.sir_db.push_back(uniform(rng, r.sir_min, r.sir_max));
    s.snr_db = uniform(rng, r.snr_min, r.snr_max);
    s.diffuse_to_white_db = uniform(rng, r.dwr_min, r.dwr_max);

    bool ok = s.inside_room(s.source_position(s.target));
    for (const auto& i : s.interferers) ok = ok && s.inside_room(s.source_position(i));
    if (ok) return s;
  }
}

inline void to_json(nlohmann::json& j, const SourcePlacement& p) {
  j = {{"doa_deg", p.doa_deg}, {"distance", p.distance}, {"height", p.height}};
}
inline void from_json(const nlohmann::json& j, SourcePlacement& p) {
  j.at("doa_deg").get_to(p.doa_deg);
  j.at("distance").get_to(p.distance);
  j.at("height").get_to(p.height);
}

inline void to_json(nlohmann::json& j, const SceneSpec& s) {
  j = {{"room_dims", s.room_dims},
       {"t60", s.t60},
       {"array_center", s.array_center},
       {"array_azimuth_deg", s.array_azimuth_deg},
       {"mic_spacing", s.mic_spacing},
       {"num_mics", s.num_mics},
       {"target", s.target},
       {"interferers", s.interferers},
       {"n_interferers", s.n_interferers()},
       {"sir_db", s.sir_db},
       {"snr_db", s.snr_db},
       {"diffuse_to_white_db", s.diffuse_to_white_db},
       {"seed", s.seed}};
}
inline void from_json(const nlohmann::json& j, SceneSpec& s) {
  j.at("room_dims").get_to(s.room_dims);
  j.at("t60").get_to(s.t60);
  j.at("array_center").get_to(s.array_center);
  j.at("array_azimuth_deg").get_to(s.array_azimuth_deg);
  j.at("mic_spacing").get_to(s.mic_spacing);
  j.at("num_mics").get_to(s.num_mics);
  j.at("target").get_to(s.target);
  j.at("interferers").get_to(s.interferers);
  j.at("sir_db").get_to(s.sir_db);
  j.at("snr_db").get_to(s.snr_db);
  j.at("diffuse_to_white_db").get_to(s.diffuse_to_white_db);
  j.at("seed").get_to(s.seed);
}

}  // namespace tflc::scene
