#pragma once

// Deterministic synthetic-scene generator: a textured actor following a
// motion program over a value-noise background, with tight ground-truth
// boxes. Everything derives from hashed (spec, seed) keys, so output is
// byte-identical across runs and platforms.

#include <cmath>
#include <string>

#include "actloc/common.hpp"
#include "actloc/frame.hpp"
#include "actloc/track.hpp"

namespace actloc {

enum class MotionProgram { HorizontalOsc, VerticalOsc, DiagonalDrift, StaticFlicker };

inline std::string motion_program_name(MotionProgram m) {
  switch (m) {
    case MotionProgram::HorizontalOsc: return "horizontal_osc";
    case MotionProgram::VerticalOsc: return "vertical_osc";
    case MotionProgram::DiagonalDrift: return "diagonal_drift";
    case MotionProgram::StaticFlicker: return "static_flicker";
  }
  return "?";
}

inline MotionProgram motion_program_from_name(const std::string& s) {
  if (s == "horizontal_osc") return MotionProgram::HorizontalOsc;
  if (s == "vertical_osc") return MotionProgram::VerticalOsc;
  if (s == "diagonal_drift") return MotionProgram::DiagonalDrift;
  if (s == "static_flicker") return MotionProgram::StaticFlicker;
  throw DataError("unknown motion program: " + s);
}

struct SceneSpec {
  int num_frames = 60;
  int width = 64;
  int height = 64;
  int actor_w = 16;
  int actor_h = 16;
  MotionProgram motion = MotionProgram::HorizontalOsc;
  int t_begin = 1;
  int t_end = 60;
  std::uint64_t background_seed = 1;
  double noise_amp = 3.0;           // per-frame additive pixel noise

  // Motion-program knobs.
  double osc_amplitude = 10.0;      // px
  int osc_period = 20;              // frames
  int drift_vx = 2;                 // px/frame
  int drift_vy = 1;
  int flicker_period = 4;           // frames per texture phase

  int appearance_switch_frame = 0;  // reseed actor texture from this frame on
  int texture_scale = 4;            // value-noise lattice cell size
};

// Smooth value noise on an integer lattice of the given cell size.
inline double value_noise(double x, double y, std::uint64_t seed, int scale) {
  double gx = x / scale, gy = y / scale;
  int x0 = int(std::floor(gx)), y0 = int(std::floor(gy));
  double fx = gx - x0, fy = gy - y0;
  auto corner = [&](int cx, int cy) {
    std::uint64_t k = hash_combine(seed, (std::uint64_t(std::uint32_t(cx)) << 32) |
                                             std::uint32_t(cy));
    return hash_unit(k);
  };
  // smoothstep fade
  double ux = fx * fx * (3 - 2 * fx);
  double uy = fy * fy * (3 - 2 * fy);
  double a = corner(x0, y0), b = corner(x0 + 1, y0);
  double c = corner(x0, y0 + 1), d = corner(x0 + 1, y0 + 1);
  return (a * (1 - ux) + b * ux) * (1 - uy) + (c * (1 - ux) + d * ux) * uy;
}

struct SynthResult {
  VideoSequence video;
  Track ground_truth;      // boxes over [t_begin, t_end]
  std::string class_label;
  int t_begin = 1;
  int t_end = 1;
};

namespace detail {

// Actor top-left per frame. Positions are exact integers so motion-program
// contracts (e.g. constant drift shift) hold without rounding drift.
inline void actor_position(const SceneSpec& s, std::uint64_t seed, int t,
                           int base_x, int base_y, int* ax, int* ay) {
  (void)seed;
  int span_x = s.width - s.actor_w;
  int span_y = s.height - s.actor_h;
  int dt = t - s.t_begin;
  switch (s.motion) {
    case MotionProgram::HorizontalOsc: {
      double a = std::min(s.osc_amplitude, double(std::min(base_x, span_x - base_x)));
      *ax = base_x + int(std::lround(a * std::sin(2.0 * M_PI * dt / s.osc_period)));
      *ay = base_y;
      break;
    }
    case MotionProgram::VerticalOsc: {
      double a = std::min(s.osc_amplitude, double(std::min(base_y, span_y - base_y)));
      *ax = base_x;
      *ay = base_y + int(std::lround(a * std::sin(2.0 * M_PI * dt / s.osc_period)));
      break;
    }
    case MotionProgram::DiagonalDrift: {
      // Reflecting walk: exact (vx, vy) steps, folded back into range.
      auto bounce = [](int start, int v, int steps, int span) {
        if (span <= 0) return 0;
        long long p = start + (long long)v * steps;
        long long period = 2LL * span;
        p %= period;
        if (p < 0) p += period;
        return int(p > span ? period - p : p);
      };
      *ax = bounce(base_x, s.drift_vx, dt, span_x);
      *ay = bounce(base_y, s.drift_vy, dt, span_y);
      break;
    }
    case MotionProgram::StaticFlicker:
      *ax = base_x;
      *ay = base_y;
      break;
  }
}

}  // namespace detail

inline SynthResult synth_scene(const SceneSpec& s, std::uint64_t seed) {
  ACTLOC_CHECK(s.num_frames >= 1, "num_frames must be >= 1");
  ACTLOC_CHECK(1 <= s.t_begin && s.t_begin <= s.t_end && s.t_end <= s.num_frames,
               "action extent must satisfy 1 <= t_begin <= t_end <= num_frames");
  if (s.actor_w > s.width || s.actor_h > s.height)
    throw DataError("synth_scene: actor larger than frame");

  std::uint64_t actor_seed = hash_combine(seed, 0xAC70Bull);
  std::uint64_t noise_seed = hash_combine(seed, 0x4015Eull);

  // Base position: centered, jittered by the seed within a safe margin.
  int span_x = s.width - s.actor_w;
  int span_y = s.height - s.actor_h;
  int jx = span_x > 0 ? int(hash_unit(hash_combine(seed, 11)) * (span_x / 4 + 1)) : 0;
  int jy = span_y > 0 ? int(hash_unit(hash_combine(seed, 12)) * (span_y / 4 + 1)) : 0;
  int base_x = span_x / 2 + (jx - span_x / 8);
  int base_y = span_y / 2 + (jy - span_y / 8);
  base_x = std::clamp(base_x, 0, span_x);
  base_y = std::clamp(base_y, 0, span_y);

  SynthResult out;
  out.class_label = motion_program_name(s.motion);
  out.t_begin = s.t_begin;
  out.t_end = s.t_end;
  out.ground_truth.cls = out.class_label;
  out.ground_truth.first_frame = s.t_begin;
  out.video.id = "synth";
  out.video.frames.reserve(std::size_t(s.num_frames));

  for (int t = 1; t <= s.num_frames; ++t) {
    Frame f(s.width, s.height, 1);
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        double v = 90.0 + 70.0 * value_noise(x, y, s.background_seed, 8);
        double n = s.noise_amp *
                   (hash_unit(hash_combine(noise_seed,
                                           hash_combine(std::uint64_t(t),
                                                        (std::uint64_t(std::uint32_t(x)) << 32) |
                                                            std::uint32_t(y)))) -
                    0.5) * 2.0;
        f.at(x, y) = std::uint8_t(std::clamp(std::lround(v + n), 0L, 255L));
      }
    }

    bool active = t >= s.t_begin && t <= s.t_end;
    if (active) {
      int ax = 0, ay = 0;
      detail::actor_position(s, seed, t, base_x, base_y, &ax, &ay);
      std::uint64_t tex = actor_seed;
      if (s.appearance_switch_frame > 0 && t >= s.appearance_switch_frame)
        tex = hash_combine(actor_seed, 0x5717C4ull);
      if (s.motion == MotionProgram::StaticFlicker)
        tex = hash_combine(tex, std::uint64_t((t - s.t_begin) / s.flicker_period));
      for (int y = 0; y < s.actor_h; ++y) {
        for (int x = 0; x < s.actor_w; ++x) {
          // texture in actor-local coordinates: it rides along with the actor
          double v = 30.0 + 200.0 * value_noise(x, y, tex, s.texture_scale);
          f.at(ax + x, ay + y) = std::uint8_t(std::clamp(std::lround(v), 0L, 255L));
        }
      }
      out.ground_truth.boxes.push_back(
          BoundingBox{double(ax), double(ay), double(s.actor_w), double(s.actor_h)});
    }
    out.video.frames.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Flat key=value scene-spec files.

// Applies one key to a spec. Returns false for keys this module does not own
// (dataset-level synth adds its own on top).
inline bool apply_scene_key(SceneSpec& s, const std::string& key,
                            const std::string& val, const std::string& origin) {
  try {
    if (key == "num_frames") s.num_frames = std::stoi(val);
    else if (key == "width") s.width = std::stoi(val);
    else if (key == "height") s.height = std::stoi(val);
    else if (key == "actor_w") s.actor_w = std::stoi(val);
    else if (key == "actor_h") s.actor_h = std::stoi(val);
    else if (key == "motion") s.motion = motion_program_from_name(val);
    else if (key == "t_begin") s.t_begin = std::stoi(val);
    else if (key == "t_end") s.t_end = std::stoi(val);
    else if (key == "background_seed") s.background_seed = std::stoull(val);
    else if (key == "noise_amp") s.noise_amp = std::stod(val);
    else if (key == "osc_amplitude") s.osc_amplitude = std::stod(val);
    else if (key == "osc_period") s.osc_period = std::stoi(val);
    else if (key == "drift_vx") s.drift_vx = std::stoi(val);
    else if (key == "drift_vy") s.drift_vy = std::stoi(val);
    else if (key == "flicker_period") s.flicker_period = std::stoi(val);
    else if (key == "appearance_switch_frame") s.appearance_switch_frame = std::stoi(val);
    else if (key == "texture_scale") s.texture_scale = std::stoi(val);
    else return false;
  } catch (const std::invalid_argument&) {
    throw DataError(origin + ": bad value for " + key);
  }
  return true;
}

inline SceneSpec parse_scene_spec_text(const std::string& text,
                                       const std::string& origin) {
  SceneSpec s;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string trimmed = line.substr(line.find_first_not_of(" \t") == std::string::npos
                                          ? line.size()
                                          : line.find_first_not_of(" \t"));
    if (trimmed.empty() || trimmed[0] == '#') continue;
    auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw DataError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trimmed.substr(0, eq);
    std::string val = trimmed.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    while (!val.empty() && (val.front() == ' ' || val.front() == '\t')) val.erase(0, 1);
    const std::string where = origin + ":" + std::to_string(lineno);
    if (!apply_scene_key(s, key, val, where))
      throw DataError(where + ": unknown key " + key);
  }
  return s;
}

inline SceneSpec load_scene_spec(const std::filesystem::path& path) {
  return parse_scene_spec_text(read_file(path), path.string());
}

}  // namespace actloc
