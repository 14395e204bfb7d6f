#pragma once

// Synthetic dataset generation: `count` videos assigned round-robin to a
// class list, each rendered by synth_scene with per-video seeds derived from
// (dataset seed, video index). The spec file holds base scene keys plus
// optional per-class overrides (`class.<name>.<scene key>=...`) and
// dataset-level knobs; without class overrides the classes are the four
// motion programs.
//
// Dataset-level keys:
//   write_proposals   bool, default true: store grid proposals per frame
//   prop_drop_period  int, 0=off: every period-th in-extent frame loses all
//                     proposals overlapping the actor (tests recovery from
//                     frames with no proposal near the actor)
//   prop_drop_iou     double, default 0.2: overlap at or above this drops
//   extent_min_frac / extent_max_frac
//                     when max > 0, each video's action extent is re-drawn
//                     with length in [min,max] fraction of the video and a
//                     seeded start (untrimmed-video datasets)

#include <filesystem>
#include <string>
#include <vector>

#include "actloc/common.hpp"
#include "actloc/dataset.hpp"
#include "actloc/eval.hpp"
#include "actloc/proposals.hpp"
#include "actloc/synth.hpp"

namespace actloc {

struct DatasetSynthSpec {
  SceneSpec base;
  std::vector<std::pair<std::string, SceneSpec>> classes;  // name -> scene
  bool write_proposals = true;
  int prop_drop_period = 0;
  double prop_drop_iou = 0.2;
  double extent_min_frac = 0.0;
  double extent_max_frac = 0.0;
};

inline DatasetSynthSpec parse_dataset_synth_spec(const std::string& text,
                                                 const std::string& origin) {
  DatasetSynthSpec spec;
  std::vector<std::pair<std::string, std::string>> class_keys;  // name.sub=val
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::vector<std::pair<std::string, std::string>> deferred;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::size_t e = line.find_last_not_of(" \t\r");
    if (e == std::string::npos || e < b) continue;
    line = line.substr(b, e - b + 1);
    std::size_t eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw DataError(where + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto strip = [](std::string s) {
      std::size_t x = s.find_first_not_of(" \t");
      if (x == std::string::npos) return std::string();
      std::size_t y = s.find_last_not_of(" \t");
      return s.substr(x, y - x + 1);
    };
    key = strip(key);
    val = strip(val);
    try {
      if (key.rfind("class.", 0) == 0) {
        deferred.emplace_back(key, val);  // applied after the base is complete
      } else if (key == "write_proposals") {
        spec.write_proposals = val == "true" || val == "1";
      } else if (key == "prop_drop_period") {
        spec.prop_drop_period = std::stoi(val);
      } else if (key == "prop_drop_iou") {
        spec.prop_drop_iou = std::stod(val);
      } else if (key == "extent_min_frac") {
        spec.extent_min_frac = std::stod(val);
      } else if (key == "extent_max_frac") {
        spec.extent_max_frac = std::stod(val);
      } else if (!apply_scene_key(spec.base, key, val, where)) {
        throw DataError(where + ": unknown key " + key);
      }
    } catch (const std::invalid_argument&) {
      throw DataError(where + ": bad value for " + key);
    }
  }

  for (const auto& [key, val] : deferred) {
    std::size_t dot = key.find('.', 6);
    if (dot == std::string::npos || dot == 6 || dot + 1 >= key.size())
      throw DataError(origin + ": malformed class key '" + key +
                      "' (want class.<name>.<scene key>)");
    std::string name = key.substr(6, dot - 6);
    std::string sub = key.substr(dot + 1);
    SceneSpec* target = nullptr;
    for (auto& [n, s] : spec.classes)
      if (n == name) target = &s;
    if (!target) {
      spec.classes.emplace_back(name, spec.base);
      target = &spec.classes.back().second;
    }
    if (!apply_scene_key(*target, sub, val, origin + ": key " + key))
      throw DataError(origin + ": unknown scene key '" + sub + "' in " + key);
  }

  if (spec.classes.empty()) {
    for (MotionProgram m :
         {MotionProgram::HorizontalOsc, MotionProgram::VerticalOsc,
          MotionProgram::DiagonalDrift, MotionProgram::StaticFlicker}) {
      SceneSpec s = spec.base;
      s.motion = m;
      spec.classes.emplace_back(motion_program_name(m), s);
    }
  }
  return spec;
}

inline DatasetSynthSpec load_dataset_synth_spec(const std::filesystem::path& p) {
  return parse_dataset_synth_spec(read_file(p), p.string());
}

// Renders one dataset. Returns the loaded Dataset for convenience.
inline Dataset synth_dataset(const DatasetSynthSpec& spec,
                             const std::filesystem::path& out_dir, int count,
                             std::uint64_t seed,
                             const GridParams& grid = GridParams{}) {
  ACTLOC_CHECK(count >= 0, "video count must be >= 0");
  Dataset ds;
  ds.root = out_dir;
  for (const auto& [name, scene] : spec.classes) {
    (void)scene;
    ds.classes.push_back(name);
  }
  std::filesystem::create_directories(out_dir / "videos");

  for (int vi = 0; vi < count; ++vi) {
    const auto& [cls, class_scene] = spec.classes[std::size_t(vi) % spec.classes.size()];
    SceneSpec scene = class_scene;
    const std::uint64_t vseed = hash_combine(seed, std::uint64_t(vi));
    scene.background_seed = hash_combine(scene.background_seed, vseed);

    if (spec.extent_max_frac > 0.0) {
      const int T = scene.num_frames;
      double fr = spec.extent_min_frac +
                  hash_unit(hash_combine(vseed, 21)) *
                      (spec.extent_max_frac - spec.extent_min_frac);
      int len = std::clamp(int(std::lround(fr * T)), 1, T);
      int start = 1 + int(hash_unit(hash_combine(vseed, 22)) * (T - len + 1));
      start = std::clamp(start, 1, T - len + 1);
      scene.t_begin = start;
      scene.t_end = start + len - 1;
    }

    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "vid%04d", vi);
    const std::string id = idbuf;
    ds.video_ids.push_back(id);

    SynthResult r = synth_scene(scene, vseed);
    r.video.id = id;
    write_sequence(ds.frames_dir(id), r.video);

    GroundTruthInstance gt;
    gt.video_id = id;
    gt.cls = cls;
    gt.t_begin = r.t_begin;
    gt.boxes = r.ground_truth.boxes;
    write_ground_truth(ds.gt_file(id), {gt});

    if (spec.write_proposals) {
      std::filesystem::path pdir = ds.proposals_dir(id);
      std::filesystem::create_directories(pdir);
      for (int t = 1; t <= scene.num_frames; ++t) {
        ProposalSet set = grid_proposals(r.video.frame(t), t, grid);
        const bool drop = spec.prop_drop_period > 0 && t >= r.t_begin &&
                          t <= r.t_end && (t - r.t_begin) % spec.prop_drop_period == 0;
        if (drop) {
          const BoundingBox& gb = gt.boxes[std::size_t(t - r.t_begin)];
          std::vector<Proposal> kept;
          for (const Proposal& p : set.proposals)
            if (box_iou(p.box, gb) < spec.prop_drop_iou) kept.push_back(p);
          set.proposals = std::move(kept);
        }
        write_proposals(pdir / proposal_file_name(t), set);
      }
    }
  }

  write_dataset_manifest(ds);
  return ds;
}

}  // namespace actloc
