#pragma once

// On-disk dataset layout:
//
//   <root>/manifest.txt              videos=<id>,...  classes=<name>,...
//   <root>/videos/<id>/frames/       frame_%06d.pgm|ppm, 1-based
//   <root>/videos/<id>/gt.txt        ground-truth instances for the video
//   <root>/videos/<id>/proposals/    optional props_%06d.txt per frame
//
// load_dataset only reads the manifest; frames, ground truth, and proposals
// are loaded per video on demand.

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "actloc/common.hpp"
#include "actloc/config.hpp"
#include "actloc/eval.hpp"
#include "actloc/frame.hpp"

namespace actloc {

struct Dataset {
  std::filesystem::path root;
  std::vector<std::string> video_ids;
  std::vector<std::string> classes;

  std::filesystem::path video_dir(const std::string& id) const {
    return root / "videos" / id;
  }
  std::filesystem::path frames_dir(const std::string& id) const {
    return video_dir(id) / "frames";
  }
  std::filesystem::path gt_file(const std::string& id) const {
    return video_dir(id) / "gt.txt";
  }
  std::filesystem::path proposals_dir(const std::string& id) const {
    return video_dir(id) / "proposals";
  }
  bool has_proposals(const std::string& id) const {
    return std::filesystem::is_directory(proposals_dir(id));
  }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s,
                                           const std::string& origin,
                                           bool allow_empty = false) {
  std::vector<std::string> out = split_ws(Config::comma_to_space(s));
  if (out.empty() && !allow_empty) throw DataError(origin + ": empty list");
  return out;
}

}  // namespace detail

inline Dataset load_dataset(const std::filesystem::path& root) {
  std::filesystem::path manifest = root / "manifest.txt";
  Config cfg = load_config(manifest);
  Dataset ds;
  ds.root = root;
  ds.video_ids = detail::split_list(cfg.get("videos"),
                                    manifest.string() + ": key videos",
                                    /*allow_empty=*/true);
  ds.classes = detail::split_list(cfg.get("classes"),
                                  manifest.string() + ": key classes");
  for (const std::string& id : ds.video_ids)
    if (!std::filesystem::is_directory(ds.frames_dir(id)))
      throw DataError(manifest.string() + ": video '" + id +
                      "' has no frames directory " +
                      ds.frames_dir(id).string());
  return ds;
}

inline void write_dataset_manifest(const Dataset& ds) {
  std::string text;
  text += "videos=";
  for (std::size_t i = 0; i < ds.video_ids.size(); ++i)
    text += (i ? "," : "") + ds.video_ids[i];
  text += "\nclasses=";
  for (std::size_t i = 0; i < ds.classes.size(); ++i)
    text += (i ? "," : "") + ds.classes[i];
  text += "\n";
  write_file_atomic(ds.root / "manifest.txt", text);
}

inline VideoSequence load_dataset_video(const Dataset& ds,
                                        const std::string& id) {
  return load_sequence(ds.frames_dir(id), id);
}

inline std::vector<GroundTruthInstance> load_dataset_gt(const Dataset& ds,
                                                        const std::string& id) {
  return read_ground_truth(ds.gt_file(id));
}

// Ground truth across every video, in manifest order.
inline std::vector<GroundTruthInstance> load_all_gt(const Dataset& ds) {
  std::vector<GroundTruthInstance> all;
  for (const std::string& id : ds.video_ids) {
    std::vector<GroundTruthInstance> g = load_dataset_gt(ds, id);
    all.insert(all.end(), g.begin(), g.end());
  }
  return all;
}

}  // namespace actloc
