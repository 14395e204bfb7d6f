#pragma once

// A track is one actor's per-frame box sequence over a contiguous frame
// range. Ground-truth tracks cover the annotated extent; tracker output
// covers the whole video.

#include <string>
#include <vector>

#include "actloc/geometry.hpp"

namespace actloc {

struct Track {
  std::string cls;
  int first_frame = 1;                 // 1-based
  std::vector<BoundingBox> boxes;      // one per frame, contiguous
  std::vector<double> score_inst;      // per-frame detector scores; empty for
  std::vector<double> score_class;     // ground-truth tracks
  int seed_frame = 0;                  // tau; 0 when not produced by a tracker

  int length() const { return int(boxes.size()); }
  int last_frame() const { return first_frame + length() - 1; }
  bool covers(int t) const { return t >= first_frame && t <= last_frame(); }

  const BoundingBox& box_at(int t) const {
    ACTLOC_CHECK(covers(t), "track does not cover frame");
    return boxes[std::size_t(t - first_frame)];
  }
};

}  // namespace actloc
