#pragma once

// Per-frame candidate regions: loaded from precomputed files or produced by
// the built-in multi-scale grid generator.

#include <algorithm>
#include <string>
#include <vector>

#include "actloc/common.hpp"
#include "actloc/frame.hpp"
#include "actloc/geometry.hpp"

namespace actloc {

struct Proposal {
  BoundingBox box;
  double objectness = 0.0;
  int t = 0;  // 1-based frame index
};

// Proposals for one frame, sorted by descending objectness with ties kept in
// generation (or file) order, capped at `cap`.
struct ProposalSet {
  int t = 0;
  std::vector<Proposal> proposals;

  static constexpr int kDefaultCap = 256;

  void finalize(int cap) {
    std::stable_sort(proposals.begin(), proposals.end(),
                     [](const Proposal& a, const Proposal& b) {
                       return a.objectness > b.objectness;
                     });
    if (cap >= 0 && int(proposals.size()) > cap) proposals.resize(std::size_t(cap));
  }
};

struct GridParams {
  std::vector<double> scales{0.25, 0.4, 0.6, 0.8};  // of min(frame dims)
  std::vector<double> ratios{0.5, 1.0, 2.0};        // width / height
  double stride_fraction = 0.25;                    // of the base box side
  int cap = ProposalSet::kDefaultCap;

  void validate() const {
    ACTLOC_CHECK(!scales.empty() && !ratios.empty(), "grid needs scales and ratios");
    for (double s : scales) ACTLOC_CHECK(s > 0.0, "grid scale must be > 0");
    for (double r : ratios) ACTLOC_CHECK(r > 0.0, "grid ratio must be > 0");
    ACTLOC_CHECK(stride_fraction > 0.0, "grid stride fraction must be > 0");
  }
};

inline std::string proposal_file_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "props_%06d.txt", t);
  return buf;
}

namespace detail {

// Grid positions along one axis: step by `stride`, and always include the
// final flush-to-edge position.
inline std::vector<int> grid_positions(int extent, int box, int stride) {
  std::vector<int> out;
  if (box > extent) return out;
  for (int p = 0; p + box <= extent; p += stride) out.push_back(p);
  if (out.empty() || out.back() != extent - box) out.push_back(extent - box);
  return out;
}

}  // namespace detail

// Deterministic multi-scale grid with content-dependent objectness: the mean
// gradient magnitude of the frame's luma inside each box. Generation order
// (scale, then ratio, then row-major position) breaks objectness ties.
inline ProposalSet grid_proposals(const Frame& frame, int t,
                                  const GridParams& p = GridParams{}) {
  p.validate();
  Frame luma = to_luma(frame);
  const int w = luma.width, h = luma.height;

  // Integral image of central-difference gradient magnitude.
  std::vector<double> integral(std::size_t(w + 1) * (h + 1), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double gx = 0.5 * (double(luma.at_clamped(x + 1, y)) - luma.at_clamped(x - 1, y));
      double gy = 0.5 * (double(luma.at_clamped(x, y + 1)) - luma.at_clamped(x, y - 1));
      double mag = std::sqrt(gx * gx + gy * gy);
      integral[std::size_t(y + 1) * (w + 1) + (x + 1)] =
          mag + integral[std::size_t(y) * (w + 1) + (x + 1)] +
          integral[std::size_t(y + 1) * (w + 1) + x] -
          integral[std::size_t(y) * (w + 1) + x];
    }
  }
  auto rect_sum = [&](int x0, int y0, int x1, int y1) {
    return integral[std::size_t(y1) * (w + 1) + x1] -
           integral[std::size_t(y0) * (w + 1) + x1] -
           integral[std::size_t(y1) * (w + 1) + x0] +
           integral[std::size_t(y0) * (w + 1) + x0];
  };

  ProposalSet set;
  set.t = t;
  const double base = double(std::min(w, h));
  for (double scale : p.scales) {
    double side = scale * base;
    for (double ratio : p.ratios) {
      int bw = std::min(w, std::max(1, int(std::lround(side * std::sqrt(ratio)))));
      int bh = std::min(h, std::max(1, int(std::lround(side / std::sqrt(ratio)))));
      int stride = std::max(1, int(std::lround(p.stride_fraction * side)));
      for (int y : detail::grid_positions(h, bh, stride)) {
        for (int x : detail::grid_positions(w, bw, stride)) {
          double mean = rect_sum(x, y, x + bw, y + bh) / (double(bw) * bh);
          set.proposals.push_back({BoundingBox{double(x), double(y),
                                               double(bw), double(bh)},
                                   mean, t});
        }
      }
    }
  }
  set.finalize(p.cap);
  return set;
}

// Reads one frame's proposal file: rows `x y w h objectness`.
inline ProposalSet load_proposals(const std::filesystem::path& path, int t,
                                  int frame_w, int frame_h,
                                  int cap = ProposalSet::kDefaultCap) {
  std::string text = read_file(path);
  ProposalSet set;
  set.t = t;
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::vector<std::string> tok = split_ws(line);
    if (tok.empty()) continue;
    std::string origin = path.string() + ":" + std::to_string(lineno);
    if (tok.size() != 5)
      throw DataError(origin + ": expected 5 fields `x y w h objectness`, got " +
                      std::to_string(tok.size()));
    double x = parse_double(tok[0], origin);
    double y = parse_double(tok[1], origin);
    double bw = parse_double(tok[2], origin);
    double bh = parse_double(tok[3], origin);
    double obj = parse_double(tok[4], origin);
    if (bw <= 0.0 || bh <= 0.0)
      throw DataError(origin + ": invalid box, width and height must be > 0");
    BoundingBox box{x, y, bw, bh};
    if (!intersects_frame(box, frame_w, frame_h))
      throw DataError(origin + ": box outside the " + std::to_string(frame_w) +
                      "x" + std::to_string(frame_h) + " frame");
    set.proposals.push_back({box, obj, t});
  }
  set.finalize(cap);
  return set;
}

inline std::string encode_proposals(const ProposalSet& set) {
  std::string out;
  for (const Proposal& p : set.proposals) {
    out += fmt_double(p.box.x) + " " + fmt_double(p.box.y) + " " +
           fmt_double(p.box.w) + " " + fmt_double(p.box.h) + " " +
           fmt_double(p.objectness) + "\n";
  }
  return out;
}

inline void write_proposals(const std::filesystem::path& path,
                            const ProposalSet& set) {
  write_file_atomic(path, encode_proposals(set));
}

}  // namespace actloc
