#pragma once

// Spatio-temporal motion histogram track descriptor: per-chunk HOG / HOF /
// MBHx / MBHy histograms over N_t temporal and N_s x N_s spatial cells, plus
// chunk extraction and track-level scoring (mean over chunk scores).

#include <vector>

#include "actloc/common.hpp"
#include "actloc/features.hpp"
#include "actloc/flow.hpp"
#include "actloc/frame.hpp"
#include "actloc/svm.hpp"
#include "actloc/track.hpp"

namespace actloc {

struct StmhParams {
  int L = 15;        // chunk length in frames
  int stride = 5;    // chunk start spacing
  int nt = 3;        // temporal cells
  int ns = 8;        // spatial cells per axis
  double hof_zero_threshold = 0.04;  // px/frame, raw flow magnitude

  int dimension() const { return nt * ns * ns * (8 + 9 + 8 + 8); }
  void validate() const {
    ACTLOC_CHECK(L >= 1 && stride >= 1, "chunk length and stride must be >= 1");
    ACTLOC_CHECK(nt >= 1 && ns >= 1, "cell counts must be >= 1");
    ACTLOC_CHECK(hof_zero_threshold >= 0.0, "HOF zero threshold must be >= 0");
  }
};

struct Chunk {
  int start = 0;   // 1-based frame index, >= track start
  int length = 0;  // start + length - 1 <= track end
};

// Chunk starts every `stride` frames while a full L-frame chunk fits; a track
// shorter than L yields one truncated chunk covering the whole track.
inline std::vector<Chunk> extract_chunks(const Track& track, int L = 15,
                                         int stride = 5) {
  ACTLOC_CHECK(track.length() >= 1, "extract_chunks on empty track");
  std::vector<Chunk> out;
  if (track.length() < L) {
    out.push_back({track.first_frame, track.length()});
    return out;
  }
  for (int s = track.first_frame; s + L - 1 <= track.last_frame(); s += stride)
    out.push_back({s, L});
  return out;
}

// Flow for frame t (1-based) in a video of T frames: flows[t-1] maps frame t
// to t+1; the last frame reuses the preceding flow so every frame has one.
inline const FlowField& flow_for_frame(const std::vector<FlowField>& flows,
                                       int t, int total_frames) {
  ACTLOC_CHECK(int(flows.size()) == total_frames - 1 || total_frames == 1,
               "flow count must be frame count - 1");
  if (total_frames == 1) {
    ACTLOC_CHECK(!flows.empty(), "single-frame video needs one zero flow");
    return flows[0];
  }
  int i = std::min(t - 1, total_frames - 2);
  return flows[std::size_t(i)];
}

namespace detail {

// Per-cell channel layout inside the 33-float block.
constexpr int kHogOff = 0, kHogBins = 8;
constexpr int kHofOff = 8, kHofBins = 9;  // 8 orientations + trailing zero bin
constexpr int kMbhxOff = 17, kMbhyOff = 25, kMbhBins = 8;
constexpr int kCellFloats = 33;

}  // namespace detail

// Descriptor of one chunk of a track. Frames are assigned to nt equal
// temporal cells (remainder to the last); each frame's box is split into an
// ns x ns grid at integer pixel boundaries (remainder columns/rows to the
// last cell). Every cell-channel histogram is L2-normalized independently.
// Concatenation: temporal cell, then spatial cell row-major, then channels
// HOG, HOF, MBHx, MBHy.
inline FeatureVec stmh_descriptor(const Track& track, const Chunk& chunk,
                                  const VideoSequence& luma,
                                  const std::vector<FlowField>& flows,
                                  const StmhParams& p = StmhParams{}) {
  p.validate();
  ACTLOC_CHECK(chunk.start >= track.first_frame &&
                   chunk.start + chunk.length - 1 <= track.last_frame(),
               "chunk outside track span");
  if (chunk.start < 1 || chunk.start + chunk.length - 1 > int(luma.frames.size()))
    throw DataError("stmh_descriptor: chunk needs frames " +
                    std::to_string(chunk.start) + ".." +
                    std::to_string(chunk.start + chunk.length - 1) +
                    " but video has " + std::to_string(luma.frames.size()));

  FeatureVec desc(std::size_t(p.dimension()), 0.0f);
  const int T = int(luma.frames.size());
  const int base = chunk.length / p.nt;

  for (int f = 0; f < chunk.length; ++f) {
    const int t = chunk.start + f;
    int tc = base > 0 ? std::min(f / base, p.nt - 1) : p.nt - 1;
    const Frame& img = luma.frame(t);
    ACTLOC_CHECK(img.channels == 1, "stmh_descriptor expects luma frames");
    const FlowField& flow = flow_for_frame(flows, t, T);

    PixelRect r = pixel_rect(track.box_at(t), img.width, img.height);
    if (r.empty()) continue;
    const int w = r.width(), h = r.height();
    const int cw = std::max(1, w / p.ns);
    const int ch = std::max(1, h / p.ns);

    auto uat = [&](int x, int y) {
      return flow.u[std::size_t(std::clamp(y, 0, flow.height - 1)) * flow.width +
                    std::clamp(x, 0, flow.width - 1)];
    };
    auto vat = [&](int x, int y) {
      return flow.v[std::size_t(std::clamp(y, 0, flow.height - 1)) * flow.width +
                    std::clamp(x, 0, flow.width - 1)];
    };

    for (int y = r.y0; y < r.y1; ++y) {
      int cy = std::min((y - r.y0) / ch, p.ns - 1);
      for (int x = r.x0; x < r.x1; ++x) {
        int cx = std::min((x - r.x0) / cw, p.ns - 1);
        float* cell = desc.data() +
                      std::size_t((tc * p.ns * p.ns + cy * p.ns + cx)) *
                          detail::kCellFloats;

        double gx = 0.5 * (double(img.at_clamped(x + 1, y)) - img.at_clamped(x - 1, y));
        double gy = 0.5 * (double(img.at_clamped(x, y + 1)) - img.at_clamped(x, y - 1));
        double gm = std::sqrt(gx * gx + gy * gy);
        if (gm > 0.0)
          detail::orient_vote(detail::atan2_deg(gy, gx), gm, detail::kHogBins,
                              cell + detail::kHogOff);

        double u = uat(x, y), v = vat(x, y);
        double fm = std::sqrt(u * u + v * v);
        if (fm < p.hof_zero_threshold) {
          cell[detail::kHofOff + detail::kHofBins - 1] += 1.0f;
        } else {
          detail::orient_vote(detail::atan2_deg(v, u), fm, detail::kHofBins - 1,
                              cell + detail::kHofOff);
        }

        double uxx = 0.5 * (uat(x + 1, y) - uat(x - 1, y));
        double uxy = 0.5 * (uat(x, y + 1) - uat(x, y - 1));
        double um = std::sqrt(uxx * uxx + uxy * uxy);
        if (um > 0.0)
          detail::orient_vote(detail::atan2_deg(uxy, uxx), um, detail::kMbhBins,
                              cell + detail::kMbhxOff);

        double vxx = 0.5 * (vat(x + 1, y) - vat(x - 1, y));
        double vxy = 0.5 * (vat(x, y + 1) - vat(x, y - 1));
        double vm = std::sqrt(vxx * vxx + vxy * vxy);
        if (vm > 0.0)
          detail::orient_vote(detail::atan2_deg(vxy, vxx), vm, detail::kMbhBins,
                              cell + detail::kMbhyOff);
      }
    }
  }

  const int cells = p.nt * p.ns * p.ns;
  for (int c = 0; c < cells; ++c) {
    float* cell = desc.data() + std::size_t(c) * detail::kCellFloats;
    detail::l2_normalize(cell + detail::kHogOff, detail::kHogBins);
    detail::l2_normalize(cell + detail::kHofOff, detail::kHofBins);
    detail::l2_normalize(cell + detail::kMbhxOff, detail::kMbhBins);
    detail::l2_normalize(cell + detail::kMbhyOff, detail::kMbhBins);
  }
  return desc;
}

// S_desc: mean linear score over the track's chunks.
inline double score_track_stmh(const ClassifierBank& bank, const std::string& c,
                               const Track& track, const VideoSequence& luma,
                               const std::vector<FlowField>& flows,
                               const StmhParams& p = StmhParams{}) {
  int ci = bank.class_index(c);
  if (ci < 0) throw DataError("unknown class '" + c + "' in STMH bank");
  std::vector<Chunk> chunks = extract_chunks(track, p.L, p.stride);
  double sum = 0.0;
  for (const Chunk& ch : chunks)
    sum += score(bank.models[std::size_t(ci)],
                 stmh_descriptor(track, ch, luma, flows, p));
  return sum / double(chunks.size());
}

}  // namespace actloc
