#pragma once

// Region features standing in for the two-stream CNN descriptor: pooled
// orientation histograms of luma gradients (appearance) and of the encoded
// optical flow (motion), plus the per-class classifier bank and the
// precomputed-score table.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "actloc/common.hpp"
#include "actloc/frame.hpp"
#include "actloc/geometry.hpp"
#include "actloc/svm.hpp"

namespace actloc {

enum class ScorerKind { BuiltinHistogram, Precomputed };

struct ScorerConfig {
  ScorerKind kind = ScorerKind::BuiltinHistogram;
  int grid = 4;        // g x g pooling cells
  int bins = 8;        // orientation bins per cell
  bool use_motion = true;
  int patch = 64;      // patch side for crop_resize'd extraction

  int dimension() const { return (use_motion ? 2 : 1) * grid * grid * bins; }
  void validate() const {
    ACTLOC_CHECK(grid >= 1, "scorer grid must be >= 1");
    ACTLOC_CHECK(bins >= 2, "scorer bins must be >= 2");
    ACTLOC_CHECK(patch >= 2, "scorer patch side must be >= 2");
  }
};

namespace detail {

// Soft assignment over signed orientation: `bins` bins covering 360 degrees
// with bin k centered at k * (360/bins). A vote splits linearly between the
// two nearest centers, so an angle exactly on a center lands in one bin and
// rotating by a whole number of bin widths shifts the histogram cyclically.
inline void orient_vote(double angle_deg, double weight, int bins, float* hist) {
  if (weight <= 0.0) return;
  double bw = 360.0 / bins;
  double p = angle_deg / bw;
  double k0f = std::floor(p);
  double frac = p - k0f;
  int k0 = int(k0f) % bins;
  if (k0 < 0) k0 += bins;
  int k1 = (k0 + 1) % bins;
  hist[k0] += float((1.0 - frac) * weight);
  hist[k1] += float(frac * weight);
}

// Octant-reduced polynomial atan2 in degrees. Exact on the axes and exactly
// equivariant under quarter-turn rotations (the polynomial always sees the
// same reduced ratio), which the orientation histograms rely on; roughly 1e-3
// degree accuracy elsewhere, and much cheaper than std::atan2 in the
// per-pixel voting loops.
inline double atan_deg_unit(double z) {  // atan(z) for z in [0,1]
  double t = z * z;
  double r = z * (0.9999772562898301 +
                  t * (-0.3326228800333368 +
                       t * (0.1935397061787799 +
                            t * (-0.1164322893808371 +
                                 t * (0.0526527001404505 +
                                      t * (-0.0117212008489743))))));
  return r * (180.0 / 3.14159265358979323846);
}

inline double atan2_deg(double y, double x) {
  if (y == 0.0) return x >= 0.0 ? 0.0 : 180.0;
  if (x == 0.0) return y > 0.0 ? 90.0 : 270.0;
  double ax = std::abs(x), ay = std::abs(y);
  double a = ay <= ax ? atan_deg_unit(ay / ax) : 90.0 - atan_deg_unit(ax / ay);
  if (x < 0.0) a = 180.0 - a;
  return y < 0.0 ? 360.0 - a : a;
}

inline void l2_normalize(float* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += double(v[i]) * v[i];
  if (s <= 0.0) return;  // all-zero stays all-zero
  double inv = 1.0 / std::sqrt(s);
  for (std::size_t i = 0; i < n; ++i) v[i] = float(v[i] * inv);
}

// Bilinear patch of one channel with the same half-pixel mapping as
// crop_resize, kept in doubles so brightness shifts pass through exactly.
inline std::vector<double> sample_patch(const Frame& f, const BoundingBox& box,
                                        int side, int channel) {
  std::vector<double> out(std::size_t(side) * side);
  double sx = box.w / side, sy = box.h / side;
  for (int j = 0; j < side; ++j) {
    double src_y = box.y + (j + 0.5) * sy - 0.5;
    for (int i = 0; i < side; ++i) {
      double src_x = box.x + (i + 0.5) * sx - 0.5;
      out[std::size_t(j) * side + i] = sample_bilinear(f, src_x, src_y, channel);
    }
  }
  return out;
}

}  // namespace detail

// Pooled orientation-histogram feature of a region: appearance half from luma
// gradients of the resampled patch, motion half (optional) from the flow
// image's magnitude-weighted flow directions. Halves are L2-normalized
// separately, concatenated, and renormalized.
inline FeatureVec region_feature(const Frame& frame, const Frame& flow_img,
                                 const BoundingBox& box, const ScorerConfig& cfg) {
  cfg.validate();
  ACTLOC_CHECK(cfg.kind == ScorerKind::BuiltinHistogram,
               "region_feature requires the builtin scorer config");
  if (cfg.use_motion) {
    ACTLOC_CHECK(flow_img.channels == 3, "flow image must have 3 channels");
    if (frame.width != flow_img.width || frame.height != flow_img.height)
      throw DataError("region_feature: frame and flow image dimensions differ");
  }
  if (!intersects_frame(box, frame.width, frame.height))
    throw DataError("region_feature: box lies fully outside the frame");

  const int P = cfg.patch, g = cfg.grid, B = cfg.bins;
  const int half = g * g * B;
  FeatureVec out(std::size_t(cfg.dimension()), 0.0f);

  const Frame* lumap = &frame;
  Frame luma_local;
  if (frame.channels != 1) {
    luma_local = to_luma(frame);
    lumap = &luma_local;
  }

  std::vector<double> patch = detail::sample_patch(*lumap, box, P, 0);
  auto pat = [&](int x, int y) {
    x = std::clamp(x, 0, P - 1);
    y = std::clamp(y, 0, P - 1);
    return patch[std::size_t(y) * P + x];
  };
  auto cell_of = [&](int x, int y) {
    int cx = std::min(g - 1, x * g / P);
    int cy = std::min(g - 1, y * g / P);
    return (cy * g + cx) * B;
  };
  for (int y = 0; y < P; ++y) {
    for (int x = 0; x < P; ++x) {
      double gx = 0.5 * (pat(x + 1, y) - pat(x - 1, y));
      double gy = 0.5 * (pat(x, y + 1) - pat(x, y - 1));
      double mag = std::sqrt(gx * gx + gy * gy);
      if (mag > 0.0)
        detail::orient_vote(detail::atan2_deg(gy, gx), mag, B,
                            out.data() + cell_of(x, y));
    }
  }
  detail::l2_normalize(out.data(), std::size_t(half));

  if (cfg.use_motion) {
    std::vector<double> fu = detail::sample_patch(flow_img, box, P, 0);
    std::vector<double> fv = detail::sample_patch(flow_img, box, P, 1);
    std::vector<double> fm = detail::sample_patch(flow_img, box, P, 2);
    float* mhist = out.data() + half;
    for (int y = 0; y < P; ++y) {
      for (int x = 0; x < P; ++x) {
        std::size_t i = std::size_t(y) * P + x;
        double u = (fu[i] - 128.0) / 16.0;
        double v = (fv[i] - 128.0) / 16.0;
        double w = fm[i] / 16.0;
        if (w > 0.0 && (u != 0.0 || v != 0.0))
          detail::orient_vote(detail::atan2_deg(v, u), w, cfg.bins,
                              mhist + cell_of(x, y));
      }
    }
    detail::l2_normalize(mhist, std::size_t(half));
  }

  detail::l2_normalize(out.data(), out.size());
  return out;
}

// ---------------------------------------------------------------------------
// Per-class linear classifiers sharing one feature dimension.

struct ClassifierBank {
  std::vector<std::string> classes;
  std::vector<LinearModel> models;  // parallel to classes

  int class_index(const std::string& c) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == c) return int(i);
    return -1;
  }
  std::size_t dim() const { return models.empty() ? 0 : models[0].dim(); }
  void check() const {
    ACTLOC_CHECK(classes.size() == models.size(), "bank class/model count mismatch");
    for (const auto& m : models)
      ACTLOC_CHECK(m.dim() == dim(), "bank models disagree on dimension");
  }
};

using ActionClassifierBank = ClassifierBank;
using StmhClassifierBank = ClassifierBank;

inline double score_region(const ClassifierBank& bank, const std::string& c,
                           const FeatureVec& f) {
  int i = bank.class_index(c);
  if (i < 0) throw DataError("unknown class '" + c + "' in classifier bank");
  return score(bank.models[std::size_t(i)], f);
}

// Bank persistence: `classes.txt` listing class names in order, plus one
// model file `model_<class>.stlm` per class.
inline void save_bank(const std::filesystem::path& dir, const ClassifierBank& bank,
                      const std::string& manifest_name = "classes.txt") {
  bank.check();
  std::filesystem::create_directories(dir);
  std::string manifest;
  for (const auto& c : bank.classes) manifest += c + "\n";
  write_file_atomic(dir / manifest_name, manifest);
  for (std::size_t i = 0; i < bank.classes.size(); ++i)
    write_model(dir / ("model_" + bank.classes[i] + ".stlm"), bank.models[i]);
}

inline ClassifierBank load_bank(const std::filesystem::path& dir,
                                const std::string& manifest_name = "classes.txt") {
  ClassifierBank bank;
  std::filesystem::path mpath = dir / manifest_name;
  std::istringstream ss(read_file(mpath));
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    bank.classes.push_back(line);
    bank.models.push_back(read_model(dir / ("model_" + line + ".stlm")));
  }
  if (bank.classes.empty())
    throw DataError("empty classifier bank manifest: " + mpath.string());
  bank.check();
  return bank;
}

// ---------------------------------------------------------------------------
// Precomputed region scores, keyed by (video, frame, proposal index, class).
// Rows: `video_id frame_idx proposal_idx class_name score`.

struct PrecomputedScores {
  std::map<std::tuple<std::string, int, int, std::string>, double> table;

  double lookup(const std::string& video_id, int t, int prop_idx,
                const std::string& cls) const {
    auto it = table.find(std::make_tuple(video_id, t, prop_idx, cls));
    if (it == table.end())
      throw DataError("precomputed score missing for key video=" + video_id +
                      " frame=" + std::to_string(t) +
                      " proposal=" + std::to_string(prop_idx) + " class=" + cls);
    return it->second;
  }

  std::vector<std::string> class_names() const {
    std::vector<std::string> out;
    for (const auto& [key, unused] : table) {
      const std::string& c = std::get<3>(key);
      if (out.empty() || out.back() != c) {
        bool seen = false;
        for (const auto& e : out) seen = seen || e == c;
        if (!seen) out.push_back(c);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

inline PrecomputedScores load_precomputed_scores(const std::filesystem::path& path) {
  PrecomputedScores ps;
  std::istringstream ss(read_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::vector<std::string> tok = split_ws(line);
    if (tok.empty()) continue;
    std::string origin = path.string() + ":" + std::to_string(lineno);
    if (tok.size() != 5)
      throw DataError(origin +
                      ": expected `video_id frame_idx proposal_idx class score`");
    auto key = std::make_tuple(tok[0], int(parse_int(tok[1], origin)),
                               int(parse_int(tok[2], origin)), tok[3]);
    double val = parse_double(tok[4], origin);
    if (!ps.table.emplace(key, val).second)
      throw DataError(origin + ": duplicate key video=" + tok[0] + " frame=" +
                      tok[1] + " proposal=" + tok[2] + " class=" + tok[3]);
  }
  return ps;
}

}  // namespace actloc
