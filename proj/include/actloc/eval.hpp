#pragma once

// Detection-quality metrics: spatio-temporal IoU, per-class average precision
// with duplicate suppression, mAP, ROC/AUC, and the recall-track diagnostic;
// plus the detection and ground-truth file formats they consume.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "actloc/common.hpp"
#include "actloc/geometry.hpp"
#include "actloc/track.hpp"

namespace actloc {

struct Detection {
  std::string video_id;
  std::string cls;
  double score = 0.0;
  int t_begin = 1;                 // 1-based, inclusive
  std::vector<BoundingBox> boxes;  // one per frame of [t_begin, t_end]

  int t_end() const { return t_begin + int(boxes.size()) - 1; }
};

struct GroundTruthInstance {
  std::string video_id;
  std::string cls;
  int t_begin = 1;
  std::vector<BoundingBox> boxes;

  int t_end() const { return t_begin + int(boxes.size()) - 1; }
};

// A per-frame box sequence viewed as a tube, whatever struct it came from.
struct TubeView {
  int t_begin = 1;
  const std::vector<BoundingBox>* boxes = nullptr;

  int t_end() const { return t_begin + int(boxes->size()) - 1; }
};

inline TubeView tube(const Detection& d) { return {d.t_begin, &d.boxes}; }
inline TubeView tube(const GroundTruthInstance& g) { return {g.t_begin, &g.boxes}; }
inline TubeView tube(const Track& t) { return {t.first_frame, &t.boxes}; }

// Temporal IoU of the inclusive frame intervals, multiplied by the mean
// per-frame box IoU over the frames both tubes cover.
inline double st_iou(TubeView a, TubeView b) {
  int lo = std::max(a.t_begin, b.t_begin);
  int hi = std::min(a.t_end(), b.t_end());
  if (lo > hi) return 0.0;
  int inter = hi - lo + 1;
  int uni = (a.t_end() - a.t_begin + 1) + (b.t_end() - b.t_begin + 1) - inter;
  double t_iou = double(inter) / double(uni);
  double box_sum = 0.0;
  for (int t = lo; t <= hi; ++t)
    box_sum += box_iou((*a.boxes)[std::size_t(t - a.t_begin)],
                       (*b.boxes)[std::size_t(t - b.t_begin)]);
  return t_iou * (box_sum / double(inter));
}

inline double st_iou(const Detection& d, const GroundTruthInstance& g) {
  return st_iou(tube(d), tube(g));
}

// Mean per-frame box IoU over shared frames, ignoring the temporal factor.
inline double spatial_overlap(TubeView a, TubeView b) {
  int lo = std::max(a.t_begin, b.t_begin);
  int hi = std::min(a.t_end(), b.t_end());
  if (lo > hi) return 0.0;
  double box_sum = 0.0;
  for (int t = lo; t <= hi; ++t)
    box_sum += box_iou((*a.boxes)[std::size_t(t - a.t_begin)],
                       (*b.boxes)[std::size_t(t - b.t_begin)]);
  return box_sum / double(hi - lo + 1);
}

namespace detail {

// Greedy matching in descending score order (ties by input order): each
// detection of the class claims the unmatched same-video GT with the highest
// st_iou, and is a true positive iff that IoU is strictly above delta.
// Returns per-detection labels in the sorted order, plus the sorted order.
struct MatchResult {
  std::vector<std::size_t> order;  // indices into the class's detections
  std::vector<bool> is_tp;         // parallel to order
  std::size_t num_gt = 0;
};

inline MatchResult match_class(const std::vector<const Detection*>& dets,
                               const std::vector<const GroundTruthInstance*>& gts,
                               double delta) {
  MatchResult res;
  res.num_gt = gts.size();
  res.order.resize(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) res.order[i] = i;
  std::stable_sort(res.order.begin(), res.order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return dets[a]->score > dets[b]->score;
                   });
  std::vector<bool> gt_used(gts.size(), false);
  res.is_tp.assign(dets.size(), false);
  for (std::size_t k = 0; k < res.order.size(); ++k) {
    const Detection& d = *dets[res.order[k]];
    double best = 0.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g] || gts[g]->video_id != d.video_id) continue;
      double o = st_iou(tube(d), tube(*gts[g]));
      if (o > best) {
        best = o;
        best_g = g;
      }
    }
    if (best_g < gts.size() && best > delta) {
      gt_used[best_g] = true;
      res.is_tp[k] = true;
    }
  }
  return res;
}

}  // namespace detail

// Average precision for one class via every-point PR interpolation.
// Undefined (nullopt) when the class has no ground truth.
inline std::optional<double> average_precision(
    const std::vector<Detection>& detections,
    const std::vector<GroundTruthInstance>& gts, double delta,
    const std::string& cls) {
  std::vector<const Detection*> dets;
  for (const auto& d : detections)
    if (d.cls == cls) dets.push_back(&d);
  std::vector<const GroundTruthInstance*> cls_gts;
  for (const auto& g : gts)
    if (g.cls == cls) cls_gts.push_back(&g);
  if (cls_gts.empty()) return std::nullopt;
  if (dets.empty()) return 0.0;

  detail::MatchResult m = detail::match_class(dets, cls_gts, delta);
  std::size_t n = m.order.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (m.is_tp[k]) ++tp;
    precision[k] = double(tp) / double(k + 1);
    recall[k] = double(tp) / double(m.num_gt);
  }
  double ap = 0.0, envelope = 0.0;
  double step = 1.0 / double(m.num_gt);
  for (std::size_t k = n; k-- > 0;) {
    envelope = std::max(envelope, precision[k]);
    if (m.is_tp[k]) ap += step * envelope;
  }
  return ap;
}

struct EvalResult {
  std::vector<std::pair<std::string, double>> per_class_ap;  // defined classes
  std::vector<std::string> undefined_classes;                // zero-GT classes
  double map = 0.0;
};

// Unweighted mean of the APs of every class that has ground truth. Classes
// appearing only in detections are reported as undefined, not averaged.
inline EvalResult mean_ap(const std::vector<Detection>& detections,
                          const std::vector<GroundTruthInstance>& gts,
                          double delta) {
  std::vector<std::string> classes;
  for (const auto& g : gts) classes.push_back(g.cls);
  for (const auto& d : detections) classes.push_back(d.cls);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  EvalResult res;
  double sum = 0.0;
  for (const auto& c : classes) {
    std::optional<double> ap = average_precision(detections, gts, delta, c);
    if (ap) {
      res.per_class_ap.emplace_back(c, *ap);
      sum += *ap;
    } else {
      res.undefined_classes.push_back(c);
    }
  }
  if (!res.per_class_ap.empty()) res.map = sum / double(res.per_class_ap.size());
  return res;
}

struct RocResult {
  std::vector<std::pair<double, double>> points;  // (fpr, tpr)
  double auc = 0.0;
};

// ROC over the whole detection set: labels come from the per-class greedy
// matching used by AP; the threshold sweeps distinct scores descending.
// TPR denominator = total ground truth; FPR denominator = total detections
// not matched as true positives. With no false positive anywhere the curve
// degenerates and AUC is defined as the final TPR.
inline RocResult roc_auc(const std::vector<Detection>& detections,
                         const std::vector<GroundTruthInstance>& gts,
                         double delta) {
  std::vector<std::string> classes;
  for (const auto& g : gts) classes.push_back(g.cls);
  for (const auto& d : detections) classes.push_back(d.cls);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  std::vector<bool> is_tp(detections.size(), false);
  for (const auto& c : classes) {
    std::vector<const Detection*> dets;
    std::vector<std::size_t> det_idx;
    for (std::size_t i = 0; i < detections.size(); ++i) {
      if (detections[i].cls == c) {
        dets.push_back(&detections[i]);
        det_idx.push_back(i);
      }
    }
    std::vector<const GroundTruthInstance*> cls_gts;
    for (const auto& g : gts)
      if (g.cls == c) cls_gts.push_back(&g);
    if (dets.empty() || cls_gts.empty()) continue;  // unmatched stay FP
    detail::MatchResult m = detail::match_class(dets, cls_gts, delta);
    for (std::size_t k = 0; k < m.order.size(); ++k)
      if (m.is_tp[k]) is_tp[det_idx[m.order[k]]] = true;
  }

  std::vector<std::size_t> order(detections.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });

  std::size_t total_fp = 0;
  for (bool b : is_tp)
    if (!b) ++total_fp;
  const std::size_t total_gt = gts.size();

  RocResult res;
  res.points.emplace_back(0.0, 0.0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (is_tp[order[k]]) ++tp;
    else ++fp;
    bool boundary = k + 1 == order.size() ||
                    detections[order[k + 1]].score != detections[order[k]].score;
    if (boundary) {
      double tpr = total_gt ? double(tp) / double(total_gt) : 0.0;
      double fpr = total_fp ? double(fp) / double(total_fp) : 0.0;
      res.points.emplace_back(fpr, tpr);
    }
  }
  if (total_fp == 0) {
    res.auc = res.points.back().second;
    return res;
  }
  for (std::size_t i = 1; i < res.points.size(); ++i) {
    auto [x0, y0] = res.points[i - 1];
    auto [x1, y1] = res.points[i];
    res.auc += (x1 - x0) * 0.5 * (y0 + y1);
  }
  return res;
}

// Fraction of ground-truth instances covered by at least one generated track
// of the same video and class with overlap >= delta. `spatial_only` drops the
// temporal-IoU factor (tracks span whole clips; GT may not).
inline double recall_track(
    const std::vector<std::pair<std::string, Track>>& tracks,
    const std::vector<GroundTruthInstance>& gts, double delta = 0.5,
    bool spatial_only = false) {
  if (gts.empty()) return 0.0;
  std::size_t covered = 0;
  for (const auto& g : gts) {
    bool hit = false;
    for (const auto& [vid, tr] : tracks) {
      if (vid != g.video_id || tr.cls != g.cls) continue;
      double o = spatial_only ? spatial_overlap(tube(tr), tube(g))
                              : st_iou(tube(tr), tube(g));
      if (o >= delta) {
        hit = true;
        break;
      }
    }
    if (hit) ++covered;
  }
  return double(covered) / double(gts.size());
}

// ---------------------------------------------------------------------------
// Detection file: per detection a header `video_id class score t_b t_e`
// followed by one `t x y w h` row per frame of [t_b, t_e].
// Ground-truth file: the same with header `video_id class t_b t_e`.

namespace detail {

inline void encode_tube_frames(std::string& out, int t_begin,
                               const std::vector<BoundingBox>& boxes) {
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const BoundingBox& b = boxes[i];
    out += std::to_string(t_begin + int(i)) + " " + fmt_double(b.x) + " " +
           fmt_double(b.y) + " " + fmt_double(b.w) + " " + fmt_double(b.h) + "\n";
  }
}

struct LineReader {
  std::istringstream ss;
  std::string file;
  int lineno = 0;

  LineReader(const std::string& text, const std::string& origin)
      : ss(text), file(origin) {}
  std::string origin() const { return file + ":" + std::to_string(lineno); }
  // Skips blank lines and `#` comments.
  bool next(std::vector<std::string>* tok) {
    std::string line;
    while (std::getline(ss, line)) {
      ++lineno;
      *tok = split_ws(line);
      if (!tok->empty() && (*tok)[0][0] != '#') return true;
    }
    return false;
  }
};

inline std::vector<BoundingBox> read_tube_frames(LineReader& lr, int t_b, int t_e) {
  if (t_e < t_b)
    throw DataError(lr.origin() + ": extent end " + std::to_string(t_e) +
                    " precedes begin " + std::to_string(t_b));
  std::vector<BoundingBox> boxes;
  std::vector<std::string> tok;
  for (int t = t_b; t <= t_e; ++t) {
    if (!lr.next(&tok))
      throw DataError(lr.file + ": truncated tube, expected frame row for t=" +
                      std::to_string(t));
    if (tok.size() != 5)
      throw DataError(lr.origin() + ": expected `t x y w h`");
    long got = parse_int(tok[0], lr.origin());
    if (got != t)
      throw DataError(lr.origin() + ": expected frame " + std::to_string(t) +
                      ", got " + std::to_string(got));
    double x = parse_double(tok[1], lr.origin());
    double y = parse_double(tok[2], lr.origin());
    double w = parse_double(tok[3], lr.origin());
    double h = parse_double(tok[4], lr.origin());
    if (w <= 0.0 || h <= 0.0)
      throw DataError(lr.origin() + ": box width and height must be > 0");
    boxes.push_back({x, y, w, h});
  }
  return boxes;
}

}  // namespace detail

inline std::string encode_detections(const std::vector<Detection>& dets) {
  std::string out;
  for (const Detection& d : dets) {
    ACTLOC_CHECK(!d.boxes.empty(), "detection with empty tube");
    out += d.video_id + " " + d.cls + " " + fmt_double(d.score) + " " +
           std::to_string(d.t_begin) + " " + std::to_string(d.t_end()) + "\n";
    detail::encode_tube_frames(out, d.t_begin, d.boxes);
  }
  return out;
}

inline std::vector<Detection> decode_detections(const std::string& text,
                                                const std::string& origin) {
  detail::LineReader lr(text, origin);
  std::vector<Detection> out;
  std::vector<std::string> tok;
  while (lr.next(&tok)) {
    if (tok.size() != 5)
      throw DataError(lr.origin() +
                      ": expected detection header `video_id class score t_b t_e`");
    Detection d;
    d.video_id = tok[0];
    d.cls = tok[1];
    d.score = parse_double(tok[2], lr.origin());
    d.t_begin = int(parse_int(tok[3], lr.origin()));
    int t_e = int(parse_int(tok[4], lr.origin()));
    d.boxes = detail::read_tube_frames(lr, d.t_begin, t_e);
    out.push_back(std::move(d));
  }
  return out;
}

inline void write_detections(const std::filesystem::path& path,
                             const std::vector<Detection>& dets) {
  write_file_atomic(path, encode_detections(dets));
}

inline std::vector<Detection> read_detections(const std::filesystem::path& path) {
  return decode_detections(read_file(path), path.string());
}

inline std::string encode_ground_truth(const std::vector<GroundTruthInstance>& gts) {
  std::string out;
  for (const GroundTruthInstance& g : gts) {
    ACTLOC_CHECK(!g.boxes.empty(), "ground-truth instance with empty tube");
    out += g.video_id + " " + g.cls + " " + std::to_string(g.t_begin) + " " +
           std::to_string(g.t_end()) + "\n";
    detail::encode_tube_frames(out, g.t_begin, g.boxes);
  }
  return out;
}

inline std::vector<GroundTruthInstance> decode_ground_truth(
    const std::string& text, const std::string& origin) {
  detail::LineReader lr(text, origin);
  std::vector<GroundTruthInstance> out;
  std::vector<std::string> tok;
  while (lr.next(&tok)) {
    if (tok.size() != 4)
      throw DataError(lr.origin() +
                      ": expected ground-truth header `video_id class t_b t_e`");
    GroundTruthInstance g;
    g.video_id = tok[0];
    g.cls = tok[1];
    g.t_begin = int(parse_int(tok[2], lr.origin()));
    int t_e = int(parse_int(tok[3], lr.origin()));
    g.boxes = detail::read_tube_frames(lr, g.t_begin, t_e);
    out.push_back(std::move(g));
  }
  return out;
}

inline void write_ground_truth(const std::filesystem::path& path,
                               const std::vector<GroundTruthInstance>& gts) {
  write_file_atomic(path, encode_ground_truth(gts));
}

inline std::vector<GroundTruthInstance> read_ground_truth(
    const std::filesystem::path& path) {
  return decode_ground_truth(read_file(path), path.string());
}

}  // namespace actloc
