#pragma once

// End-to-end detection: top-k class selection from per-frame proposal scores,
// iterative non-overlapping track generation, sigmoid fusion of the track
// descriptor and class scores, temporal localization by sliding windows with
// per-class duration priors, and the per-frame linking baseline.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "actloc/common.hpp"
#include "actloc/eval.hpp"
#include "actloc/scorer.hpp"
#include "actloc/stmh.hpp"
#include "actloc/tracker.hpp"
#include "actloc/video_context.hpp"

namespace actloc {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct PipelineParams {
  int topk = 5;
  int ntracks = 2;
  double theta = 0.3;  // a new track's seed must stay below this IoU vs
                       // previous same-class tracks in its frame
  std::vector<int> window_lengths{20,  30,  40,  50,  60,  70, 80,
                                  90,  100, 150, 300, 450, 600};
  int window_stride = 10;
  double prior_epsilon = 0.5;
  bool cnn_average = false;  // average the per-frame class scores instead of
                             // summing them inside the fusion sigmoid
  double link_lambda = 1.0;  // transition weight of the linking baseline
  TrackerParams tracker;
  StmhParams stmh;

  void validate() const {
    ACTLOC_CHECK(topk >= 1 && ntracks >= 1, "topk and ntracks must be >= 1");
    ACTLOC_CHECK(theta >= 0.0 && theta <= 1.0, "theta must be in [0,1]");
    ACTLOC_CHECK(!window_lengths.empty(), "window length set must be non-empty");
    ACTLOC_CHECK(window_stride >= 1, "window stride must be >= 1");
    ACTLOC_CHECK(prior_epsilon >= 0.0, "prior smoothing must be >= 0");
    stmh.validate();
  }
};

// Classes ranked by their video-level score: the maximum class score over
// every proposal of every frame. Descending; ties by class name. Returns
// indices into scorer.classes(), at most k.
inline std::vector<int> select_classes(const VideoContext& v,
                                       const RegionScorer& scorer, int k = 5) {
  const int nc = int(scorer.classes().size());
  std::vector<double> best(std::size_t(nc), -1e300);
  bool any = false;
  for (int t = 1; t <= v.num_frames(); ++t) {
    const ProposalSet& ps = v.proposals(t);
    for (int i = 0; i < int(ps.proposals.size()); ++i) {
      any = true;
      for (int c = 0; c < nc; ++c)
        best[std::size_t(c)] =
            std::max(best[std::size_t(c)], scorer.score_proposal(v, t, i, c));
    }
  }
  if (!any) return {};
  std::vector<int> order(static_cast<std::size_t>(nc));
  for (int c = 0; c < nc; ++c) order[std::size_t(c)] = c;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (best[std::size_t(a)] != best[std::size_t(b)])
      return best[std::size_t(a)] > best[std::size_t(b)];
    return scorer.classes()[std::size_t(a)] < scorer.classes()[std::size_t(b)];
  });
  if (int(order.size()) > k) order.resize(std::size_t(k));
  return order;
}

// Up to `ntracks` tracks for one class. Each iteration seeds the tracker at
// the highest-scoring proposal whose IoU with every previous track's box in
// its frame stays below theta, and stops early when no proposal qualifies.
inline std::vector<Track> generate_tracks(const VideoContext& v, int cls,
                                          const RegionScorer& scorer,
                                          const PipelineParams& p) {
  std::vector<std::vector<double>> scores(std::size_t(v.num_frames()));
  for (int t = 1; t <= v.num_frames(); ++t) {
    const ProposalSet& ps = v.proposals(t);
    auto& row = scores[std::size_t(t - 1)];
    row.reserve(ps.proposals.size());
    for (int i = 0; i < int(ps.proposals.size()); ++i)
      row.push_back(scorer.score_proposal(v, t, i, cls));
  }

  std::vector<Track> tracks;
  for (int n = 0; n < p.ntracks; ++n) {
    int best_t = 0, best_i = -1;
    double best_s = 0.0;
    for (int t = 1; t <= v.num_frames(); ++t) {
      const ProposalSet& ps = v.proposals(t);
      for (int i = 0; i < int(ps.proposals.size()); ++i) {
        double s = scores[std::size_t(t - 1)][std::size_t(i)];
        if (best_i >= 0 && s <= best_s) continue;
        bool clear = true;
        for (const Track& prev : tracks) {
          if (box_iou(ps.proposals[std::size_t(i)].box, prev.box_at(t)) >= p.theta) {
            clear = false;
            break;
          }
        }
        if (clear) {
          best_t = t;
          best_i = i;
          best_s = s;
        }
      }
    }
    if (best_i < 0) break;
    tracks.push_back(track(v, v.proposals(best_t).proposals[std::size_t(best_i)].box,
                           best_t, cls, scorer, p.tracker));
  }
  return tracks;
}

namespace detail {

// Per-frame class scores along a track: reuses the scores recorded during
// tracking/linking when present, otherwise evaluates the scorer on each box.
inline std::vector<double> track_cnn_scores(const Track& tr, const VideoContext& v,
                                            const RegionScorer& scorer) {
  if (tr.score_class.size() == tr.boxes.size() && !tr.score_class.empty())
    return tr.score_class;
  int cls = -1;
  for (int c = 0; c < int(scorer.classes().size()); ++c)
    if (scorer.classes()[std::size_t(c)] == tr.cls) cls = c;
  if (cls < 0) throw DataError("unknown class '" + tr.cls + "' in scorer");
  std::vector<double> out;
  out.reserve(tr.boxes.size());
  for (int t = tr.first_frame; t <= tr.last_frame(); ++t)
    out.push_back(scorer.score_box(v, t, tr.box_at(t), cls));
  return out;
}

}  // namespace detail

// Eq. 2 fusion: sigmoid of the descriptor score plus sigmoid of the summed
// (or averaged) per-frame class scores. Always in (0, 2).
inline double fuse_score(const Track& tr, const ClassifierBank& stmh_bank,
                         const VideoContext& v, const RegionScorer& scorer,
                         const StmhParams& stmh = StmhParams{},
                         bool cnn_average = false) {
  ACTLOC_CHECK(tr.length() >= 1, "fuse_score on empty track");
  double s_desc = score_track_stmh(stmh_bank, tr.cls, tr, v.luma(), v.flows(), stmh);
  std::vector<double> cnn = detail::track_cnn_scores(tr, v, scorer);
  double s_cnn = 0.0;
  for (double s : cnn) s_cnn += s;
  if (cnn_average) s_cnn /= double(cnn.size());
  return sigmoid(s_desc) + sigmoid(s_cnn);
}

// ---------------------------------------------------------------------------
// Duration priors.

struct DurationPrior {
  std::vector<int> lengths;  // ascending window lengths = bin centers
  std::map<std::string, std::vector<double>> per_class;  // mass per bin

  // Nearest bin by absolute distance; equidistant durations take the shorter.
  int bin_of(int duration) const {
    ACTLOC_CHECK(!lengths.empty(), "duration prior has no bins");
    int best = 0;
    for (int i = 1; i < int(lengths.size()); ++i)
      if (std::abs(lengths[std::size_t(i)] - duration) <
          std::abs(lengths[std::size_t(best)] - duration))
        best = i;
    return best;
  }

  double weight(const std::string& cls, int duration) const {
    auto it = per_class.find(cls);
    if (it == per_class.end())
      throw DataError("duration prior has no class '" + cls + "'");
    return it->second[std::size_t(bin_of(duration))];
  }
};

// Empirical duration frequencies per class, binned to the nearest window
// length with additive smoothing; each class's mass sums to 1.
inline DurationPrior learn_duration_prior(
    const std::vector<GroundTruthInstance>& gts,
    const std::vector<int>& window_lengths, double epsilon = 0.5) {
  ACTLOC_CHECK(!window_lengths.empty(), "window length set must be non-empty");
  DurationPrior prior;
  prior.lengths = window_lengths;
  std::sort(prior.lengths.begin(), prior.lengths.end());

  std::map<std::string, std::vector<double>> counts;
  for (const auto& g : gts) {
    auto& row = counts
                    .try_emplace(g.cls, std::vector<double>(prior.lengths.size(), 0.0))
                    .first->second;
    row[std::size_t(prior.bin_of(g.t_end() - g.t_begin + 1))] += 1.0;
  }
  for (auto& [cls, row] : counts) {
    double total = 0.0;
    for (double c : row) total += c + epsilon;
    ACTLOC_CHECK(total > 0.0, "duration prior normalization needs mass");
    std::vector<double> mass(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) mass[i] = (row[i] + epsilon) / total;
    prior.per_class.emplace(cls, std::move(mass));
  }
  return prior;
}

// Prior file: `lengths L1 L2 ...` then one `class m1 m2 ...` row per class.
inline std::string encode_prior(const DurationPrior& p) {
  std::string out = "lengths";
  for (int l : p.lengths) out += " " + std::to_string(l);
  out += "\n";
  for (const auto& [cls, mass] : p.per_class) {
    out += cls;
    for (double m : mass) out += " " + fmt_double(m);
    out += "\n";
  }
  return out;
}

inline DurationPrior decode_prior(const std::string& text,
                                  const std::string& origin) {
  detail::LineReader lr(text, origin);
  std::vector<std::string> tok;
  if (!lr.next(&tok) || tok.size() < 2 || tok[0] != "lengths")
    throw DataError(origin + ": prior file must start with `lengths L1 ...`");
  DurationPrior p;
  for (std::size_t i = 1; i < tok.size(); ++i)
    p.lengths.push_back(int(parse_int(tok[i], lr.origin())));
  while (lr.next(&tok)) {
    if (tok.size() != p.lengths.size() + 1)
      throw DataError(lr.origin() + ": expected class plus " +
                      std::to_string(p.lengths.size()) + " masses");
    std::vector<double> mass;
    for (std::size_t i = 1; i < tok.size(); ++i)
      mass.push_back(parse_double(tok[i], lr.origin()));
    if (!p.per_class.emplace(tok[0], std::move(mass)).second)
      throw DataError(lr.origin() + ": duplicate prior class " + tok[0]);
  }
  return p;
}

inline void write_prior(const std::filesystem::path& path, const DurationPrior& p) {
  write_file_atomic(path, encode_prior(p));
}

inline DurationPrior read_prior(const std::filesystem::path& path) {
  return decode_prior(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Temporal localization.

// Best temporal window of a track: all starts at the given stride for every
// admissible window length (plus one full-track window when the track is
// shorter than every listed length), scored by the fused sub-track score
// times the class's duration-prior weight. Ties prefer the earlier start,
// then the shorter window. Chunk scores are cached by absolute start, which
// matches per-window chunking exactly because window starts step by the
// stride (10) and chunks by 5.
inline Detection temporal_localize(const Track& tr, const VideoContext& v,
                                   const RegionScorer& scorer,
                                   const ClassifierBank& stmh_bank,
                                   const DurationPrior& prior,
                                   const PipelineParams& p) {
  p.validate();
  ACTLOC_CHECK(tr.length() >= 1, "temporal_localize on empty track");

  const int ci = [&] {
    int idx = -1;
    for (int c = 0; c < int(stmh_bank.classes.size()); ++c)
      if (stmh_bank.classes[std::size_t(c)] == tr.cls) idx = c;
    if (idx < 0) throw DataError("unknown class '" + tr.cls + "' in STMH bank");
    return idx;
  }();
  const LinearModel& stmh_model = stmh_bank.models[std::size_t(ci)];

  std::vector<double> cnn = detail::track_cnn_scores(tr, v, scorer);
  std::vector<double> cnn_prefix(cnn.size() + 1, 0.0);
  for (std::size_t i = 0; i < cnn.size(); ++i)
    cnn_prefix[i + 1] = cnn_prefix[i] + cnn[i];

  // Chunk scores at every start aligned to the chunk stride from the track's
  // first frame, covering a full L-frame chunk.
  std::map<int, double> chunk_score;
  auto chunk_at = [&](int start) {
    auto it = chunk_score.find(start);
    if (it != chunk_score.end()) return it->second;
    double s = score(stmh_model,
                     stmh_descriptor(tr, Chunk{start, p.stmh.L}, v.luma(),
                                     v.flows(), p.stmh));
    chunk_score.emplace(start, s);
    return s;
  };

  // Score of window [s, s+len-1] per Eq. 2 restricted to the window.
  auto window_score = [&](int s, int len) {
    double s_desc;
    if (len < p.stmh.L) {
      Track sub;
      sub.cls = tr.cls;
      sub.first_frame = s;
      sub.boxes.assign(tr.boxes.begin() + (s - tr.first_frame),
                       tr.boxes.begin() + (s - tr.first_frame) + len);
      s_desc = score(stmh_model, stmh_descriptor(sub, Chunk{s, len}, v.luma(),
                                                 v.flows(), p.stmh));
    } else {
      double sum = 0.0;
      int n = 0;
      for (int a = s; a + p.stmh.L - 1 <= s + len - 1; a += p.stmh.stride) {
        sum += chunk_at(a);
        ++n;
      }
      s_desc = sum / double(n);
    }
    std::size_t lo = std::size_t(s - tr.first_frame);
    double s_cnn = cnn_prefix[lo + std::size_t(len)] - cnn_prefix[lo];
    if (p.cnn_average) s_cnn /= double(len);
    return sigmoid(s_desc) + sigmoid(s_cnn);
  };

  int best_start = tr.first_frame, best_len = tr.length();
  double best = -1.0;
  bool any_window = false;
  for (int len : p.window_lengths) {
    if (len > tr.length()) continue;
    for (int s = tr.first_frame; s + len - 1 <= tr.last_frame();
         s += p.window_stride) {
      any_window = true;
      double w = window_score(s, len) * prior.weight(tr.cls, len);
      if (w > best || (w == best && (s < best_start ||
                                     (s == best_start && len < best_len)))) {
        best = w;
        best_start = s;
        best_len = len;
      }
    }
  }
  if (!any_window) {
    best_start = tr.first_frame;
    best_len = tr.length();
    best = window_score(best_start, best_len) * prior.weight(tr.cls, best_len);
  }

  Detection det;
  det.video_id = v.id();
  det.cls = tr.cls;
  det.score = best;
  det.t_begin = best_start;
  det.boxes.assign(tr.boxes.begin() + (best_start - tr.first_frame),
                   tr.boxes.begin() + (best_start - tr.first_frame) + best_len);
  return det;
}

// ---------------------------------------------------------------------------
// Whole-video drivers.

inline std::vector<Detection> detect(const VideoContext& v,
                                     const RegionScorer& scorer,
                                     const ClassifierBank& stmh_bank,
                                     const DurationPrior& prior,
                                     const PipelineParams& p = PipelineParams{}) {
  p.validate();
  std::vector<int> classes = select_classes(v, scorer, p.topk);
  std::vector<Detection> dets;
  for (int cls : classes) {
    for (const Track& tr : generate_tracks(v, cls, scorer, p))
      dets.push_back(temporal_localize(tr, v, scorer, stmh_bank, prior, p));
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.score > b.score;
                   });
  return dets;
}

// Per-frame proposal linking baseline: the best path over consecutive frames
// maximizing summed class scores plus lambda-weighted IoU between successive
// picks (Viterbi over proposal indices). Frames without proposals break the
// path; the longest contiguous run of non-empty frames is used (earliest run
// on ties).
inline Track link_tracks_baseline(const VideoContext& v, int cls,
                                  const RegionScorer& scorer,
                                  double lambda = 1.0) {
  int run_start = 0, run_len = 0, cur_start = 0, cur_len = 0;
  for (int t = 1; t <= v.num_frames(); ++t) {
    if (!v.proposals(t).proposals.empty()) {
      if (cur_len == 0) cur_start = t;
      ++cur_len;
      if (cur_len > run_len) {
        run_len = cur_len;
        run_start = cur_start;
      }
    } else {
      cur_len = 0;
    }
  }
  if (run_len == 0)
    throw DataError("linking baseline needs at least one frame with proposals");

  const int a = run_start, b = run_start + run_len - 1;
  std::vector<std::vector<double>> value(static_cast<std::size_t>(run_len));
  std::vector<std::vector<int>> from(static_cast<std::size_t>(run_len));
  for (int t = a; t <= b; ++t) {
    const ProposalSet& ps = v.proposals(t);
    std::size_t k = std::size_t(t - a);
    value[k].resize(ps.proposals.size());
    from[k].assign(ps.proposals.size(), -1);
    for (int i = 0; i < int(ps.proposals.size()); ++i) {
      double s = scorer.score_proposal(v, t, i, cls);
      if (t == a) {
        value[k][std::size_t(i)] = s;
        continue;
      }
      const ProposalSet& prev = v.proposals(t - 1);
      double best = -1e300;
      int best_j = -1;
      for (int j = 0; j < int(prev.proposals.size()); ++j) {
        double cand = value[k - 1][std::size_t(j)] +
                      lambda * box_iou(prev.proposals[std::size_t(j)].box,
                                       ps.proposals[std::size_t(i)].box);
        if (cand > best) {
          best = cand;
          best_j = j;
        }
      }
      value[k][std::size_t(i)] = s + best;
      from[k][std::size_t(i)] = best_j;
    }
  }

  int pick = 0;
  for (int i = 1; i < int(value.back().size()); ++i)
    if (value.back()[std::size_t(i)] > value.back()[std::size_t(pick)]) pick = i;

  Track tr;
  tr.cls = scorer.classes().at(std::size_t(cls));
  tr.first_frame = a;
  tr.seed_frame = a;
  tr.boxes.assign(std::size_t(run_len), BoundingBox{});
  tr.score_inst.assign(std::size_t(run_len), 0.0);
  tr.score_class.assign(std::size_t(run_len), 0.0);
  for (int t = b; t >= a; --t) {
    std::size_t k = std::size_t(t - a);
    tr.boxes[k] = v.proposals(t).proposals[std::size_t(pick)].box;
    tr.score_class[k] = scorer.score_proposal(v, t, pick, cls);
    pick = t > a ? from[k][std::size_t(pick)] : 0;
  }
  return tr;
}

// Linking-strategy counterpart of detect(), for the tracking-vs-linking
// comparison: one linked track per selected class, fused and localized the
// same way as tracker output.
inline std::vector<Detection> detect_linked(const VideoContext& v,
                                            const RegionScorer& scorer,
                                            const ClassifierBank& stmh_bank,
                                            const DurationPrior& prior,
                                            const PipelineParams& p = PipelineParams{}) {
  p.validate();
  std::vector<int> classes = select_classes(v, scorer, p.topk);
  std::vector<Detection> dets;
  for (int cls : classes) {
    Track tr = link_tracks_baseline(v, cls, scorer, p.link_lambda);
    dets.push_back(temporal_localize(tr, v, scorer, stmh_bank, prior, p));
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.score > b.score;
                   });
  return dets;
}

}  // namespace actloc
