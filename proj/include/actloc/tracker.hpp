#pragma once

// Tracking-by-detection: seeded from one region, refined by a sliding-window
// search over a spatial/scale neighborhood, scored by the sum of an online
// instance-level detector and the class-level scorer, with a median-flow
// motion prior. The forward pass (tau+1..T) and backward pass (tau-1..1)
// share one evolving positive/negative/classifier state by default.

#include <optional>
#include <vector>

#include "actloc/common.hpp"
#include "actloc/flow.hpp"
#include "actloc/geometry.hpp"
#include "actloc/scorer.hpp"
#include "actloc/svm.hpp"
#include "actloc/track.hpp"
#include "actloc/video_context.hpp"

namespace actloc {

struct NeighborhoodParams {
  double rho = 0.1;  // offset step as a fraction of the box side, per axis
  int steps = 2;     // offsets in {-steps..steps} * delta
  std::vector<double> scales{0.8, 0.9, 1.0, 1.1, 1.2};

  void validate() const {
    ACTLOC_CHECK(rho > 0.0, "neighborhood rho must be > 0");
    ACTLOC_CHECK(steps >= 0, "neighborhood steps must be >= 0");
    ACTLOC_CHECK(!scales.empty(), "neighborhood needs >= 1 scale");
  }
};

enum class TrackMode { Combined, InstanceOnly, ClassOnly };

struct TrackerParams {
  NeighborhoodParams nb;
  SvmParams svm;           // seed, C, h; epochs used for the initial fit
  int update_epochs = 2;   // warm-started continuation per tracked frame
  double neg_iou = 0.1;    // proposals below this IoU with the track feed Neg
  TrackMode mode = TrackMode::Combined;
  bool backward_restart = false;  // restart the backward pass from the
                                  // post-init state instead of continuing
};

// Optional per-step observability for invariant tests.
struct TrackTrace {
  struct Step {
    int t = 0;
    bool pruned = false;             // hard-negative filter applied this step
    double min_retained_score = 0;   // min score of kept negatives at pruning
    double max_inserted_iou = 0;     // max IoU of negatives added this step
    std::size_t neg_size = 0;
    std::size_t pos_size = 0;
  };
  std::vector<Step> steps;
};

// Candidate list around `box`: the identity region first, then all
// (scale, dx, dy) combinations around the box center with per-axis step
// delta = round(rho * side). Candidates are clipped to the frame; zero-area
// results are dropped. Identity-first ordering plus strict-greater argmax
// means score ties keep the current region.
inline std::vector<BoundingBox> neighborhood(const BoundingBox& box, int frame_w,
                                             int frame_h,
                                             const NeighborhoodParams& p) {
  p.validate();
  std::vector<BoundingBox> out;
  out.reserve(std::size_t(p.scales.size()) * (2 * p.steps + 1) * (2 * p.steps + 1));
  if (auto c = clip_to_frame(box, frame_w, frame_h)) out.push_back(*c);

  const double dx_step = double(std::lround(p.rho * box.w));
  const double dy_step = double(std::lround(p.rho * box.h));
  const double cx = box.cx(), cy = box.cy();
  for (double s : p.scales) {
    double w = s * box.w, h = s * box.h;
    for (int dy = -p.steps; dy <= p.steps; ++dy) {
      for (int dx = -p.steps; dx <= p.steps; ++dx) {
        if (s == 1.0 && dx == 0 && dy == 0) continue;  // identity already first
        BoundingBox cand{cx - w / 2 + dx * dx_step, cy - h / 2 + dy * dy_step,
                         w, h};
        if (auto c = clip_to_frame(cand, frame_w, frame_h)) out.push_back(*c);
      }
    }
  }
  return out;
}

namespace detail {

struct TrackerState {
  LinearModel model;
  std::vector<FeatureVec> pos, neg;
  std::vector<BoundingBox> neg_boxes;  // parallel to neg, for the IoU guard
  std::mt19937 gen;
  std::uint64_t step = 0;
};

inline double candidate_score(const RegionScorer& scorer, int cls,
                              const LinearModel& inst, const FeatureVec& f,
                              TrackMode mode, double* s_inst, double* s_class) {
  *s_inst = score(inst, f);
  *s_class = scorer.score_feature(cls, f);
  switch (mode) {
    case TrackMode::InstanceOnly: return *s_inst;
    case TrackMode::ClassOnly: return *s_class;
    default: return *s_inst + *s_class;
  }
}

// Negatives from frame t's proposals with IoU below the threshold, appended
// with their boxes.
inline double add_negatives(TrackerState& st, const VideoContext& v, int t,
                            const BoundingBox& r, double neg_iou) {
  double max_iou = 0.0;
  const ProposalSet& ps = v.proposals(t);
  for (int i = 0; i < int(ps.proposals.size()); ++i) {
    const BoundingBox& pb = ps.proposals[std::size_t(i)].box;
    double iou = box_iou(pb, r);
    if (iou < neg_iou) {
      st.neg.push_back(v.proposal_feature(t, i));
      st.neg_boxes.push_back(pb);
      max_iou = std::max(max_iou, iou);
    }
  }
  return max_iou;
}

// Deterministic fallback negatives when frame tau has no qualifying
// proposal: up to `want` random boxes with IoU below the threshold.
inline void random_negatives(TrackerState& st, const VideoContext& v, int t,
                             const BoundingBox& r, double neg_iou, int want,
                             std::uint64_t seed) {
  std::mt19937 gen(std::uint32_t(mix64(seed ^ (std::uint64_t(t) << 32))));
  const int fw = v.width(), fh = v.height();
  int accepted = 0;
  for (int attempt = 0; attempt < 200 * want && accepted < want; ++attempt) {
    int bw = 4 + int(rng_below(gen, std::uint32_t(std::max(1, fw / 2 - 3))));
    int bh = 4 + int(rng_below(gen, std::uint32_t(std::max(1, fh / 2 - 3))));
    int x = int(rng_below(gen, std::uint32_t(std::max(1, fw - bw + 1))));
    int y = int(rng_below(gen, std::uint32_t(std::max(1, fh - bh + 1))));
    BoundingBox cand{double(x), double(y), double(bw), double(bh)};
    if (box_iou(cand, r) >= neg_iou) continue;
    st.neg.push_back(v.box_feature(t, cand));
    st.neg_boxes.push_back(cand);
    ++accepted;
  }
  if (accepted == 0)
    throw DataError("tracker: could not build any negative region in frame " +
                    std::to_string(t));
}

// Hard-negative pruning followed by a warm-started refit. An empty pruning
// result keeps the previous negative set (training needs >= 1 negative).
inline void update_model(TrackerState& st, const TrackerParams& p, int epochs,
                         TrackTrace::Step* trace) {
  std::vector<std::size_t> keep;
  keep.reserve(st.neg.size());
  double min_retained = 0.0;
  for (std::size_t i = 0; i < st.neg.size(); ++i) {
    double s = score(st.model, st.neg[i]);
    if (s >= p.svm.h) {
      if (keep.empty() || s < min_retained) min_retained = s;
      keep.push_back(i);
    }
  }
  if (!keep.empty() && keep.size() < st.neg.size()) {
    std::vector<FeatureVec> neg2;
    std::vector<BoundingBox> boxes2;
    neg2.reserve(keep.size());
    boxes2.reserve(keep.size());
    for (std::size_t i : keep) {
      neg2.push_back(std::move(st.neg[i]));
      boxes2.push_back(st.neg_boxes[i]);
    }
    st.neg = std::move(neg2);
    st.neg_boxes = std::move(boxes2);
  }
  if (trace) {
    trace->pruned = !keep.empty();
    trace->min_retained_score = keep.empty() ? 0.0 : min_retained;
  }
  sgd_epochs(st.model, st.pos, st.neg, p.svm, epochs, st.gen, st.step);
}

}  // namespace detail

struct TrackInit {
  BoundingBox r_tau;
  detail::TrackerState state;
};

// Alg. 1 initialization: refine the seed by the class score alone, take the
// refined region as the single positive, and all frame-tau proposals with
// IoU below the threshold as negatives (random boxes when none qualify).
inline TrackInit init_track(const VideoContext& v, const BoundingBox& seed,
                            int tau, int cls, const RegionScorer& scorer,
                            const TrackerParams& p = TrackerParams{}) {
  p.svm.validate();
  if (!scorer.has_features())
    throw DataError("tracking requires a scorer with region features; "
                    "precomputed score tables only cover fixed proposals");
  if (!intersects_frame(seed, v.width(), v.height()))
    throw DataError("track seed lies outside the frame");
  ACTLOC_CHECK(tau >= 1 && tau <= v.num_frames(), "seed frame out of range");

  std::vector<BoundingBox> cands = neighborhood(seed, v.width(), v.height(), p.nb);
  ACTLOC_CHECK(!cands.empty(), "empty tracking neighborhood");
  BoundingBox best = cands[0];
  double best_score = scorer.score_box(v, tau, cands[0], cls);
  for (std::size_t i = 1; i < cands.size(); ++i) {
    double s = scorer.score_box(v, tau, cands[i], cls);
    if (s > best_score) {
      best_score = s;
      best = cands[i];
    }
  }

  TrackInit init;
  init.r_tau = best;
  init.state.gen.seed(std::uint32_t(mix64(p.svm.seed)));
  FeatureVec seed_f = scorer.box_feature(v, tau, best);
  init.state.model = LinearModel(seed_f.size());
  init.state.pos.push_back(std::move(seed_f));
  detail::add_negatives(init.state, v, tau, best, p.neg_iou);
  if (init.state.neg.empty())
    detail::random_negatives(init.state, v, tau, best, p.neg_iou, 20, p.svm.seed);
  detail::sgd_epochs(init.state.model, init.state.pos, init.state.neg, p.svm,
                     p.svm.epochs, init.state.gen, init.state.step);
  return init;
}

// Full Alg. 1: forward pass tau+1..T, then backward pass tau-1..1. Each step
// shifts the previous region by the median flow inside it (reversed in time
// on the backward pass), takes the argmax of the summed scores over the
// neighborhood, grows Neg from low-overlap proposals, prunes Neg to hard
// negatives, appends the chosen region to Pos, and refits the instance model.
inline Track track(const VideoContext& v, const BoundingBox& seed, int tau,
                   int cls, const RegionScorer& scorer,
                   const TrackerParams& p = TrackerParams{},
                   TrackTrace* trace = nullptr) {
  const int T = v.num_frames();
  TrackInit init = init_track(v, seed, tau, cls, scorer, p);

  Track tr;
  tr.cls = scorer.classes().at(std::size_t(cls));
  tr.first_frame = 1;
  tr.seed_frame = tau;
  tr.boxes.assign(std::size_t(T), BoundingBox{});
  tr.score_inst.assign(std::size_t(T), 0.0);
  tr.score_class.assign(std::size_t(T), 0.0);

  detail::TrackerState st = std::move(init.state);
  {
    FeatureVec f = scorer.box_feature(v, tau, init.r_tau);
    tr.boxes[std::size_t(tau - 1)] = init.r_tau;
    tr.score_inst[std::size_t(tau - 1)] = score(st.model, f);
    tr.score_class[std::size_t(tau - 1)] = scorer.score_feature(cls, f);
  }

  std::optional<detail::TrackerState> snapshot;
  if (p.backward_restart) snapshot = st;

  auto step_to = [&](int t, int from, bool backward) {
    const BoundingBox& prev = tr.boxes[std::size_t(from - 1)];

    // Motion prior: flow(from -> from+1) drives forward steps; backward steps
    // reuse the flow leaving frame t (t -> t+1 = from) with its sign flipped.
    BoundingBox guess = prev;
    if (T > 1) {
      const FlowField& fl = backward ? v.flow(t) : v.flow(from);
      auto [du, dv] = median_shift(fl, prev);
      if (backward) {
        du = -du;
        dv = -dv;
      }
      BoundingBox shifted{prev.x + du, prev.y + dv, prev.w, prev.h};
      if (intersects_frame(shifted, v.width(), v.height())) guess = shifted;
    }

    std::vector<BoundingBox> cands = neighborhood(guess, v.width(), v.height(), p.nb);
    ACTLOC_CHECK(!cands.empty(), "empty tracking neighborhood");
    BoundingBox best = cands[0];
    double best_total = -1e300, best_inst = 0.0, best_class = 0.0;
    for (const BoundingBox& cand : cands) {
      FeatureVec f = scorer.box_feature(v, t, cand);
      double si, sc;
      double total = detail::candidate_score(scorer, cls, st.model, f, p.mode,
                                             &si, &sc);
      if (total > best_total) {
        best_total = total;
        best = cand;
        best_inst = si;
        best_class = sc;
      }
    }
    tr.boxes[std::size_t(t - 1)] = best;
    tr.score_inst[std::size_t(t - 1)] = best_inst;
    tr.score_class[std::size_t(t - 1)] = best_class;

    TrackTrace::Step step;
    step.t = t;
    step.max_inserted_iou = detail::add_negatives(st, v, t, best, p.neg_iou);
    st.pos.push_back(scorer.box_feature(v, t, best));
    detail::update_model(st, p, p.update_epochs, trace ? &step : nullptr);
    if (trace) {
      step.neg_size = st.neg.size();
      step.pos_size = st.pos.size();
      trace->steps.push_back(step);
    }
  };

  for (int t = tau + 1; t <= T; ++t) step_to(t, t - 1, false);
  if (p.backward_restart && snapshot) st = std::move(*snapshot);
  for (int t = tau - 1; t >= 1; --t) step_to(t, t + 1, true);

  return tr;
}

}  // namespace actloc
