#pragma once

// Dataset-level training: per-class action classifiers on region features,
// per-class track-descriptor classifiers, and the duration prior.
//
// Action positives are the ground-truth boxes of each class; negatives are
// proposals below an IoU ceiling against every same-frame ground-truth box of
// that class. Descriptor positives are the chunk descriptors of ground-truth
// tracks; descriptor negatives are static cuboids grown from proposals that
// do not touch any ground-truth box at their center frame. Negative
// candidates are subsampled with seeds derived from (seed, video, frame), so
// results do not depend on job count or video order.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "actloc/common.hpp"
#include "actloc/dataset.hpp"
#include "actloc/eval.hpp"
#include "actloc/features.hpp"
#include "actloc/pipeline.hpp"
#include "actloc/stmh.hpp"
#include "actloc/svm.hpp"
#include "actloc/track.hpp"
#include "actloc/video_context.hpp"

namespace actloc {

struct TrainParams {
  ScorerConfig scorer;  // feature extraction (builtin histograms)
  FlowParams flow;
  GridParams grid;  // used for videos without stored proposals
  StmhParams stmh;
  SvmParams action_svm;
  SvmParams stmh_svm;
  double neg_iou = 0.3;        // action negatives stay below this overlap
  int neg_per_frame = 16;      // sampled negative candidates per frame
  int stmh_neg_per_video = 10;  // sampled cuboid negatives per video
  std::uint64_t seed = 1;
  std::filesystem::path flow_cache_dir;  // per-video subdirectories when set
  int jobs = 1;
  std::vector<int> window_lengths = PipelineParams{}.window_lengths;
  double prior_epsilon = 0.5;

  void validate() const {
    ACTLOC_CHECK(neg_iou > 0.0 && neg_iou <= 1.0,
                 "training negative iou must be in (0, 1]");
    ACTLOC_CHECK(neg_per_frame >= 1, "training needs >= 1 negative per frame");
    ACTLOC_CHECK(stmh_neg_per_video >= 1,
                 "training needs >= 1 cuboid negative per video");
    ACTLOC_CHECK(jobs >= 1, "jobs must be >= 1");
  }
};

struct TrainingData {
  std::vector<std::string> classes;
  std::vector<std::vector<FeatureVec>> action_pos;  // [class]
  std::vector<FeatureVec> action_neg;               // shared pool
  std::vector<std::vector<std::uint32_t>> action_neg_idx;  // [class] -> pool
  std::vector<std::vector<FeatureVec>> stmh_pos;    // [class]
  std::vector<FeatureVec> stmh_neg;                 // shared cuboid pool
  std::vector<GroundTruthInstance> all_gt;
};

namespace detail {

// First `cap` indices of a seeded shuffle of [0, count), restored to
// ascending order so downstream iteration stays positional.
inline std::vector<int> sampled_indices(int count, int cap,
                                        std::uint64_t key) {
  std::vector<int> idx(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) idx[std::size_t(i)] = i;
  if (count <= cap) return idx;
  std::mt19937 gen(std::uint32_t(mix64(key)));
  seeded_shuffle(idx, gen);
  idx.resize(std::size_t(cap));
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline std::vector<const BoundingBox*> gt_boxes_at(
    const std::vector<GroundTruthInstance>& gts, int t, const std::string* cls) {
  std::vector<const BoundingBox*> out;
  for (const auto& g : gts) {
    if (cls && g.cls != *cls) continue;
    if (t >= g.t_begin && t <= g.t_end())
      out.push_back(&g.boxes[std::size_t(t - g.t_begin)]);
  }
  return out;
}

struct VideoSamples {
  std::vector<std::vector<FeatureVec>> action_pos;
  std::vector<FeatureVec> action_neg;
  std::vector<std::vector<std::uint32_t>> action_neg_idx;
  std::vector<std::vector<FeatureVec>> stmh_pos;
  std::vector<FeatureVec> stmh_neg;
  std::vector<GroundTruthInstance> gts;
};

inline VideoSamples collect_video_samples(const Dataset& ds,
                                          const std::string& id,
                                          const std::vector<std::string>& classes,
                                          const TrainParams& p) {
  VideoContextParams vp;
  vp.scorer = p.scorer;
  vp.flow = p.flow;
  vp.grid = p.grid;
  vp.compute_features = false;  // features only for sampled boxes
  if (ds.has_proposals(id)) vp.proposals_dir = ds.proposals_dir(id);
  if (!p.flow_cache_dir.empty()) vp.flow_cache_dir = p.flow_cache_dir / id;
  VideoContext ctx(load_dataset_video(ds, id), vp);

  VideoSamples vs;
  const std::size_t nc = classes.size();
  vs.action_pos.resize(nc);
  vs.action_neg_idx.resize(nc);
  vs.stmh_pos.resize(nc);
  vs.gts = load_dataset_gt(ds, id);
  const int T = ctx.num_frames();
  for (const auto& g : vs.gts) {
    if (g.video_id != id)
      throw DataError(ds.gt_file(id).string() + ": instance labeled video '" +
                      g.video_id + "' inside video '" + id + "'");
    if (g.t_begin < 1 || g.t_end() > T)
      throw DataError(ds.gt_file(id).string() + ": instance spans frames " +
                      std::to_string(g.t_begin) + ".." +
                      std::to_string(g.t_end()) + " but video has " +
                      std::to_string(T));
  }

  // Action positives: every ground-truth box.
  for (const auto& g : vs.gts) {
    int ci = -1;
    for (std::size_t k = 0; k < nc; ++k)
      if (classes[k] == g.cls) ci = int(k);
    if (ci < 0)
      throw DataError(ds.gt_file(id).string() + ": class '" + g.cls +
                      "' is not in the dataset manifest");
    for (int t = g.t_begin; t <= g.t_end(); ++t)
      vs.action_pos[std::size_t(ci)].push_back(
          ctx.box_feature(t, g.boxes[std::size_t(t - g.t_begin)]));
  }

  // Action negatives: a per-frame sample of proposals, kept for each class
  // whose same-frame ground-truth boxes all overlap it below neg_iou.
  const std::uint64_t vid_key = hash_combine(p.seed, hash_str(id));
  for (int t = 1; t <= T; ++t) {
    const auto& props = ctx.proposals(t).proposals;
    std::vector<int> picks = sampled_indices(
        int(props.size()), p.neg_per_frame, hash_combine(vid_key, std::uint64_t(t)));
    for (int pi : picks) {
      const BoundingBox& b = props[std::size_t(pi)].box;
      std::uint32_t local = 0;
      bool used = false;
      for (std::size_t ci = 0; ci < nc; ++ci) {
        bool ok = true;
        for (const BoundingBox* gb : gt_boxes_at(vs.gts, t, &classes[ci]))
          if (box_iou(b, *gb) >= p.neg_iou) { ok = false; break; }
        if (!ok) continue;
        if (!used) {
          local = std::uint32_t(vs.action_neg.size());
          vs.action_neg.push_back(ctx.box_feature(t, b));
          used = true;
        }
        vs.action_neg_idx[ci].push_back(local);
      }
    }
  }

  // Descriptor positives: chunk descriptors of each ground-truth track.
  for (const auto& g : vs.gts) {
    Track tr;
    tr.cls = g.cls;
    tr.first_frame = g.t_begin;
    tr.boxes = g.boxes;
    int ci = -1;
    for (std::size_t k = 0; k < nc; ++k)
      if (classes[k] == g.cls) ci = int(k);
    for (const Chunk& ch : extract_chunks(tr, p.stmh.L, p.stmh.stride))
      vs.stmh_pos[std::size_t(ci)].push_back(
          stmh_descriptor(tr, ch, ctx.luma(), ctx.flows(), p.stmh));
  }

  // Descriptor negatives: static cuboids centered on proposals that have
  // zero overlap with every ground-truth box at the center frame.
  std::vector<std::pair<int, int>> cands;  // (t, proposal index)
  const int half = (p.stmh.L - 1) / 2;
  for (int t = 1; t <= T; ++t) {
    const int start = t - half;
    if (start < 1 || start + p.stmh.L - 1 > T) continue;
    auto gbs = gt_boxes_at(vs.gts, t, nullptr);
    const auto& props = ctx.proposals(t).proposals;
    for (std::size_t i = 0; i < props.size(); ++i) {
      bool clear = true;
      for (const BoundingBox* gb : gbs)
        if (box_iou(props[i].box, *gb) > 0.0) { clear = false; break; }
      if (clear) cands.emplace_back(t, int(i));
    }
  }
  {
    std::vector<int> picks = sampled_indices(
        int(cands.size()), p.stmh_neg_per_video,
        hash_combine(vid_key, 0x5354u));
    for (int k : picks) {
      auto [t, i] = cands[std::size_t(k)];
      Track tr;
      tr.first_frame = t - half;
      tr.boxes.assign(std::size_t(p.stmh.L), ctx.proposals(t).proposals[std::size_t(i)].box);
      vs.stmh_neg.push_back(stmh_descriptor(tr, {tr.first_frame, p.stmh.L},
                                            ctx.luma(), ctx.flows(), p.stmh));
    }
  }
  return vs;
}

}  // namespace detail

inline TrainingData collect_training_data(const Dataset& ds,
                                          const TrainParams& p) {
  p.validate();
  p.scorer.validate();
  p.stmh.validate();
  if (p.scorer.kind != ScorerKind::BuiltinHistogram)
    throw DataError("training requires the builtin feature extractor");
  TrainingData td;
  td.classes = ds.classes;
  const std::size_t nc = td.classes.size();
  td.action_pos.resize(nc);
  td.action_neg_idx.resize(nc);
  td.stmh_pos.resize(nc);

  std::vector<detail::VideoSamples> per_video(ds.video_ids.size());
  parallel_for(ds.video_ids.size(), p.jobs, [&](std::size_t vi) {
    per_video[vi] =
        detail::collect_video_samples(ds, ds.video_ids[vi], td.classes, p);
  });

  for (auto& vs : per_video) {
    const std::uint32_t base = std::uint32_t(td.action_neg.size());
    for (auto& f : vs.action_neg) td.action_neg.push_back(std::move(f));
    for (std::size_t ci = 0; ci < nc; ++ci) {
      for (std::uint32_t k : vs.action_neg_idx[ci])
        td.action_neg_idx[ci].push_back(base + k);
      for (auto& f : vs.action_pos[ci])
        td.action_pos[ci].push_back(std::move(f));
      for (auto& f : vs.stmh_pos[ci])
        td.stmh_pos[ci].push_back(std::move(f));
    }
    for (auto& f : vs.stmh_neg) td.stmh_neg.push_back(std::move(f));
    for (auto& g : vs.gts) td.all_gt.push_back(std::move(g));
    vs = detail::VideoSamples{};  // release as we go
  }
  return td;
}

inline ClassifierBank train_action_bank(const TrainingData& td,
                                        const SvmParams& base) {
  ClassifierBank bank;
  bank.classes = td.classes;
  for (std::size_t ci = 0; ci < td.classes.size(); ++ci) {
    const std::string& cls = td.classes[ci];
    if (td.action_pos[ci].empty())
      throw DataError("class '" + cls + "' has no positive examples");
    if (td.action_neg_idx[ci].empty())
      throw DataError("class '" + cls + "' has no negative candidates");
    std::vector<FeatureVec> pool;
    pool.reserve(td.action_neg_idx[ci].size());
    for (std::uint32_t k : td.action_neg_idx[ci])
      pool.push_back(td.action_neg[k]);
    SvmParams sp = base;
    sp.seed = hash_combine(base.seed, hash_str(cls));
    bank.models.push_back(train_mined(td.action_pos[ci], pool, sp));
  }
  bank.check();
  return bank;
}

inline ClassifierBank train_stmh_bank(const TrainingData& td,
                                      const SvmParams& base) {
  ClassifierBank bank;
  bank.classes = td.classes;
  for (std::size_t ci = 0; ci < td.classes.size(); ++ci) {
    const std::string& cls = td.classes[ci];
    if (td.stmh_pos[ci].empty())
      throw DataError("class '" + cls + "' has no positive examples");
    if (td.stmh_neg.empty())
      throw DataError("no cuboid negatives were sampled");
    SvmParams sp = base;
    sp.seed = hash_combine(base.seed, hash_str(cls) + 1);
    bank.models.push_back(train_mined(td.stmh_pos[ci], td.stmh_neg, sp));
  }
  bank.check();
  return bank;
}

struct TrainedModels {
  ClassifierBank action;
  ClassifierBank stmh;
  DurationPrior prior;
};

inline TrainedModels train_all(const Dataset& ds, const TrainParams& p) {
  TrainingData td = collect_training_data(ds, p);
  TrainedModels out;
  out.action = train_action_bank(td, p.action_svm);
  out.stmh = train_stmh_bank(td, p.stmh_svm);
  out.prior = learn_duration_prior(td.all_gt, p.window_lengths, p.prior_epsilon);
  return out;
}

}  // namespace actloc
