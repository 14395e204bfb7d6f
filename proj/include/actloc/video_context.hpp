#pragma once

// Everything derived from one video that the pipeline reads repeatedly: luma
// frames, frame-to-frame flow (optionally disk-cached), flow images, per-frame
// proposals (loaded or grid-generated), and optionally the feature of every
// proposal. All of it is computed in the constructor; a constructed context
// is strictly read-only and safe to share across threads.

#include <filesystem>
#include <vector>

#include "actloc/common.hpp"
#include "actloc/features.hpp"
#include "actloc/flow.hpp"
#include "actloc/frame.hpp"
#include "actloc/proposals.hpp"

namespace actloc {

struct VideoContextParams {
  ScorerConfig scorer;
  FlowParams flow;
  GridParams grid;
  std::filesystem::path proposals_dir;   // load props_*.txt when set, else grid
  std::filesystem::path flow_cache_dir;  // reuse/write STFL files when set
  bool compute_features = true;          // per-proposal features (detect path)
};

class VideoContext {
 public:
  VideoContext(VideoSequence video, VideoContextParams params = {})
      : params_(std::move(params)), video_(std::move(video)) {
    ACTLOC_CHECK(!video_.frames.empty(), "video context needs >= 1 frame");
    params_.scorer.validate();
    params_.flow.validate();
    const int T = num_frames();

    luma_.id = video_.id;
    luma_.frames.reserve(std::size_t(T));
    for (const Frame& f : video_.frames) luma_.frames.push_back(to_luma(f));

    if (T == 1) {
      flows_.emplace_back(width(), height());  // zero flow keeps lookups total
    } else {
      flows_.reserve(std::size_t(T) - 1);
      for (int t = 1; t < T; ++t) {
        if (!params_.flow_cache_dir.empty()) {
          std::filesystem::path p = params_.flow_cache_dir / flow_cache_name(t);
          if (std::filesystem::exists(p)) {
            FlowField f = read_flow(p);
            if (f.width != width() || f.height != height())
              throw DataError("flow cache " + p.string() +
                              " does not match video dimensions");
            flows_.push_back(std::move(f));
            continue;
          }
          flows_.push_back(estimate_flow(luma_.frames[std::size_t(t - 1)],
                                         luma_.frames[std::size_t(t)],
                                         params_.flow));
          std::filesystem::create_directories(params_.flow_cache_dir);
          write_flow(p, flows_.back());
        } else {
          flows_.push_back(estimate_flow(luma_.frames[std::size_t(t - 1)],
                                         luma_.frames[std::size_t(t)],
                                         params_.flow));
        }
      }
    }

    flow_images_.reserve(std::size_t(T));
    for (int t = 1; t <= T; ++t)
      flow_images_.push_back(flow_to_image(flow_for_frame_internal(t)));

    proposals_.reserve(std::size_t(T));
    for (int t = 1; t <= T; ++t) {
      if (!params_.proposals_dir.empty()) {
        proposals_.push_back(load_proposals(
            params_.proposals_dir / proposal_file_name(t), t, width(), height(),
            params_.grid.cap));
      } else {
        proposals_.push_back(grid_proposals(video_.frames[std::size_t(t - 1)], t,
                                            params_.grid));
      }
    }

    if (params_.compute_features &&
        params_.scorer.kind == ScorerKind::BuiltinHistogram) {
      features_.resize(std::size_t(T));
      for (int t = 1; t <= T; ++t) {
        const ProposalSet& ps = proposals_[std::size_t(t - 1)];
        auto& row = features_[std::size_t(t - 1)];
        row.reserve(ps.proposals.size());
        for (const Proposal& pr : ps.proposals)
          row.push_back(extract_feature(t, pr.box));
      }
    }
  }

  const std::string& id() const { return video_.id; }
  int num_frames() const { return int(video_.frames.size()); }
  int width() const { return video_.frames[0].width; }
  int height() const { return video_.frames[0].height; }
  const VideoSequence& video() const { return video_; }
  const VideoSequence& luma() const { return luma_; }
  const ScorerConfig& scorer_config() const { return params_.scorer; }

  // Flow from frame t to t+1, t in 1..T-1.
  const FlowField& flow(int t) const {
    ACTLOC_CHECK(t >= 1 && t <= int(flows_.size()), "flow index out of range");
    return flows_[std::size_t(t - 1)];
  }
  const std::vector<FlowField>& flows() const { return flows_; }

  // Flow image for frame t, t in 1..T (the last frame reuses the final flow).
  const Frame& flow_image(int t) const {
    ACTLOC_CHECK(t >= 1 && t <= num_frames(), "flow image index out of range");
    return flow_images_[std::size_t(t - 1)];
  }

  const ProposalSet& proposals(int t) const {
    ACTLOC_CHECK(t >= 1 && t <= num_frames(), "proposal frame out of range");
    return proposals_[std::size_t(t - 1)];
  }
  const std::vector<ProposalSet>& all_proposals() const { return proposals_; }

  bool has_proposal_features() const { return !features_.empty(); }

  // Feature of proposal i in frame t: precomputed when available, extracted
  // on the fly otherwise.
  FeatureVec proposal_feature(int t, int i) const {
    const ProposalSet& ps = proposals(t);
    ACTLOC_CHECK(i >= 0 && i < int(ps.proposals.size()),
                 "proposal index out of range");
    if (!features_.empty()) return features_[std::size_t(t - 1)][std::size_t(i)];
    return extract_feature(t, ps.proposals[std::size_t(i)].box);
  }

  const std::vector<std::vector<FeatureVec>>& proposal_features() const {
    ACTLOC_CHECK(!features_.empty(), "proposal features were not computed");
    return features_;
  }

  // Builtin region feature for an arbitrary box in frame t.
  FeatureVec box_feature(int t, const BoundingBox& box) const {
    ACTLOC_CHECK(t >= 1 && t <= num_frames(), "frame index out of range");
    return extract_feature(t, box);
  }

 private:
  const FlowField& flow_for_frame_internal(int t) const {
    int i = std::min(t - 1, int(flows_.size()) - 1);
    return flows_[std::size_t(std::max(0, i))];
  }
  FeatureVec extract_feature(int t, const BoundingBox& box) const {
    return region_feature(luma_.frames[std::size_t(t - 1)],
                          flow_images_[std::size_t(t - 1)], box, params_.scorer);
  }

  VideoContextParams params_;
  VideoSequence video_;
  VideoSequence luma_;
  std::vector<FlowField> flows_;
  std::vector<Frame> flow_images_;
  std::vector<ProposalSet> proposals_;
  std::vector<std::vector<FeatureVec>> features_;
};

}  // namespace actloc
