#pragma once

// The class-level region scorer contract (S_CNN stand-in). Two
// implementations: the builtin pooled-histogram features with a trained
// classifier bank, and a precomputed score table keyed by proposal index for
// injecting externally produced scores.

#include <memory>
#include <string>
#include <vector>

#include "actloc/features.hpp"
#include "actloc/video_context.hpp"

namespace actloc {

class RegionScorer {
 public:
  virtual ~RegionScorer() = default;

  virtual const std::vector<std::string>& classes() const = 0;

  // True when the scorer can produce region features for arbitrary boxes.
  // The tracker requires this (its instance detector trains on features).
  virtual bool has_features() const = 0;

  virtual FeatureVec box_feature(const VideoContext& v, int t,
                                 const BoundingBox& box) const = 0;
  virtual double score_feature(int cls, const FeatureVec& f) const = 0;
  virtual double score_box(const VideoContext& v, int t, const BoundingBox& box,
                           int cls) const = 0;
  virtual double score_proposal(const VideoContext& v, int t, int prop_idx,
                                int cls) const = 0;
};

class BuiltinScorer final : public RegionScorer {
 public:
  explicit BuiltinScorer(ClassifierBank bank) : bank_(std::move(bank)) {
    bank_.check();
    ACTLOC_CHECK(!bank_.classes.empty(), "builtin scorer needs >= 1 class");
  }

  const ClassifierBank& bank() const { return bank_; }
  const std::vector<std::string>& classes() const override { return bank_.classes; }
  bool has_features() const override { return true; }

  FeatureVec box_feature(const VideoContext& v, int t,
                         const BoundingBox& box) const override {
    return v.box_feature(t, box);
  }
  double score_feature(int cls, const FeatureVec& f) const override {
    return score(model(cls), f);
  }
  double score_box(const VideoContext& v, int t, const BoundingBox& box,
                   int cls) const override {
    return score(model(cls), v.box_feature(t, box));
  }
  double score_proposal(const VideoContext& v, int t, int prop_idx,
                        int cls) const override {
    return score(model(cls), v.proposal_feature(t, prop_idx));
  }

 private:
  const LinearModel& model(int cls) const {
    ACTLOC_CHECK(cls >= 0 && cls < int(bank_.classes.size()),
                 "class index out of range");
    return bank_.models[std::size_t(cls)];
  }
  ClassifierBank bank_;
};

class PrecomputedScorer final : public RegionScorer {
 public:
  explicit PrecomputedScorer(PrecomputedScores table)
      : table_(std::move(table)), classes_(table_.class_names()) {
    if (classes_.empty())
      throw DataError("precomputed score table contains no classes");
  }

  const std::vector<std::string>& classes() const override { return classes_; }
  bool has_features() const override { return false; }

  FeatureVec box_feature(const VideoContext&, int, const BoundingBox&) const override {
    throw DataError(
        "precomputed scores cover proposal-indexed regions only; "
        "arbitrary-region features require the builtin scorer");
  }
  double score_feature(int, const FeatureVec&) const override {
    throw DataError("precomputed scorer has no feature-space models");
  }
  double score_box(const VideoContext&, int t, const BoundingBox&,
                   int cls) const override {
    throw DataError("precomputed score missing for key frame=" +
                    std::to_string(t) + " class=" + cls_name(cls) +
                    ": arbitrary boxes are not in the table");
  }
  double score_proposal(const VideoContext& v, int t, int prop_idx,
                        int cls) const override {
    return table_.lookup(v.id(), t, prop_idx, cls_name(cls));
  }

 private:
  const std::string& cls_name(int cls) const {
    ACTLOC_CHECK(cls >= 0 && cls < int(classes_.size()), "class index out of range");
    return classes_[std::size_t(cls)];
  }
  PrecomputedScores table_;
  std::vector<std::string> classes_;
};

}  // namespace actloc
