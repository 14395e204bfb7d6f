#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "actloc/dataset_synth.hpp"
#include "actloc/pipeline.hpp"
#include "actloc/training.hpp"
#include "test_util.hpp"

namespace {

using namespace actloc;
namespace fs = std::filesystem;

ScorerConfig cheap_config() {
  ScorerConfig cfg;
  cfg.grid = 2;
  cfg.bins = 4;
  cfg.use_motion = false;
  cfg.patch = 16;
  return cfg;
}

Frame noise_frame(int w, int h, std::uint64_t seed, int scale) {
  Frame f(w, h, 1, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      f.at(x, y, 0) =
          std::uint8_t(std::lround(value_noise(x, y, seed, scale) * 255.0));
  return f;
}

// Identical frames: zero flow, so tracks under a constant class score stay
// exactly on their seed box (tracker identity-tie rule).
VideoSequence static_video(int T, int w, int h, std::uint64_t seed,
                           const std::string& id = "vid") {
  VideoSequence v;
  v.id = id;
  v.frames.assign(std::size_t(T), noise_frame(w, h, seed, 6));
  return v;
}

// Per-frame proposal files; all rows share one objectness so the on-disk
// order survives the load-time sort.
void write_props_per_frame(const fs::path& dir,
                           const std::vector<std::vector<BoundingBox>>& frames) {
  fs::create_directories(dir);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    ProposalSet set;
    for (const BoundingBox& b : frames[k]) set.proposals.push_back({b, 1.0, 0});
    write_proposals(dir / proposal_file_name(int(k) + 1), set);
  }
}

void write_props_all_frames(const fs::path& dir, int T,
                            const std::vector<BoundingBox>& boxes) {
  write_props_per_frame(dir, std::vector<std::vector<BoundingBox>>(
                                 std::size_t(T), boxes));
}

VideoContext make_ctx(VideoSequence video, const fs::path& props_dir) {
  VideoContextParams vp;
  vp.scorer = cheap_config();
  vp.proposals_dir = props_dir;
  vp.compute_features = false;
  return VideoContext(std::move(video), vp);
}

// Proposal scores come from a (frame, index, class) table; features delegate
// to the context and feature scores are constant, so tracking under this
// scorer holds seeds still on static videos.
class TableScorer final : public RegionScorer {
 public:
  explicit TableScorer(std::vector<std::string> names, double fallback = -1.0)
      : names_(std::move(names)), fallback_(fallback) {}
  void set(int t, int i, int cls, double s) { table_[{t, i, cls}] = s; }
  const std::vector<std::string>& classes() const override { return names_; }
  bool has_features() const override { return true; }
  FeatureVec box_feature(const VideoContext& v, int t,
                         const BoundingBox& b) const override {
    return v.box_feature(t, b);
  }
  double score_feature(int, const FeatureVec&) const override { return 0.0; }
  double score_box(const VideoContext&, int, const BoundingBox&,
                   int) const override {
    return 0.0;
  }
  double score_proposal(const VideoContext&, int t, int i,
                        int cls) const override {
    auto it = table_.find({t, i, cls});
    return it == table_.end() ? fallback_ : it->second;
  }

 private:
  std::vector<std::string> names_;
  double fallback_;
  std::map<std::tuple<int, int, int>, double> table_;
};

ClassifierBank bias_bank(const std::vector<std::string>& classes,
                         const std::vector<double>& biases, std::size_t dim) {
  ClassifierBank bank;
  bank.classes = classes;
  for (double b : biases) {
    LinearModel m(dim);
    m.bias = b;
    bank.models.push_back(std::move(m));
  }
  return bank;
}

DurationPrior uniform_prior(const std::vector<std::string>& classes,
                            const std::vector<int>& lengths) {
  DurationPrior p;
  p.lengths = lengths;
  std::sort(p.lengths.begin(), p.lengths.end());
  for (const auto& c : classes)
    p.per_class[c] =
        std::vector<double>(p.lengths.size(), 1.0 / double(p.lengths.size()));
  return p;
}

Track const_track(const std::string& cls, int first, int len,
                  const BoundingBox& box) {
  Track tr;
  tr.cls = cls;
  tr.first_frame = first;
  tr.boxes.assign(std::size_t(len), box);
  tr.score_class.assign(std::size_t(len), 0.0);
  tr.score_inst.assign(std::size_t(len), 0.0);
  return tr;
}

std::vector<std::string> selected_names(const std::vector<int>& idx,
                                        const RegionScorer& s) {
  std::vector<std::string> out;
  for (int i : idx) out.push_back(s.classes()[std::size_t(i)]);
  return out;
}

TEST(Sigmoid, Identities) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> xs(-30.0, 30.0);
  for (int i = 0; i < 200; ++i) {
    double x = xs(gen);
    EXPECT_NEAR(sigmoid(x) + sigmoid(-x), 1.0, 1e-12);
    EXPECT_GT(sigmoid(x), 0.0);
    EXPECT_LT(sigmoid(x), 1.0);
  }
}

TEST(SelectClasses, RanksByVideoLevelMaximum) {
  testutil::TempDir tmp;
  write_props_all_frames(tmp.path() / "p", 3,
                         {{4, 4, 10, 10}, {20, 20, 10, 10}});
  VideoContext ctx = make_ctx(static_video(3, 40, 40, 1), tmp.path() / "p");
  TableScorer sc({"a", "b", "c"}, -1.0);
  sc.set(2, 0, 0, 0.5);   // a peaks at 0.5
  sc.set(1, 1, 1, 0.9);   // b peaks at 0.9
  sc.set(3, 0, 2, 0.1);   // c peaks at 0.1
  EXPECT_EQ(selected_names(select_classes(ctx, sc, 5), sc),
            (std::vector<std::string>{"b", "a", "c"}));
  EXPECT_EQ(selected_names(select_classes(ctx, sc, 1), sc),
            (std::vector<std::string>{"b"}));
}

TEST(SelectClasses, TiesBreakByClassName) {
  testutil::TempDir tmp;
  write_props_all_frames(tmp.path() / "p", 2, {{4, 4, 10, 10}});
  VideoContext ctx = make_ctx(static_video(2, 40, 40, 1), tmp.path() / "p");
  TableScorer sc({"beta", "alpha"}, 0.7);  // identical maxima everywhere
  std::vector<int> top = select_classes(ctx, sc, 1);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(sc.classes()[std::size_t(top[0])], "alpha");
}

TEST(SelectClasses, IncreasingKExtendsThePrefix) {
  testutil::TempDir tmp;
  write_props_all_frames(tmp.path() / "p", 3,
                         {{4, 4, 10, 10}, {20, 20, 10, 10}, {6, 22, 8, 8}});
  VideoContext ctx = make_ctx(static_video(3, 40, 40, 1), tmp.path() / "p");
  TableScorer sc({"c1", "c2", "c3", "c4", "c5"}, -2.0);
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> s(-1.0, 1.0);
  for (int t = 1; t <= 3; ++t)
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < 5; ++c) sc.set(t, i, c, s(gen));
  std::vector<int> full = select_classes(ctx, sc, 5);
  ASSERT_EQ(full.size(), 5u);
  for (int k = 1; k <= 5; ++k) {
    std::vector<int> part = select_classes(ctx, sc, k);
    ASSERT_EQ(part.size(), std::size_t(k));
    for (int i = 0; i < k; ++i) EXPECT_EQ(part[std::size_t(i)], full[std::size_t(i)]);
  }
}

TEST(SelectClasses, NoProposalsSelectsNothing) {
  testutil::TempDir tmp;
  write_props_all_frames(tmp.path() / "p", 2, {});
  VideoContext ctx = make_ctx(static_video(2, 40, 40, 1), tmp.path() / "p");
  TableScorer sc({"a"}, 1.0);
  EXPECT_TRUE(select_classes(ctx, sc, 5).empty());
}

TEST(GenerateTracks, SeparatedActorsGetOneTrackEach) {
  testutil::TempDir tmp;
  const BoundingBox A{6, 8, 12, 12}, B{30, 28, 12, 12}, far{2, 34, 8, 8};
  write_props_all_frames(tmp.path() / "p", 6, {A, B, far});
  VideoContext ctx = make_ctx(static_video(6, 48, 48, 2), tmp.path() / "p");
  TableScorer sc({"act"});
  for (int t = 1; t <= 6; ++t) {
    sc.set(t, 0, 0, t == 2 ? 2.0 : 1.5);  // actor A, global max at frame 2
    sc.set(t, 1, 0, 1.0);                 // actor B
    sc.set(t, 2, 0, -0.5);
  }
  PipelineParams p;
  p.tracker.mode = TrackMode::ClassOnly;  // constant feature scores hold seeds
  std::vector<Track> tracks = generate_tracks(ctx, 0, sc, p);
  ASSERT_EQ(tracks.size(), 2u);
  EXPECT_EQ(tracks[0].seed_frame, 2);
  for (int t = 1; t <= 6; ++t) {
    EXPECT_EQ(tracks[0].box_at(t), A);
    EXPECT_EQ(tracks[1].box_at(t), B);
  }
}

TEST(GenerateTracks, StopsEarlyWhenEverythingOverlaps) {
  testutil::TempDir tmp;
  const BoundingBox A{6, 8, 12, 12}, shifted{9, 8, 12, 12};  // IoU 0.6 vs A
  write_props_all_frames(tmp.path() / "p", 4, {A, shifted});
  VideoContext ctx = make_ctx(static_video(4, 48, 48, 2), tmp.path() / "p");
  TableScorer sc({"act"});
  for (int t = 1; t <= 4; ++t) {
    sc.set(t, 0, 0, 1.0);
    sc.set(t, 1, 0, 0.8);
  }
  PipelineParams p;
  p.tracker.mode = TrackMode::ClassOnly;
  std::vector<Track> tracks = generate_tracks(ctx, 0, sc, p);
  ASSERT_EQ(tracks.size(), 1u);
  EXPECT_EQ(tracks[0].box_at(1), A);
}

TEST(FuseScore, ZeroScoresFuseToOne) {
  testutil::TempDir tmp;
  write_props_all_frames(tmp.path() / "p", 6, {});
  VideoContext ctx = make_ctx(static_video(6, 48, 48, 3), tmp.path() / "p");
  TableScorer sc({"act"});
  ClassifierBank stmh = bias_bank({"act"}, {0.0}, std::size_t(StmhParams{}.dimension()));
  Track tr = const_track("act", 1, 6, {10, 10, 16, 16});
  EXPECT_DOUBLE_EQ(fuse_score(tr, stmh, ctx, sc), 1.0);
}

TEST(FuseScore, OppositeScoresCancelToOne) {
  testutil::TempDir tmp;
  write_props_all_frames(tmp.path() / "p", 6, {});
  VideoContext ctx = make_ctx(static_video(6, 48, 48, 3), tmp.path() / "p");
  TableScorer sc({"act"});
  // Descriptor score is exactly the bias (+1); the CNN sum is -1.
  ClassifierBank stmh = bias_bank({"act"}, {1.0}, std::size_t(StmhParams{}.dimension()));
  Track tr = const_track("act", 1, 6, {10, 10, 16, 16});
  tr.score_class[0] = -1.0;
  EXPECT_NEAR(fuse_score(tr, stmh, ctx, sc), 1.0, 1e-12);
}

TEST(FuseScore, AverageModeDividesTheCnnTerm) {
  testutil::TempDir tmp;
  write_props_all_frames(tmp.path() / "p", 6, {});
  VideoContext ctx = make_ctx(static_video(6, 48, 48, 3), tmp.path() / "p");
  TableScorer sc({"act"});
  ClassifierBank stmh = bias_bank({"act"}, {0.5}, std::size_t(StmhParams{}.dimension()));
  Track tr = const_track("act", 1, 6, {10, 10, 16, 16});
  for (auto& s : tr.score_class) s = 2.0;  // sum 12, mean 2
  EXPECT_DOUBLE_EQ(fuse_score(tr, stmh, ctx, sc, StmhParams{}, false),
                   sigmoid(0.5) + sigmoid(12.0));
  EXPECT_DOUBLE_EQ(fuse_score(tr, stmh, ctx, sc, StmhParams{}, true),
                   sigmoid(0.5) + sigmoid(2.0));
}

TEST(FuseScore, StaysInsideOpenInterval) {
  testutil::TempDir tmp;
  write_props_all_frames(tmp.path() / "p", 8, {});
  VideoContext ctx = make_ctx(static_video(8, 48, 48, 4), tmp.path() / "p");
  TableScorer sc({"act"});
  std::mt19937 gen(23);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::uniform_int_distribution<int> len(1, 8);
  std::normal_distribution<double> w(0.0, 0.3);
  for (int trial = 0; trial < 20; ++trial) {
    ClassifierBank stmh;
    stmh.classes = {"act"};
    LinearModel m(std::size_t(StmhParams{}.dimension()));
    for (auto& x : m.weights) x = w(gen);
    m.bias = u(gen) / 10.0;
    stmh.models.push_back(std::move(m));
    int n = len(gen);
    Track tr = const_track("act", 1, n, {8, 8, 20, 20});
    for (auto& s : tr.score_class) s = u(gen);
    double f = fuse_score(tr, stmh, ctx, sc);
    EXPECT_GT(f, 0.0);
    EXPECT_LT(f, 2.0);
  }
}

TEST(DurationPrior, CountsNormalizeWithoutSmoothing) {
  std::vector<GroundTruthInstance> gts;
  for (int len : {20, 20, 30}) {
    GroundTruthInstance g;
    g.video_id = "v";
    g.cls = "act";
    g.t_begin = 1;
    g.boxes.assign(std::size_t(len), BoundingBox{0, 0, 4, 4});
    gts.push_back(std::move(g));
  }
  DurationPrior p = learn_duration_prior(gts, {20, 30}, 0.0);
  EXPECT_DOUBLE_EQ(p.weight("act", 20), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(p.weight("act", 30), 1.0 / 3.0);
}

TEST(DurationPrior, SmoothingSpreadsMass) {
  GroundTruthInstance g;
  g.video_id = "v";
  g.cls = "act";
  g.t_begin = 1;
  g.boxes.assign(100, BoundingBox{0, 0, 4, 4});
  DurationPrior p = learn_duration_prior({g}, PipelineParams{}.window_lengths, 0.5);
  // 13 bins: mass (1 + 0.5) / (1 + 13 * 0.5) at 100, 0.5 / 7.5 elsewhere.
  EXPECT_DOUBLE_EQ(p.weight("act", 100), 1.5 / 7.5);
  EXPECT_DOUBLE_EQ(p.weight("act", 20), 0.5 / 7.5);
  double sum = 0.0;
  for (double m : p.per_class.at("act")) sum += m;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(DurationPrior, EquidistantDurationsTakeTheShorterBin) {
  GroundTruthInstance g;
  g.video_id = "v";
  g.cls = "act";
  g.t_begin = 1;
  g.boxes.assign(25, BoundingBox{0, 0, 4, 4});  // equidistant from 20 and 30
  DurationPrior p = learn_duration_prior({g}, {20, 30}, 0.0);
  EXPECT_DOUBLE_EQ(p.weight("act", 20), 1.0);
  EXPECT_DOUBLE_EQ(p.weight("act", 30), 0.0);
  EXPECT_EQ(p.bin_of(24), 0);
  EXPECT_EQ(p.bin_of(26), 1);
  EXPECT_THROW(p.weight("ghost", 20), DataError);
}

TEST(DurationPrior, FileRoundTripAndValidation) {
  testutil::TempDir tmp;
  GroundTruthInstance g;
  g.video_id = "v";
  g.cls = "act";
  g.t_begin = 1;
  g.boxes.assign(40, BoundingBox{0, 0, 4, 4});
  DurationPrior p = learn_duration_prior({g}, {20, 30, 40}, 0.5);
  write_prior(tmp.path() / "prior.txt", p);
  DurationPrior q = read_prior(tmp.path() / "prior.txt");
  EXPECT_EQ(q.lengths, p.lengths);
  ASSERT_EQ(q.per_class.size(), 1u);
  for (std::size_t i = 0; i < p.lengths.size(); ++i)
    EXPECT_DOUBLE_EQ(q.per_class.at("act")[i], p.per_class.at("act")[i]);
  EXPECT_THROW(decode_prior("act 0.5 0.5\n", "mem"), DataError);
  EXPECT_THROW(decode_prior("lengths 20 30\nact 0.5\n", "mem"), DataError);
  EXPECT_THROW(decode_prior("lengths 20\nact 1\nact 1\n", "mem"), DataError);
}

TEST(TemporalLocalize, ShortTrackGetsOneFullWindow) {
  testutil::TempDir tmp;
  write_props_all_frames(tmp.path() / "p", 20, {});
  VideoContext ctx = make_ctx(static_video(20, 48, 48, 5), tmp.path() / "p");
  TableScorer sc({"act"});
  ClassifierBank stmh = bias_bank({"act"}, {0.0}, std::size_t(StmhParams{}.dimension()));
  DurationPrior prior;
  prior.lengths = {20};
  prior.per_class["act"] = {0.4};
  Track tr = const_track("act", 3, 15, {10, 10, 16, 16});
  PipelineParams p;
  p.window_lengths = {20};
  Detection d = temporal_localize(tr, ctx, sc, stmh, prior, p);
  EXPECT_EQ(d.t_begin, 3);
  EXPECT_EQ(d.t_end(), 17);
  EXPECT_DOUBLE_EQ(d.score, 0.4);  // fused 1.0 times the only bin's mass
  EXPECT_EQ(d.cls, "act");
}

TEST(TemporalLocalize, MatchesBruteForceEnumeration) {
  testutil::TempDir tmp;
  write_props_all_frames(tmp.path() / "p", 60, {});
  VideoContext ctx = make_ctx(static_video(60, 48, 48, 6), tmp.path() / "p");
  TableScorer sc({"act"});

  std::mt19937 gen(31);
  ClassifierBank stmh;
  stmh.classes = {"act"};
  {
    std::normal_distribution<double> w(0.0, 0.05);
    LinearModel m(std::size_t(StmhParams{}.dimension()));
    for (auto& x : m.weights) x = w(gen);
    m.bias = 0.1;
    stmh.models.push_back(std::move(m));
  }
  Track tr;
  tr.cls = "act";
  tr.first_frame = 1;
  std::uniform_int_distribution<int> q(-1024, 1024);
  for (int t = 1; t <= 60; ++t) {
    tr.boxes.push_back({double(10 + t % 7), double(8 + t % 5), 14, 12});
    // Dyadic scores keep every window sum exact, so the oracle's direct
    // slice sum equals the implementation's prefix-sum difference.
    tr.score_class.push_back(double(q(gen)) / 1024.0);
  }
  DurationPrior prior;
  prior.lengths = PipelineParams{}.window_lengths;
  std::sort(prior.lengths.begin(), prior.lengths.end());
  {
    std::uniform_real_distribution<double> m(0.1, 1.0);
    std::vector<double> mass;
    double sum = 0.0;
    for (std::size_t i = 0; i < prior.lengths.size(); ++i) {
      mass.push_back(m(gen));
      sum += mass.back();
    }
    for (auto& x : mass) x /= sum;
    prior.per_class["act"] = mass;
  }

  PipelineParams p;
  Detection got = temporal_localize(tr, ctx, sc, stmh, prior, p);

  int windows = 0;
  double best = -1.0;
  int best_s = 0, best_len = 0;
  for (int len : p.window_lengths) {
    if (len > tr.length()) continue;
    for (int s = tr.first_frame; s + len - 1 <= tr.last_frame();
         s += p.window_stride) {
      ++windows;
      Track sub;
      sub.cls = tr.cls;
      sub.first_frame = s;
      sub.boxes.assign(tr.boxes.begin() + (s - 1), tr.boxes.begin() + (s - 1) + len);
      double s_desc =
          score_track_stmh(stmh, "act", sub, ctx.luma(), ctx.flows(), p.stmh);
      double s_cnn = 0.0;
      for (int t = s; t < s + len; ++t) s_cnn += tr.score_class[std::size_t(t - 1)];
      double w = (sigmoid(s_desc) + sigmoid(s_cnn)) * prior.weight("act", len);
      if (w > best || (w == best && (s < best_s || (s == best_s && len < best_len)))) {
        best = w;
        best_s = s;
        best_len = len;
      }
    }
  }
  EXPECT_EQ(windows, 15);  // lengths 20..60 over 60 frames at stride 10
  EXPECT_EQ(got.t_begin, best_s);
  EXPECT_EQ(int(got.boxes.size()), best_len);
  EXPECT_DOUBLE_EQ(got.score, best);
}

TEST(TemporalLocalize, RecoversInjectedExtent) {
  testutil::TempDir tmp;
  write_props_all_frames(tmp.path() / "p", 120, {});
  VideoContext ctx = make_ctx(static_video(120, 48, 48, 7), tmp.path() / "p");
  TableScorer sc({"act"});
  ClassifierBank stmh = bias_bank({"act"}, {0.0}, std::size_t(StmhParams{}.dimension()));
  Track tr = const_track("act", 1, 120, {10, 10, 16, 16});
  // Per-frame class evidence +1 inside the action span, -1 outside: the
  // unique best window is exactly [31, 70].
  for (int t = 1; t <= 120; ++t)
    tr.score_class[std::size_t(t - 1)] = (t >= 31 && t <= 70) ? 1.0 : -1.0;
  DurationPrior prior = uniform_prior({"act"}, PipelineParams{}.window_lengths);
  Detection d = temporal_localize(tr, ctx, sc, stmh, prior, PipelineParams{});
  EXPECT_EQ(d.t_begin, 31);
  EXPECT_EQ(d.t_end(), 70);
}

TEST(TemporalLocalize, PriorReweightsWindows) {
  testutil::TempDir tmp;
  write_props_all_frames(tmp.path() / "p", 60, {});
  VideoContext ctx = make_ctx(static_video(60, 48, 48, 8), tmp.path() / "p");
  TableScorer sc({"act"});
  ClassifierBank stmh = bias_bank({"act"}, {0.0}, std::size_t(StmhParams{}.dimension()));
  Track tr = const_track("act", 1, 60, {10, 10, 16, 16});
  PipelineParams p;
  // All fused window scores are equal, so a flat prior falls back to the
  // earliest start and shortest length.
  DurationPrior flat = uniform_prior({"act"}, p.window_lengths);
  Detection d0 = temporal_localize(tr, ctx, sc, stmh, flat, p);
  EXPECT_EQ(d0.t_begin, 1);
  EXPECT_EQ(int(d0.boxes.size()), 20);
  // Concentrating the prior on length 60 moves the argmax.
  DurationPrior spiked = flat;
  for (std::size_t i = 0; i < spiked.lengths.size(); ++i)
    spiked.per_class["act"][i] = spiked.lengths[i] == 60 ? 0.9 : 0.1 / 12.0;
  Detection d1 = temporal_localize(tr, ctx, sc, stmh, spiked, p);
  EXPECT_EQ(d1.t_begin, 1);
  EXPECT_EQ(int(d1.boxes.size()), 60);
  EXPECT_THROW(
      temporal_localize(const_track("ghost", 1, 30, {10, 10, 16, 16}), ctx, sc,
                        stmh, flat, p),
      DataError);
}

TEST(Detect, TopDetectionHasTheRightClass) {
  testutil::TempDir tmp;
  const BoundingBox A{6, 8, 12, 12}, B{30, 28, 12, 12};
  write_props_all_frames(tmp.path() / "p", 6, {A, B});
  VideoContext ctx = make_ctx(static_video(6, 48, 48, 9, "demo"), tmp.path() / "p");
  TableScorer sc({"a", "b", "c"}, -1.0);
  for (int t = 1; t <= 6; ++t) sc.set(t, 0, 1, 2.0);  // class b fires on actor A
  ClassifierBank stmh = bias_bank({"a", "b", "c"}, {-2.0, 2.0, -2.0},
                                  std::size_t(StmhParams{}.dimension()));
  DurationPrior prior = uniform_prior({"a", "b", "c"}, PipelineParams{}.window_lengths);
  PipelineParams p;
  p.tracker.mode = TrackMode::ClassOnly;
  std::vector<Detection> dets = detect(ctx, sc, stmh, prior, p);
  ASSERT_EQ(dets.size(), 6u);  // 3 selected classes, 2 tracks each
  EXPECT_EQ(dets[0].cls, "b");
  EXPECT_EQ(dets[0].video_id, "demo");
  for (std::size_t i = 1; i < dets.size(); ++i)
    EXPECT_LE(dets[i].score, dets[i - 1].score);
  for (const Detection& d : dets) {
    EXPECT_GE(d.t_begin, 1);
    EXPECT_LE(d.t_end(), 6);
  }
}

TEST(Detect, NoProposalsMeansNoDetections) {
  testutil::TempDir tmp;
  write_props_all_frames(tmp.path() / "p", 4, {});
  VideoContext ctx = make_ctx(static_video(4, 48, 48, 9), tmp.path() / "p");
  TableScorer sc({"a"}, 1.0);
  ClassifierBank stmh = bias_bank({"a"}, {0.0}, std::size_t(StmhParams{}.dimension()));
  DurationPrior prior = uniform_prior({"a"}, PipelineParams{}.window_lengths);
  EXPECT_TRUE(detect(ctx, sc, stmh, prior, PipelineParams{}).empty());
}

TEST(Detect, RerunsAreIdentical) {
  testutil::TempDir tmp;
  const BoundingBox A{6, 8, 12, 12}, B{30, 28, 12, 12};
  write_props_all_frames(tmp.path() / "p", 6, {A, B});
  VideoContext ctx = make_ctx(static_video(6, 48, 48, 9), tmp.path() / "p");
  TableScorer sc({"a", "b"}, -1.0);
  for (int t = 1; t <= 6; ++t) sc.set(t, 0, 1, 2.0);
  ClassifierBank stmh =
      bias_bank({"a", "b"}, {0.5, 1.0}, std::size_t(StmhParams{}.dimension()));
  DurationPrior prior = uniform_prior({"a", "b"}, PipelineParams{}.window_lengths);
  PipelineParams p;
  p.tracker.mode = TrackMode::ClassOnly;
  std::vector<Detection> x = detect(ctx, sc, stmh, prior, p);
  std::vector<Detection> y = detect(ctx, sc, stmh, prior, p);
  ASSERT_EQ(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(x[i].cls, y[i].cls);
    EXPECT_EQ(x[i].score, y[i].score);
    EXPECT_EQ(x[i].t_begin, y[i].t_begin);
    ASSERT_EQ(x[i].boxes.size(), y[i].boxes.size());
    for (std::size_t k = 0; k < x[i].boxes.size(); ++k)
      EXPECT_EQ(x[i].boxes[k], y[i].boxes[k]);
  }
}

TEST(LinkTracksBaseline, SingleProposalPerFrameIsThePath) {
  testutil::TempDir tmp;
  std::vector<std::vector<BoundingBox>> frames{
      {{2, 2, 8, 8}}, {{3, 2, 8, 8}}, {{4, 3, 8, 8}}, {{5, 3, 8, 8}}};
  write_props_per_frame(tmp.path() / "p", frames);
  VideoContext ctx = make_ctx(static_video(4, 40, 40, 10), tmp.path() / "p");
  TableScorer sc({"act"});
  for (int t = 1; t <= 4; ++t) sc.set(t, 0, 0, 0.4 + 0.1 * t);
  Track tr = link_tracks_baseline(ctx, 0, sc, 1.0);
  EXPECT_EQ(tr.first_frame, 1);
  ASSERT_EQ(tr.length(), 4);
  for (int t = 1; t <= 4; ++t) {
    EXPECT_EQ(tr.box_at(t), frames[std::size_t(t - 1)][0]);
    EXPECT_DOUBLE_EQ(tr.score_class[std::size_t(t - 1)], 0.4 + 0.1 * t);
  }
}

TEST(LinkTracksBaseline, ZeroLambdaDecouplesFrames) {
  testutil::TempDir tmp;
  std::vector<std::vector<BoundingBox>> frames{
      {{0, 0, 8, 8}, {20, 20, 8, 8}},
      {{10, 10, 8, 8}, {0, 0, 8, 8}},
      {{0, 0, 8, 8}, {5, 5, 8, 8}}};
  write_props_per_frame(tmp.path() / "p", frames);
  VideoContext ctx = make_ctx(static_video(3, 40, 40, 10), tmp.path() / "p");
  TableScorer sc({"act"});
  sc.set(1, 0, 0, 0.5);
  sc.set(1, 1, 0, 0.9);
  sc.set(2, 0, 0, 0.8);
  sc.set(2, 1, 0, 0.1);
  sc.set(3, 0, 0, 0.2);
  sc.set(3, 1, 0, 0.7);
  Track tr = link_tracks_baseline(ctx, 0, sc, 0.0);
  EXPECT_EQ(tr.box_at(1), frames[0][1]);
  EXPECT_EQ(tr.box_at(2), frames[1][0]);
  EXPECT_EQ(tr.box_at(3), frames[2][1]);
}

TEST(LinkTracksBaseline, ConsistentChainBeatsJumpyChain) {
  testutil::TempDir tmp;
  // Chain A: higher per-frame score but zero IoU between consecutive picks.
  // Chain B: slightly lower score, identical box every frame.
  std::vector<std::vector<BoundingBox>> frames{
      {{0, 0, 10, 10}, {15, 15, 10, 10}},
      {{30, 30, 10, 10}, {15, 15, 10, 10}},
      {{0, 30, 10, 10}, {15, 15, 10, 10}}};
  write_props_per_frame(tmp.path() / "p", frames);
  VideoContext ctx = make_ctx(static_video(3, 48, 48, 10), tmp.path() / "p");
  TableScorer sc({"act"});
  for (int t = 1; t <= 3; ++t) {
    sc.set(t, 0, 0, 1.0);
    sc.set(t, 1, 0, 0.9);
  }
  for (double lambda : {1.0, 5.0}) {
    // Brute-force Viterbi oracle over all 8 index paths.
    double best = -1e300;
    std::array<int, 3> best_path{};
    for (int i0 = 0; i0 < 2; ++i0)
      for (int i1 = 0; i1 < 2; ++i1)
        for (int i2 = 0; i2 < 2; ++i2) {
          std::array<int, 3> path{i0, i1, i2};
          double v = 0.0;
          for (int t = 1; t <= 3; ++t)
            v += sc.score_proposal(ctx, t, path[std::size_t(t - 1)], 0);
          for (int t = 1; t <= 2; ++t)
            v += lambda * box_iou(frames[std::size_t(t - 1)][std::size_t(path[std::size_t(t - 1)])],
                                  frames[std::size_t(t)][std::size_t(path[std::size_t(t)])]);
          if (v > best) {
            best = v;
            best_path = path;
          }
        }
    Track tr = link_tracks_baseline(ctx, 0, sc, lambda);
    for (int t = 1; t <= 3; ++t)
      EXPECT_EQ(tr.box_at(t),
                frames[std::size_t(t - 1)][std::size_t(best_path[std::size_t(t - 1)])])
          << "lambda " << lambda << " frame " << t;
    // The steady chain must be the winner at these lambdas.
    EXPECT_EQ(tr.box_at(1), (BoundingBox{15, 15, 10, 10}));
  }
  Track decoupled = link_tracks_baseline(ctx, 0, sc, 0.0);
  EXPECT_EQ(decoupled.box_at(1), (BoundingBox{0, 0, 10, 10}));
}

TEST(LinkTracksBaseline, EmptyFramesBreakThePath) {
  testutil::TempDir tmp;
  const BoundingBox b{4, 4, 8, 8};
  write_props_per_frame(tmp.path() / "p", {{b}, {b}, {}, {b}, {b}});
  VideoContext ctx = make_ctx(static_video(5, 40, 40, 10), tmp.path() / "p");
  TableScorer sc({"act"}, 0.5);
  Track tr = link_tracks_baseline(ctx, 0, sc, 1.0);
  EXPECT_EQ(tr.first_frame, 1);  // two 2-frame runs tie, earliest wins
  EXPECT_EQ(tr.length(), 2);

  testutil::TempDir tmp2;
  write_props_per_frame(tmp2.path() / "p", {{b}, {}, {b}, {b}, {b}});
  VideoContext ctx2 = make_ctx(static_video(5, 40, 40, 10), tmp2.path() / "p");
  Track tr2 = link_tracks_baseline(ctx2, 0, sc, 1.0);
  EXPECT_EQ(tr2.first_frame, 3);
  EXPECT_EQ(tr2.length(), 3);

  testutil::TempDir tmp3;
  write_props_per_frame(tmp3.path() / "p", {{}, {}});
  VideoContext ctx3 = make_ctx(static_video(2, 40, 40, 10), tmp3.path() / "p");
  EXPECT_THROW(link_tracks_baseline(ctx3, 0, sc, 1.0), DataError);
}

TEST(PipelineParams, Validation) {
  PipelineParams p;
  p.topk = 0;
  EXPECT_THROW(p.validate(), std::logic_error);
  p = PipelineParams{};
  p.theta = 1.5;
  EXPECT_THROW(p.validate(), std::logic_error);
  p = PipelineParams{};
  p.window_lengths.clear();
  EXPECT_THROW(p.validate(), std::logic_error);
  p = PipelineParams{};
  p.window_stride = 0;
  EXPECT_THROW(p.validate(), std::logic_error);
}

// ---------------------------------------------------------------------------
// Dataset-level training.

DatasetSynthSpec three_class_spec() {
  DatasetSynthSpec spec;
  spec.base.num_frames = 20;
  spec.base.width = 48;
  spec.base.height = 48;
  spec.base.actor_w = 12;
  spec.base.actor_h = 12;
  spec.base.t_begin = 1;
  spec.base.t_end = 20;
  spec.base.texture_scale = 6;
  for (auto [name, motion] :
       std::initializer_list<std::pair<const char*, MotionProgram>>{
           {"osc", MotionProgram::HorizontalOsc},
           {"drift", MotionProgram::DiagonalDrift},
           {"flick", MotionProgram::StaticFlicker}}) {
    SceneSpec s = spec.base;
    s.motion = motion;
    spec.classes.emplace_back(name, s);
  }
  return spec;
}

TrainParams small_train_params() {
  TrainParams p;
  p.scorer.patch = 32;
  p.seed = 4;
  return p;
}

TEST(Training, ThreeClassDatasetYieldsThreeModelsEach) {
  testutil::TempDir tmp;
  Dataset ds = synth_dataset(three_class_spec(), tmp.path() / "ds", 6, 3);
  TrainParams p = small_train_params();
  TrainedModels m = train_all(ds, p);
  EXPECT_EQ(m.action.classes, ds.classes);
  EXPECT_EQ(m.stmh.classes, ds.classes);
  ASSERT_EQ(m.action.models.size(), 3u);
  ASSERT_EQ(m.stmh.models.size(), 3u);
  EXPECT_EQ(m.action.dim(), std::size_t(p.scorer.dimension()));
  EXPECT_EQ(m.stmh.dim(), std::size_t(p.stmh.dimension()));
  ASSERT_EQ(m.prior.per_class.size(), 3u);
  for (const auto& [cls, mass] : m.prior.per_class) {
    double sum = 0.0;
    for (double x : mass) sum += x;
    EXPECT_NEAR(sum, 1.0, 1e-12) << cls;
    // Every training clip lasts 20 frames, so the 20-bin holds the peak.
    EXPECT_GT(m.prior.weight(cls, 20), m.prior.weight(cls, 100));
  }
}

TEST(Training, RerunsProduceIdenticalModels) {
  testutil::TempDir tmp;
  Dataset ds = synth_dataset(three_class_spec(), tmp.path() / "ds", 3, 5);
  TrainParams p = small_train_params();
  TrainedModels a = train_all(ds, p);
  TrainedModels b = train_all(ds, p);
  for (std::size_t ci = 0; ci < a.action.models.size(); ++ci) {
    EXPECT_EQ(a.action.models[ci].bias, b.action.models[ci].bias);
    EXPECT_EQ(a.action.models[ci].weights, b.action.models[ci].weights);
    EXPECT_EQ(a.stmh.models[ci].bias, b.stmh.models[ci].bias);
    EXPECT_EQ(a.stmh.models[ci].weights, b.stmh.models[ci].weights);
  }
}

TEST(Training, UnknownAnnotationClassIsNamed) {
  testutil::TempDir tmp;
  Dataset ds;
  ds.root = tmp.path() / "ds";
  ds.video_ids = {"vidm"};
  ds.classes = {"known"};
  VideoSequence v = static_video(2, 16, 16, 12, "vidm");
  write_sequence(ds.frames_dir("vidm"), v);
  GroundTruthInstance g;
  g.video_id = "vidm";
  g.cls = "mystery";
  g.t_begin = 1;
  g.boxes.assign(2, BoundingBox{2, 2, 8, 8});
  write_ground_truth(ds.gt_file("vidm"), {g});
  write_dataset_manifest(ds);
  try {
    train_all(ds, small_train_params());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("mystery"), std::string::npos);
  }
}

TEST(Training, NegativeSamplingRespectsOverlapRule) {
  testutil::TempDir tmp;
  SceneSpec scene = three_class_spec().base;
  scene.motion = MotionProgram::StaticFlicker;
  SynthResult sr = synth_scene(scene, 21);
  const BoundingBox gt_box = sr.ground_truth.box_at(1);

  Dataset ds;
  ds.root = tmp.path() / "ds";
  ds.video_ids = {"vid0"};
  ds.classes = {"flick"};
  sr.video.id = "vid0";
  write_sequence(ds.frames_dir("vid0"), sr.video);
  GroundTruthInstance g;
  g.video_id = "vid0";
  g.cls = "flick";
  g.t_begin = 1;
  g.boxes = sr.ground_truth.boxes;
  write_ground_truth(ds.gt_file("vid0"), {g});

  // Exactly three proposals per frame: the GT box (IoU 1), a half-width
  // shift (IoU 1/3), and a far box (IoU 0). Only the far box may feed the
  // negative pools.
  BoundingBox half{gt_box.x + gt_box.w / 2, gt_box.y, gt_box.w, gt_box.h};
  BoundingBox far = gt_box.cx() < 24 ? BoundingBox{38, 38, 8, 8}
                                     : BoundingBox{2, 2, 8, 8};
  ASSERT_DOUBLE_EQ(box_iou(gt_box, half), 1.0 / 3.0);
  ASSERT_DOUBLE_EQ(box_iou(gt_box, far), 0.0);
  fs::create_directories(ds.proposals_dir("vid0"));
  for (int t = 1; t <= 20; ++t) {
    ProposalSet set;
    set.proposals.push_back({gt_box, 1.0, t});
    set.proposals.push_back({half, 1.0, t});
    set.proposals.push_back({far, 1.0, t});
    write_proposals(ds.proposals_dir("vid0") / proposal_file_name(t), set);
  }
  write_dataset_manifest(ds);

  TrainingData td = collect_training_data(ds, small_train_params());
  EXPECT_EQ(td.action_pos[0].size(), 20u);   // one GT box per frame
  EXPECT_EQ(td.action_neg.size(), 20u);      // only the far box qualifies
  EXPECT_EQ(td.action_neg_idx[0].size(), 20u);
  // Cuboid negatives need a full 15-frame window: centers 8..13 qualify.
  EXPECT_EQ(td.stmh_neg.size(), 6u);
  EXPECT_EQ(td.all_gt.size(), 1u);
}

TEST(Training, ActorCoveringTheFrameLeavesNoCuboidNegatives) {
  testutil::TempDir tmp;
  DatasetSynthSpec spec;
  spec.base.num_frames = 20;
  spec.base.width = 32;
  spec.base.height = 32;
  spec.base.actor_w = 32;
  spec.base.actor_h = 32;
  spec.base.t_begin = 1;
  spec.base.t_end = 20;
  spec.base.motion = MotionProgram::StaticFlicker;
  spec.classes.emplace_back("big", spec.base);
  Dataset ds = synth_dataset(spec, tmp.path() / "ds", 1, 6);
  try {
    train_all(ds, small_train_params());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("cuboid"), std::string::npos);
  }
}

}  // namespace
