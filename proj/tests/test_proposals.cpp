// Proposal loading, the grid generator, and its content-dependent ranking.
// The ranking tests recompute mean gradient magnitude with a direct per-pixel
// loop, independent of the generator's integral-image fast path.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "actloc/proposals.hpp"
#include "test_util.hpp"

using namespace actloc;
using testutil::TempDir;

namespace {

// Direct (quadratic) mean gradient magnitude inside a pixel box.
double mean_gradient(const Frame& f, int x0, int y0, int bw, int bh) {
  double sum = 0.0;
  for (int y = y0; y < y0 + bh; ++y) {
    for (int x = x0; x < x0 + bw; ++x) {
      double gx = 0.5 * (double(f.at_clamped(x + 1, y)) - f.at_clamped(x - 1, y));
      double gy = 0.5 * (double(f.at_clamped(x, y + 1)) - f.at_clamped(x, y - 1));
      sum += std::sqrt(gx * gx + gy * gy);
    }
  }
  return sum / (double(bw) * bh);
}

}  // namespace

TEST(LoadProposals, KeepsTop256OfLargerFile) {
  TempDir td;
  std::ostringstream file;
  // 300 rows with distinct objectness i/10; top 256 are i in [44, 299].
  for (int i = 0; i < 300; ++i)
    file << (i % 60) << " " << (i / 10) << " 4 4 " << (i / 10.0) << "\n";
  testutil::spit(td / "p.txt", file.str());
  ProposalSet set = load_proposals(td / "p.txt", 3, 64, 64);
  EXPECT_EQ(set.t, 3);
  ASSERT_EQ(set.proposals.size(), 256u);
  EXPECT_DOUBLE_EQ(set.proposals.front().objectness, 29.9);
  EXPECT_DOUBLE_EQ(set.proposals.back().objectness, 4.4);
  for (std::size_t i = 0; i + 1 < set.proposals.size(); ++i)
    EXPECT_GE(set.proposals[i].objectness, set.proposals[i + 1].objectness);
}

TEST(LoadProposals, UnderCapKeepsAllRows) {
  TempDir td;
  std::ostringstream file;
  for (int i = 0; i < 10; ++i) file << i << " 0 2 2 " << (10 - i) << "\n";
  testutil::spit(td / "p.txt", file.str());
  ProposalSet set = load_proposals(td / "p.txt", 1, 32, 32);
  EXPECT_EQ(set.proposals.size(), 10u);
}

TEST(LoadProposals, EqualObjectnessKeepsFileOrder) {
  TempDir td;
  testutil::spit(td / "p.txt", "0 0 2 2 1\n4 0 2 2 5\n8 0 2 2 1\n12 0 2 2 1\n");
  ProposalSet set = load_proposals(td / "p.txt", 1, 32, 32);
  ASSERT_EQ(set.proposals.size(), 4u);
  EXPECT_DOUBLE_EQ(set.proposals[0].box.x, 4);   // unique max first
  EXPECT_DOUBLE_EQ(set.proposals[1].box.x, 0);   // then ties in file order
  EXPECT_DOUBLE_EQ(set.proposals[2].box.x, 8);
  EXPECT_DOUBLE_EQ(set.proposals[3].box.x, 12);
}

TEST(LoadProposals, ValidationErrorsNameTheLine) {
  TempDir td;
  testutil::spit(td / "zero.txt", "0 0 4 4 1\n1 1 0 4 1\n");
  try {
    load_proposals(td / "zero.txt", 1, 32, 32);
    FAIL() << "expected invalid-box error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos);
  }
  testutil::spit(td / "short.txt", "0 0 4 4\n");
  EXPECT_THROW(load_proposals(td / "short.txt", 1, 32, 32), DataError);
  testutil::spit(td / "junk.txt", "0 0 4 4 abc\n");
  EXPECT_THROW(load_proposals(td / "junk.txt", 1, 32, 32), DataError);
  testutil::spit(td / "outside.txt", "40 0 4 4 1\n");
  EXPECT_THROW(load_proposals(td / "outside.txt", 1, 32, 32), DataError);
  EXPECT_THROW(load_proposals(td / "absent.txt", 1, 32, 32), DataError);
}

TEST(GridProposals, FullFrameScaleYieldsSingleBox) {
  Frame f(64, 64, 1, 10);
  GridParams p;
  p.scales = {1.0};
  p.ratios = {1.0};
  ProposalSet set = grid_proposals(f, 1, p);
  ASSERT_EQ(set.proposals.size(), 1u);
  EXPECT_EQ(set.proposals[0].box, (BoundingBox{0, 0, 64, 64}));
}

TEST(GridProposals, ConstantFrameTiesKeepGenerationOrder) {
  Frame f(8, 8, 1, 42);
  GridParams p;
  p.scales = {0.5};  // 4x4 boxes, stride 1
  p.ratios = {1.0};
  ProposalSet set = grid_proposals(f, 1, p);
  ASSERT_EQ(set.proposals.size(), 25u);  // positions {0..4} x {0..4}
  std::size_t i = 0;
  for (int y = 0; y <= 4; ++y) {
    for (int x = 0; x <= 4; ++x, ++i) {
      EXPECT_DOUBLE_EQ(set.proposals[i].objectness, 0.0);
      EXPECT_EQ(set.proposals[i].box, (BoundingBox{double(x), double(y), 4, 4}))
          << "i=" << i;
    }
  }
}

TEST(GridProposals, HighContrastSquareRanksFirstByBruteForce) {
  Frame f(64, 64, 1, 0);
  for (int y = 24; y < 40; ++y)
    for (int x = 20; x < 36; ++x) f.at(x, y) = 255;
  GridParams p;
  p.scales = {0.25};  // 16 px boxes matching the square
  p.ratios = {1.0};
  ProposalSet set = grid_proposals(f, 1, p);
  ASSERT_FALSE(set.proposals.empty());
  // Oracle: recompute every box's objectness directly and find the best.
  double best = -1.0;
  BoundingBox best_box;
  for (const Proposal& pr : set.proposals) {
    double oracle = mean_gradient(f, int(pr.box.x), int(pr.box.y),
                                  int(pr.box.w), int(pr.box.h));
    EXPECT_NEAR(pr.objectness, oracle, 1e-9);
    if (oracle > best) {
      best = oracle;
      best_box = pr.box;
    }
  }
  EXPECT_EQ(set.proposals.front().box, best_box);
  // The winner must actually touch the square's edges.
  EXPECT_GT(box_iou(best_box, BoundingBox{20, 24, 16, 16}), 0.3);
}

TEST(GridProposals, AllBoxesInsideFrameWithPositiveArea) {
  Frame f(50, 34, 1);
  for (std::size_t i = 0; i < f.data.size(); ++i)
    f.data[i] = std::uint8_t((i * 37) & 0xff);
  ProposalSet set = grid_proposals(f, 1, GridParams{});
  ASSERT_FALSE(set.proposals.empty());
  EXPECT_LE(set.proposals.size(), std::size_t(ProposalSet::kDefaultCap));
  for (const Proposal& p : set.proposals) {
    EXPECT_GE(p.box.x, 0);
    EXPECT_GE(p.box.y, 0);
    EXPECT_LE(p.box.x2(), 50);
    EXPECT_LE(p.box.y2(), 34);
    EXPECT_GE(p.box.w, 1);
    EXPECT_GE(p.box.h, 1);
    EXPECT_TRUE(std::isfinite(p.objectness));
    EXPECT_EQ(p.t, 1);
  }
}

TEST(GridProposals, CapTakesHighestObjectnessPrefix) {
  Frame f(48, 48, 1);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x)
      f.at(x, y) = std::uint8_t((x * y + 3 * x) & 0xff);
  ProposalSet full = grid_proposals(f, 1, GridParams{});
  GridParams capped_p;
  capped_p.cap = 10;
  ProposalSet capped = grid_proposals(f, 1, capped_p);
  ASSERT_EQ(capped.proposals.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(capped.proposals[i].box, full.proposals[i].box);
    EXPECT_DOUBLE_EQ(capped.proposals[i].objectness,
                     full.proposals[i].objectness);
  }
}

TEST(GridProposals, ParamValidation) {
  Frame f(16, 16, 1);
  GridParams p;
  p.scales.clear();
  EXPECT_THROW(grid_proposals(f, 1, p), std::logic_error);
  p = GridParams{};
  p.ratios = {0.0};
  EXPECT_THROW(grid_proposals(f, 1, p), std::logic_error);
  p = GridParams{};
  p.stride_fraction = -1.0;
  EXPECT_THROW(grid_proposals(f, 1, p), std::logic_error);
}

TEST(ProposalCodec, WriteLoadRoundTrip) {
  TempDir td;
  ProposalSet set;
  set.t = 7;
  set.proposals = {{BoundingBox{1.25, 2.5, 3.75, 4.125}, 0.625, 7},
                   {BoundingBox{0, 0, 10, 10}, 0.2, 7},
                   {BoundingBox{5, 5, 1, 1}, 0.2, 7}};
  write_proposals(td / proposal_file_name(7), set);
  EXPECT_EQ(proposal_file_name(7), "props_000007.txt");
  ProposalSet r = load_proposals(td / proposal_file_name(7), 7, 32, 32);
  ASSERT_EQ(r.proposals.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.proposals[i].box, set.proposals[i].box);
    EXPECT_DOUBLE_EQ(r.proposals[i].objectness, set.proposals[i].objectness);
  }
}
