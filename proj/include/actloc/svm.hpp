#pragma once

// Linear classifier trained by primal SGD on the L2-regularized hinge loss,
// with hard-negative mining. One trainer serves the action classifiers, the
// tracker's instance detector, and the track-descriptor classifiers.

#include <cstring>
#include <random>
#include <vector>

#include "actloc/common.hpp"

namespace actloc {

using FeatureVec = std::vector<float>;

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;

  LinearModel() = default;
  explicit LinearModel(std::size_t dim) : weights(dim, 0.0) {}
  std::size_t dim() const { return weights.size(); }
};

struct SvmParams {
  double C = 1.0;            // hinge weight relative to the L2 penalty
  int epochs = 10;
  double lr_constant = 1.0;  // eta_t = lr_constant / (lambda * t)
  std::uint64_t seed = 1;
  double h = -1.0;           // hard-negative score threshold
  int mining_rounds = 3;

  void validate() const {
    ACTLOC_CHECK(C > 0.0, "svm C must be > 0");
    ACTLOC_CHECK(epochs >= 1, "svm epochs must be >= 1");
    ACTLOC_CHECK(lr_constant > 0.0, "svm lr constant must be > 0");
    ACTLOC_CHECK(mining_rounds >= 1, "svm mining rounds must be >= 1");
  }
};

inline double score(const LinearModel& m, const FeatureVec& x) {
  if (m.dim() != x.size())
    throw DataError("score: model dimension " + std::to_string(m.dim()) +
                    " vs feature dimension " + std::to_string(x.size()));
  double s = 0.0;
  const double* w = m.weights.data();
  const float* f = x.data();
  for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * f[i];
  return s + m.bias;
}

namespace detail {

// One SGD pass budget over (pos ∪ neg), continuing an existing model, shuffle
// generator, and global step counter. Weight updates use eta_t = lr/(lambda t)
// so the regularization shrink is (1 - lr/t) independent of scale; the
// unregularized bias decays as lr/t. Warm-start callers (the tracker's
// per-frame retraining) must keep `step` growing across calls: restarting at
// step 1 makes the shrink factor zero and erases the model.
inline void sgd_epochs(LinearModel& m,
                       const std::vector<FeatureVec>& pos,
                       const std::vector<FeatureVec>& neg,
                       const SvmParams& p, int epochs,
                       std::mt19937& gen, std::uint64_t& step) {
  const std::size_t n = pos.size() + neg.size();
  if (pos.empty() || neg.empty())
    throw DataError("svm training requires at least one example per class");
  const std::size_t d = pos[0].size();
  for (const auto& x : pos)
    if (x.size() != d) throw DataError("svm training: positive dimension mismatch");
  for (const auto& x : neg)
    if (x.size() != d) throw DataError("svm training: negative dimension mismatch");
  if (m.dim() != d) throw DataError("svm training: model dimension mismatch");

  const double lambda = 1.0 / (p.C * double(n));
  const double pos_weight = double(neg.size()) / double(pos.size());

  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = std::uint32_t(i);

  for (int e = 0; e < epochs; ++e) {
    seeded_shuffle(order, gen);
    for (std::uint32_t idx : order) {
      ++step;
      const bool is_pos = idx < pos.size();
      const FeatureVec& x = is_pos ? pos[idx] : neg[idx - pos.size()];
      const double y = is_pos ? 1.0 : -1.0;
      const double cw = is_pos ? pos_weight : 1.0;

      double margin = m.bias;
      for (std::size_t i = 0; i < d; ++i) margin += m.weights[i] * x[i];
      margin *= y;

      const double shrink = std::max(0.0, 1.0 - p.lr_constant / double(step));
      const double eta = p.lr_constant / (lambda * double(step));
      if (margin < 1.0) {
        const double g = eta * cw * y;
        for (std::size_t i = 0; i < d; ++i)
          m.weights[i] = shrink * m.weights[i] + g * x[i];
        m.bias += (p.lr_constant / double(step)) * cw * y;
      } else {
        for (std::size_t i = 0; i < d; ++i) m.weights[i] *= shrink;
      }
    }
  }
  for (double w : m.weights)
    ACTLOC_CHECK(std::isfinite(w), "svm produced non-finite weight");
  ACTLOC_CHECK(std::isfinite(m.bias), "svm produced non-finite bias");
}

}  // namespace detail

inline LinearModel train(const std::vector<FeatureVec>& pos,
                         const std::vector<FeatureVec>& neg,
                         const SvmParams& p) {
  p.validate();
  if (pos.empty() || neg.empty())
    throw DataError("svm training requires at least one example per class");
  LinearModel m(pos[0].size());
  std::mt19937 gen(std::uint32_t(mix64(p.seed)));
  std::uint64_t step = 0;
  detail::sgd_epochs(m, pos, neg, p, p.epochs, gen, step);
  return m;
}

// Pool elements scoring >= h, pool order preserved.
inline std::vector<FeatureVec> mine_hard_negatives(const LinearModel& m,
                                                   const std::vector<FeatureVec>& pool,
                                                   double h) {
  std::vector<FeatureVec> out;
  for (const auto& x : pool)
    if (score(m, x) >= h) out.push_back(x);
  return out;
}

// Train / re-mine loop. The initial negative set is a seeded sample of
// min(|pool|, 10 * |pos|) drawn without replacement (pool order preserved);
// a mining round that leaves no hard negatives keeps the previous set, so no
// round ever trains on zero negatives.
inline LinearModel train_mined(const std::vector<FeatureVec>& pos,
                               const std::vector<FeatureVec>& neg_pool,
                               const SvmParams& p) {
  p.validate();
  if (pos.empty() || neg_pool.empty())
    throw DataError("svm training requires at least one example per class");

  std::size_t want = std::min(neg_pool.size(), 10 * pos.size());
  std::vector<std::uint32_t> idx(neg_pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = std::uint32_t(i);
  std::mt19937 sample_gen(std::uint32_t(mix64(p.seed ^ 0x9e3779b97f4a7c15ULL)));
  seeded_shuffle(idx, sample_gen);
  idx.resize(want);
  std::sort(idx.begin(), idx.end());

  std::vector<FeatureVec> neg;
  neg.reserve(want);
  for (std::uint32_t i : idx) neg.push_back(neg_pool[i]);

  LinearModel m;
  for (int round = 0; round < p.mining_rounds; ++round) {
    m = train(pos, neg, p);
    if (round + 1 < p.mining_rounds) {
      std::vector<FeatureVec> mined = mine_hard_negatives(m, neg_pool, p.h);
      if (!mined.empty()) neg = std::move(mined);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Model file: `STLM`, 32-bit LE dimension, then dimension+1 little-endian
// 64-bit floats (weights, then bias).

inline std::string encode_model(const LinearModel& m) {
  std::string out = "STLM";
  std::uint32_t dim = std::uint32_t(m.dim());
  for (int i = 0; i < 4; ++i) out.push_back(char((dim >> (8 * i)) & 0xff));
  auto put_f64 = [&](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(char((bits >> (8 * i)) & 0xff));
  };
  for (double w : m.weights) put_f64(w);
  put_f64(m.bias);
  return out;
}

inline LinearModel decode_model(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 8 || bytes.compare(0, 4, "STLM") != 0)
    throw DataError("bad model file " + origin + ": missing STLM header");
  std::uint32_t dim = 0;
  for (int i = 0; i < 4; ++i)
    dim |= std::uint32_t(std::uint8_t(bytes[4 + i])) << (8 * i);
  if (bytes.size() != 8 + 8 * (std::size_t(dim) + 1))
    throw DataError("bad model file " + origin + ": truncated payload");
  auto get_f64 = [&](std::size_t off) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= std::uint64_t(std::uint8_t(bytes[off + i])) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  };
  LinearModel m(dim);
  for (std::uint32_t i = 0; i < dim; ++i) m.weights[i] = get_f64(8 + 8 * std::size_t(i));
  m.bias = get_f64(8 + 8 * std::size_t(dim));
  for (double w : m.weights)
    if (!std::isfinite(w))
      throw DataError("bad model file " + origin + ": non-finite weight");
  if (!std::isfinite(m.bias))
    throw DataError("bad model file " + origin + ": non-finite bias");
  return m;
}

inline void write_model(const std::filesystem::path& path, const LinearModel& m) {
  write_file_atomic(path, encode_model(m));
}

inline LinearModel read_model(const std::filesystem::path& path) {
  return decode_model(read_file(path), path.string());
}

}  // namespace actloc
