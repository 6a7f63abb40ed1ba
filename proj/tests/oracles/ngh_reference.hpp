#pragma once

// Line-by-line port of the PyTorch n-gram head / NgramBlock reference:
// boolean L x L masks, pad-shifts with negative padding, nan_to_num
// normalization, then the Linear / RMSNorm / SiLU stack.

#include <cmath>
#include <vector>

#include "icll/nghead.hpp"

namespace oracle {

using BoolMat = std::vector<std::vector<bool>>;
using Mat = std::vector<std::vector<double>>;

// F.pad(m, (left, -left, top, -top)) on the last two dims.
inline BoolMat pad_shift(const BoolMat& m, int top, int left) {
  const int L = static_cast<int>(m.size());
  BoolMat out(L, std::vector<bool>(L, false));
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      const int si = i - top, sj = j - left;
      out[i][j] = si >= 0 && sj >= 0 && m[si][sj];
    }
  return out;
}

inline Mat ngram_head(const icll::TokenSeq& x, const Mat& hidden, int shift_step, int ngram) {
  const int L = static_cast<int>(x.size());
  BoolMat mask0(L, std::vector<bool>(L)), causal(L, std::vector<bool>(L));
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      mask0[i][j] = x[j] == x[i];
      causal[i][j] = j <= i - 1;  // tril(diagonal=-1)
      mask0[i][j] = mask0[i][j] && causal[i][j];
    }
  std::vector<BoolMat> masks{mask0};
  for (int k = 1; k < ngram; ++k) {
    mask0 = pad_shift(mask0, 1, 1);
    masks.push_back(mask0);
  }
  BoolMat ngram_mask(L, std::vector<bool>(L));
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      int sum = 0;
      for (const auto& m : masks) sum += m[i][j] ? 1 : 0;
      ngram_mask[i][j] = sum >= ngram;
    }
  if (shift_step > 0) ngram_mask = pad_shift(ngram_mask, 0, shift_step);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) ngram_mask[i][j] = ngram_mask[i][j] && causal[i][j];

  const std::size_t d = hidden.empty() ? 0 : hidden[0].size();
  Mat out(L, std::vector<double>(d, 0.0));
  for (int i = 0; i < L; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < L; ++j) row_sum += ngram_mask[i][j] ? 1.0 : 0.0;
    for (int j = 0; j < L; ++j) {
      double w = (ngram_mask[i][j] ? 1.0 : 0.0) / row_sum;
      if (std::isnan(w)) w = 0.0;
      for (std::size_t z = 0; z < d; ++z) out[i][z] += w * hidden[j][z];
    }
  }
  return out;
}

// nn.Linear: y = x W^T + b
inline Mat linear(const Mat& x, const Eigen::MatrixXd& W, const Eigen::VectorXd& b) {
  Mat y(x.size(), std::vector<double>(static_cast<std::size_t>(W.rows())));
  for (std::size_t t = 0; t < x.size(); ++t)
    for (Eigen::Index o = 0; o < W.rows(); ++o) {
      double s = b(o);
      for (Eigen::Index i = 0; i < W.cols(); ++i) s += W(o, i) * x[t][static_cast<std::size_t>(i)];
      y[t][static_cast<std::size_t>(o)] = s;
    }
  return y;
}

inline Mat rmsnorm(const Mat& x, const Eigen::VectorXd& w, double eps) {
  Mat y = x;
  for (auto& row : y) {
    double ms = 0.0;
    for (double v : row) ms += v * v;
    ms /= static_cast<double>(row.size());
    const double r = 1.0 / std::sqrt(ms + eps);
    for (std::size_t z = 0; z < row.size(); ++z) row[z] = row[z] * r * w(static_cast<Eigen::Index>(z));
  }
  return y;
}

inline Mat add(const Mat& a, const Mat& b) {
  Mat y = a;
  for (std::size_t t = 0; t < y.size(); ++t)
    for (std::size_t z = 0; z < y[t].size(); ++z) y[t][z] += b[t][z];
  return y;
}

// class Ngram: t0 acts on the head output, t1 on the input.
inline Mat ngram_layer(const Mat& x, const icll::TokenSeq& ids, const icll::nghead::NghWeights& w, int ngram) {
  const Mat h0 = ngram_head(ids, x, 1, ngram);
  return add(linear(h0, w.W2, w.b2), linear(x, w.W1, w.b1));
}

inline Mat ngram_block(const Mat& x, const icll::TokenSeq& ids, const icll::nghead::BlockWeights& w, int ngram) {
  Mat h = add(x, ngram_layer(rmsnorm(x, w.norm1, 1e-5), ids, w.ngh, ngram));
  Mat u = linear(rmsnorm(h, w.norm2, 1e-5), w.mlp_in, w.mlp_in_bias);
  for (auto& row : u)
    for (double& v : row) v = v / (1.0 + std::exp(-v));
  return add(h, linear(u, w.mlp_out, w.mlp_out_bias));
}

inline Mat to_rows(const Eigen::MatrixXd& m) {
  Mat out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
  return out;
}

// Raw continuation counts: for each earlier occurrence of the n tokens ending
// at t whose successor lies before t, count that successor.
inline std::vector<double> raw_continuations(const icll::TokenSeq& x, int t, int n) {
  std::vector<double> counts(static_cast<std::size_t>(icll::kVocabSize), 0.0);
  double total = 0.0;
  for (int p = n - 1; p + 1 < t; ++p) {
    bool match = true;
    for (int k = 0; k < n; ++k) match = match && t - k >= 0 && x[static_cast<std::size_t>(p - k)] == x[static_cast<std::size_t>(t - k)];
    if (!match) continue;
    counts[static_cast<std::size_t>(x[static_cast<std::size_t>(p + 1)])] += 1.0;
    total += 1.0;
  }
  if (total > 0)
    for (double& c : counts) c /= total;
  return counts;
}

}  // namespace oracle
