#pragma once

// Straight-line reference implementations used only by the tests. They work
// on nested std::vector with explicit loops and share no code with the
// library's computation paths.

#include "clip_ae/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using Grid = std::vector<std::vector<double>>;

inline Grid grid(std::size_t rows, std::size_t cols, double fill = 0.0) {
  return Grid(rows, std::vector<double>(cols, fill));
}

inline Grid from_matrix(const clip_ae::Matrix& m) {
  Grid g = grid(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (std::size_t r = 0; r < g.size(); ++r)
    for (std::size_t c = 0; c < g[r].size(); ++c) g[r][c] = m(static_cast<long>(r), static_cast<long>(c));
  return g;
}

inline double max_abs_diff(const Grid& g, const clip_ae::Matrix& m) {
  if (g.size() != static_cast<std::size_t>(m.rows())) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t r = 0; r < g.size(); ++r) {
    if (g[r].size() != static_cast<std::size_t>(m.cols())) return std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < g[r].size(); ++c)
      worst = std::max(worst, std::abs(g[r][c] - m(static_cast<long>(r), static_cast<long>(c))));
  }
  return worst;
}

inline Grid random_grid(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Grid g = grid(rows, cols);
  for (auto& row : g)
    for (auto& v : row) v = n(rng);
  return g;
}

inline clip_ae::Matrix to_matrix(const Grid& g) {
  clip_ae::Matrix m(static_cast<long>(g.size()), g.empty() ? 0 : static_cast<long>(g[0].size()));
  for (std::size_t r = 0; r < g.size(); ++r)
    for (std::size_t c = 0; c < g[r].size(); ++c) m(static_cast<long>(r), static_cast<long>(c)) = g[r][c];
  return m;
}

// ---- Audio-visual cross-attention fusion, feature-major d x L inputs. ----

struct CafOracle {
  Grid audio;
  Grid cbp;
};

inline CafOracle caf(const Grid& x_audio, const Grid& x_cbp, const Grid& w, int stages) {
  const std::size_t d = x_audio.size();
  const std::size_t len = x_audio[0].size();
  std::vector<Grid> hist_a{x_audio}, hist_c{x_cbp};

  for (int t = 1; t <= stages; ++t) {
    const Grid& pa = hist_a.back();
    const Grid& pc = hist_c.back();
    Grid na = grid(d, len), nc = grid(d, len);
    for (std::size_t l = 0; l < len; ++l) {
      double sa = 0.0, sc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        sa += pa[k][l] * pa[k][l];
        sc += pc[k][l] * pc[k][l];
      }
      for (std::size_t k = 0; k < d; ++k) {
        na[k][l] = pa[k][l] / std::sqrt(sa);
        nc[k][l] = pc[k][l] / std::sqrt(sc);
      }
    }
    Grid lambda = grid(len, len);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < len; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < d; ++p)
          for (std::size_t q = 0; q < d; ++q) s += na[p][i] * w[p][q] * nc[q][j];
        lambda[i][j] = s;
      }
    // A_audio: softmax down each column of lambda; A_cbp: same for lambda^T.
    Grid att_a = grid(len, len), att_c = grid(len, len);
    for (std::size_t j = 0; j < len; ++j) {
      double za = 0.0, zc = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        za += std::exp(lambda[i][j]);
        zc += std::exp(lambda[j][i]);
      }
      for (std::size_t i = 0; i < len; ++i) {
        att_a[i][j] = std::exp(lambda[i][j]) / za;
        att_c[i][j] = std::exp(lambda[j][i]) / zc;
      }
    }
    Grid next_a = grid(d, len), next_c = grid(d, len);
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t l = 0; l < len; ++l) {
        double xa = 0.0, xc = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          xa += pa[k][i] * att_a[i][l];
          xc += pc[k][i] * att_c[i][l];
        }
        double dense_a = 0.0, dense_c = 0.0;
        for (std::size_t h = 0; h < hist_a.size(); ++h) {
          dense_a += hist_a[h][k][l];
          dense_c += hist_c[h][k][l];
        }
        next_a[k][l] = std::tanh(dense_a + xa);
        next_c[k][l] = std::tanh(dense_c + xc);
      }
    hist_a.push_back(next_a);
    hist_c.push_back(next_c);
  }
  return {hist_a.back(), hist_c.back()};
}

// ---- Cross-view collaborative attention, segment-major T x d inputs. ----

inline Grid collaborative(const Grid& x_cbp, const Grid& x_vlp, const Grid& view, const Grid& w_q, const Grid& w_k,
                          const Grid& w_v) {
  const std::size_t len = x_cbp.size();
  const std::size_t d = x_cbp[0].size();
  const std::size_t dk = w_q[0].size();
  const std::size_t dv = w_v[0].size();
  Grid m = grid(len, 2 * d);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t i = 0; i < d; ++i) {
      m[t][i] = x_cbp[t][i];
      m[t][d + i] = x_vlp[t][i];
    }
  Grid q = grid(len, dk), k = grid(len, dk), v = grid(len, dv);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t a = 0; a < dk; ++a)
      for (std::size_t i = 0; i < 2 * d; ++i) {
        q[t][a] += m[t][i] * w_q[i][a];
        k[t][a] += m[t][i] * w_k[i][a];
      }
    for (std::size_t b = 0; b < dv; ++b)
      for (std::size_t i = 0; i < d; ++i) v[t][b] += view[t][i] * w_v[i][b];
  }
  Grid z = grid(len, dv);
  for (std::size_t t = 0; t < len; ++t) {
    std::vector<double> s(len);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t u = 0; u < len; ++u) {
      double dot = 0.0;
      for (std::size_t a = 0; a < dk; ++a) dot += q[t][a] * k[u][a];
      s[u] = dot / std::sqrt(static_cast<double>(dk));
      peak = std::max(peak, s[u]);
    }
    double denom = 0.0;
    for (std::size_t u = 0; u < len; ++u) denom += std::exp(s[u] - peak);
    for (std::size_t u = 0; u < len; ++u) {
      const double p = std::exp(s[u] - peak) / denom;
      for (std::size_t b = 0; b < dv; ++b) z[t][b] += p * v[u][b];
    }
  }
  return z;
}

// ---- Feature decorrelation on d x L inputs. ----

inline double decorrelation_term(const Grid& x, bool normalize_rows) {
  const std::size_t d = x.size();
  const std::size_t len = x[0].size();
  Grid n = x;
  if (normalize_rows) {
    for (std::size_t k = 0; k < d; ++k) {
      double s = 0.0;
      for (std::size_t l = 0; l < len; ++l) s += x[k][l] * x[k][l];
      for (std::size_t l = 0; l < len; ++l) n[k][l] = x[k][l] / std::sqrt(s);
    }
  }
  double loss = 0.0;
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      double g = 0.0;
      for (std::size_t l = 0; l < len; ++l) g += n[a][l] * n[b][l];
      const double r = g - (a == b ? 1.0 : 0.0);
      loss += r * r;
    }
  return loss;
}

inline double decorrelation(const Grid& audio, const Grid& cbp, bool normalize_rows = true) {
  return decorrelation_term(audio, normalize_rows) + decorrelation_term(cbp, normalize_rows);
}

// ---- Instance discrimination for one view; bank rows are unit vectors. ----

inline double instance_view(const std::vector<double>& z, std::size_t index, const Grid& bank, double tau) {
  double norm = 0.0;
  for (double v : z) norm += v * v;
  norm = std::sqrt(norm);
  double denom = 0.0, positive = 0.0;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    double dot = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) dot += z[k] / norm * bank[i][k];
    const double e = std::exp(dot / tau);
    denom += e;
    if (i == index) positive = e;
  }
  return -std::log(positive / denom);
}

// ---- Temporal IoU, AP by exhaustive matching, NMS by exhaustive keep-sets. ----

inline double iou(double a0, double a1, double b0, double b1) {
  const double lo = a0 > b0 ? a0 : b0;
  const double hi = a1 < b1 ? a1 : b1;
  const double inter = hi > lo ? hi - lo : 0.0;
  return inter / ((a1 - a0) + (b1 - b0) - inter);
}

struct Box {
  std::string video;
  int cls = 0;
  double start = 0.0;
  double end = 0.0;
  double score = 0.0;
};

inline bool ranks_before(const Box& a, const Box& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start != b.start) return a.start < b.start;
  if (a.end - a.start != b.end - b.start) return a.end - a.start < b.end - b.start;
  return a.video < b.video;
}

// Enumerates every injective assignment of ranked proposals to GTs (or to no
// GT), keeps the assignments consistent with the greedy rule at every rank
// (take the best-IoU unmatched same-video GT if it clears the threshold,
// lowest index on ties), and returns the AP of that unique assignment.
// Returns NaN when zero or several assignments survive.
inline double exhaustive_ap(std::vector<Box> props, const std::vector<Box>& gts, double threshold) {
  if (gts.empty()) return props.empty() ? 1.0 : 0.0;
  std::stable_sort(props.begin(), props.end(), ranks_before);
  const std::size_t n = props.size();
  const std::size_t g = gts.size();
  std::vector<int> assign(n, -1);
  int valid = 0;
  double ap = std::numeric_limits<double>::quiet_NaN();

  std::function<void(std::size_t)> rec = [&](std::size_t r) {
    if (r == n) {
      std::vector<char> used(g, 0);
      for (std::size_t i = 0; i < n; ++i) {
        double best = -1.0;
        int best_g = -1;
        for (std::size_t j = 0; j < g; ++j) {
          if (used[j] || gts[j].video != props[i].video) continue;
          const double v = iou(props[i].start, props[i].end, gts[j].start, gts[j].end);
          if (v > best) {
            best = v;
            best_g = static_cast<int>(j);
          }
        }
        const int expected = (best_g >= 0 && best >= threshold) ? best_g : -1;
        if (assign[i] != expected) return;
        if (assign[i] >= 0) used[static_cast<std::size_t>(assign[i])] = 1;
      }
      ++valid;
      double sum = 0.0;
      int tp = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (assign[i] >= 0) sum += static_cast<double>(++tp) / static_cast<double>(i + 1);
      ap = sum / static_cast<double>(g);
      return;
    }
    for (int choice = -1; choice < static_cast<int>(g); ++choice) {
      bool taken = false;
      for (std::size_t i = 0; i < r; ++i) taken |= (choice >= 0 && assign[i] == choice);
      if (taken) continue;
      assign[r] = choice;
      rec(r + 1);
    }
    assign[r] = -1;
  };
  rec(0);
  return valid == 1 ? ap : std::numeric_limits<double>::quiet_NaN();
}

// Returns the unique subset S of the ranked proposals such that a proposal is
// in S iff no earlier member of S of the same video and class overlaps it at
// IoU >= threshold. Result is in rank order; empty + flag on non-uniqueness.
inline std::vector<Box> exhaustive_nms(std::vector<Box> props, double threshold, bool* unique = nullptr) {
  std::stable_sort(props.begin(), props.end(), ranks_before);
  const std::size_t n = props.size();
  std::vector<Box> result;
  int count = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      bool blocked = false;
      for (std::size_t j = 0; j < i; ++j)
        if ((mask >> j & 1u) && props[j].video == props[i].video && props[j].cls == props[i].cls &&
            iou(props[j].start, props[j].end, props[i].start, props[i].end) >= threshold)
          blocked = true;
      ok = ((mask >> i & 1u) != 0) == !blocked;
    }
    if (!ok) continue;
    ++count;
    result.clear();
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1u) result.push_back(props[i]);
  }
  if (unique) *unique = count == 1;
  return result;
}

// Globally optimal 2-means by enumerating every bipartition (n <= ~22).
inline std::vector<int> exhaustive_two_means(const Grid& points) {
  const std::size_t n = points.size();
  const std::size_t d = points[0].size();
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t best_mask = 0;
  std::vector<double> sum0(d), sum1(d);
  // Fix point 0 in cluster 0 to skip mirrored partitions.
  for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
    std::fill(sum0.begin(), sum0.end(), 0.0);
    std::fill(sum1.begin(), sum1.end(), 0.0);
    double sq = 0.0;
    std::size_t c1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool in1 = i > 0 && (mask >> (i - 1) & 1u);
      c1 += in1;
      auto& s = in1 ? sum1 : sum0;
      for (std::size_t k = 0; k < d; ++k) {
        s[k] += points[i][k];
        sq += points[i][k] * points[i][k];
      }
    }
    if (c1 == 0) continue;
    const double c0 = static_cast<double>(n - c1);
    double between = 0.0;
    for (std::size_t k = 0; k < d; ++k)
      between += sum0[k] * sum0[k] / c0 + sum1[k] * sum1[k] / static_cast<double>(c1);
    const double sse = sq - between;
    if (sse < best) {
      best = sse;
      best_mask = mask;
    }
  }
  std::vector<int> labels(n, 0);
  for (std::size_t i = 1; i < n; ++i) labels[i] = (best_mask >> (i - 1) & 1u) ? 1 : 0;
  return labels;
}

// Writes a feature file byte by byte with explicit little-endian shifts.
inline std::string feature_file_bytes(std::uint32_t rows, std::uint32_t cols, const std::vector<float>& payload,
                                      std::uint32_t version = 1, const char* magic = "CAFE") {
  std::string out(magic, 4);
  auto put = [&](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
  };
  put(version);
  put(rows);
  put(cols);
  for (float f : payload) {
    std::uint32_t bits;
    static_assert(sizeof bits == sizeof f);
    std::memcpy(&bits, &f, sizeof f);
    put(bits);
  }
  return out;
}

}  // namespace oracle
