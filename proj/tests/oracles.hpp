// Test-only reference implementations, kept independent of the library's
// computation paths. Everything here is written as plain loops.
#ifndef PRONET_TESTS_ORACLES_HPP
#define PRONET_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pronet/common.hpp"
#include "pronet/losses.hpp"

namespace oracles {

using pronet::MatD;
using pronet::VecD;

// Generalized mean at high precision, direct evaluation.
inline long double gem_reference(const std::vector<long double>& acts,
                                 long double n, long double eps) {
  long double sum = 0.0L;
  for (long double a : acts) sum += std::pow(std::max(a, eps), n);
  return std::pow(sum / static_cast<long double>(acts.size()), 1.0L / n);
}

// Naive double-loop projection f W^T.
inline MatD project_reference(const MatD& f, const MatD& w) {
  MatD out(f.rows(), w.rows());
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < f.cols(); ++k) acc += f(i, k) * w(j, k);
      out(i, j) = acc;
    }
  return out;
}

inline double distance_reference(const VecD& a, const VecD& b, pronet::Metric m) {
  if (m == pronet::Metric::Euclidean) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  na = std::max(std::sqrt(na), 1e-12);
  nb = std::max(std::sqrt(nb), 1e-12);
  return 1.0 - dot / (na * nb);
}

inline MatD pairwise_reference(const MatD& x, pronet::Metric m) {
  MatD d(x.rows(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.rows(); ++j)
      d(i, j) = i == j ? 0.0 : distance_reference(x.row(i), x.row(j), m);
  return d;
}

// Exhaustive mining: per anchor, enumerate every positive and negative to
// find the hardest pair; ties by lowest index come out of the < / > scans.
inline double batch_hard_reference(const MatD& x, const std::vector<int>& labels,
                                   double margin, pronet::Metric metric) {
  const int b = static_cast<int>(x.rows());
  const MatD d = pairwise_reference(x, metric);
  double total = 0.0;
  for (int a = 0; a < b; ++a) {
    double worst_pos = -1.0, best_neg = -1.0;
    for (int j = 0; j < b; ++j) {
      if (j == a) continue;
      if (labels[j] == labels[a]) {
        if (d(a, j) > worst_pos) worst_pos = d(a, j);
      } else {
        if (best_neg < 0.0 || d(a, j) < best_neg) best_neg = d(a, j);
      }
    }
    total += std::max(0.0, margin + worst_pos - best_neg);
  }
  return total / b;
}

inline double batch_all_reference(const MatD& x, const std::vector<int>& labels,
                                  double margin, pronet::Metric metric) {
  const int b = static_cast<int>(x.rows());
  const MatD d = pairwise_reference(x, metric);
  double total = 0.0;
  long count = 0;
  for (int a = 0; a < b; ++a)
    for (int p = 0; p < b; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (int n = 0; n < b; ++n) {
        if (labels[n] == labels[a]) continue;
        total += std::max(0.0, margin + d(a, p) - d(a, n));
        ++count;
      }
    }
  return total / count;
}

// Per-query AP/CMC under the cross-camera protocol, written from the
// definition: sort, drop same-pid+same-camid and pid -1, then walk the list.
struct EvalReference {
  double mean_ap = 0.0;
  std::vector<double> cmc;
  int skipped = 0;
};

inline EvalReference evaluate_reference(const MatD& dist,
                                        const std::vector<int>& qp,
                                        const std::vector<int>& qc,
                                        const std::vector<int>& gp,
                                        const std::vector<int>& gc,
                                        int max_rank) {
  EvalReference out;
  out.cmc.assign(max_rank, 0.0);
  int valid = 0;
  for (int q = 0; q < dist.rows(); ++q) {
    std::vector<std::pair<double, int>> ranked;
    for (int g = 0; g < dist.cols(); ++g) ranked.push_back({dist(q, g), g});
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return a.second < b.second;
    });
    std::vector<bool> matches;
    for (const auto& [d, g] : ranked) {
      if (gp[g] == -1) continue;
      if (gp[g] == qp[q] && gc[g] == qc[q]) continue;
      matches.push_back(gp[g] == qp[q]);
    }
    const long rel = std::count(matches.begin(), matches.end(), true);
    if (rel == 0) {
      ++out.skipped;
      continue;
    }
    ++valid;
    double ap = 0.0;
    int hits = 0;
    int first = -1;
    for (int pos = 0; pos < static_cast<int>(matches.size()); ++pos)
      if (matches[pos]) {
        ++hits;
        ap += static_cast<double>(hits) / (pos + 1);
        if (first < 0) first = pos;
      }
    out.mean_ap += ap / rel;
    for (int r = first; r < max_rank; ++r) out.cmc[r] += 1.0;
  }
  out.mean_ap /= valid;
  for (double& v : out.cmc) v /= valid;
  return out;
}

// Naive k-reciprocal re-ranking, coded from the published procedure with
// plain containers. Mirrors the contract: blend with the raw original
// distance, Gaussian kernel exp(-d) on the joint distance matrix.
inline MatD rerank_reference(const MatD& qf, const MatD& gf, int k1, int k2,
                             double lambda, pronet::Metric metric) {
  const int nq = static_cast<int>(qf.rows());
  const int ng = static_cast<int>(gf.rows());
  const int n = nq + ng;
  MatD all(n, qf.cols());
  for (int i = 0; i < nq; ++i) all.row(i) = qf.row(i);
  for (int i = 0; i < ng; ++i) all.row(nq + i) = gf.row(i);

  MatD dist(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      dist(i, j) = i == j ? 0.0 : distance_reference(all.row(i), all.row(j), metric);

  std::vector<std::vector<int>> order(n);
  for (int i = 0; i < n; ++i) {
    order[i].resize(n);
    std::iota(order[i].begin(), order[i].end(), 0);
    std::sort(order[i].begin(), order[i].end(), [&](int a, int b) {
      if (dist(i, a) != dist(i, b)) return dist(i, a) < dist(i, b);
      return a < b;
    });
  }
  auto topk = [&](int i, int k) {
    return std::vector<int>(order[i].begin(), order[i].begin() + std::min(n, k + 1));
  };
  auto reciprocal = [&](int i, int k) {
    std::vector<int> out;
    for (int j : topk(i, k)) {
      const auto back = topk(j, k);
      if (std::find(back.begin(), back.end(), i) != back.end()) out.push_back(j);
    }
    return out;
  };

  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  const int half = static_cast<int>(std::llround(k1 / 2.0));
  for (int i = 0; i < n; ++i) {
    std::vector<int> r = reciprocal(i, k1);
    std::vector<int> expanded = r;
    for (int j : r) {
      std::vector<int> cand = reciprocal(j, half);
      int common = 0;
      for (int c : cand)
        if (std::find(r.begin(), r.end(), c) != r.end()) ++common;
      if (common * 3 > static_cast<int>(cand.size()) * 2)
        for (int c : cand) expanded.push_back(c);
    }
    std::sort(expanded.begin(), expanded.end());
    expanded.erase(std::unique(expanded.begin(), expanded.end()), expanded.end());
    double sum = 0.0;
    for (int j : expanded) sum += std::exp(-dist(i, j));
    for (int j : expanded) v[i][j] = std::exp(-dist(i, j)) / sum;
  }
  if (k2 > 1) {
    std::vector<std::vector<double>> v2(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
      for (int pos = 0; pos < k2; ++pos)
        for (int j = 0; j < n; ++j) v2[i][j] += v[order[i][pos]][j];
      for (int j = 0; j < n; ++j) v2[i][j] /= k2;
    }
    v = v2;
  }
  MatD out(nq, ng);
  for (int q = 0; q < nq; ++q)
    for (int g = 0; g < ng; ++g) {
      double mins = 0.0, maxs = 0.0;
      for (int j = 0; j < n; ++j) {
        mins += std::min(v[q][j], v[nq + g][j]);
        maxs += std::max(v[q][j], v[nq + g][j]);
      }
      const double jaccard = maxs > 0.0 ? 1.0 - mins / maxs : 1.0;
      out(q, g) = lambda * distance_reference(qf.row(q), gf.row(g), metric) +
                  (1.0 - lambda) * jaccard;
    }
  return out;
}

}  // namespace oracles

#endif
