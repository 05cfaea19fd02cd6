#ifndef PRONET_LOSSES_HPP
#define PRONET_LOSSES_HPP

#include <cmath>
#include <limits>
#include <vector>

#include "pronet/common.hpp"

namespace pronet {

enum class Metric { Euclidean, Cosine };
enum class TripletVariant { BatchHard, BatchAll };
enum class TripletTarget { RawFeature, ProjectedFeature };

struct TripletConfig {
  bool enabled = true;  // "w/o Tri." ablation switch
  double margin = 0.3;
  Metric metric = Metric::Cosine;
  TripletTarget target = TripletTarget::ProjectedFeature;
  TripletVariant variant = TripletVariant::BatchHard;
};

// Label-smoothed target distribution: (1 - eps) mass on the true class,
// eps spread uniformly over all classes.
template <class S>
VecX<S> smooth_targets(int label, int num_classes, S epsilon) {
  if (epsilon < S(0) || epsilon >= S(1))
    throw ConfigError("smooth_targets: epsilon must lie in [0, 1)");
  if (label < 0 || label >= num_classes)
    throw ConfigError("smooth_targets: label out of range");
  VecX<S> q = VecX<S>::Constant(num_classes, epsilon / static_cast<S>(num_classes));
  q[label] += S(1) - epsilon;
  return q;
}

// Cross entropy between smoothed targets and softmax(logits), averaged over
// the batch. Uses log-sum-exp stabilization. If d_logits is non-null it
// receives dL/dlogits.
template <class S>
S id_loss(const MatX<S>& logits, const std::vector<int>& labels, S epsilon,
          MatX<S>* d_logits = nullptr) {
  const auto batch = logits.rows();
  const auto classes = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != batch)
    throw ShapeError("id_loss: labels/logits batch mismatch");
  if (d_logits) d_logits->setZero(batch, classes);
  const S uniform = epsilon / static_cast<S>(classes);
  S total = 0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const S zmax = logits.row(b).maxCoeff();
    S sum = 0;
    for (Eigen::Index j = 0; j < classes; ++j) sum += std::exp(logits(b, j) - zmax);
    const S lse = zmax + std::log(sum);
    // loss_b = lse - sum_j q_j z_j
    S dot = 0;
    for (Eigen::Index j = 0; j < classes; ++j) dot += uniform * logits(b, j);
    dot += (S(1) - epsilon) * logits(b, labels[b]);
    total += lse - dot;
    if (d_logits) {
      for (Eigen::Index j = 0; j < classes; ++j) {
        const S p = std::exp(logits(b, j) - lse);
        (*d_logits)(b, j) = (p - uniform) / static_cast<S>(batch);
      }
      (*d_logits)(b, labels[b]) -= (S(1) - epsilon) / static_cast<S>(batch);
    }
  }
  return total / static_cast<S>(batch);
}

inline constexpr double kCosineNormFloor = 1e-12;

// Rectangular distance matrix between the rows of A and the rows of B.
template <class S>
MatX<S> cross_distance(const MatX<S>& a, const MatX<S>& b, Metric metric) {
  if (a.cols() != b.cols()) throw ShapeError("cross_distance: dim mismatch");
  MatX<S> d(a.rows(), b.rows());
  if (metric == Metric::Euclidean) {
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < b.rows(); ++j)
        d(i, j) = (a.row(i) - b.row(j)).norm();
  } else {
    VecX<S> na(a.rows()), nb(b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      na[i] = std::max(a.row(i).norm(), static_cast<S>(kCosineNormFloor));
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      nb[j] = std::max(b.row(j).norm(), static_cast<S>(kCosineNormFloor));
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < b.rows(); ++j)
        d(i, j) = S(1) - a.row(i).dot(b.row(j)) / (na[i] * nb[j]);
  }
  return d;
}

// Square pairwise distance matrix over one batch of row features.
template <class S>
MatX<S> pairwise_distance(const MatX<S>& x, Metric metric) {
  MatX<S> d = cross_distance(x, x, metric);
  d.diagonal().setZero();
  return d;
}

namespace detail {

// Accumulate dL/dX from dL/dD for one (i, j) pair.
template <class S>
void distance_pair_backward(const MatX<S>& x, Metric metric, Eigen::Index i,
                            Eigen::Index j, S dd, MatX<S>& dx) {
  if (i == j || dd == S(0)) return;
  if (metric == Metric::Euclidean) {
    const S dist = (x.row(i) - x.row(j)).norm();
    if (dist <= S(0)) return;  // subgradient 0 at coincident points
    const S g = dd / dist;
    dx.row(i) += g * (x.row(i) - x.row(j));
    dx.row(j) -= g * (x.row(i) - x.row(j));
  } else {
    const S ni = std::max(x.row(i).norm(), static_cast<S>(kCosineNormFloor));
    const S nj = std::max(x.row(j).norm(), static_cast<S>(kCosineNormFloor));
    const S sim = x.row(i).dot(x.row(j)) / (ni * nj);
    const S ds = -dd;  // D = 1 - sim
    dx.row(i) += ds * (x.row(j) / (ni * nj) - sim * x.row(i) / (ni * ni));
    dx.row(j) += ds * (x.row(i) / (ni * nj) - sim * x.row(j) / (nj * nj));
  }
}

}  // namespace detail

// Triplet loss with in-batch mining, hinge [m + D(a,p) - D(a,n)]_+.
// BatchHard: per anchor, hardest positive (max distance, self excluded) and
// hardest negative (min distance), ties broken by lowest sample index; mean
// over anchors. BatchAll: mean over every valid (a,p,n) triplet.
// If d_x is non-null it receives dL/dX.
template <class S>
S triplet_loss(const MatX<S>& x, const std::vector<int>& labels, S margin,
               Metric metric, TripletVariant variant, MatX<S>* d_x = nullptr) {
  const auto batch = x.rows();
  if (static_cast<Eigen::Index>(labels.size()) != batch)
    throw ShapeError("triplet_loss: labels/features batch mismatch");
  const MatX<S> dist = pairwise_distance(x, metric);
  MatX<S> dd = MatX<S>::Zero(batch, batch);
  S total = 0;
  if (variant == TripletVariant::BatchHard) {
    for (Eigen::Index a = 0; a < batch; ++a) {
      Eigen::Index hp = -1, hn = -1;
      for (Eigen::Index j = 0; j < batch; ++j) {
        if (j == a) continue;
        if (labels[j] == labels[a]) {
          if (hp < 0 || dist(a, j) > dist(a, hp)) hp = j;
        } else {
          if (hn < 0 || dist(a, j) < dist(a, hn)) hn = j;
        }
      }
      if (hp < 0 || hn < 0)
        throw DataError("triplet_loss: anchor without positive or negative");
      const S hinge = margin + dist(a, hp) - dist(a, hn);
      if (hinge > S(0)) {
        total += hinge;
        dd(a, hp) += S(1) / static_cast<S>(batch);
        dd(a, hn) -= S(1) / static_cast<S>(batch);
      }
    }
    total /= static_cast<S>(batch);
  } else {
    long count = 0;
    for (Eigen::Index a = 0; a < batch; ++a)
      for (Eigen::Index p = 0; p < batch; ++p) {
        if (p == a || labels[p] != labels[a]) continue;
        for (Eigen::Index n = 0; n < batch; ++n) {
          if (labels[n] == labels[a]) continue;
          ++count;
          const S hinge = margin + dist(a, p) - dist(a, n);
          if (hinge > S(0)) {
            total += hinge;
            dd(a, p) += S(1);
            dd(a, n) -= S(1);
          }
        }
      }
    if (count == 0)
      throw DataError("triplet_loss: batch has no valid triplet");
    total /= static_cast<S>(count);
    dd /= static_cast<S>(count);
  }
  if (d_x) {
    d_x->setZero(batch, x.cols());
    for (Eigen::Index i = 0; i < batch; ++i)
      for (Eigen::Index j = 0; j < batch; ++j)
        detail::distance_pair_backward(x, metric, i, j, dd(i, j), *d_x);
  }
  return total;
}

}  // namespace pronet

#endif
