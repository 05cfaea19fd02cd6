#ifndef PRONET_MGF_HPP
#define PRONET_MGF_HPP

#include <cmath>

#include "pronet/common.hpp"

namespace pronet {

// Multi-granularity fusion: a two-layer bottleneck gate applied elementwise
// to the concatenated feature.
//   gate = sigmoid(relu(fbar W1 + b1) W2 + b2),  out = gate (*) fbar
// fbar: B x D, W1: D x H, W2: H x D with H = max(1, D / r).

template <class S>
struct MgfCache {
  MatX<S> fbar;
  MatX<S> hidden;  // post-relu
  MatX<S> gate;
};

template <class S>
MatX<S> mgf_forward(const MatX<S>& fbar, const MatX<S>& w1, const VecX<S>& b1,
                    const MatX<S>& w2, const VecX<S>& b2,
                    MgfCache<S>* cache = nullptr) {
  if (fbar.cols() != w1.rows() || w1.cols() != w2.rows() || w2.cols() != fbar.cols())
    throw ShapeError("mgf_forward: weight dimensions do not match feature");
  MatX<S> hidden = (fbar * w1).rowwise() + b1.transpose();
  hidden = hidden.cwiseMax(S(0));
  MatX<S> pre = (hidden * w2).rowwise() + b2.transpose();
  MatX<S> gate = pre.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
  if (cache) {
    cache->fbar = fbar;
    cache->hidden = hidden;
    cache->gate = gate;
  }
  return gate.cwiseProduct(fbar);
}

template <class S>
struct MgfGrads {
  MatX<S> d_fbar;
  MatX<S> d_w1, d_w2;
  VecX<S> d_b1, d_b2;
};

template <class S>
MgfGrads<S> mgf_backward(const MgfCache<S>& cache, const MatX<S>& w1,
                         const MatX<S>& w2, const MatX<S>& d_out) {
  MgfGrads<S> g;
  const MatX<S>& fbar = cache.fbar;
  const MatX<S>& gate = cache.gate;
  MatX<S> d_gate = d_out.cwiseProduct(fbar);
  g.d_fbar = d_out.cwiseProduct(gate);
  MatX<S> d_pre = d_gate.cwiseProduct(gate).cwiseProduct(MatX<S>::Ones(gate.rows(), gate.cols()) - gate);
  g.d_w2 = cache.hidden.transpose() * d_pre;
  g.d_b2 = d_pre.colwise().sum();
  MatX<S> d_hidden = d_pre * w2.transpose();
  // relu mask
  d_hidden = (cache.hidden.array() > S(0)).template cast<S>().matrix().cwiseProduct(d_hidden);
  g.d_w1 = fbar.transpose() * d_hidden;
  g.d_b1 = d_hidden.colwise().sum();
  g.d_fbar += d_hidden * w1.transpose();
  return g;
}

}  // namespace pronet

#endif
