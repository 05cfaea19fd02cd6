#ifndef PRONET_POOLING_HPP
#define PRONET_POOLING_HPP

#include <cmath>

#include "pronet/common.hpp"

namespace pronet {

enum class Pooling { Gap, Gmp, Gem };

// Generalized-mean pooling over the spatial axis.
// acts: (h*w) x C activation matrix, one column per channel.
// Per channel: y = (mean_i max(a_i, eps)^n)^(1/n). n = 1 reduces to the
// mean, n -> inf approaches the max.
template <class S>
VecX<S> gem_pool(const MatX<S>& acts, S n, S eps) {
  const auto rows = acts.rows();
  const auto cols = acts.cols();
  VecX<S> out(cols);
  const S inv_m = S(1) / static_cast<S>(rows);
  for (Eigen::Index c = 0; c < cols; ++c) {
    S sum = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      S a = acts(r, c) >= eps ? acts(r, c) : eps;
      sum += std::pow(a, n);
    }
    out[c] = std::pow(sum * inv_m, S(1) / n);
  }
  return out;
}

// Gradient of gem_pool w.r.t. the activations and the exponent n.
// d_acts may be null (exponent-only check) and d_n may be null.
template <class S>
void gem_pool_backward(const MatX<S>& acts, S n, S eps, const VecX<S>& dy,
                       MatX<S>* d_acts, S* d_n) {
  const auto rows = acts.rows();
  const auto cols = acts.cols();
  const S inv_m = S(1) / static_cast<S>(rows);
  if (d_acts) d_acts->setZero(rows, cols);
  if (d_n) *d_n = 0;
  for (Eigen::Index c = 0; c < cols; ++c) {
    S sum = 0;      // mean of a^n
    S sum_log = 0;  // mean of a^n * ln a
    for (Eigen::Index r = 0; r < rows; ++r) {
      S a = acts(r, c) >= eps ? acts(r, c) : eps;
      S an = std::pow(a, n);
      sum += an * inv_m;
      sum_log += an * std::log(a) * inv_m;
    }
    const S y = std::pow(sum, S(1) / n);
    if (d_acts) {
      const S scale = std::pow(sum, S(1) / n - S(1)) * inv_m;
      for (Eigen::Index r = 0; r < rows; ++r) {
        if (acts(r, c) < eps) continue;  // clamped entries get no gradient
        (*d_acts)(r, c) = dy[c] * scale * std::pow(acts(r, c), n - S(1));
      }
    }
    if (d_n) {
      // d/dn exp((1/n) ln S) = y * (-ln S / n^2 + S'/(n S))
      *d_n += dy[c] * y * (-std::log(sum) / (n * n) + sum_log / (n * sum));
    }
  }
}

// Global average pooling (columnwise mean).
template <class S>
VecX<S> gap_pool(const MatX<S>& acts) {
  return acts.colwise().mean();
}

// Global max pooling (columnwise max).
template <class S>
VecX<S> gmp_pool(const MatX<S>& acts) {
  return acts.colwise().maxCoeff();
}

// GeM exponent reparameterization n = 1 + softplus(rho), keeping n >= 1.
template <class S>
S gem_exponent(S rho) {
  S sp = rho > S(20) ? rho : std::log1p(std::exp(rho));
  return S(1) + sp;
}

template <class S>
S gem_exponent_grad(S rho) {
  // d n / d rho = sigmoid(rho)
  return S(1) / (S(1) + std::exp(-rho));
}

// Inverse of the reparameterization, used to initialize rho from a target n.
template <class S>
S gem_rho_for(S n) {
  S sp = n - S(1);
  return std::log(std::expm1(sp));
}

}  // namespace pronet

#endif
