#include "pronet/nets.hpp"

#include <cmath>

namespace pronet {

namespace {

void fill_normal(Param& p, Rng& rng, float std_dev) {
  for (Eigen::Index i = 0; i < p.value.size(); ++i)
    p.value[i] = std_dev * static_cast<float>(rng.normal());
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(const std::string& name, int in_ch, int out_ch, int stride, Rng& rng)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      stride_(stride),
      weight_(name + ".W", {out_ch, in_ch * 9}),
      bias_(name + ".b", {out_ch}, true, false) {
  fill_normal(weight_, rng, std::sqrt(2.0f / static_cast<float>(in_ch * 9)));
}

FeatureMap Conv2d::forward(const FeatureMap& x, ConvCache* cache) const {
  if (x.channels() != in_ch_) throw ShapeError("Conv2d: channel mismatch");
  const int h = x.height, w = x.width;
  const int h2 = (h + 2 - 3) / stride_ + 1;
  const int w2 = (w + 2 - 3) / stride_ + 1;
  MatF cols = MatF::Zero(h2 * w2, in_ch_ * 9);
  for (int oy = 0; oy < h2; ++oy)
    for (int ox = 0; ox < w2; ++ox) {
      const int row = oy * w2 + ox;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride_ - 1 + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride_ - 1 + kx;
          if (ix < 0 || ix >= w) continue;
          for (int c = 0; c < in_ch_; ++c)
            cols(row, c * 9 + ky * 3 + kx) = x.values(iy * w + ix, c);
        }
      }
    }
  FeatureMap out;
  out.height = h2;
  out.width = w2;
  out.values = cols * weight_.mat().transpose();
  out.values.rowwise() += bias_.value.transpose();
  out.values = out.values.cwiseMax(0.0f);
  if (cache) {
    cache->cols = std::move(cols);
    cache->out = out.values;
    cache->h_in = h;
    cache->w_in = w;
    cache->h_out = h2;
    cache->w_out = w2;
  }
  return out;
}

FeatureMap Conv2d::backward(const ConvCache& cache, const MatF& d_out) {
  MatF d_pre = (cache.out.array() > 0.0f).cast<float>().matrix().cwiseProduct(d_out);
  weight_.gmat() += d_pre.transpose() * cache.cols;
  bias_.grad += d_pre.colwise().sum();
  const MatF d_cols = d_pre * weight_.mat();
  FeatureMap dx;
  dx.height = cache.h_in;
  dx.width = cache.w_in;
  dx.values = MatF::Zero(cache.h_in * cache.w_in, in_ch_);
  for (int oy = 0; oy < cache.h_out; ++oy)
    for (int ox = 0; ox < cache.w_out; ++ox) {
      const int row = oy * cache.w_out + ox;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride_ - 1 + ky;
        if (iy < 0 || iy >= cache.h_in) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride_ - 1 + kx;
          if (ix < 0 || ix >= cache.w_in) continue;
          for (int c = 0; c < in_ch_; ++c)
            dx.values(iy * cache.w_in + ix, c) += d_cols(row, c * 9 + ky * 3 + kx);
        }
      }
    }
  return dx;
}

void Conv2d::collect(ParamRefs& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------------------
// Backbone

void BackboneConfig::validate() const {
  if (widths.empty() || widths.size() != strides.size())
    throw ConfigError("backbone: widths/strides must be non-empty and aligned");
  for (int w : widths)
    if (w < 1) throw ConfigError("backbone: widths must be >= 1");
  for (int s : strides)
    if (s < 1) throw ConfigError("backbone: strides must be >= 1");
  if (final_stage_stride != 1 && final_stage_stride != 2)
    throw ConfigError("backbone: final_stage_stride must be 1 or 2");
}

std::vector<int> BackboneConfig::effective_strides() const {
  std::vector<int> s = strides;
  s.back() = final_stage_stride;
  return s;
}

std::pair<int, int> BackboneConfig::output_dims() const {
  int h = input_height, w = input_width;
  for (int s : effective_strides()) {
    h = (h + 2 - 3) / s + 1;
    w = (w + 2 - 3) / s + 1;
  }
  return {h, w};
}

Backbone::Backbone(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const auto strides = cfg_.effective_strides();
  int in_ch = 3;
  for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
    stages_.emplace_back("backbone.stage" + std::to_string(i), in_ch,
                         cfg_.widths[i], strides[i], rng);
    in_ch = cfg_.widths[i];
  }
}

FeatureMap Backbone::forward(const FeatureMap& input, BackboneCache* cache) const {
  if (input.height != cfg_.input_height || input.width != cfg_.input_width)
    throw ShapeError("backbone: input size does not match config");
  if (cache) cache->stages.resize(stages_.size());
  FeatureMap x = input;
  for (std::size_t i = 0; i < stages_.size(); ++i)
    x = stages_[i].forward(x, cache ? &cache->stages[i] : nullptr);
  return x;
}

void Backbone::backward(const BackboneCache& cache, const MatF& d_out) {
  MatF d = d_out;
  for (std::size_t i = stages_.size(); i-- > 0;) {
    FeatureMap dx = stages_[i].backward(cache.stages[i], d);
    d = std::move(dx.values);
  }
}

void Backbone::collect(ParamRefs& out) {
  for (auto& s : stages_) s.collect(out);
}

// ---------------------------------------------------------------------------
// BatchNorm1d

BatchNorm1d::BatchNorm1d(const std::string& name, int channels)
    : channels_(channels),
      gamma_(name + ".gamma", {channels}, true, false),
      run_mean_(name + ".running_mean", {channels}, false, false),
      run_var_(name + ".running_var", {channels}, false, false) {
  gamma_.value.setOnes();
  run_var_.value.setOnes();
}

MatF BatchNorm1d::forward(const MatF& x, bool training, BnCache* cache) {
  if (x.cols() != channels_) throw ShapeError("BatchNorm1d: channel mismatch");
  const auto batch = x.rows();
  VecF mean, var;
  if (training) {
    mean = x.colwise().mean();
    MatF centered = x.rowwise() - mean.transpose();
    var = centered.array().square().colwise().mean();
    const float unbias = batch > 1 ? static_cast<float>(batch) / (batch - 1) : 1.0f;
    run_mean_.value = (1.0f - kMomentum) * run_mean_.value + kMomentum * mean;
    run_var_.value = (1.0f - kMomentum) * run_var_.value + kMomentum * unbias * var;
  } else {
    mean = run_mean_.value;
    var = run_var_.value;
  }
  VecF inv_std = (var.array() + kEps).rsqrt();
  MatF xhat = (x.rowwise() - mean.transpose()).array().rowwise() *
              inv_std.transpose().array();
  MatF y = xhat.array().rowwise() * gamma_.value.transpose().array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    return y;
  }
  return y;
}

MatF BatchNorm1d::backward(const BnCache& cache, const MatF& d_out) {
  const auto batch = d_out.rows();
  gamma_.grad += d_out.cwiseProduct(cache.xhat).colwise().sum();
  MatF d_xhat = d_out.array().rowwise() * gamma_.value.transpose().array();
  VecF sum_dxhat = d_xhat.colwise().sum();
  VecF sum_dxhat_xhat = d_xhat.cwiseProduct(cache.xhat).colwise().sum();
  MatF dx = static_cast<float>(batch) * d_xhat;
  dx.rowwise() -= sum_dxhat.transpose();
  dx -= (cache.xhat.array().rowwise() * sum_dxhat_xhat.transpose().array()).matrix();
  dx.array().rowwise() *=
      (cache.inv_std / static_cast<float>(batch)).transpose().array();
  return dx;
}

void BatchNorm1d::collect(ParamRefs& out) {
  out.push_back(&gamma_);
  out.push_back(&run_mean_);
  out.push_back(&run_var_);
}

// ---------------------------------------------------------------------------
// PoolHead

PoolHead::PoolHead(const std::string& name, Pooling mode, float init_n)
    : mode_(mode), rho_(name + ".rho", {1}, mode == Pooling::Gem, false) {
  if (mode_ == Pooling::Gem) rho_.value[0] = gem_rho_for(init_n);
}

float PoolHead::exponent() const { return gem_exponent(rho_.value[0]); }

VecF PoolHead::forward(const MatF& acts, PoolCache* cache) const {
  if (cache) cache->acts = acts;
  switch (mode_) {
    case Pooling::Gap:
      return gap_pool<float>(acts);
    case Pooling::Gmp: {
      VecF out(acts.cols());
      if (cache) cache->argmax.assign(acts.cols(), 0);
      for (Eigen::Index c = 0; c < acts.cols(); ++c) {
        Eigen::Index best = 0;
        for (Eigen::Index r = 1; r < acts.rows(); ++r)
          if (acts(r, c) > acts(best, c)) best = r;
        out[c] = acts(best, c);
        if (cache) cache->argmax[c] = static_cast<int>(best);
      }
      return out;
    }
    default:
      return gem_pool<float>(acts, exponent(), kClampEps);
  }
}

MatF PoolHead::backward(const PoolCache& cache, const VecF& d_out) {
  const auto rows = cache.acts.rows();
  const auto cols = cache.acts.cols();
  switch (mode_) {
    case Pooling::Gap: {
      MatF d = MatF::Zero(rows, cols);
      d.rowwise() = (d_out / static_cast<float>(rows)).transpose();
      return d;
    }
    case Pooling::Gmp: {
      MatF d = MatF::Zero(rows, cols);
      for (Eigen::Index c = 0; c < cols; ++c) d(cache.argmax[c], c) = d_out[c];
      return d;
    }
    default: {
      MatF d_acts;
      float d_n = 0.0f;
      gem_pool_backward<float>(cache.acts, exponent(), kClampEps, d_out, &d_acts,
                               &d_n);
      rho_.grad[0] += d_n * gem_exponent_grad(rho_.value[0]);
      return d_acts;
    }
  }
}

void PoolHead::collect(ParamRefs& out) {
  if (mode_ == Pooling::Gem) out.push_back(&rho_);
}

// ---------------------------------------------------------------------------
// parts

std::vector<Stripe> partition_parts(int height, int num_parts) {
  if (num_parts < 1 || num_parts > height)
    throw ConfigError("partition_parts: need 1 <= num_parts <= feature height");
  std::vector<Stripe> stripes(num_parts);
  const int base = height / num_parts;
  const int extra = height % num_parts;
  int row = 0;
  for (int i = 0; i < num_parts; ++i) {
    stripes[i].row_begin = row;
    stripes[i].rows = base + (i < extra ? 1 : 0);
    row += stripes[i].rows;
  }
  return stripes;
}

MatF stripe_block(const FeatureMap& map, const Stripe& s) {
  return map.values.middleRows(s.row_begin * map.width, s.rows * map.width);
}

// ---------------------------------------------------------------------------
// linear layers

LinearNoBias::LinearNoBias(const std::string& name, int in_dim, int out_dim, Rng& rng)
    : weight_(name + ".W", {out_dim, in_dim}) {
  fill_normal(weight_, rng, 1.0f / std::sqrt(static_cast<float>(in_dim)));
}

MatF LinearNoBias::forward(const MatF& x) const {
  if (x.cols() != weight_.cols()) throw ShapeError("LinearNoBias: dim mismatch");
  return x * weight_.mat().transpose();
}

MatF LinearNoBias::backward(const MatF& x, const MatF& d_out) {
  weight_.gmat() += d_out.transpose() * x;
  return d_out * weight_.mat();
}

void LinearNoBias::collect(ParamRefs& out) { out.push_back(&weight_); }

Linear::Linear(const std::string& name, int in_dim, int out_dim, Rng& rng)
    : weight_(name + ".W", {in_dim, out_dim}),
      bias_(name + ".b", {out_dim}, true, false) {
  fill_normal(weight_, rng, 1.0f / std::sqrt(static_cast<float>(in_dim)));
}

MatF Linear::forward(const MatF& x) const {
  if (x.cols() != weight_.rows()) throw ShapeError("Linear: dim mismatch");
  return (x * weight_.mat()).rowwise() + bias_.value.transpose();
}

MatF Linear::backward(const MatF& x, const MatF& d_out) {
  weight_.gmat() += x.transpose() * d_out;
  bias_.grad += d_out.colwise().sum();
  return d_out * weight_.mat().transpose();
}

void Linear::collect(ParamRefs& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

}  // namespace pronet
