#ifndef PRONET_NETS_HPP
#define PRONET_NETS_HPP

#include <string>
#include <vector>

#include "pronet/common.hpp"
#include "pronet/pooling.hpp"
#include "pronet/rng.hpp"

namespace pronet {

// A named flat parameter array with its gradient accumulator. Non-trainable
// params (running statistics) still serialize with the checkpoint.
struct Param {
  std::string name;
  std::vector<int> shape;
  VecF value;
  VecF grad;
  bool trainable = true;
  bool decay = true;  // weight decay applies

  Param() = default;
  Param(std::string n, std::vector<int> s, bool train = true, bool dec = true)
      : name(std::move(n)), shape(std::move(s)), trainable(train), decay(dec) {
    int total = 1;
    for (int d : shape) total *= d;
    value.setZero(total);
    grad.setZero(total);
  }

  int rows() const { return shape.size() > 0 ? shape[0] : 1; }
  int cols() const { return shape.size() > 1 ? shape[1] : 1; }
  Eigen::Map<MatF> mat() { return {value.data(), rows(), cols()}; }
  Eigen::Map<const MatF> mat() const { return {value.data(), rows(), cols()}; }
  Eigen::Map<MatF> gmat() { return {grad.data(), rows(), cols()}; }
};

using ParamRefs = std::vector<Param*>;

// Spatial activation grid: (h*w) x channels, row-major over (y, x).
struct FeatureMap {
  int height = 0;
  int width = 0;
  MatF values;  // (height*width) x channels

  int channels() const { return static_cast<int>(values.cols()); }
};

// ---------------------------------------------------------------------------
// layers

struct ConvCache {
  MatF cols;    // (h_out*w_out) x (in_ch*9)
  MatF out;     // post-relu output, (h_out*w_out) x out_ch
  int h_in = 0, w_in = 0, h_out = 0, w_out = 0;
};

// 3x3 convolution, pad 1, configurable stride, fused bias + ReLU.
class Conv2d {
 public:
  Conv2d(const std::string& name, int in_ch, int out_ch, int stride, Rng& rng);

  FeatureMap forward(const FeatureMap& x, ConvCache* cache) const;
  // returns dL/dx, accumulates dL/dW and dL/db
  FeatureMap backward(const ConvCache& cache, const MatF& d_out);
  void collect(ParamRefs& out);

  int stride() const { return stride_; }

 private:
  int in_ch_, out_ch_, stride_;
  Param weight_;  // out_ch x in_ch*9
  Param bias_;    // out_ch
};

struct BackboneConfig {
  std::vector<int> widths{32, 64, 128, 256};
  std::vector<int> strides{2, 2, 2, 2};
  int final_stage_stride = 1;  // overrides the last stage's stride (1 or 2)
  int input_height = 64;
  int input_width = 32;

  void validate() const;
  std::vector<int> effective_strides() const;
  // spatial dims after all stages
  std::pair<int, int> output_dims() const;
  int output_channels() const { return widths.back(); }
};

struct BackboneCache {
  std::vector<ConvCache> stages;
};

// Stack of 3x3 conv + ReLU stages; output is non-negative.
class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& cfg, Rng& rng);

  FeatureMap forward(const FeatureMap& input, BackboneCache* cache) const;
  void backward(const BackboneCache& cache, const MatF& d_out);
  void collect(ParamRefs& out);
  const BackboneConfig& config() const { return cfg_; }

 private:
  BackboneConfig cfg_;
  std::vector<Conv2d> stages_;
};

struct BnCache {
  MatF xhat;
  VecF inv_std;
};

// Batch normalization over a B x C matrix with learnable scale and shift
// fixed at zero (the BNNeck convention).
class BatchNorm1d {
 public:
  BatchNorm1d(const std::string& name, int channels);

  MatF forward(const MatF& x, bool training, BnCache* cache);
  MatF backward(const BnCache& cache, const MatF& d_out);
  void collect(ParamRefs& out);

 private:
  int channels_;
  Param gamma_;
  Param run_mean_;  // non-trainable
  Param run_var_;   // non-trainable
  static constexpr float kEps = 1e-5f;
  static constexpr float kMomentum = 0.1f;
};

struct PoolCache {
  MatF acts;
  std::vector<int> argmax;  // gmp only
};

// One pooling head (GAP / GMP / GeM with its own learnable exponent).
class PoolHead {
 public:
  PoolHead(const std::string& name, Pooling mode, float init_n = 3.0f);

  VecF forward(const MatF& acts, PoolCache* cache) const;
  MatF backward(const PoolCache& cache, const VecF& d_out);
  void collect(ParamRefs& out);

  Pooling mode() const { return mode_; }
  float exponent() const;
  static constexpr float kClampEps = 1e-6f;

 private:
  Pooling mode_;
  Param rho_;  // gem only; n = 1 + softplus(rho)
};

// ---------------------------------------------------------------------------
// part partitioning

struct Stripe {
  int row_begin = 0;  // spatial row (y) range [row_begin, row_begin + rows)
  int rows = 0;
};

// Horizontal stripes of nearly equal height; remainder rows go to the
// earliest stripes.
std::vector<Stripe> partition_parts(int height, int num_parts);

// View of one stripe of a feature map as an activation block.
MatF stripe_block(const FeatureMap& map, const Stripe& s);

// Linear projection used by the part dimension reduction (a 1x1 convolution
// applied to a pooled vector).
class LinearNoBias {
 public:
  LinearNoBias(const std::string& name, int in_dim, int out_dim, Rng& rng);

  MatF forward(const MatF& x) const;           // (B x in) -> (B x out)
  MatF backward(const MatF& x, const MatF& d_out);  // accumulates dW, returns dx
  void collect(ParamRefs& out);
  Eigen::Map<const MatF> weight() const { return weight_.mat(); }
  Eigen::Map<MatF> weight_mut() { return weight_.mat(); }
  Param& param() { return weight_; }

 private:
  Param weight_;  // out x in
};

class Linear {
 public:
  Linear(const std::string& name, int in_dim, int out_dim, Rng& rng);

  MatF forward(const MatF& x) const;
  MatF backward(const MatF& x, const MatF& d_out);
  void collect(ParamRefs& out);
  Eigen::Map<const MatF> weight() const { return weight_.mat(); }
  Eigen::Map<const MatF> bias() const { return bias_.mat(); }

  Param& weight_param() { return weight_; }
  Param& bias_param() { return bias_; }

 private:
  Param weight_;  // in x out (row-vector convention y = x W + b)
  Param bias_;
};

}  // namespace pronet

#endif
