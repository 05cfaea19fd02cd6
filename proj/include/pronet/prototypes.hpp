#ifndef PRONET_PROTOTYPES_HPP
#define PRONET_PROTOTYPES_HPP

#include <string>
#include <utility>
#include <vector>

#include "pronet/common.hpp"
#include "pronet/nets.hpp"
#include "pronet/rng.hpp"

namespace pronet {

// Projection of row features onto prototype rows: f_s = f W^T.
template <class S>
MatX<S> project(const MatX<S>& f, const MatX<S>& w) {
  if (f.cols() != w.cols()) throw ShapeError("project: feature/prototype dim mismatch");
  return f * w.transpose();
}

// The retained classifier: an N^p x d weight matrix whose rows are class
// prototypes. Bias is structurally zero.
class PrototypeBank {
 public:
  PrototypeBank(const std::string& name, int num_classes, int dim, Rng& rng);

  int num_classes() const { return weight_.rows(); }
  int dim() const { return weight_.cols(); }
  Eigen::Map<const MatF> weight() const { return weight_.mat(); }
  Eigen::Map<MatF> weight_mut() { return weight_.mat(); }
  VecF bias() const { return VecF::Zero(num_classes()); }

  MatF project_batch(const MatF& f) const;
  // accumulates dL/dW, returns dL/df
  MatF backward(const MatF& f, const MatF& d_logits);
  void collect(ParamRefs& out) { out.push_back(&weight_); }

  // uniform random row subset without replacement; size = round(fraction * N^p)
  struct Subset {
    MatF weight;
    std::vector<int> indices;
  };
  Subset subset(double fraction, Rng& rng) const;

 private:
  explicit PrototypeBank(Param p) : weight_(std::move(p)) {}
  Param weight_;
};

// Softmax over f_s, top-k entries descending by score, ties broken by lower
// class index. Inspection only; retrieval never applies softmax.
std::vector<std::pair<int, double>> top_prototypes(const VecF& f_s, int k);

}  // namespace pronet

#endif
