#include "pronet/prototypes.hpp"

#include <algorithm>
#include <cmath>

namespace pronet {

PrototypeBank::PrototypeBank(const std::string& name, int num_classes, int dim,
                             Rng& rng)
    : weight_(name + ".W", {num_classes, dim}) {
  if (num_classes < 2)
    throw ConfigError("prototype bank needs at least 2 classes");
  const float scale = 1.0f / std::sqrt(static_cast<float>(dim));
  for (Eigen::Index i = 0; i < weight_.value.size(); ++i)
    weight_.value[i] = scale * static_cast<float>(rng.normal());
}

MatF PrototypeBank::project_batch(const MatF& f) const {
  return project<float>(f, weight_.mat());
}

MatF PrototypeBank::backward(const MatF& f, const MatF& d_logits) {
  weight_.gmat() += d_logits.transpose() * f;
  return d_logits * weight_.mat();
}

PrototypeBank::Subset PrototypeBank::subset(double fraction, Rng& rng) const {
  if (fraction <= 0.0 || fraction > 1.0)
    throw ConfigError("prototype subset: fraction must lie in (0, 1]");
  const int n = num_classes();
  const int k = static_cast<int>(std::lround(fraction * n));
  if (k < 1) throw ConfigError("prototype subset: fraction selects no prototypes");
  Subset out;
  out.indices = rng.sample_without_replacement(n, k);
  std::sort(out.indices.begin(), out.indices.end());
  out.weight.resize(k, dim());
  for (int i = 0; i < k; ++i) out.weight.row(i) = weight_.mat().row(out.indices[i]);
  return out;
}

std::vector<std::pair<int, double>> top_prototypes(const VecF& f_s, int k) {
  const int n = static_cast<int>(f_s.size());
  if (k < 0 || k > n) throw ConfigError("top_prototypes: k out of range");
  const double zmax = f_s.maxCoeff();
  std::vector<double> scores(n);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    scores[i] = std::exp(static_cast<double>(f_s[i]) - zmax);
    sum += scores[i];
  }
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  std::vector<std::pair<int, double>> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) out.emplace_back(order[i], scores[order[i]] / sum);
  return out;
}

}  // namespace pronet
