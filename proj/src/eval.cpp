#include "pronet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "pronet/rng.hpp"

namespace pronet {

MatD extract_features(Model& model, const Dataset& ds,
                      const std::vector<int>& record_indices, FeatureKind kind,
                      int batch_size) {
  if (batch_size < 1) throw ConfigError("extract_features: batch_size must be >= 1");
  const int n = static_cast<int>(record_indices.size());
  MatD out;
  for (int begin = 0; begin < n; begin += batch_size) {
    const int count = std::min(batch_size, n - begin);
    std::vector<const Image*> images(count);
    for (int i = 0; i < count; ++i)
      images[i] = &ds.records[record_indices[begin + i]].image;
    const MatF feats = model.extract(images, kind);
    if (out.size() == 0) out.resize(n, feats.cols());
    out.middleRows(begin, count) = feats.cast<double>();
  }
  return out;
}

EvalSet extract_eval_set(Model& model, const Dataset& ds, FeatureKind kind,
                         int batch_size) {
  if (ds.query_indices.empty() || ds.gallery_indices.empty())
    throw DataError("extract_eval_set: dataset has no query/gallery split");
  EvalSet set;
  set.kind = kind;
  set.query_features = extract_features(model, ds, ds.query_indices, kind, batch_size);
  set.gallery_features =
      extract_features(model, ds, ds.gallery_indices, kind, batch_size);
  for (int idx : ds.query_indices) {
    set.query_pids.push_back(ds.records[idx].pid);
    set.query_camids.push_back(ds.records[idx].camid);
  }
  for (int idx : ds.gallery_indices) {
    set.gallery_pids.push_back(ds.records[idx].pid);
    set.gallery_camids.push_back(ds.records[idx].camid);
  }
  return set;
}

EvalResult evaluate(const MatD& distmat, const std::vector<int>& query_pids,
                    const std::vector<int>& query_camids,
                    const std::vector<int>& gallery_pids,
                    const std::vector<int>& gallery_camids, int max_rank) {
  const int num_q = static_cast<int>(distmat.rows());
  const int num_g = static_cast<int>(distmat.cols());
  if (static_cast<int>(query_pids.size()) != num_q ||
      static_cast<int>(query_camids.size()) != num_q ||
      static_cast<int>(gallery_pids.size()) != num_g ||
      static_cast<int>(gallery_camids.size()) != num_g)
    throw ShapeError("evaluate: label arrays do not match distmat");
  if (max_rank < 1) throw ConfigError("evaluate: max_rank must be >= 1");

  EvalResult result;
  result.cmc.assign(max_rank, 0.0);
  int valid_queries = 0;
  std::vector<int> order(num_g);
  for (int q = 0; q < num_q; ++q) {
    std::iota(order.begin(), order.end(), 0);
    // ascending distance, ties broken by gallery index (stable over index order)
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return distmat(q, a) < distmat(q, b);
    });
    int rank = 0;         // position within the filtered list
    int hits = 0;         // relevant items seen so far
    double ap = 0.0;
    int first_hit = -1;
    int total_relevant = 0;
    for (int g : order) {
      if (gallery_pids[g] == -1) continue;  // junk distractor
      if (gallery_pids[g] == query_pids[q] && gallery_camids[g] == query_camids[q])
        continue;  // same identity seen by the same camera
      ++rank;
      if (gallery_pids[g] == query_pids[q]) {
        ++hits;
        ap += static_cast<double>(hits) / rank;
        if (first_hit < 0) first_hit = rank - 1;
      }
    }
    total_relevant = hits;
    if (total_relevant == 0) {
      ++result.skipped_queries;
      continue;
    }
    ++valid_queries;
    result.per_query_ap.push_back(ap / total_relevant);
    result.mean_ap += ap / total_relevant;
    if (first_hit < max_rank)
      for (int r = first_hit; r < max_rank; ++r) result.cmc[r] += 1.0;
  }
  if (valid_queries == 0)
    throw DataError("evaluate: no query has a valid gallery match");
  result.mean_ap /= valid_queries;
  for (double& v : result.cmc) v /= valid_queries;
  return result;
}

EvalResult evaluate_set(const EvalSet& set, Metric metric, int max_rank) {
  const MatD dist = cross_distance(set.query_features, set.gallery_features, metric);
  return evaluate(dist, set.query_pids, set.query_camids, set.gallery_pids,
                  set.gallery_camids, max_rank);
}

// ---------------------------------------------------------------------------
// k-reciprocal re-ranking

namespace {

std::vector<int> argsort_row(const MatD& d, int row) {
  std::vector<int> order(d.cols());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return d(row, a) < d(row, b); });
  return order;
}

// forward k nearest (self included) that also rank i within their own top k
std::vector<int> k_reciprocal_neighbors(const std::vector<std::vector<int>>& rank,
                                        int i, int k) {
  std::vector<int> out;
  for (int pos = 0; pos <= k && pos < static_cast<int>(rank[i].size()); ++pos) {
    const int j = rank[i][pos];
    for (int pos2 = 0; pos2 <= k && pos2 < static_cast<int>(rank[j].size()); ++pos2)
      if (rank[j][pos2] == i) {
        out.push_back(j);
        break;
      }
  }
  return out;
}

}  // namespace

MatD rerank(const MatD& query_features, const MatD& gallery_features, int k1,
            int k2, double lambda, Metric metric) {
  const int num_q = static_cast<int>(query_features.rows());
  const int num_g = static_cast<int>(gallery_features.rows());
  const int n = num_q + num_g;
  if (k1 < 1 || k2 < 1 || k2 > k1 || k1 >= n)
    throw ConfigError("rerank: need 1 <= k2 <= k1 < Q+G");
  if (lambda < 0.0 || lambda > 1.0)
    throw ConfigError("rerank: lambda must lie in [0, 1]");

  MatD all(n, query_features.cols());
  all.topRows(num_q) = query_features;
  all.bottomRows(num_g) = gallery_features;
  const MatD dist = pairwise_distance(all, metric);

  std::vector<std::vector<int>> rank(n);
  for (int i = 0; i < n; ++i) rank[i] = argsort_row(dist, i);

  // k-reciprocal encoding with incremental expansion
  MatD encoding = MatD::Zero(n, n);
  const int half_k = static_cast<int>(std::llround(k1 / 2.0));
  for (int i = 0; i < n; ++i) {
    const std::vector<int> reciprocal = k_reciprocal_neighbors(rank, i, k1);
    std::set<int> expanded(reciprocal.begin(), reciprocal.end());
    for (int j : reciprocal) {
      const std::vector<int> candidate = k_reciprocal_neighbors(rank, j, half_k);
      int common = 0;
      for (int c : candidate)
        if (std::find(reciprocal.begin(), reciprocal.end(), c) != reciprocal.end())
          ++common;
      if (3 * common > 2 * static_cast<int>(candidate.size()))
        expanded.insert(candidate.begin(), candidate.end());
    }
    double sum = 0.0;
    for (int j : expanded) sum += std::exp(-dist(i, j));
    for (int j : expanded) encoding(i, j) = std::exp(-dist(i, j)) / sum;
  }

  // local query expansion over the k2 nearest neighbors (self included)
  if (k2 > 1) {
    MatD expanded = MatD::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int pos = 0; pos < k2; ++pos) expanded.row(i) += encoding.row(rank[i][pos]);
      expanded.row(i) /= k2;
    }
    encoding = std::move(expanded);
  }

  // Jaccard distance between query and gallery encodings
  MatD final_dist(num_q, num_g);
  const MatD original = cross_distance(query_features, gallery_features, metric);
  for (int q = 0; q < num_q; ++q)
    for (int g = 0; g < num_g; ++g) {
      double min_sum = 0.0, max_sum = 0.0;
      for (int j = 0; j < n; ++j) {
        min_sum += std::min(encoding(q, j), encoding(num_q + g, j));
        max_sum += std::max(encoding(q, j), encoding(num_q + g, j));
      }
      const double jaccard = max_sum > 0.0 ? 1.0 - min_sum / max_sum : 1.0;
      final_dist(q, g) = lambda * original(q, g) + (1.0 - lambda) * jaccard;
    }
  return final_dist;
}

// ---------------------------------------------------------------------------
// prototype-count ablation

std::vector<AblationRow> ablate_prototypes(
    Model& model, const Dataset& ds, FeatureKind kind,
    const std::vector<double>& fractions, const std::vector<std::uint64_t>& seeds,
    Metric metric, int max_rank, int batch_size) {
  if (kind != FeatureKind::FS && kind != FeatureKind::FTildeS)
    throw ConfigError("ablate_prototypes: kind must be a projected feature");
  const FeatureKind raw_kind = Model::raw_kind_for(kind);
  EvalSet raw = extract_eval_set(model, ds, raw_kind, batch_size);
  PrototypeBank& bank = model.bank_for(kind);
  std::vector<AblationRow> rows;
  for (double fraction : fractions) {
    for (std::uint64_t seed : seeds) {
      Rng rng(seed);
      const auto sub = bank.subset(fraction, rng);
      const MatD w = sub.weight.cast<double>();
      EvalSet projected = raw;
      projected.kind = kind;
      projected.query_features = project<double>(raw.query_features, w);
      projected.gallery_features = project<double>(raw.gallery_features, w);
      const EvalResult res = evaluate_set(projected, metric, max_rank);
      rows.push_back({fraction, seed, res.mean_ap, res.rank(1), sub.indices});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// feature containers

void save_eval_set(const EvalSet& set, const std::string& dir) {
  Container c;
  c.meta["feature_kind"] = feature_kind_name(set.kind);
  auto add_f32 = [&](const std::string& name, const MatD& m) {
    ArrayEntry a;
    a.name = name;
    a.shape = {static_cast<int>(m.rows()), static_cast<int>(m.cols())};
    MatF f = m.cast<float>();
    a.f32 = Eigen::Map<const VecF>(f.data(), f.size());
    c.arrays.push_back(std::move(a));
  };
  auto add_i32 = [&](const std::string& name, const std::vector<int>& v) {
    ArrayEntry a;
    a.name = name;
    a.dtype = "int32";
    a.shape = {static_cast<int>(v.size())};
    a.i32.assign(v.begin(), v.end());
    c.arrays.push_back(std::move(a));
  };
  add_f32("query_features", set.query_features);
  add_f32("gallery_features", set.gallery_features);
  add_i32("query_pids", set.query_pids);
  add_i32("query_camids", set.query_camids);
  add_i32("gallery_pids", set.gallery_pids);
  add_i32("gallery_camids", set.gallery_camids);
  save_container(c, dir);
}

EvalSet load_eval_set(const std::string& dir) {
  const Container c = load_container(dir);
  EvalSet set;
  if (c.meta.contains("feature_kind"))
    set.kind = feature_kind_from_name(c.meta["feature_kind"].get<std::string>());
  auto get_f32 = [&](const std::string& name) {
    const ArrayEntry& a = c.require(name);
    Eigen::Map<const MatF> m(a.f32.data(), a.shape.at(0), a.shape.at(1));
    return MatD(m.cast<double>());
  };
  auto get_i32 = [&](const std::string& name) {
    const ArrayEntry& a = c.require(name);
    return std::vector<int>(a.i32.begin(), a.i32.end());
  };
  set.query_features = get_f32("query_features");
  set.gallery_features = get_f32("gallery_features");
  set.query_pids = get_i32("query_pids");
  set.query_camids = get_i32("query_camids");
  set.gallery_pids = get_i32("gallery_pids");
  set.gallery_camids = get_i32("gallery_camids");
  return set;
}

}  // namespace pronet
