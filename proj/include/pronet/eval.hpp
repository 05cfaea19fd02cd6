#ifndef PRONET_EVAL_HPP
#define PRONET_EVAL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "pronet/checkpoint.hpp"
#include "pronet/losses.hpp"
#include "pronet/model.hpp"

namespace pronet {

struct EvalSet {
  MatD query_features;
  MatD gallery_features;
  std::vector<int> query_pids, query_camids;
  std::vector<int> gallery_pids, gallery_camids;
  FeatureKind kind = FeatureKind::FS;
};

struct EvalResult {
  double mean_ap = 0.0;
  std::vector<double> cmc;  // Rank-1..max_rank accuracies, non-decreasing
  std::vector<double> per_query_ap;
  int skipped_queries = 0;  // queries with no valid positive

  double rank(int k) const { return cmc.at(k - 1); }
};

// Eval-mode features for a dataset split, processed in fixed-size batches.
MatD extract_features(Model& model, const Dataset& ds,
                      const std::vector<int>& record_indices, FeatureKind kind,
                      int batch_size = 32);

EvalSet extract_eval_set(Model& model, const Dataset& ds, FeatureKind kind,
                         int batch_size = 32);

// Cross-camera protocol: gallery entries sharing both pid and camid with the
// query are removed from its ranking, as are pid == -1 distractors' AP hits
// (distractors stay rankable but never count as positives and junk entries
// with pid == -1 are dropped from the ranking entirely).
EvalResult evaluate(const MatD& distmat, const std::vector<int>& query_pids,
                    const std::vector<int>& query_camids,
                    const std::vector<int>& gallery_pids,
                    const std::vector<int>& gallery_camids, int max_rank = 50);

EvalResult evaluate_set(const EvalSet& set, Metric metric = Metric::Cosine,
                        int max_rank = 50);

// k-reciprocal re-ranking: k-reciprocal neighbor sets at k1, incremental
// expansion at round(k1/2), Gaussian-kernel encoding of the original
// distances, local query expansion over the k2 nearest neighbors, Jaccard
// distance, blended as lambda * d_original + (1 - lambda) * d_jaccard.
MatD rerank(const MatD& query_features, const MatD& gallery_features, int k1,
            int k2, double lambda, Metric metric = Metric::Cosine);

struct AblationRow {
  double fraction = 1.0;
  std::uint64_t subset_seed = 0;
  double mean_ap = 0.0;
  double rank1 = 0.0;
  std::vector<int> selected;
};

// Subset sweep: subset the prototype bank, re-project raw features,
// evaluate. kind must be a projected feature kind (f_s or f_tilde_s).
std::vector<AblationRow> ablate_prototypes(
    Model& model, const Dataset& ds, FeatureKind kind,
    const std::vector<double>& fractions, const std::vector<std::uint64_t>& seeds,
    Metric metric = Metric::Cosine, int max_rank = 50, int batch_size = 32);

// Feature matrix container (same layout as checkpoints, plus int32 labels).
void save_eval_set(const EvalSet& set, const std::string& dir);
EvalSet load_eval_set(const std::string& dir);

}  // namespace pronet

#endif
