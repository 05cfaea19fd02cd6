#include <doctest.h>

#include <filesystem>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "pronet/eval.hpp"

using namespace pronet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("pronet_eval_" + tag + "_" +
                                        std::to_string(::getpid()));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

MatD random_features(Rng& rng, int rows, int cols) {
  MatD m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("average precision on a worked example") {
  // one query, four gallery items, matches land at ranks 1 and 3
  MatD dist(1, 4);
  dist << 0.1, 0.2, 0.3, 0.4;
  const std::vector<int> qp{7}, qc{0};
  const std::vector<int> gp{7, 1, 7, 2}, gc{1, 1, 1, 1};
  const EvalResult r = evaluate(dist, qp, qc, gp, gc, 4);
  CHECK(r.mean_ap == doctest::Approx(5.0 / 6.0).epsilon(1e-12));  // (1 + 2/3) / 2
  CHECK(r.cmc[0] == 1.0);
  CHECK(r.per_query_ap.size() == 1);
}

TEST_CASE("evaluation matches the reference on random instances") {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    const int nq = 2 + rng.uniform_int(6);
    const int ng = 6 + rng.uniform_int(20);
    const int pids = 2 + rng.uniform_int(4);
    const int cams = 2 + rng.uniform_int(3);
    MatD dist(nq, ng);
    for (Eigen::Index i = 0; i < dist.size(); ++i) dist.data()[i] = rng.uniform();
    std::vector<int> qp(nq), qc(nq), gp(ng), gc(ng);
    for (int i = 0; i < nq; ++i) {
      qp[i] = rng.uniform_int(pids);
      qc[i] = rng.uniform_int(cams);
    }
    for (int i = 0; i < ng; ++i) {
      gp[i] = rng.uniform() < 0.1 ? -1 : rng.uniform_int(pids);  // some junk
      gc[i] = rng.uniform_int(cams);
    }
    // make sure at least one query is valid
    gp[0] = qp[0];
    gc[0] = (qc[0] + 1) % cams;

    const int max_rank = 1 + rng.uniform_int(ng);
    const EvalResult got = evaluate(dist, qp, qc, gp, gc, max_rank);
    const auto ref = oracles::evaluate_reference(dist, qp, qc, gp, gc, max_rank);
    CHECK(std::abs(got.mean_ap - ref.mean_ap) <= 1e-12);
    CHECK(got.skipped_queries == ref.skipped);
    REQUIRE(got.cmc.size() == ref.cmc.size());
    for (std::size_t r = 0; r < ref.cmc.size(); ++r)
      CHECK(std::abs(got.cmc[r] - ref.cmc[r]) <= 1e-12);
    // CMC curves never decrease
    for (std::size_t r = 1; r < got.cmc.size(); ++r)
      CHECK(got.cmc[r] >= got.cmc[r - 1]);
  }
}

TEST_CASE("protocol filtering") {
  SUBCASE("same pid and camera entries are invisible") {
    MatD dist(1, 3);
    dist << 0.1, 0.2, 0.3;
    // nearest gallery item shares pid and camera: it must not count
    const EvalResult r = evaluate(dist, {1}, {0}, {1, 1, 2}, {0, 1, 0}, 3);
    CHECK(r.mean_ap == 1.0);  // the cross-camera match ranks first after filtering
    CHECK(r.cmc[0] == 1.0);
  }
  SUBCASE("junk entries are dropped from the ranking") {
    MatD dist(1, 3);
    dist << 0.1, 0.2, 0.3;
    const EvalResult r = evaluate(dist, {1}, {0}, {-1, -1, 1}, {1, 1, 1}, 3);
    CHECK(r.mean_ap == 1.0);
    CHECK(r.cmc[0] == 1.0);
  }
  SUBCASE("queries without positives are skipped and counted") {
    MatD dist(2, 2);
    dist << 0.1, 0.2, 0.3, 0.4;
    const EvalResult r = evaluate(dist, {1, 9}, {0, 0}, {1, 2}, {1, 1}, 2);
    CHECK(r.skipped_queries == 1);
    CHECK(r.per_query_ap.size() == 1);
  }
  SUBCASE("no valid query at all is an error") {
    MatD dist(1, 1);
    dist << 0.5;
    CHECK_THROWS_AS(evaluate(dist, {1}, {0}, {2}, {0}, 1), DataError);
  }
  SUBCASE("shape mismatches are errors") {
    MatD dist(1, 2);
    dist << 0.1, 0.2;
    CHECK_THROWS_AS(evaluate(dist, {1, 2}, {0, 0}, {1, 2}, {0, 0}, 2), ShapeError);
  }
}

TEST_CASE("cosine ranking is scale invariant") {
  Rng rng(21);
  const MatD qf = random_features(rng, 4, 8);
  const MatD gf = random_features(rng, 12, 8);
  const std::vector<int> qp{0, 1, 2, 3}, qc{0, 0, 0, 0};
  std::vector<int> gp(12), gc(12, 1);
  for (int i = 0; i < 12; ++i) gp[i] = i % 4;

  const EvalResult a =
      evaluate(cross_distance<double>(qf, gf, Metric::Cosine), qp, qc, gp, gc, 5);
  const EvalResult b = evaluate(
      cross_distance<double>(MatD(3.7 * qf), MatD(0.2 * gf), Metric::Cosine), qp,
      qc, gp, gc, 5);
  CHECK(a.mean_ap == doctest::Approx(b.mean_ap).epsilon(1e-12));
}

TEST_CASE("re-ranking with lambda 1 returns the original distances") {
  Rng rng(31);
  const MatD qf = random_features(rng, 6, 5);
  const MatD gf = random_features(rng, 15, 5);
  for (Metric m : {Metric::Cosine, Metric::Euclidean}) {
    const MatD got = rerank(qf, gf, 5, 3, 1.0, m);
    const MatD orig = cross_distance<double>(qf, gf, m);
    CHECK((got - orig).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("re-ranking matches an independent naive implementation") {
  Rng rng(41);
  for (int t = 0; t < 20; ++t) {
    const int nq = 40, ng = 60, d = 6;
    MatD qf = random_features(rng, nq, d);
    MatD gf = random_features(rng, ng, d);
    // plant some structure so reciprocal neighborhoods are non-trivial
    for (int i = 0; i < nq; ++i) qf.row(i) += gf.row(i % ng);
    const int k1 = 5 + rng.uniform_int(16);
    const int k2 = 1 + rng.uniform_int(std::min(k1, 6));
    const double lambda = rng.uniform(0.0, 1.0);
    const MatD got = rerank(qf, gf, k1, k2, lambda, Metric::Cosine);
    const MatD ref = oracles::rerank_reference(qf, gf, k1, k2, lambda, Metric::Cosine);
    CHECK((got - ref).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("re-ranking parameter validation") {
  Rng rng(51);
  const MatD qf = random_features(rng, 3, 4);
  const MatD gf = random_features(rng, 5, 4);
  CHECK_THROWS_AS(rerank(qf, gf, 0, 1, 0.5), ConfigError);
  CHECK_THROWS_AS(rerank(qf, gf, 4, 5, 0.5), ConfigError);
  CHECK_THROWS_AS(rerank(qf, gf, 8, 2, 0.5), ConfigError);  // k1 >= Q+G
  CHECK_THROWS_AS(rerank(qf, gf, 4, 2, 1.5), ConfigError);
  CHECK_THROWS_AS(rerank(qf, gf, 4, 2, -0.1), ConfigError);
}

TEST_CASE("re-ranking improves a clustered retrieval problem") {
  // clusters with one corrupted query each: context should recover neighbors
  Rng rng(61);
  const int ids = 6, per = 8, d = 16;
  MatD gf(ids * per, d);
  std::vector<int> gp(ids * per), gc(ids * per);
  for (int i = 0; i < ids; ++i) {
    const MatD center = random_features(rng, 1, d);
    for (int k = 0; k < per; ++k) {
      gf.row(i * per + k) = center + 0.35 * random_features(rng, 1, d);
      gp[i * per + k] = i;
      gc[i * per + k] = 1;
    }
  }
  MatD qf(ids, d);
  std::vector<int> qp(ids), qc(ids, 0);
  for (int i = 0; i < ids; ++i) {
    qf.row(i) = gf.row(i * per) + 0.9 * random_features(rng, 1, d);
    qp[i] = i;
  }
  const EvalResult plain =
      evaluate(cross_distance<double>(qf, gf, Metric::Cosine), qp, qc, gp, gc, 10);
  const EvalResult reranked =
      evaluate(rerank(qf, gf, 8, 3, 0.3, Metric::Cosine), qp, qc, gp, gc, 10);
  CHECK(reranked.mean_ap >= plain.mean_ap - 0.02);
}

TEST_CASE("feature extraction is batch-size invariant") {
  const Dataset ds = generate_synthetic(fixtures::tiny_data_cfg());
  Model model(fixtures::tiny_model_cfg(ModelKind::ProNet), 71);
  const MatD a = extract_features(model, ds, ds.gallery_indices, FeatureKind::FS, 32);
  const MatD b = extract_features(model, ds, ds.gallery_indices, FeatureKind::FS, 3);
  // identical up to float gemm blocking
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK_THROWS_AS(
      extract_features(model, ds, ds.gallery_indices, FeatureKind::FS, 0), ConfigError);
}

TEST_CASE("eval set extraction carries labels and evaluates") {
  const Dataset ds = generate_synthetic(fixtures::tiny_data_cfg());
  Model model(fixtures::tiny_model_cfg(ModelKind::ProNet), 81);
  const EvalSet set = extract_eval_set(model, ds, FeatureKind::FS);
  CHECK(set.query_features.rows() == 4);
  CHECK(set.gallery_features.rows() == 8);
  CHECK(set.query_pids.size() == 4);
  const EvalResult r = evaluate_set(set, Metric::Cosine, 5);
  CHECK(r.mean_ap >= 0.0);
  CHECK(r.mean_ap <= 1.0);
}

TEST_CASE("eval set container round trip") {
  const Dataset ds = generate_synthetic(fixtures::tiny_data_cfg());
  Model model(fixtures::tiny_model_cfg(ModelKind::ProNet), 91);
  const EvalSet set = extract_eval_set(model, ds, FeatureKind::FS);
  TempDir tmp("set");
  save_eval_set(set, tmp.path.string());
  const EvalSet back = load_eval_set(tmp.path.string());
  CHECK(back.kind == FeatureKind::FS);
  CHECK(back.query_pids == set.query_pids);
  CHECK(back.gallery_camids == set.gallery_camids);
  // float32 storage: exact for features that were float to begin with
  CHECK((back.query_features - set.query_features).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.gallery_features - set.gallery_features).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("prototype ablation at full fraction reproduces the plain result") {
  const Dataset ds = generate_synthetic(fixtures::tiny_data_cfg());
  Model model(fixtures::tiny_model_cfg(ModelKind::ProNet), 101);
  const EvalSet set = extract_eval_set(model, ds, FeatureKind::FS);
  const EvalResult full = evaluate_set(set, Metric::Cosine, 5);
  const auto rows = ablate_prototypes(model, ds, FeatureKind::FS, {1.0, 0.5},
                                      {1, 2}, Metric::Cosine, 5);
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows) {
    if (row.fraction == 1.0) {
      CHECK(row.mean_ap == doctest::Approx(full.mean_ap).epsilon(1e-9));
      CHECK(row.selected.size() == 4);
    } else {
      CHECK(row.selected.size() == 2);
    }
    CHECK(row.mean_ap >= 0.0);
    CHECK(row.mean_ap <= 1.0);
  }
  CHECK_THROWS_AS(
      ablate_prototypes(model, ds, FeatureKind::F, {1.0}, {1}), ConfigError);
}
