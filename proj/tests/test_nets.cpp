#include <doctest.h>

#include <cmath>

#include "grad_suites.hpp"
#include "pronet/mgf.hpp"
#include "pronet/nets.hpp"
#include "pronet/rng.hpp"

using namespace pronet;

TEST_CASE("backbone output size arithmetic") {
  SUBCASE("five stride-2 stages with the last relaxed to 1") {
    BackboneConfig cfg;
    cfg.widths = {16, 32, 64, 128, 128};
    cfg.strides = {2, 2, 2, 2, 2};
    cfg.final_stage_stride = 1;
    cfg.input_height = 384;
    cfg.input_width = 192;
    cfg.validate();
    const auto [h, w] = cfg.output_dims();
    CHECK(h == 24);
    CHECK(w == 12);
    const auto eff = cfg.effective_strides();
    CHECK(eff.back() == 1);
  }
  SUBCASE("keeping the final stride halves once more") {
    BackboneConfig cfg;
    cfg.widths = {16, 32, 64, 128, 128};
    cfg.strides = {2, 2, 2, 2, 2};
    cfg.final_stage_stride = 2;
    cfg.input_height = 384;
    cfg.input_width = 192;
    const auto [h, w] = cfg.output_dims();
    CHECK(h == 12);
    CHECK(w == 6);
  }
  SUBCASE("small benchmark shape") {
    BackboneConfig cfg;
    cfg.widths = {16, 32, 64, 128};
    cfg.strides = {2, 2, 2, 2};
    cfg.final_stage_stride = 1;
    cfg.input_height = 64;
    cfg.input_width = 32;
    const auto [h, w] = cfg.output_dims();
    CHECK(h == 8);
    CHECK(w == 4);
    CHECK(cfg.output_channels() == 128);
  }
  SUBCASE("bad configs are rejected") {
    BackboneConfig cfg;
    cfg.widths = {16, 32};
    cfg.strides = {2};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.strides = {2, 0};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.strides = {2, 2};
    cfg.final_stage_stride = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

static FeatureMap make_map(int h, int w, int c, Rng& rng) {
  FeatureMap m;
  m.height = h;
  m.width = w;
  m.values.resize(h * w, c);
  for (Eigen::Index i = 0; i < m.values.size(); ++i)
    m.values.data()[i] = static_cast<float>(rng.normal());
  return m;
}

TEST_CASE("conv forward matches a naive sliding window") {
  Rng rng(3);
  Conv2d conv("c", 2, 3, 2, rng);
  Rng rng2(5);
  FeatureMap x = make_map(5, 4, 2, rng2);
  ConvCache cache;
  const FeatureMap y = conv.forward(x, &cache);
  CHECK(y.height == 3);
  CHECK(y.width == 2);
  CHECK(y.channels() == 3);
  CHECK((y.values.array() >= 0.0f).all());  // relu

  // reference: pull the weights back out through collect()
  ParamRefs refs;
  conv.collect(refs);
  REQUIRE(refs.size() == 2);
  const auto w = refs[0]->mat();   // out_ch x in_ch*9
  const auto b = refs[1]->value;
  for (int oy = 0; oy < y.height; ++oy)
    for (int ox = 0; ox < y.width; ++ox)
      for (int oc = 0; oc < 3; ++oc) {
        double acc = b[oc];
        for (int ic = 0; ic < 2; ++ic)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy * 2 + ky - 1;
              const int ix = ox * 2 + kx - 1;
              if (iy < 0 || iy >= x.height || ix < 0 || ix >= x.width) continue;
              acc += static_cast<double>(w(oc, ic * 9 + ky * 3 + kx)) *
                     x.values(iy * x.width + ix, ic);
            }
        const double expected = std::max(acc, 0.0);
        CHECK(y.values(oy * y.width + ox, oc) == doctest::Approx(expected).epsilon(1e-4));
      }
}

TEST_CASE("conv backward agrees with finite differences on the input") {
  Rng rng(7);
  Conv2d conv("c", 1, 2, 1, rng);
  Rng rng2(9);
  FeatureMap x = make_map(4, 3, 1, rng2);
  MatF r = MatF::Random(12, 2);  // fixed projection to a scalar

  ConvCache cache;
  conv.forward(x, &cache);
  const FeatureMap dx = conv.backward(cache, r);

  const float h = 1e-2f;
  for (int i = 0; i < 12; ++i) {
    FeatureMap xp = x, xm = x;
    xp.values(i, 0) += h;
    xm.values(i, 0) -= h;
    ConvCache cp, cm;
    const float fp = (conv.forward(xp, &cp).values.array() * r.array()).sum();
    const float fm = (conv.forward(xm, &cm).values.array() * r.array()).sum();
    const float fd = (fp - fm) / (2 * h);
    CHECK(dx.values(i, 0) == doctest::Approx(fd).epsilon(0.05));
  }
}

TEST_CASE("backbone runs end to end and keeps zero input finite") {
  BackboneConfig cfg;
  cfg.widths = {8, 16};
  cfg.strides = {2, 2};
  cfg.final_stage_stride = 1;
  cfg.input_height = 16;
  cfg.input_width = 8;
  Rng rng(1);
  Backbone net(cfg, rng);

  FeatureMap zero;
  zero.height = 16;
  zero.width = 8;
  zero.values = MatF::Zero(128, 3);
  BackboneCache cache;
  const FeatureMap out = net.forward(zero, &cache);
  CHECK(out.height == 8);
  CHECK(out.width == 4);
  CHECK(out.channels() == 16);
  CHECK(out.values.allFinite());
}

TEST_CASE("batch norm statistics") {
  BatchNorm1d bn("bn", 3);
  Rng rng(21);
  MatF x(64, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x.data()[i] = static_cast<float>(2.0 + 3.0 * rng.normal());

  BnCache cache;
  const MatF y = bn.forward(x, true, &cache);
  for (int c = 0; c < 3; ++c) {
    const float mean = y.col(c).mean();
    const float var = (y.col(c).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-5f);
    CHECK(var == doctest::Approx(1.0f).epsilon(0.01));
  }

  // after enough training passes the eval transform converges to the same
  for (int it = 0; it < 200; ++it) bn.forward(x, true, &cache);
  const MatF ye = bn.forward(x, false, nullptr);
  CHECK((ye - y).cwiseAbs().maxCoeff() < 0.05f);

  // constant input normalizes to zero
  const MatF c = MatF::Constant(8, 3, 4.2f);
  BnCache cc;
  const MatF yc = bn.forward(c, true, &cc);
  CHECK(yc.cwiseAbs().maxCoeff() < 1e-3f);
}

TEST_CASE("batch norm backward via finite differences") {
  BatchNorm1d bn("bn", 2);
  MatF x(5, 2);
  x << 0.3f, -1.0f, 1.2f, 0.4f, -0.7f, 2.0f, 0.1f, -0.3f, 0.9f, 1.1f;
  MatF r = MatF::Random(5, 2);

  BnCache cache;
  bn.forward(x, true, &cache);
  const MatF dx = bn.backward(cache, r);

  const float h = 1e-3f;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 2; ++j) {
      MatF xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      BnCache cp, cm;
      BatchNorm1d bp("bn", 2), bm("bn", 2);  // fresh running stats, same gamma
      const float fp = (bp.forward(xp, true, &cp).array() * r.array()).sum();
      const float fm = (bm.forward(xm, true, &cm).array() * r.array()).sum();
      const float fd = (fp - fm) / (2 * h);
      CHECK(std::abs(dx(i, j) - fd) < 0.02f);
    }
}

TEST_CASE("stripe partitioning") {
  SUBCASE("even split") {
    const auto s = partition_parts(8, 8);
    REQUIRE(s.size() == 8);
    for (int i = 0; i < 8; ++i) {
      CHECK(s[i].rows == 1);
      CHECK(s[i].row_begin == i);
    }
  }
  SUBCASE("remainder goes to the earliest stripes") {
    const auto s = partition_parts(10, 4);
    REQUIRE(s.size() == 4);
    CHECK(s[0].rows == 3);
    CHECK(s[1].rows == 3);
    CHECK(s[2].rows == 2);
    CHECK(s[3].rows == 2);
    int covered = 0;
    for (const auto& st : s) {
      CHECK(st.row_begin == covered);
      covered += st.rows;
    }
    CHECK(covered == 10);
  }
  SUBCASE("more parts than rows is an error") {
    CHECK_THROWS_AS(partition_parts(4, 8), ConfigError);
  }
}

TEST_CASE("stripe blocks carry the right rows") {
  Rng rng(31);
  FeatureMap m = make_map(6, 2, 3, rng);
  const auto stripes = partition_parts(6, 3);
  for (const auto& s : stripes) {
    const MatF block = stripe_block(m, s);
    CHECK(block.rows() == s.rows * m.width);
    for (int r = 0; r < block.rows(); ++r)
      CHECK(block.row(r) == m.values.row(s.row_begin * m.width + r));
  }
}

TEST_CASE("pool heads") {
  Rng rng(41);
  MatF acts(6, 2);
  for (Eigen::Index i = 0; i < acts.size(); ++i)
    acts.data()[i] = static_cast<float>(rng.uniform(0.0, 2.0));

  SUBCASE("gap") {
    PoolHead head("gap", Pooling::Gap);
    PoolCache cache;
    const VecF y = head.forward(acts, &cache);
    CHECK(y[0] == doctest::Approx(acts.col(0).mean()).epsilon(1e-6));
    VecF dy = VecF::Ones(2);
    const MatF dx = head.backward(cache, dy);
    CHECK(dx(0, 0) == doctest::Approx(1.0f / 6.0f).epsilon(1e-6));
  }
  SUBCASE("gmp routes gradient to the first max") {
    PoolHead head("gmp", Pooling::Gmp);
    MatF tied = acts;
    tied(1, 0) = 5.0f;
    tied(4, 0) = 5.0f;
    PoolCache cache;
    const VecF y = head.forward(tied, &cache);
    CHECK(y[0] == 5.0f);
    VecF dy(2);
    dy << 1.0f, 0.0f;
    const MatF dx = head.backward(cache, dy);
    CHECK(dx(1, 0) == 1.0f);
    CHECK(dx(4, 0) == 0.0f);
  }
  SUBCASE("gem starts at n = 3 and learns the exponent") {
    PoolHead head("gem", Pooling::Gem);
    CHECK(head.exponent() == doctest::Approx(3.0f).epsilon(1e-5));
    PoolCache cache;
    head.forward(acts, &cache);
    VecF dy = VecF::Ones(2);
    head.backward(cache, dy);
    ParamRefs refs;
    head.collect(refs);
    REQUIRE(refs.size() == 1);
    CHECK(refs[0]->trainable);
    CHECK_FALSE(refs[0]->decay);
    CHECK(refs[0]->grad.cwiseAbs().sum() > 0.0f);
  }
}

TEST_CASE("linear layers match plain matrix algebra") {
  Rng rng(51);
  LinearNoBias red("r", 4, 2, rng);
  MatF x = MatF::Random(3, 4);
  const MatF y = red.forward(x);
  CHECK((y - x * red.weight().transpose()).cwiseAbs().maxCoeff() <= 1e-6f);
  MatF dy = MatF::Random(3, 2);
  const MatF dx = red.backward(x, dy);
  CHECK((dx - dy * red.weight()).cwiseAbs().maxCoeff() <= 1e-6f);

  Linear fc("fc", 4, 3, rng);
  const MatF z = fc.forward(x);
  MatF ref = x * fc.weight();
  ref.rowwise() += fc.bias().row(0);
  CHECK((z - ref).cwiseAbs().maxCoeff() <= 1e-6f);
}

TEST_CASE("fusion gate with zero weights halves the feature") {
  MatD fbar = MatD::Random(3, 6);
  MatD w1 = MatD::Zero(6, 2), w2 = MatD::Zero(2, 6);
  VecD b1 = VecD::Zero(2), b2 = VecD::Zero(6);
  const MatD out = mgf_forward<double>(fbar, w1, b1, w2, b2);
  CHECK((out - 0.5 * fbar).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("fusion gate stays inside (0, 1)") {
  Rng rng(61);
  MatD fbar = grad_suites::random_matrix(rng, 4, 8);
  MatD w1 = grad_suites::random_matrix(rng, 8, 2);
  MatD w2 = grad_suites::random_matrix(rng, 2, 8);
  VecD b1 = grad_suites::random_matrix(rng, 2, 1).col(0);
  VecD b2 = grad_suites::random_matrix(rng, 8, 1).col(0);
  MgfCache<double> cache;
  mgf_forward<double>(fbar, w1, b1, w2, b2, &cache);
  CHECK((cache.gate.array() > 0.0).all());
  CHECK((cache.gate.array() < 1.0).all());
  CHECK((cache.hidden.array() >= 0.0).all());
}

TEST_CASE("fusion gradients agree with finite differences") {
  CHECK(grad_suites::mgf_worst(10, 71) <= 1e-4);
}
