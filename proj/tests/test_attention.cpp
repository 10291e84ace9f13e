#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include "gazedet/attention.hpp"

using namespace gazedet;

namespace {

Tensor random_matrix(size_t r, size_t c, Rng& rng, bool grad = false) {
  std::vector<double> data(r * c);
  for (double& v : data) v = rng.uniform(-1.0, 1.0);
  return Tensor({r, c}, std::move(data), grad);
}

MhaWeights random_mha(size_t d, Rng& rng, bool grad) {
  MhaWeights w;
  w.wq = random_matrix(d, d, rng, grad);
  w.wk = random_matrix(d, d, rng, grad);
  w.wv = random_matrix(d, d, rng, grad);
  w.wo = random_matrix(d, d, rng, grad);
  w.bq = Tensor::zeros({d}, grad);
  w.bk = Tensor::zeros({d}, grad);
  w.bv = Tensor::zeros({d}, grad);
  w.bo = Tensor::zeros({d}, grad);
  return w;
}

GazeRecord center_gaze() {
  GazeRecord rec;
  rec.valid = true;
  rec.g_xy = {0.5, 0.5};
  rec.g_hat = {0.6, 0.0, 0.8};
  rec.has_direction = true;
  return rec;
}

}  // namespace

TEST_CASE("patch_centers") {
  const PatchGrid one = patch_centers(1, 1);
  REQUIRE(one.count() == 1);
  CHECK(one.centers[0][0] == doctest::Approx(0.5));
  CHECK(one.centers[0][1] == doctest::Approx(0.5));

  const PatchGrid four = patch_centers(2, 2);
  REQUIRE(four.count() == 4);
  const double expected[4][2] = {{0.25, 0.25}, {0.75, 0.25}, {0.25, 0.75}, {0.75, 0.75}};
  for (size_t i = 0; i < 4; ++i) {
    CHECK(four.centers[i][0] == doctest::Approx(expected[i][0]));
    CHECK(four.centers[i][1] == doctest::Approx(expected[i][1]));
  }

  const PatchGrid big = patch_centers(8, 8);
  CHECK(big.count() == 64);
  for (const auto& c : big.centers) {
    CHECK(c[0] > 0.0);
    CHECK(c[0] < 1.0);
    CHECK(c[1] > 0.0);
    CHECK(c[1] < 1.0);
  }
  CHECK_THROWS_AS(patch_centers(0, 3), std::invalid_argument);
}

TEST_CASE("base_attention_logits") {
  SUBCASE("orthonormal rows give I/sqrt(L)") {
    const size_t L = 3;
    std::vector<double> eye(L * L, 0.0);
    for (size_t i = 0; i < L; ++i) eye[i * L + i] = 1.0;
    const Tensor q({L, L}, eye);
    const Tensor a = base_attention_logits(q, q);
    for (size_t i = 0; i < L; ++i)
      for (size_t j = 0; j < L; ++j)
        CHECK(a(i, j) == doctest::Approx(i == j ? 1.0 / std::sqrt(3.0) : 0.0));
  }

  SUBCASE("zero queries give zero logits") {
    const Tensor q = Tensor::zeros({4, 2});
    Rng rng(1);
    const Tensor k = random_matrix(4, 2, rng);
    const Tensor a = base_attention_logits(q, k);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a.at(i) == 0.0);
  }

  SUBCASE("matches an independent dot-product loop") {
    Rng rng(2);
    const Tensor q = random_matrix(3, 2, rng);
    const Tensor k = random_matrix(3, 2, rng);
    const Tensor a = base_attention_logits(q, k);
    for (size_t i = 0; i < 3; ++i) {
      for (size_t j = 0; j < 3; ++j) {
        double dot = 0.0;
        for (size_t e = 0; e < 2; ++e) dot += q(i, e) * k(j, e);
        CHECK(a(i, j) == doctest::Approx(dot / std::sqrt(2.0)).epsilon(1e-12));
      }
    }
  }

  SUBCASE("mismatched key width throws") {
    CHECK_THROWS_AS(base_attention_logits(Tensor::zeros({3, 2}), Tensor::zeros({3, 4})),
                    std::invalid_argument);
  }
}

TEST_CASE("gaze_bias geometry") {
  const PatchGrid grid = patch_centers(8, 8);

  SUBCASE("bias is 1 at the gaze point") {
    GazeRecord rec = center_gaze();
    rec.g_xy = grid.centers[27];  // exactly on a patch center
    const auto bias = gaze_bias(rec, grid);
    CHECK(bias[27] == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("hand-evaluated bias with direction") {
    // gaze at origin corner, single patch grid puts the center at (0.5, 0.5)
    GazeRecord rec;
    rec.valid = true;
    rec.g_xy = {0.0, 0.0};
    rec.g_hat = {1.0, 0.0, 0.0};
    rec.has_direction = true;
    PatchGrid one;
    one.rows = 1;
    one.cols = 1;
    one.centers = {{1.0, 0.0}};
    const auto bias = gaze_bias(rec, one);
    // distance 1, direction factor 1 + |1*1| = 2 -> (1/2)*2 = 1
    CHECK(bias[0] == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("bias lies in (0, 2]") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      GazeRecord rec;
      rec.valid = true;
      rec.g_xy = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
      const double a = rng.uniform(0.0, 2.0 * M_PI);
      rec.g_hat = normalized(Vec3{std::cos(a), std::sin(a), rng.uniform(0.2, 1.0)});
      rec.has_direction = true;
      for (double b : gaze_bias(rec, grid)) {
        CHECK(b > 0.0);
        CHECK(b <= 2.0 + 1e-12);
      }
    }
  }

  SUBCASE("strictly decreasing with radius along a fixed ray") {
    GazeRecord rec = center_gaze();
    rec.g_xy = {0.1, 0.1};
    rec.has_direction = false;
    PatchGrid ray;
    ray.rows = 1;
    ray.cols = 16;
    for (int i = 0; i < 16; ++i) {
      const double r = 0.05 * (i + 1);
      ray.centers.push_back({0.1 + r * 0.6, 0.1 + r * 0.8});
    }
    const auto bias = gaze_bias(rec, ray);
    for (size_t i = 1; i < bias.size(); ++i) CHECK(bias[i] < bias[i - 1]);
  }

  SUBCASE("direction absent means distance-only bias") {
    GazeRecord rec = center_gaze();
    rec.has_direction = false;
    const auto bias = gaze_bias(rec, grid);
    for (size_t j = 0; j < grid.count(); ++j) {
      const double dx = grid.centers[j][0] - rec.g_xy[0];
      const double dy = grid.centers[j][1] - rec.g_xy[1];
      CHECK(bias[j] == doctest::Approx(1.0 / (1.0 + dx * dx + dy * dy)).epsilon(1e-12));
    }
  }

  SUBCASE("invalid record is a contract error") {
    GazeRecord bad;
    CHECK_THROWS_AS(gaze_bias(bad, grid), std::logic_error);
  }
}

TEST_CASE("apply_gaze_bias") {
  Rng rng(3);
  const Tensor logits = random_matrix(4, 4, rng);
  const std::vector<double> bias = {0.9, 0.1, 0.5, 0.3};

  SUBCASE("alpha 0 returns the identical tensor") {
    const Tensor out = apply_gaze_bias(logits, bias, 0.0);
    CHECK(out.node().get() == logits.node().get());
  }

  SUBCASE("additivity across columns") {
    const double alpha = 0.7;
    const Tensor out = apply_gaze_bias(logits, bias, alpha);
    for (size_t i = 0; i < 4; ++i) {
      for (size_t j = 0; j < 4; ++j) {
        for (size_t k = 0; k < 4; ++k) {
          const double lhs = out(i, j) - out(i, k);
          const double rhs = (logits(i, j) - logits(i, k)) + alpha * (bias[j] - bias[k]);
          CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
        }
      }
    }
  }

  SUBCASE("constant bias leaves softmax unchanged") {
    const std::vector<double> flat(4, 0.37);
    const Tensor plain = softmax_rows(logits);
    const Tensor biased = softmax_rows(apply_gaze_bias(logits, flat, 1.3));
    for (size_t i = 0; i < plain.size(); ++i) {
      CHECK(plain.at(i) == doctest::Approx(biased.at(i)).epsilon(1e-12));
    }
  }

  SUBCASE("unit bias on one column raises its mass in every row") {
    std::vector<double> one_hot(4, 0.0);
    one_hot[2] = 1.0;
    const Tensor base = softmax_rows(logits);
    const Tensor boosted = softmax_rows(apply_gaze_bias(logits, one_hot, 0.7));
    for (size_t i = 0; i < 4; ++i) CHECK(boosted(i, 2) > base(i, 2));
  }
}

TEST_CASE("mha_forward") {
  const size_t L = 16, d = 8;
  const PatchGrid grid = patch_centers(4, 4);
  AttentionConfig cfg{2, d, 0.7};
  Rng rng(11);
  const MhaWeights w = random_mha(d, rng, false);
  const Tensor x = random_matrix(L, d, rng);
  const GazeRecord rec = center_gaze();

  SUBCASE("absent record equals alpha 0, bit for bit") {
    AttentionMaps maps_a, maps_b;
    const Tensor no_rec = mha_forward(x, w, nullptr, grid, cfg, &maps_a);
    AttentionConfig zero = cfg;
    zero.alpha = 0.0;
    const Tensor zero_alpha = mha_forward(x, w, &rec, grid, zero, &maps_b);
    REQUIRE(no_rec.size() == zero_alpha.size());
    CHECK(std::memcmp(no_rec.data().data(), zero_alpha.data().data(),
                      no_rec.size() * sizeof(double)) == 0);
    for (size_t h = 0; h < maps_a.post_softmax.size(); ++h) {
      CHECK(std::memcmp(maps_a.post_softmax[h].data(), maps_b.post_softmax[h].data(),
                        maps_a.post_softmax[h].size() * sizeof(double)) == 0);
    }
  }

  SUBCASE("exported rows are stochastic") {
    AttentionMaps maps;
    mha_forward(x, w, &rec, grid, cfg, &maps);
    REQUIRE(maps.post_softmax.size() == 2);
    for (const auto& m : maps.post_softmax) {
      for (size_t i = 0; i < L; ++i) {
        double s = 0.0;
        for (size_t j = 0; j < L; ++j) s += m[i * L + j];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
  }

  SUBCASE("pre-softmax maps carry the applied bias") {
    AttentionMaps with, without;
    mha_forward(x, w, &rec, grid, cfg, &with);
    mha_forward(x, w, nullptr, grid, cfg, &without);
    const auto bias = gaze_bias(rec, grid);
    for (size_t h = 0; h < with.pre_softmax.size(); ++h) {
      for (size_t i = 0; i < L; ++i)
        for (size_t j = 0; j < L; ++j) {
          const double diff = with.pre_softmax[h][i * L + j] - without.pre_softmax[h][i * L + j];
          CHECK(diff == doctest::Approx(cfg.alpha * bias[j]).epsilon(1e-9));
        }
    }
  }

  SUBCASE("gradient through mha matches finite differences") {
    Rng grng(17);
    MhaWeights gw = random_mha(d, grng, true);
    const Tensor input = random_matrix(L, d, grng);

    auto loss_with = [&](const MhaWeights& weights) {
      return mean(mul(mha_forward(input, weights, &rec, grid, cfg),
                      mha_forward(input, weights, &rec, grid, cfg)));
    };
    const Tensor loss = loss_with(gw);
    backward(loss);

    // check wq and bo, the first and last parameters in the chain
    for (int which = 0; which < 2; ++which) {
      Tensor& target = which == 0 ? gw.wq : gw.bo;
      const Tensor fd = finite_difference_grad(
          [&](const Tensor& p) {
            MhaWeights probe = gw;
            (which == 0 ? probe.wq : probe.bo) = p;
            return loss_with(probe).item();
          },
          target, 1e-5);
      const auto g = target.grad();
      for (size_t i = 0; i < g.size(); ++i) {
        const double denom = std::max({std::fabs(g[i]), std::fabs(fd.at(i)), 1e-6});
        CHECK(std::fabs(g[i] - fd.at(i)) / denom < 1e-4);
      }
    }
  }
}

TEST_CASE("attention mass near gaze is non-decreasing in alpha") {
  const size_t L = 64, d = 16;
  const PatchGrid grid = patch_centers(8, 8);
  Rng rng(23);
  const MhaWeights w = random_mha(d, rng, false);
  const Tensor x = random_matrix(L, d, rng);
  GazeRecord rec = center_gaze();
  rec.g_xy = {0.4, 0.6};

  double prev = -1.0;
  for (double alpha : {0.0, 0.1, 0.2, 0.5, 0.7, 1.0, 2.0}) {
    AttentionConfig cfg{4, d, alpha};
    AttentionMaps maps;
    mha_forward(x, w, &rec, grid, cfg, &maps);
    const auto heat = mean_head_scores(maps);
    double near = 0.0;
    for (size_t j = 0; j < L; ++j) {
      const double dx = grid.centers[j][0] - rec.g_xy[0];
      const double dy = grid.centers[j][1] - rec.g_xy[1];
      if (std::sqrt(dx * dx + dy * dy) <= 0.2) near += heat[j];
    }
    CHECK(near >= prev - 1e-12);
    prev = near;
  }
}
