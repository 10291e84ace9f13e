#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "gazedet/dataset.hpp"
#include "gazedet/detector.hpp"
#include "gazedet/synth_data.hpp"

using namespace gazedet;

namespace {

DetectorConfig micro_config() {
  DetectorConfig cfg;
  cfg.image_size = 16;
  cfg.patch_size = 8;  // L = 4
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_encoder_layers = 1;
  cfg.n_decoder_layers = 1;
  cfg.n_queries = 3;
  cfg.n_classes = 3;
  cfg.ffn_dim = 12;
  return cfg;
}

Tensor random_frame(int size, Rng& rng) {
  std::vector<double> data(static_cast<size_t>(size) * size * 3);
  for (double& v : data) v = rng.uniform(0.0, 1.0);
  return Tensor({static_cast<size_t>(size), static_cast<size_t>(size), 3}, std::move(data));
}

GazeRecord test_gaze() {
  GazeRecord rec;
  rec.valid = true;
  rec.g_xy = {0.4, 0.55};
  rec.d = 0.3;
  rec.p = 0.6;
  rec.g_hat = normalized(Vec3{0.3, -0.2, 0.9});
  rec.has_direction = true;
  return rec;
}

// exhaustive assignment minimum for the oracle
double brute_force_min_cost(const std::vector<std::vector<double>>& cost) {
  const size_t n_q = cost.size();
  const size_t n_g = cost[0].size();
  std::vector<size_t> queries(n_q);
  std::iota(queries.begin(), queries.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  // choose an ordered arrangement of n_g queries out of n_q
  std::vector<size_t> pick(n_g);
  std::vector<char> used(n_q, 0);
  std::function<void(size_t, double)> rec = [&](size_t g, double acc) {
    if (g == n_g) {
      best = std::min(best, acc);
      return;
    }
    for (size_t q = 0; q < n_q; ++q) {
      if (used[q]) continue;
      used[q] = 1;
      rec(g + 1, acc + cost[q][g]);
      used[q] = 0;
    }
  };
  rec(0, 0.0);
  return best;
}

}  // namespace

TEST_CASE("giou") {
  const Box a{0.5, 0.5, 0.4, 0.4};
  CHECK(giou(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  // adjacent, touching: IoU 0, enclosing box exactly covers the union
  const Box left{0.25, 0.5, 0.5, 1.0};
  const Box right{0.75, 0.5, 0.5, 1.0};
  CHECK(giou(left, right) == doctest::Approx(0.0).epsilon(1e-12));

  // far-separated tiny boxes approach -1
  const Box t1{0.01, 0.01, 0.005, 0.005};
  const Box t2{0.99, 0.99, 0.005, 0.005};
  CHECK(giou(t1, t2) < -0.99);

  // GIoU <= IoU always (random sweep)
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    auto rb = [&rng]() {
      Box b;
      b.w = rng.uniform(0.05, 0.5);
      b.h = rng.uniform(0.05, 0.5);
      b.cx = rng.uniform(b.w / 2, 1 - b.w / 2);
      b.cy = rng.uniform(b.h / 2, 1 - b.h / 2);
      return b;
    };
    const Box x = rb(), y = rb();
    const double ix0 = std::max(x.x0(), y.x0()), iy0 = std::max(x.y0(), y.y0());
    const double ix1 = std::min(x.x1(), y.x1()), iy1 = std::min(x.y1(), y.y1());
    const double inter = std::max(0.0, ix1 - ix0) * std::max(0.0, iy1 - iy0);
    const double iou_xy = inter / (x.area() + y.area() - inter);
    CHECK(giou(x, y) <= iou_xy + 1e-12);
    CHECK(giou(x, y) >= -1.0 - 1e-12);
    CHECK(giou(x, y) <= 1.0 + 1e-12);
  }
}

TEST_CASE("hungarian_match") {
  SUBCASE("two by two example") {
    const std::vector<std::vector<double>> cost = {{1, 2}, {2, 1}};
    const auto assignment = hungarian_match(cost);
    REQUIRE(assignment.size() == 2);
    CHECK(assignment[0] == 0);
    CHECK(assignment[1] == 1);
  }

  SUBCASE("single cell") {
    const auto assignment = hungarian_match({{3.5}});
    REQUIRE(assignment.size() == 1);
    CHECK(assignment[0] == 0);
  }

  SUBCASE("capacity error when gts exceed queries") {
    CHECK_THROWS_AS(hungarian_match({{1, 2, 3}, {4, 5, 6}}), std::invalid_argument);
  }

  SUBCASE("matches the exhaustive minimum on random matrices") {
    Rng rng(31);
    for (int trial = 0; trial < 300; ++trial) {
      const size_t n_q = 1 + rng.uniform_int(0, 5);
      const size_t n_g = 1 + rng.uniform_int(0, static_cast<int>(n_q) - 1);
      std::vector<std::vector<double>> cost(n_q, std::vector<double>(n_g));
      for (auto& row : cost)
        for (double& v : row) v = rng.uniform(-5.0, 5.0);
      const auto assignment = hungarian_match(cost);
      double total = 0.0;
      std::vector<char> used(n_q, 0);
      for (size_t g = 0; g < n_g; ++g) {
        REQUIRE(assignment[g] >= 0);
        REQUIRE(!used[assignment[g]]);
        used[assignment[g]] = 1;
        total += cost[assignment[g]][g];
      }
      CHECK(total == doctest::Approx(brute_force_min_cost(cost)).epsilon(1e-9));
    }
  }
}

TEST_CASE("match_cost") {
  const double w_cls = 1.0, w_l1 = 5.0, w_giou = 2.0;

  SUBCASE("perfect prediction costs -w_cls - w_giou") {
    // logits massively favoring class 1, box identical to gt
    const Tensor logits = Tensor::matrix(1, 4, {-50, 50, -50, -50});
    const Tensor boxes = Tensor::matrix(1, 4, {0.5, 0.5, 0.2, 0.2});
    const std::vector<GroundTruthObject> gt = {{1, Box{0.5, 0.5, 0.2, 0.2}}};
    const auto cost = match_cost(logits, boxes, gt, {w_cls, w_l1, w_giou});
    CHECK(cost[0][0] == doctest::Approx(-w_cls - w_giou).epsilon(1e-9));
  }

  SUBCASE("uniform logits contribute -w_cls/(C+1)") {
    const Tensor logits = Tensor::matrix(1, 4, {0.3, 0.3, 0.3, 0.3});
    const Tensor boxes = Tensor::matrix(1, 4, {0.5, 0.5, 0.2, 0.2});
    const std::vector<GroundTruthObject> gt = {{2, Box{0.5, 0.5, 0.2, 0.2}}};
    const auto cost = match_cost(logits, boxes, gt, {w_cls, 0.0, 0.0});
    CHECK(cost[0][0] == doctest::Approx(-w_cls / 4.0).epsilon(1e-12));
  }

  SUBCASE("scaling all weights scales costs and keeps the argmin") {
    Rng rng(9);
    std::vector<double> ldata(3 * 4), bdata(3 * 4);
    for (double& v : ldata) v = rng.uniform(-1, 1);
    for (double& v : bdata) v = rng.uniform(0.2, 0.8);
    const Tensor logits({3, 4}, ldata);
    const Tensor boxes({3, 4}, bdata);
    const std::vector<GroundTruthObject> gt = {{0, Box{0.4, 0.4, 0.2, 0.2}},
                                               {1, Box{0.7, 0.6, 0.1, 0.3}}};
    const auto base = match_cost(logits, boxes, gt, {w_cls, w_l1, w_giou});
    const auto scaled = match_cost(logits, boxes, gt, {3 * w_cls, 3 * w_l1, 3 * w_giou});
    for (size_t q = 0; q < 3; ++q)
      for (size_t g = 0; g < 2; ++g)
        CHECK(scaled[q][g] == doctest::Approx(3.0 * base[q][g]).epsilon(1e-9));
    CHECK(hungarian_match(base) == hungarian_match(scaled));
  }
}

TEST_CASE("detr_loss") {
  DetectorConfig cfg = micro_config();

  SUBCASE("zero ground truth gives pure no-object CE") {
    DetectorOutput out;
    out.class_logits = Tensor::matrix(3, 4, {0, 0, 0, 9, 0, 0, 0, 9, 0, 0, 0, 9});
    out.boxes = Tensor::matrix(3, 4, std::vector<double>(12, 0.5));
    const Tensor loss = detr_loss(out, {}, {}, cfg);
    // all queries confidently predict no-object -> tiny loss, no box terms
    CHECK(loss.item() > 0.0);
    CHECK(loss.item() < 0.01);
  }

  SUBCASE("perfect matched predictions zero the box terms") {
    DetectorOutput out;
    out.class_logits = Tensor::matrix(2, 4, {50, 0, 0, 0, 0, 0, 0, 50});
    out.boxes = Tensor::matrix(2, 4, {0.4, 0.4, 0.2, 0.2, 0.5, 0.5, 0.5, 0.5});
    const std::vector<GroundTruthObject> gt = {{0, Box{0.4, 0.4, 0.2, 0.2}}};
    const Tensor loss = detr_loss(out, gt, {0}, cfg);
    CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-6));
  }

  SUBCASE("loss is non-negative on random outputs") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
      DetectorOutput out;
      std::vector<double> ldata(cfg.n_queries * (cfg.n_classes + 1));
      for (double& v : ldata) v = rng.uniform(-3, 3);
      out.class_logits =
          Tensor({static_cast<size_t>(cfg.n_queries), static_cast<size_t>(cfg.n_classes + 1)},
                 std::move(ldata));
      std::vector<double> bdata(cfg.n_queries * 4);
      for (double& v : bdata) v = rng.uniform(0.1, 0.9);
      out.boxes = Tensor({static_cast<size_t>(cfg.n_queries), 4}, std::move(bdata));
      const std::vector<GroundTruthObject> gt = {
          {rng.uniform_int(0, cfg.n_classes - 1), Box{0.5, 0.5, 0.3, 0.3}}};
      const auto cost =
          match_cost(out.class_logits, out.boxes, gt, {cfg.w_cls, cfg.w_l1, cfg.w_giou});
      const Tensor loss = detr_loss(out, gt, hungarian_match(cost), cfg);
      CHECK(loss.item() >= 0.0);
    }
  }
}

TEST_CASE("roi_scale") {
  SUBCASE("identity at p = d = 1") {
    const Box b{0.5, 0.5, 0.2, 0.3};
    const Box out = roi_scale(b, 0.8, 1.0, 1.0, 0.5, 0.3, 0.5);
    CHECK(out.cx == doctest::Approx(b.cx));
    CHECK(out.cy == doctest::Approx(b.cy));
    CHECK(out.w == doctest::Approx(b.w).epsilon(1e-12));
    CHECK(out.h == doctest::Approx(b.h).epsilon(1e-12));
  }

  SUBCASE("reported best triple gives S = 1.3 at attn = p = d = 1") {
    const double s = 0.5 * 1.0 + 0.3 / 1.0 + 0.5 / 1.0;
    CHECK(s == doctest::Approx(1.3).epsilon(1e-12));
  }

  SUBCASE("closer targets grow the box, capped at 2x") {
    const Box b{0.5, 0.5, 0.1, 0.1};
    double prev_w = 0.0;
    bool first = true;
    for (double d = 1.0; d >= 0.01; d -= 0.05) {
      const Box out = roi_scale(b, 1.0, 1.0, d, 0.5, 0.3, 0.5);
      if (!first) CHECK(out.w >= prev_w - 1e-12);
      CHECK(out.w <= 2.0 * b.w + 1e-12);
      prev_w = out.w;
      first = false;
    }
    const Box nearest = roi_scale(b, 1.0, 1.0, 0.0, 0.5, 0.3, 0.5);
    CHECK(nearest.w == doctest::Approx(0.2).epsilon(1e-9));
  }

  SUBCASE("shrink side clamps at 0.5x") {
    // pupil_direct mode with tiny p shrinks S below the reference
    const Box b{0.5, 0.5, 0.4, 0.4};
    const Box out = roi_scale(b, 0.0, 0.05, 1.0, 0.0, 1.0, 0.001, /*pupil_direct=*/true);
    CHECK(out.w == doctest::Approx(0.2).epsilon(1e-9));
  }

  SUBCASE("pupil_direct flips the pupil monotonicity") {
    const Box b{0.5, 0.5, 0.2, 0.2};
    const Box inv = roi_scale(b, 1.0, 0.3, 1.0, 0.5, 0.3, 0.5, false);
    const Box direct = roi_scale(b, 1.0, 0.3, 1.0, 0.5, 0.3, 0.5, true);
    CHECK(inv.w > b.w);      // 1/p grows as p shrinks
    CHECK(direct.w < b.w);   // l2*p shrinks as p shrinks
  }

  SUBCASE("non-positive lambda sum is a configuration error") {
    CHECK_THROWS_AS(roi_scale(Box{0.5, 0.5, 0.2, 0.2}, 1, 1, 1, 0, 0, 0), std::invalid_argument);
  }

  SUBCASE("result is re-clipped to the unit square") {
    const Box edge{0.95, 0.5, 0.3, 0.3};
    const Box out = roi_scale(edge, 1.0, 1.0, 0.05, 0.5, 0.3, 0.5);
    CHECK(out.x1() <= 1.0 + 1e-12);
    CHECK(out.w > 0.0);
  }
}

TEST_CASE("pseudo_box") {
  GazeRecord rec = test_gaze();

  SUBCASE("interior gaze gives the full square") {
    rec.g_xy = {0.5, 0.5};
    const Box b = pseudo_box(rec, 0.25);
    CHECK(b.cx == doctest::Approx(0.5));
    CHECK(b.w == doctest::Approx(0.25));
    CHECK(b.h == doctest::Approx(0.25));
  }

  SUBCASE("corner gaze clips to a quarter of the area") {
    rec.g_xy = {0.0, 0.0};
    const Box b = pseudo_box(rec, 0.25);
    CHECK(b.area() == doctest::Approx(0.25 * 0.25 / 4.0).epsilon(1e-12));
    CHECK(b.cx == doctest::Approx(0.25 / 4.0));
  }

  SUBCASE("size 1 covers the unit square") {
    rec.g_xy = {0.5, 0.5};
    const Box b = pseudo_box(rec, 1.0);
    CHECK(b.area() == doctest::Approx(1.0));
  }

  SUBCASE("bad inputs") {
    CHECK_THROWS_AS(pseudo_box(rec, 0.0), std::invalid_argument);
    GazeRecord bad;
    CHECK_THROWS_AS(pseudo_box(bad, 0.25), std::logic_error);
  }
}

TEST_CASE("select_top_detection") {
  auto mk = [](double conf, int cls, bool is_obj) {
    DecodedDetection d;
    d.det.confidence = conf;
    d.det.class_id = cls;
    d.is_object = is_obj;
    return d;
  };

  SUBCASE("single confident query wins") {
    const std::vector<DecodedDetection> ds = {mk(0.9, 2, true)};
    CHECK(select_top_detection(ds).class_id == 2);
  }

  SUBCASE("ties break to the lowest index") {
    const std::vector<DecodedDetection> ds = {mk(0.8, 1, true), mk(0.8, 2, true)};
    CHECK(select_top_detection(ds).class_id == 1);
  }

  SUBCASE("all no-object falls back to best real probability") {
    const std::vector<DecodedDetection> ds = {mk(0.2, 0, false), mk(0.45, 3, false),
                                              mk(0.3, 1, false)};
    CHECK(select_top_detection(ds).class_id == 3);
  }
}

TEST_CASE("patch_embed") {
  DetectorConfig cfg;
  cfg.validate();
  Rng rng(3);
  DetectorWeights w = init_weights(cfg, rng);

  SUBCASE("64x64 frame with patch 8 yields 64 tokens of width d_model") {
    Rng frng(4);
    const Tensor frame = random_frame(64, frng);
    const Tensor tokens = patch_embed(frame, w, cfg);
    CHECK(tokens.rows() == 64);
    CHECK(tokens.cols() == 32);
  }

  SUBCASE("zero frame and zero weights leave the position embedding") {
    const Tensor frame = Tensor::zeros({64, 64, 3});
    for (double& v : w.patch_proj.raw()) v = 0.0;
    for (double& v : w.patch_bias.raw()) v = 0.0;
    const Tensor tokens = patch_embed(frame, w, cfg);
    for (size_t i = 0; i < tokens.size(); ++i) {
      CHECK(tokens.at(i) == doctest::Approx(w.pos_embed.at(i)).epsilon(1e-12));
    }
  }

  SUBCASE("shape sweep over configs") {
    for (int img : {16, 32, 64}) {
      for (int patch : {8, 16}) {
        if (img % patch != 0) continue;
        DetectorConfig c = micro_config();
        c.image_size = img;
        c.patch_size = patch;
        Rng r(1);
        const DetectorWeights ww = init_weights(c, r);
        Rng fr(2);
        const Tensor tokens = patch_embed(random_frame(img, fr), ww, c);
        CHECK(tokens.rows() == static_cast<size_t>(c.n_patches()));
        CHECK(tokens.cols() == static_cast<size_t>(c.d_model));
      }
    }
  }

  SUBCASE("size mismatch throws") {
    Rng frng(4);
    const Tensor frame = random_frame(32, frng);
    CHECK_THROWS_AS(patch_embed(frame, w, cfg), std::invalid_argument);
  }
}

TEST_CASE("forward: gaze-off reduction and box invariants") {
  DetectorConfig cfg = micro_config();
  Rng rng(21);
  const DetectorWeights w = init_weights(cfg, rng);
  Rng frng(22);
  const Tensor frame = random_frame(cfg.image_size, frng);
  const GazeRecord rec = test_gaze();

  SUBCASE("absent record is bit-identical to alpha 0") {
    DetectorConfig zero = cfg;
    zero.alpha = 0.0;
    const DetectorOutput a = forward(frame, nullptr, w, cfg);
    const DetectorOutput b = forward(frame, &rec, w, zero);
    CHECK(std::memcmp(a.class_logits.data().data(), b.class_logits.data().data(),
                      a.class_logits.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.boxes.data().data(), b.boxes.data().data(),
                      a.boxes.size() * sizeof(double)) == 0);
  }

  SUBCASE("boxes satisfy their invariants for random weights") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
      Rng wr(seed);
      const DetectorWeights ww = init_weights(cfg, wr);
      const DetectorOutput out = forward(frame, &rec, ww, cfg);
      for (size_t q = 0; q < out.boxes.rows(); ++q) {
        const Box b{out.boxes(q, 0), out.boxes(q, 1), out.boxes(q, 2), out.boxes(q, 3)};
        CHECK(b.cx >= 0.0);
        CHECK(b.cx <= 1.0);
        CHECK(b.w > 0.0);
        CHECK(b.w <= 1.0);
        CHECK(b.h > 0.0);
        CHECK(b.h <= 1.0);
      }
    }
  }

  SUBCASE("per-layer gaze enable flag") {
    DetectorConfig first_only = cfg;
    first_only.n_encoder_layers = 2;
    Rng wr(31);
    const DetectorWeights ww = init_weights(first_only, wr);
    first_only.gaze_layers = {0};
    const DetectorOutput gated = forward(frame, &rec, ww, first_only);
    DetectorConfig all = first_only;
    all.gaze_layers.clear();
    const DetectorOutput full = forward(frame, &rec, ww, all);
    // the two runs must differ somewhere: layer 1 bias matters
    bool differs = false;
    for (size_t i = 0; i < full.class_logits.size(); ++i) {
      if (full.class_logits.at(i) != gated.class_logits.at(i)) differs = true;
    }
    CHECK(differs);
  }
}

TEST_CASE("full loss gradient matches finite differences on the micro config") {
  DetectorConfig cfg = micro_config();
  Rng rng(77);
  DetectorWeights w = init_weights(cfg, rng);
  Rng frng(78);
  const Tensor frame = random_frame(cfg.image_size, frng);
  const GazeRecord rec = test_gaze();
  const std::vector<GroundTruthObject> gt = {{1, Box{0.42, 0.58, 0.3, 0.22}}};

  // assignment frozen from the base run so the finite-difference function
  // stays smooth across perturbations
  const DetectorOutput base = forward(frame, &rec, w, cfg, false);
  const std::vector<int> assignment = hungarian_match(
      match_cost(base.class_logits, base.boxes, gt, {cfg.w_cls, cfg.w_l1, cfg.w_giou}));

  auto loss_of = [&](const DetectorWeights& weights) {
    const DetectorOutput out = forward(frame, &rec, weights, cfg, false);
    return detr_loss(out, gt, assignment, cfg);
  };

  const Tensor loss = loss_of(w);
  backward(loss);

  auto names = w.named();
  double worst = 0.0;
  for (auto& [name, param] : names) {
    if (!param->has_grad()) continue;
    const Tensor fd = finite_difference_grad(
        [&](const Tensor& p) {
          DetectorWeights probe = w;
          for (auto& [n2, t2] : probe.named()) {
            if (n2 == name) {
              *t2 = p;
              break;
            }
          }
          return loss_of(probe).item();
        },
        *param, 1e-5);
    const auto g = param->grad();
    for (size_t i = 0; i < g.size(); ++i) {
      const double denom = std::max({std::fabs(g[i]), std::fabs(fd.at(i)), 1e-4});
      worst = std::max(worst, std::fabs(g[i] - fd.at(i)) / denom);
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("training") {
  DetectorConfig cfg = micro_config();
  cfg.image_size = 32;
  cfg.patch_size = 8;  // L = 16
  cfg.n_classes = 4;

  SceneConfig scene;
  scene.image_size = 32;
  scene.patch_size = 8;
  scene.n_classes = 4;
  scene.max_objects = 2;
  scene.seed = 5;

  std::vector<TrainSample> set;
  for (const SceneSample& s : generate_scenes(scene, 30)) set.push_back(to_train_sample(s));

  SUBCASE("loss decreases over 200 optimizer steps on a single fixed sample") {
    DetectorConfig one = cfg;
    one.batch_size = 1;
    const std::vector<TrainSample> single(set.begin(), set.begin() + 1);
    const TrainResult r = train(single, {}, one, 200, 11);
    CHECK(r.train_loss.back() < r.train_loss.front());
    CHECK(r.train_loss.back() < 0.5 * r.train_loss.front());
  }

  SUBCASE("epochs 0 returns the initial weights") {
    const TrainResult r = train(set, {}, cfg, 0, 123);
    Rng rng(123);
    Rng init_rng = rng.child("init");
    const DetectorWeights fresh = init_weights(cfg, init_rng);
    const auto a = r.weights.named();
    const auto b = fresh.named();
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(std::memcmp(a[i].second->data().data(), b[i].second->data().data(),
                        a[i].second->size() * sizeof(double)) == 0);
    }
    CHECK(r.train_loss.empty());
  }

  SUBCASE("fixed seed reproduces the loss curve bit for bit") {
    const TrainResult r1 = train(set, {}, cfg, 2, 9);
    const TrainResult r2 = train(set, {}, cfg, 2, 9);
    REQUIRE(r1.train_loss.size() == r2.train_loss.size());
    for (size_t i = 0; i < r1.train_loss.size(); ++i) {
      CHECK(r1.train_loss[i] == r2.train_loss[i]);
    }
    const auto a = r1.weights.named();
    const auto b = r2.weights.named();
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(std::memcmp(a[i].second->data().data(), b[i].second->data().data(),
                        a[i].second->size() * sizeof(double)) == 0);
    }
  }

  SUBCASE("overfits a 30-sample set: final loss under 20% of initial") {
    // at the fixed 1e-3 step size the set-prediction loss needs roughly 200
    // epochs to cross the 20% mark at this scale
    SceneConfig single_obj = scene;
    single_obj.max_objects = 1;
    std::vector<TrainSample> simple;
    for (const SceneSample& s : generate_scenes(single_obj, 30)) {
      simple.push_back(to_train_sample(s));
    }
    DetectorConfig trainer;
    trainer.image_size = 32;
    trainer.patch_size = 8;
    trainer.n_classes = 4;
    trainer.batch_size = 2;
    const TrainResult r = train(simple, {}, trainer, 200, 3);
    REQUIRE(!r.train_loss.empty());
    CHECK(r.train_loss.back() < 0.2 * r.train_loss.front());
  }

  SUBCASE("empty training set is rejected") {
    CHECK_THROWS_AS(train({}, {}, cfg, 1, 0), std::invalid_argument);
  }
}

TEST_CASE("checkpoint round trip") {
  DetectorConfig cfg = micro_config();
  Rng rng(55);
  const DetectorWeights w = init_weights(cfg, rng);
  const auto dir = std::filesystem::temp_directory_path() / "gazedet_ckpt_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "w.json", w, cfg);
  auto [loaded, loaded_cfg] = load_checkpoint(dir / "w.json");
  CHECK(loaded_cfg.d_model == cfg.d_model);
  CHECK(loaded_cfg.alpha == cfg.alpha);
  const auto a = w.named();
  const auto b = loaded.named();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    REQUIRE(a[i].second->size() == b[i].second->size());
    CHECK(std::memcmp(a[i].second->data().data(), b[i].second->data().data(),
                      a[i].second->size() * sizeof(double)) == 0);
  }
  std::filesystem::remove_all(dir);
}
