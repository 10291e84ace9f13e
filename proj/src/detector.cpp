#include "gazedet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace gazedet {

using nlohmann::json;

void DetectorConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
    throw std::invalid_argument("DetectorConfig: image_size must be divisible by patch_size");
  }
  if (n_classes < 1 || n_queries < 1 || n_encoder_layers < 1 || n_decoder_layers < 1) {
    throw std::invalid_argument("DetectorConfig: counts must be positive");
  }
  attention_config().validate();
}

bool DetectorConfig::gaze_enabled_for_layer(int layer) const {
  if (gaze_layers.empty()) return true;
  return std::find(gaze_layers.begin(), gaze_layers.end(), layer) != gaze_layers.end();
}

namespace {

void collect_mha(std::vector<std::pair<std::string, Tensor*>>& out, const std::string& prefix,
                 MhaWeights& w) {
  out.emplace_back(prefix + ".wq", &w.wq);
  out.emplace_back(prefix + ".wk", &w.wk);
  out.emplace_back(prefix + ".wv", &w.wv);
  out.emplace_back(prefix + ".wo", &w.wo);
  out.emplace_back(prefix + ".bq", &w.bq);
  out.emplace_back(prefix + ".bk", &w.bk);
  out.emplace_back(prefix + ".bv", &w.bv);
  out.emplace_back(prefix + ".bo", &w.bo);
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> DetectorWeights::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("patch_proj", &patch_proj);
  out.emplace_back("patch_bias", &patch_bias);
  out.emplace_back("pos_embed", &pos_embed);
  for (size_t i = 0; i < encoder.size(); ++i) {
    const std::string p = "enc" + std::to_string(i);
    collect_mha(out, p + ".mha", encoder[i].mha);
    out.emplace_back(p + ".ln1_g", &encoder[i].ln1_g);
    out.emplace_back(p + ".ln1_b", &encoder[i].ln1_b);
    out.emplace_back(p + ".ln2_g", &encoder[i].ln2_g);
    out.emplace_back(p + ".ln2_b", &encoder[i].ln2_b);
    out.emplace_back(p + ".ffn_w1", &encoder[i].ffn_w1);
    out.emplace_back(p + ".ffn_b1", &encoder[i].ffn_b1);
    out.emplace_back(p + ".ffn_w2", &encoder[i].ffn_w2);
    out.emplace_back(p + ".ffn_b2", &encoder[i].ffn_b2);
  }
  out.emplace_back("enc_ln_g", &enc_ln_g);
  out.emplace_back("enc_ln_b", &enc_ln_b);
  out.emplace_back("queries", &queries);
  for (size_t i = 0; i < decoder.size(); ++i) {
    const std::string p = "dec" + std::to_string(i);
    collect_mha(out, p + ".cross", decoder[i].cross);
    out.emplace_back(p + ".ln1_g", &decoder[i].ln1_g);
    out.emplace_back(p + ".ln1_b", &decoder[i].ln1_b);
    out.emplace_back(p + ".ln2_g", &decoder[i].ln2_g);
    out.emplace_back(p + ".ln2_b", &decoder[i].ln2_b);
    out.emplace_back(p + ".ffn_w1", &decoder[i].ffn_w1);
    out.emplace_back(p + ".ffn_b1", &decoder[i].ffn_b1);
    out.emplace_back(p + ".ffn_w2", &decoder[i].ffn_w2);
    out.emplace_back(p + ".ffn_b2", &decoder[i].ffn_b2);
  }
  out.emplace_back("dec_ln_g", &dec_ln_g);
  out.emplace_back("dec_ln_b", &dec_ln_b);
  out.emplace_back("cls_w", &cls_w);
  out.emplace_back("cls_b", &cls_b);
  out.emplace_back("box_w1", &box_w1);
  out.emplace_back("box_b1", &box_b1);
  out.emplace_back("box_w2", &box_w2);
  out.emplace_back("box_b2", &box_b2);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> DetectorWeights::named() const {
  auto mut = const_cast<DetectorWeights*>(this)->named();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mut.size());
  for (auto& [n, t] : mut) out.emplace_back(n, t);
  return out;
}

namespace {

Tensor xavier(size_t fan_in, size_t fan_out, Rng& rng) {
  const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> data(fan_in * fan_out);
  for (double& v : data) v = rng.uniform(-lim, lim);
  return Tensor({fan_in, fan_out}, std::move(data), true);
}

Tensor small_normal(size_t r, size_t c, Rng& rng, double sigma = 0.02) {
  std::vector<double> data(r * c);
  for (double& v : data) v = rng.normal(0.0, sigma);
  return Tensor({r, c}, std::move(data), true);
}

Tensor zeros_param(size_t n) { return Tensor::zeros({n}, true); }
Tensor ones_param(size_t n) { return Tensor::full({n}, 1.0, true); }

MhaWeights init_mha(size_t d, Rng& rng) {
  MhaWeights w;
  w.wq = xavier(d, d, rng);
  w.wk = xavier(d, d, rng);
  w.wv = xavier(d, d, rng);
  w.wo = xavier(d, d, rng);
  w.bq = zeros_param(d);
  w.bk = zeros_param(d);
  w.bv = zeros_param(d);
  w.bo = zeros_param(d);
  return w;
}

}  // namespace

DetectorWeights init_weights(const DetectorConfig& cfg, Rng& rng) {
  cfg.validate();
  const size_t d = cfg.d_model;
  const size_t L = cfg.n_patches();
  DetectorWeights w;
  w.patch_proj = xavier(cfg.patch_dim(), d, rng);
  w.patch_bias = zeros_param(d);
  w.pos_embed = small_normal(L, d, rng);
  for (int i = 0; i < cfg.n_encoder_layers; ++i) {
    EncoderLayerWeights l;
    l.mha = init_mha(d, rng);
    l.ln1_g = ones_param(d);
    l.ln1_b = zeros_param(d);
    l.ln2_g = ones_param(d);
    l.ln2_b = zeros_param(d);
    l.ffn_w1 = xavier(d, cfg.ffn_dim, rng);
    l.ffn_b1 = zeros_param(cfg.ffn_dim);
    l.ffn_w2 = xavier(cfg.ffn_dim, d, rng);
    l.ffn_b2 = zeros_param(d);
    w.encoder.push_back(std::move(l));
  }
  w.enc_ln_g = ones_param(d);
  w.enc_ln_b = zeros_param(d);
  // unit-scale queries: near-identical queries make the bipartite matching
  // churn between steps and stall early training
  w.queries = small_normal(cfg.n_queries, d, rng, 1.0);
  for (int i = 0; i < cfg.n_decoder_layers; ++i) {
    DecoderLayerWeights l;
    l.cross = init_mha(d, rng);
    l.ln1_g = ones_param(d);
    l.ln1_b = zeros_param(d);
    l.ln2_g = ones_param(d);
    l.ln2_b = zeros_param(d);
    l.ffn_w1 = xavier(d, cfg.ffn_dim, rng);
    l.ffn_b1 = zeros_param(cfg.ffn_dim);
    l.ffn_w2 = xavier(cfg.ffn_dim, d, rng);
    l.ffn_b2 = zeros_param(d);
    w.decoder.push_back(std::move(l));
  }
  w.dec_ln_g = ones_param(d);
  w.dec_ln_b = zeros_param(d);
  w.cls_w = xavier(d, cfg.n_classes + 1, rng);
  w.cls_b = zeros_param(cfg.n_classes + 1);
  w.box_w1 = xavier(d, d, rng);
  w.box_b1 = zeros_param(d);
  w.box_w2 = xavier(d, 4, rng);
  // size prior: boxes start centered with w = h = 0.2 instead of 0.5
  w.box_b2 = Tensor({4}, {0.0, 0.0, -1.386294361119891, -1.386294361119891}, true);
  return w;
}

Tensor patch_embed(const Tensor& frame, const DetectorWeights& w, const DetectorConfig& cfg) {
  const size_t H = cfg.image_size, W = cfg.image_size, P = cfg.patch_size;
  if (frame.shape().size() != 3 || frame.shape()[0] != H || frame.shape()[1] != W ||
      frame.shape()[2] != 3) {
    throw std::invalid_argument("patch_embed: frame does not match configured size");
  }
  const size_t side = cfg.grid_side();
  const size_t L = side * side;
  const size_t pd = cfg.patch_dim();
  std::vector<double> patches(L * pd);
  const auto fd = frame.data();
  for (size_t pr = 0; pr < side; ++pr) {
    for (size_t pc = 0; pc < side; ++pc) {
      double* dst = &patches[(pr * side + pc) * pd];
      size_t k = 0;
      for (size_t y = 0; y < P; ++y)
        for (size_t x = 0; x < P; ++x)
          for (size_t c = 0; c < 3; ++c)
            dst[k++] = fd[((pr * P + y) * W + (pc * P + x)) * 3 + c];
    }
  }
  const Tensor patch_matrix({L, pd}, std::move(patches));
  return add(add_row(matmul(patch_matrix, w.patch_proj), w.patch_bias), w.pos_embed);
}

namespace {

Tensor ffn_forward(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                   const Tensor& b2) {
  return add_row(matmul(gelu(add_row(matmul(x, w1), b1)), w2), b2);
}

}  // namespace

DetectorOutput forward(const Tensor& frame, const GazeRecord* rec, const DetectorWeights& w,
                       const DetectorConfig& cfg, bool want_maps) {
  cfg.validate();
  const PatchGrid grid = patch_centers(cfg.grid_side(), cfg.grid_side());
  AttentionConfig att = cfg.attention_config();
  GazeRecord stripped;
  if (!cfg.use_direction && rec != nullptr) {
    // position-only ablation: treat the direction as absent
    stripped = *rec;
    stripped.has_direction = false;
    rec = &stripped;
  }

  DetectorOutput out;
  Tensor x = patch_embed(frame, w, cfg);
  for (size_t i = 0; i < w.encoder.size(); ++i) {
    const EncoderLayerWeights& l = w.encoder[i];
    const GazeRecord* layer_rec =
        (rec != nullptr && rec->valid && cfg.gaze_enabled_for_layer(static_cast<int>(i))) ? rec
                                                                                          : nullptr;
    AttentionMaps maps;
    const Tensor attn_out = mha_forward(layer_norm(x, l.ln1_g, l.ln1_b), l.mha, layer_rec, grid,
                                        att, want_maps ? &maps : nullptr);
    if (want_maps) out.encoder_maps.push_back(std::move(maps));
    x = add(x, attn_out);
    x = add(x, ffn_forward(layer_norm(x, l.ln2_g, l.ln2_b), l.ffn_w1, l.ffn_b1, l.ffn_w2,
                           l.ffn_b2));
  }
  x = layer_norm(x, w.enc_ln_g, w.enc_ln_b);

  Tensor q = w.queries;
  for (const DecoderLayerWeights& l : w.decoder) {
    q = add(q, mha_cross(layer_norm(q, l.ln1_g, l.ln1_b), x, l.cross, att));
    q = add(q, ffn_forward(layer_norm(q, l.ln2_g, l.ln2_b), l.ffn_w1, l.ffn_b1, l.ffn_w2,
                           l.ffn_b2));
  }
  q = layer_norm(q, w.dec_ln_g, w.dec_ln_b);

  out.class_logits = add_row(matmul(q, w.cls_w), w.cls_b);
  out.boxes = sigmoid(add_row(matmul(gelu(add_row(matmul(q, w.box_w1), w.box_b1)), w.box_w2),
                              w.box_b2));
  return out;
}

double giou(const Box& a, const Box& b) {
  const double ix0 = std::max(a.x0(), b.x0());
  const double iy0 = std::max(a.y0(), b.y0());
  const double ix1 = std::min(a.x1(), b.x1());
  const double iy1 = std::min(a.y1(), b.y1());
  const double inter = std::max(0.0, ix1 - ix0) * std::max(0.0, iy1 - iy0);
  const double uni = a.area() + b.area() - inter;
  const double iou = uni > 0.0 ? inter / uni : 0.0;
  const double cx0 = std::min(a.x0(), b.x0());
  const double cy0 = std::min(a.y0(), b.y0());
  const double cx1 = std::max(a.x1(), b.x1());
  const double cy1 = std::max(a.y1(), b.y1());
  const double enclosing = (cx1 - cx0) * (cy1 - cy0);
  if (enclosing <= 0.0) return iou;
  return iou - (enclosing - uni) / enclosing;
}

std::vector<int> hungarian_match(const std::vector<std::vector<double>>& cost) {
  const int n_q = static_cast<int>(cost.size());
  if (n_q == 0) return {};
  const int n_g = static_cast<int>(cost[0].size());
  if (n_g == 0) return {};
  if (n_g > n_q) {
    throw std::invalid_argument("hungarian_match: more ground truths than queries");
  }
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != n_g) {
      throw std::invalid_argument("hungarian_match: ragged cost matrix");
    }
    for (double v : row) {
      if (!std::isfinite(v)) throw std::invalid_argument("hungarian_match: non-finite cost");
    }
  }

  // shortest augmenting path with potentials; rows = ground truths (n),
  // columns = queries (m), n <= m
  const int n = n_g, m = n_q;
  const double INF = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> match(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, INF);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      int j1 = -1;
      double delta = INF;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[j - 1][i0 - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (match[j] > 0) assignment[match[j] - 1] = j - 1;
  }
  return assignment;
}

std::vector<std::vector<double>> match_cost(const Tensor& class_logits, const Tensor& boxes,
                                            std::span<const GroundTruthObject> gt,
                                            const MatchWeights& mw) {
  const size_t n_q = class_logits.rows();
  const size_t n_c = class_logits.cols();
  if (boxes.rows() != n_q || boxes.cols() != 4) {
    throw std::invalid_argument("match_cost: box tensor shape mismatch");
  }
  std::vector<std::vector<double>> cost(n_q, std::vector<double>(gt.size(), 0.0));
  for (size_t q = 0; q < n_q; ++q) {
    // softmax probabilities of this query's logits
    double mx = class_logits(q, 0);
    for (size_t c = 1; c < n_c; ++c) mx = std::max(mx, class_logits(q, c));
    double s = 0.0;
    std::vector<double> probs(n_c);
    for (size_t c = 0; c < n_c; ++c) {
      probs[c] = std::exp(class_logits(q, c) - mx);
      s += probs[c];
    }
    for (double& p : probs) p /= s;
    const Box pb{boxes(q, 0), boxes(q, 1), boxes(q, 2), boxes(q, 3)};
    for (size_t g = 0; g < gt.size(); ++g) {
      const Box& gb = gt[g].box;
      const double l1 = std::fabs(pb.cx - gb.cx) + std::fabs(pb.cy - gb.cy) +
                        std::fabs(pb.w - gb.w) + std::fabs(pb.h - gb.h);
      cost[q][g] = mw.w_cls * (-probs[gt[g].class_id]) + mw.w_l1 * l1 +
                   mw.w_giou * (-giou(pb, gb));
    }
  }
  return cost;
}

namespace {

// Differentiable GIoU column for matched (pred, gt) box rows.
Tensor giou_matched(const Tensor& pred, const Tensor& gtb) {
  const auto half = [](const Tensor& t) { return scale(t, 0.5); };
  const Tensor px = slice_cols(pred, 0, 1), py = slice_cols(pred, 1, 2);
  const Tensor pw = slice_cols(pred, 2, 3), ph = slice_cols(pred, 3, 4);
  const Tensor gx = slice_cols(gtb, 0, 1), gy = slice_cols(gtb, 1, 2);
  const Tensor gw = slice_cols(gtb, 2, 3), gh = slice_cols(gtb, 3, 4);
  const Tensor px0 = sub(px, half(pw)), px1 = add(px, half(pw));
  const Tensor py0 = sub(py, half(ph)), py1 = add(py, half(ph));
  const Tensor gx0 = sub(gx, half(gw)), gx1 = add(gx, half(gw));
  const Tensor gy0 = sub(gy, half(gh)), gy1 = add(gy, half(gh));
  const Tensor iw = relu(sub(elem_min(px1, gx1), elem_max(px0, gx0)));
  const Tensor ih = relu(sub(elem_min(py1, gy1), elem_max(py0, gy0)));
  const Tensor inter = mul(iw, ih);
  const Tensor uni = sub(add(mul(pw, ph), mul(gw, gh)), inter);
  const Tensor iou = div(inter, uni);
  const Tensor cw = sub(elem_max(px1, gx1), elem_min(px0, gx0));
  const Tensor ch = sub(elem_max(py1, gy1), elem_min(py0, gy0));
  const Tensor enclosing = mul(cw, ch);
  return sub(iou, div(sub(enclosing, uni), enclosing));
}

}  // namespace

Tensor detr_loss(const DetectorOutput& out, std::span<const GroundTruthObject> gt,
                 const std::vector<int>& assignment, const DetectorConfig& cfg) {
  const size_t n_q = out.class_logits.rows();
  if (assignment.size() != gt.size()) {
    throw std::invalid_argument("detr_loss: assignment does not cover ground truths");
  }
  std::vector<int> targets(n_q, cfg.no_object_class());
  std::vector<size_t> matched_rows;
  for (size_t g = 0; g < gt.size(); ++g) {
    const int q = assignment[g];
    if (q < 0 || static_cast<size_t>(q) >= n_q) {
      throw std::invalid_argument("detr_loss: assignment index out of range");
    }
    targets[q] = gt[g].class_id;
    matched_rows.push_back(static_cast<size_t>(q));
  }
  std::vector<double> class_weights(cfg.n_classes + 1, 1.0);
  class_weights[cfg.no_object_class()] = cfg.no_object_weight;
  Tensor loss = cross_entropy_weighted(out.class_logits, targets, class_weights);

  if (!gt.empty()) {
    const Tensor pred = gather_rows(out.boxes, matched_rows);
    std::vector<double> gt_data;
    gt_data.reserve(gt.size() * 4);
    for (const GroundTruthObject& o : gt) {
      gt_data.push_back(o.box.cx);
      gt_data.push_back(o.box.cy);
      gt_data.push_back(o.box.w);
      gt_data.push_back(o.box.h);
    }
    const Tensor gtb({gt.size(), 4}, std::move(gt_data));
    const double inv_m = 1.0 / static_cast<double>(gt.size());
    const Tensor l1_term = scale(sum(abs(sub(pred, gtb))), inv_m);
    const Tensor giou_col = giou_matched(pred, gtb);
    const Tensor giou_term =
        scale(sum(sub(Tensor::full({gt.size(), 1}, 1.0), giou_col)), inv_m);
    loss = add(loss, add(scale(l1_term, cfg.w_l1), scale(giou_term, cfg.w_giou)));
  }
  return loss;
}

Box roi_scale(const Box& box, double attn_score, double p, double d, double lambda1,
              double lambda2, double lambda3, bool pupil_direct) {
  if (lambda1 + lambda2 + lambda3 <= 0.0) {
    throw std::invalid_argument("roi_scale: lambda sum must be positive");
  }
  const double pc = std::clamp(p, 0.05, 1.0);
  const double dc = std::clamp(d, 0.05, 1.0);
  const double pupil_term = pupil_direct ? lambda2 * pc : lambda2 / pc;
  const double s = lambda1 * attn_score + pupil_term + lambda3 / dc;
  const double s_ref = lambda1 * attn_score + lambda2 + lambda3;
  const double ratio = std::clamp(s / s_ref, 0.5, 2.0);
  Box scaled{box.cx, box.cy, box.w * ratio, box.h * ratio};
  return scaled.clipped_to_unit();
}

double mean_attention_in_box(const AttentionMaps& maps, const PatchGrid& grid, const Box& box) {
  const std::vector<double> heat = mean_head_scores(maps);
  if (heat.size() != grid.count()) {
    throw std::invalid_argument("mean_attention_in_box: grid does not match maps");
  }
  double sum_heat = 0.0;
  size_t count = 0;
  for (size_t j = 0; j < grid.count(); ++j) {
    if (box.contains(grid.centers[j][0], grid.centers[j][1])) {
      sum_heat += heat[j];
      ++count;
    }
  }
  if (count > 0) return sum_heat / static_cast<double>(count);
  // degenerate box smaller than a patch: use the nearest patch center
  size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < grid.count(); ++j) {
    const double dx = grid.centers[j][0] - box.cx;
    const double dy = grid.centers[j][1] - box.cy;
    const double dist = dx * dx + dy * dy;
    if (dist < best_d) {
      best_d = dist;
      best = j;
    }
  }
  return heat[best];
}

std::vector<DecodedDetection> decode_detections(const DetectorOutput& out,
                                                const DetectorConfig& cfg, const GazeRecord* rec) {
  const size_t n_q = out.class_logits.rows();
  const size_t n_c = out.class_logits.cols();
  const bool scale_boxes = cfg.use_roi_scale && rec != nullptr && rec->valid &&
                           !out.encoder_maps.empty();
  const PatchGrid grid = patch_centers(cfg.grid_side(), cfg.grid_side());

  std::vector<DecodedDetection> decoded;
  decoded.reserve(n_q);
  for (size_t q = 0; q < n_q; ++q) {
    double mx = out.class_logits(q, 0);
    for (size_t c = 1; c < n_c; ++c) mx = std::max(mx, out.class_logits(q, c));
    double s = 0.0;
    std::vector<double> probs(n_c);
    for (size_t c = 0; c < n_c; ++c) {
      probs[c] = std::exp(out.class_logits(q, c) - mx);
      s += probs[c];
    }
    for (double& v : probs) v /= s;
    size_t arg_all = 0;
    for (size_t c = 1; c < n_c; ++c)
      if (probs[c] > probs[arg_all]) arg_all = c;
    size_t best_real = 0;
    for (size_t c = 1; c + 1 < n_c; ++c)
      if (probs[c] > probs[best_real]) best_real = c;

    DecodedDetection dd;
    dd.is_object = arg_all != n_c - 1;
    dd.det.class_id = static_cast<int>(best_real);
    dd.det.confidence = probs[best_real];
    Box b{out.boxes(q, 0), out.boxes(q, 1), out.boxes(q, 2), out.boxes(q, 3)};
    if (scale_boxes) {
      const double attn = mean_attention_in_box(out.encoder_maps.back(), grid, b);
      b = roi_scale(b, attn, rec->p, rec->d, cfg.lambda1, cfg.lambda2, cfg.lambda3,
                    cfg.pupil_direct);
    }
    dd.det.box = b;
    decoded.push_back(dd);
  }
  return decoded;
}

Detection select_top_detection(std::span<const DecodedDetection> decoded) {
  if (decoded.empty()) throw std::logic_error("select_top_detection: no detections");
  int best = -1;
  for (size_t i = 0; i < decoded.size(); ++i) {
    if (!decoded[i].is_object) continue;
    if (best < 0 || decoded[i].det.confidence > decoded[best].det.confidence) {
      best = static_cast<int>(i);
    }
  }
  if (best < 0) {
    // every query prefers no-object: highest real-class probability wins
    best = 0;
    for (size_t i = 1; i < decoded.size(); ++i) {
      if (decoded[i].det.confidence > decoded[best].det.confidence) best = static_cast<int>(i);
    }
  }
  return decoded[best].det;
}

Box pseudo_box(const GazeRecord& rec, double size) {
  if (!rec.valid) throw std::logic_error("pseudo_box: invalid gaze record");
  if (size <= 0.0 || size > 1.0) throw std::invalid_argument("pseudo_box: size out of range");
  const Box raw{rec.g_xy[0], rec.g_xy[1], size, size};
  return raw.clipped_to_unit();
}

namespace {

struct AdamState {
  std::vector<double> m, v;
};

bool tensor_finite(const Tensor& t) {
  for (double x : t.data())
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

TrainResult train(std::span<const TrainSample> train_set, std::span<const TrainSample> val_set,
                  const DetectorConfig& cfg, int epochs, uint64_t seed) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  cfg.validate();
  Rng rng(seed);
  Rng init_rng = rng.child("init");
  TrainResult result;
  result.weights = init_weights(cfg, init_rng);

  auto params = result.weights.named();
  std::vector<AdamState> adam(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    adam[i].m.assign(params[i].second->size(), 0.0);
    adam[i].v.assign(params[i].second->size(), 0.0);
  }
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  size_t step = 0;
  size_t global_sample = 0;

  auto sample_loss = [&cfg](const TrainSample& s, const DetectorWeights& w) {
    const GazeRecord* rec = s.gaze.valid ? &s.gaze : nullptr;
    DetectorOutput out = forward(s.frame, rec, w, cfg, /*want_maps=*/false);
    std::vector<int> assignment;
    if (!s.gt.empty()) {
      assignment = hungarian_match(
          match_cost(out.class_logits, out.boxes, s.gt, {cfg.w_cls, cfg.w_l1, cfg.w_giou}));
    }
    return detr_loss(out, s.gt, assignment, cfg);
  };

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<size_t> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = rng.child("shuffle", static_cast<uint64_t>(epoch));
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.uniform_int(
                                  0, static_cast<int>(i) - 1))]);
    }

    double epoch_loss = 0.0;
    size_t pos = 0;
    while (pos < order.size()) {
      const size_t batch = std::min<size_t>(cfg.batch_size, order.size() - pos);
      for (auto& [name, t] : params) t->zero_grad();
      for (size_t b = 0; b < batch; ++b) {
        const TrainSample& s = train_set[order[pos + b]];
        Tensor loss = sample_loss(s, result.weights);
        const double lv = loss.item();
        if (!std::isfinite(lv)) throw DivergenceError(global_sample);
        epoch_loss += lv;
        backward(loss);
        ++global_sample;
      }
      ++step;
      const double inv_batch = 1.0 / static_cast<double>(batch);
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (size_t i = 0; i < params.size(); ++i) {
        Tensor& t = *params[i].second;
        if (!t.has_grad()) continue;
        auto g = t.grad();
        auto& data = t.raw();
        for (size_t k = 0; k < data.size(); ++k) {
          const double gk = g[k] * inv_batch;
          adam[i].m[k] = beta1 * adam[i].m[k] + (1.0 - beta1) * gk;
          adam[i].v[k] = beta2 * adam[i].v[k] + (1.0 - beta2) * gk * gk;
          data[k] -= cfg.learning_rate * (adam[i].m[k] / bc1) /
                     (std::sqrt(adam[i].v[k] / bc2) + eps);
        }
        if (!tensor_finite(t)) throw DivergenceError(global_sample);
      }
      pos += batch;
    }
    result.train_loss.push_back(epoch_loss / static_cast<double>(train_set.size()));

    double vloss = 0.0;
    for (const TrainSample& s : val_set) vloss += sample_loss(s, result.weights).item();
    result.val_loss.push_back(val_set.empty() ? 0.0
                                              : vloss / static_cast<double>(val_set.size()));
  }
  return result;
}

namespace {

json config_to_json(const DetectorConfig& c) {
  json j;
  j["image_size"] = c.image_size;
  j["patch_size"] = c.patch_size;
  j["d_model"] = c.d_model;
  j["n_heads"] = c.n_heads;
  j["n_encoder_layers"] = c.n_encoder_layers;
  j["n_decoder_layers"] = c.n_decoder_layers;
  j["n_queries"] = c.n_queries;
  j["n_classes"] = c.n_classes;
  j["ffn_dim"] = c.ffn_dim;
  j["alpha"] = c.alpha;
  j["use_direction"] = c.use_direction;
  j["gaze_layers"] = c.gaze_layers;
  j["lambda1"] = c.lambda1;
  j["lambda2"] = c.lambda2;
  j["lambda3"] = c.lambda3;
  j["use_roi_scale"] = c.use_roi_scale;
  j["pupil_direct"] = c.pupil_direct;
  j["w_cls"] = c.w_cls;
  j["w_l1"] = c.w_l1;
  j["w_giou"] = c.w_giou;
  j["no_object_weight"] = c.no_object_weight;
  j["pseudo_box_size"] = c.pseudo_box_size;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  return j;
}

DetectorConfig config_from_json(const json& j) {
  DetectorConfig c;
  c.image_size = j.at("image_size").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.n_encoder_layers = j.at("n_encoder_layers").get<int>();
  c.n_decoder_layers = j.at("n_decoder_layers").get<int>();
  c.n_queries = j.at("n_queries").get<int>();
  c.n_classes = j.at("n_classes").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.alpha = j.at("alpha").get<double>();
  c.use_direction = j.at("use_direction").get<bool>();
  c.gaze_layers = j.at("gaze_layers").get<std::vector<int>>();
  c.lambda1 = j.at("lambda1").get<double>();
  c.lambda2 = j.at("lambda2").get<double>();
  c.lambda3 = j.at("lambda3").get<double>();
  c.use_roi_scale = j.at("use_roi_scale").get<bool>();
  c.pupil_direct = j.at("pupil_direct").get<bool>();
  c.w_cls = j.at("w_cls").get<double>();
  c.w_l1 = j.at("w_l1").get<double>();
  c.w_giou = j.at("w_giou").get<double>();
  c.no_object_weight = j.at("no_object_weight").get<double>();
  c.pseudo_box_size = j.at("pseudo_box_size").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DetectorWeights& w,
                     const DetectorConfig& cfg) {
  json j;
  j["format_version"] = 1;
  j["config"] = config_to_json(cfg);
  json tensors = json::object();
  for (const auto& [name, t] : w.named()) {
    json entry;
    entry["shape"] = t->shape();
    entry["data"] = std::vector<double>(t->data().begin(), t->data().end());
    tensors[name] = std::move(entry);
  }
  j["tensors"] = std::move(tensors);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  out << j.dump() << '\n';
}

std::pair<DetectorWeights, DetectorConfig> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  json j;
  in >> j;
  if (j.at("format_version").get<int>() != 1) {
    throw std::runtime_error("load_checkpoint: unsupported format version");
  }
  const DetectorConfig cfg = config_from_json(j.at("config"));
  Rng dummy(0);
  DetectorWeights w = init_weights(cfg, dummy);
  const json& tensors = j.at("tensors");
  for (auto& [name, t] : w.named()) {
    const json& entry = tensors.at(name);
    const auto shape = entry.at("shape").get<std::vector<size_t>>();
    if (shape != t->shape()) {
      throw std::runtime_error("load_checkpoint: shape mismatch for tensor " + name);
    }
    t->raw() = entry.at("data").get<std::vector<double>>();
  }
  return {std::move(w), cfg};
}

}  // namespace gazedet
