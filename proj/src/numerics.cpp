#include "gazedet/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace gazedet {

namespace {

std::atomic<uint64_t> g_seq{0};

size_t product(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

void check_finite_inputs(const Tensor& t, const char* op) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(op) + ": non-finite input");
  }
}

[[noreturn]] void shape_error(const char* op) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

void TensorNode::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> data, bool requires_grad) {
  if (product(shape) != data.size()) {
    throw std::invalid_argument("Tensor: shape does not match data length");
  }
  node_ = std::make_shared<TensorNode>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
  node_->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
}

Tensor Tensor::zeros(std::vector<size_t> shape, bool requires_grad) {
  size_t n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(std::vector<size_t> shape, double value, bool requires_grad) {
  size_t n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::matrix(size_t rows, size_t cols, std::vector<double> data, bool requires_grad) {
  return Tensor({rows, cols}, std::move(data), requires_grad);
}

const std::vector<size_t>& Tensor::shape() const { return node_->shape; }
size_t Tensor::size() const { return node_->data.size(); }
size_t Tensor::rows() const { return node_->shape.empty() ? 1 : node_->shape[0]; }
size_t Tensor::cols() const { return node_->shape.size() < 2 ? 1 : node_->shape[1]; }
bool Tensor::requires_grad() const { return node_->requires_grad; }

double Tensor::operator()(size_t i, size_t j) const { return node_->data[i * cols() + j]; }
double Tensor::at(size_t flat) const { return node_->data[flat]; }

double Tensor::item() const {
  if (size() != 1) throw std::logic_error("Tensor::item: not a scalar");
  return node_->data[0];
}

std::span<const double> Tensor::data() const { return node_->data; }
std::vector<double>& Tensor::raw() { return node_->data; }

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->data.size(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("Tensor::grad: no gradient computed");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

// Creates the result node and records the backward closure when needed.
Tensor make_op_result(std::vector<size_t> shape, std::vector<double> data,
                      std::vector<Tensor> parents, std::function<void(TensorNode&)> backward_fn) {
  bool needs = false;
  for (const Tensor& p : parents) needs = needs || p.requires_grad();
  Tensor out(std::move(shape), std::move(data), needs);
  if (needs) {
    auto node = out.node();
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows() || a.shape().size() != 2 || b.shape().size() != 2) {
    shape_error("matmul");
  }
  const size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const auto ad = a.data();
  const auto bd = b.data();
  for (size_t i = 0; i < m; ++i) {
    for (size_t kk = 0; kk < k; ++kk) {
      const double av = ad[i * k + kk];
      const double* brow = &bd[kk * n];
      double* orow = &out[i * n];
      for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return make_op_result({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](TensorNode& self) {
    // dA = G B^T ; dB = A^T G
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) {
          const double g = self.grad[i * n + j];
          for (size_t kk = 0; kk < k; ++kk) an->grad[i * k + kk] += g * bn->data[kk * n + j];
        }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < m; ++i)
        for (size_t kk = 0; kk < k; ++kk) {
          const double av = an->data[i * k + kk];
          for (size_t j = 0; j < n; ++j) bn->grad[kk * n + j] += av * self.grad[i * n + j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.shape().size() != 2) shape_error("transpose");
  const size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) out[j * r + i] = a(i, j);
  auto an = a.node();
  return make_op_result({c, r}, std::move(out), {a}, [an, r, c](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < c; ++j) an->grad[i * c + j] += self.grad[j * r + i];
  });
}

namespace {

using BinFwd = double (*)(double, double);

Tensor binary_elem(const char* name, const Tensor& a, const Tensor& b, BinFwd fwd,
                   std::function<void(TensorNode&, TensorNode&, TensorNode&)> bwd) {
  if (a.shape() != b.shape()) shape_error(name);
  std::vector<double> out(a.size());
  const auto ad = a.data();
  const auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(ad[i], bd[i]);
  auto an = a.node();
  auto bn = b.node();
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [an, bn, bwd](TensorNode& self) { bwd(self, *an, *bn); });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elem(
      "add", a, b, [](double x, double y) { return x + y; },
      [](TensorNode& self, TensorNode& an, TensorNode& bn) {
        if (an.requires_grad) {
          an.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i];
        }
        if (bn.requires_grad) {
          bn.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) bn.grad[i] += self.grad[i];
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elem(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](TensorNode& self, TensorNode& an, TensorNode& bn) {
        if (an.requires_grad) {
          an.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i];
        }
        if (bn.requires_grad) {
          bn.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) bn.grad[i] -= self.grad[i];
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elem(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](TensorNode& self, TensorNode& an, TensorNode& bn) {
        if (an.requires_grad) {
          an.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i] * bn.data[i];
        }
        if (bn.requires_grad) {
          bn.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) bn.grad[i] += self.grad[i] * an.data[i];
        }
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_elem(
      "div", a, b, [](double x, double y) { return x / y; },
      [](TensorNode& self, TensorNode& an, TensorNode& bn) {
        if (an.requires_grad) {
          an.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i] / bn.data[i];
        }
        if (bn.requires_grad) {
          bn.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            bn.grad[i] -= self.grad[i] * an.data[i] / (bn.data[i] * bn.data[i]);
        }
      });
}

Tensor elem_min(const Tensor& a, const Tensor& b) {
  return binary_elem(
      "elem_min", a, b, [](double x, double y) { return x <= y ? x : y; },
      [](TensorNode& self, TensorNode& an, TensorNode& bn) {
        for (size_t i = 0; i < self.grad.size(); ++i) {
          TensorNode& winner = an.data[i] <= bn.data[i] ? an : bn;
          if (!winner.requires_grad) continue;
          winner.ensure_grad();
          winner.grad[i] += self.grad[i];
        }
      });
}

Tensor elem_max(const Tensor& a, const Tensor& b) {
  return binary_elem(
      "elem_max", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](TensorNode& self, TensorNode& an, TensorNode& bn) {
        for (size_t i = 0; i < self.grad.size(); ++i) {
          TensorNode& winner = an.data[i] >= bn.data[i] ? an : bn;
          if (!winner.requires_grad) continue;
          winner.ensure_grad();
          winner.grad[i] += self.grad[i];
        }
      });
}

namespace {

Tensor unary_elem(const Tensor& a, double (*fwd)(double), double (*dfwd)(double)) {
  std::vector<double> out(a.size());
  const auto ad = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(ad[i]);
  auto an = a.node();
  return make_op_result(a.shape(), std::move(out), {a}, [an, dfwd](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * dfwd(an->data[i]);
  });
}

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x / M_SQRT2)); }
double gelu_dfwd(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / M_SQRT2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}
double sigmoid_fwd(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double sigmoid_dfwd(double x) {
  const double s = sigmoid_fwd(x);
  return s * (1.0 - s);
}
double relu_fwd(double x) { return x > 0.0 ? x : 0.0; }
double relu_dfwd(double x) { return x > 0.0 ? 1.0 : 0.0; }
double abs_fwd(double x) { return std::fabs(x); }
double abs_dfwd(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

Tensor gelu(const Tensor& a) { return unary_elem(a, gelu_fwd, gelu_dfwd); }
Tensor sigmoid(const Tensor& a) { return unary_elem(a, sigmoid_fwd, sigmoid_dfwd); }
Tensor relu(const Tensor& a) { return unary_elem(a, relu_fwd, relu_dfwd); }
Tensor abs(const Tensor& a) { return unary_elem(a, abs_fwd, abs_dfwd); }

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  const auto ad = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * c;
  auto an = a.node();
  return make_op_result(a.shape(), std::move(out), {a}, [an, c](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * c;
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  const auto ad = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + c;
  auto an = a.node();
  return make_op_result(a.shape(), std::move(out), {a}, [an](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& v) {
  const size_t r = a.rows(), c = a.cols();
  if (v.size() != c) shape_error("add_row");
  std::vector<double> out(a.size());
  const auto ad = a.data();
  const auto vd = v.data();
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) out[i * c + j] = ad[i * c + j] + vd[j];
  auto an = a.node();
  auto vn = v.node();
  return make_op_result(a.shape(), std::move(out), {a, v}, [an, vn, r, c](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (vn->requires_grad) {
      vn->ensure_grad();
      for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) vn->grad[j] += self.grad[i * c + j];
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  auto an = a.node();
  return make_op_result({1}, {s}, {a}, [an](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (double& g : an->grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double inv = 1.0 / static_cast<double>(a.size());
  auto an = a.node();
  return make_op_result({1}, {s * inv}, {a}, [an, inv](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (double& g : an->grad) g += self.grad[0] * inv;
  });
}

Tensor gather_rows(const Tensor& a, const std::vector<size_t>& rows) {
  const size_t c = a.cols();
  for (size_t r : rows) {
    if (r >= a.rows()) throw std::out_of_range("gather_rows: row index out of range");
  }
  std::vector<double> out(rows.size() * c);
  const auto ad = a.data();
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < c; ++j) out[i * c + j] = ad[rows[i] * c + j];
  auto an = a.node();
  auto idx = rows;
  return make_op_result({rows.size(), c}, std::move(out), {a}, [an, idx, c](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i)
      for (size_t j = 0; j < c; ++j) an->grad[idx[i] * c + j] += self.grad[i * c + j];
  });
}

Tensor slice_cols(const Tensor& a, size_t c0, size_t c1) {
  const size_t r = a.rows(), c = a.cols();
  if (c0 >= c1 || c1 > c) shape_error("slice_cols");
  const size_t w = c1 - c0;
  std::vector<double> out(r * w);
  const auto ad = a.data();
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < w; ++j) out[i * w + j] = ad[i * c + c0 + j];
  auto an = a.node();
  return make_op_result({r, w}, std::move(out), {a}, [an, r, c, c0, w](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < w; ++j) an->grad[i * c + c0 + j] += self.grad[i * w + j];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const size_t r = parts[0].rows();
  size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != r) shape_error("concat_cols");
    total += p.cols();
  }
  std::vector<double> out(r * total);
  size_t off = 0;
  for (const Tensor& p : parts) {
    const size_t w = p.cols();
    const auto pd = p.data();
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < w; ++j) out[i * total + off + j] = pd[i * w + j];
    off += w;
  }
  std::vector<std::shared_ptr<TensorNode>> pnodes;
  for (const Tensor& p : parts) pnodes.push_back(p.node());
  return make_op_result({r, total}, std::move(out), parts, [pnodes, r, total](TensorNode& self) {
    size_t off2 = 0;
    for (auto& pn : pnodes) {
      const size_t w = pn->shape.size() < 2 ? 1 : pn->shape[1];
      if (pn->requires_grad) {
        pn->ensure_grad();
        for (size_t i = 0; i < r; ++i)
          for (size_t j = 0; j < w; ++j) pn->grad[i * w + j] += self.grad[i * total + off2 + j];
      }
      off2 += w;
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const size_t r = x.rows(), c = x.cols();
  if (gain.size() != c || bias.size() != c) shape_error("layer_norm");
  std::vector<double> out(r * c);
  std::vector<double> xhat(r * c);
  std::vector<double> inv_std(r);
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  for (size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (size_t j = 0; j < c; ++j) mu += xd[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (size_t j = 0; j < c; ++j) {
      const double d = xd[i * c + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (size_t j = 0; j < c; ++j) {
      const double xh = (xd[i * c + j] - mu) * is;
      xhat[i * c + j] = xh;
      out[i * c + j] = gd[j] * xh + bd[j];
    }
  }
  auto xn = x.node();
  auto gn = gain.node();
  auto bn = bias.node();
  return make_op_result(
      x.shape(), std::move(out), {x, gain, bias},
      [xn, gn, bn, xhat, inv_std, r, c](TensorNode& self) {
        if (gn->requires_grad) {
          gn->ensure_grad();
          for (size_t i = 0; i < r; ++i)
            for (size_t j = 0; j < c; ++j) gn->grad[j] += self.grad[i * c + j] * xhat[i * c + j];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (size_t i = 0; i < r; ++i)
            for (size_t j = 0; j < c; ++j) bn->grad[j] += self.grad[i * c + j];
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          for (size_t i = 0; i < r; ++i) {
            double m1 = 0.0, m2 = 0.0;  // mean(dy*g), mean(dy*g*xhat)
            for (size_t j = 0; j < c; ++j) {
              const double dyg = self.grad[i * c + j] * gn->data[j];
              m1 += dyg;
              m2 += dyg * xhat[i * c + j];
            }
            m1 /= static_cast<double>(c);
            m2 /= static_cast<double>(c);
            for (size_t j = 0; j < c; ++j) {
              const double dyg = self.grad[i * c + j] * gn->data[j];
              xn->grad[i * c + j] += inv_std[i] * (dyg - m1 - xhat[i * c + j] * m2);
            }
          }
        }
      });
}

Tensor softmax_rows(const Tensor& a) {
  check_finite_inputs(a, "softmax_rows");
  const size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  const auto ad = a.data();
  for (size_t i = 0; i < r; ++i) {
    double mx = ad[i * c];
    for (size_t j = 1; j < c; ++j) mx = std::max(mx, ad[i * c + j]);
    double s = 0.0;
    for (size_t j = 0; j < c; ++j) {
      const double e = std::exp(ad[i * c + j] - mx);
      out[i * c + j] = e;
      s += e;
    }
    const double inv = 1.0 / s;
    for (size_t j = 0; j < c; ++j) out[i * c + j] *= inv;
  }
  auto an = a.node();
  return make_op_result(a.shape(), std::move(out), {a}, [an, r, c](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * self.data[i * c + j];
      for (size_t j = 0; j < c; ++j) {
        an->grad[i * c + j] += self.data[i * c + j] * (self.grad[i * c + j] - dot);
      }
    }
  });
}

namespace {

Tensor cross_entropy_impl(const Tensor& logits, const std::vector<int>& labels,
                          const std::vector<double>* class_weights) {
  const size_t n = logits.rows(), c = logits.cols();
  if (labels.size() != n) shape_error("cross_entropy");
  for (int l : labels) {
    if (l < 0 || static_cast<size_t>(l) >= c) {
      throw std::out_of_range("cross_entropy: label out of range");
    }
  }
  if (class_weights && class_weights->size() != c) shape_error("cross_entropy_weighted");

  const auto ld = logits.data();
  std::vector<double> probs(n * c);
  double total = 0.0, total_w = 0.0;
  std::vector<double> row_w(n, 1.0);
  for (size_t i = 0; i < n; ++i) {
    double mx = ld[i * c];
    for (size_t j = 1; j < c; ++j) mx = std::max(mx, ld[i * c + j]);
    double s = 0.0;
    for (size_t j = 0; j < c; ++j) {
      const double e = std::exp(ld[i * c + j] - mx);
      probs[i * c + j] = e;
      s += e;
    }
    const double lse = mx + std::log(s);
    for (size_t j = 0; j < c; ++j) probs[i * c + j] /= s;
    const double w = class_weights ? (*class_weights)[labels[i]] : 1.0;
    row_w[i] = w;
    total += w * (lse - ld[i * c + labels[i]]);
    total_w += w;
  }
  const double loss = total / total_w;
  auto ln = logits.node();
  auto labs = labels;
  return make_op_result(
      {1}, {loss}, {logits}, [ln, labs, probs, row_w, total_w, n, c](TensorNode& self) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const double g = self.grad[0] / total_w;
        for (size_t i = 0; i < n; ++i) {
          for (size_t j = 0; j < c; ++j) {
            const double onehot = static_cast<size_t>(labs[i]) == j ? 1.0 : 0.0;
            ln->grad[i * c + j] += g * row_w[i] * (probs[i * c + j] - onehot);
          }
        }
      });
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  return cross_entropy_impl(logits, labels, nullptr);
}

Tensor cross_entropy_weighted(const Tensor& logits, const std::vector<int>& labels,
                              const std::vector<double>& class_weights) {
  return cross_entropy_impl(logits, labels, &class_weights);
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::logic_error("backward: loss must be a scalar");
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward: loss is not on the tape");
  }
  // Collect the reachable subgraph, then replay in reverse recording order.
  std::unordered_set<TensorNode*> seen;
  std::vector<TensorNode*> stack{loss.node().get()};
  std::vector<TensorNode*> nodes;
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](TensorNode* a, TensorNode* b) { return a->seq > b->seq; });

  loss.node()->ensure_grad();
  loss.node()->grad[0] = 1.0;
  for (TensorNode* n : nodes) {
    if (!n->backward_fn) continue;
    n->ensure_grad();
    n->backward_fn(*n);
  }
}

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f,
                              const Tensor& x, double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_difference_grad: h must be positive");
  std::vector<double> base(x.data().begin(), x.data().end());
  std::vector<double> out(base.size());
  for (size_t i = 0; i < base.size(); ++i) {
    std::vector<double> plus = base, minus = base;
    plus[i] += h;
    minus[i] -= h;
    const double fp = f(Tensor(x.shape(), std::move(plus)));
    const double fm = f(Tensor(x.shape(), std::move(minus)));
    out[i] = (fp - fm) / (2.0 * h);
  }
  return Tensor(x.shape(), std::move(out));
}

}  // namespace gazedet
