#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace gazedet {

struct TensorNode;

// Dense row-major tensor of doubles with optional participation in a
// reverse-mode tape. Operations below are eager: they compute values
// immediately and, when any input requires gradients, record a backward
// closure on the freshly created node. backward() replays the closures in
// reverse recording order.
//
// Copies are shallow (shared node); operations never mutate their inputs.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<size_t> shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<size_t> shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // row-major matrix helper
  static Tensor matrix(size_t rows, size_t cols, std::vector<double> data, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<size_t>& shape() const;
  size_t size() const;
  size_t rows() const;  // shape[0]; 1 for scalars
  size_t cols() const;  // shape[1]; 1 for rank < 2
  bool is_scalar() const { return size() == 1; }
  bool requires_grad() const;

  double operator()(size_t i, size_t j) const;
  double at(size_t flat) const;
  double item() const;  // scalar value; throws if size != 1

  std::span<const double> data() const;
  // Mutable access for initializing leaf tensors. Must not be called on a
  // tensor that other recorded operations already consumed.
  std::vector<double>& raw();

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<TensorNode> node_;
  friend Tensor make_op_result(std::vector<size_t>, std::vector<double>,
                               std::vector<Tensor>, std::function<void(TensorNode&)>);
};

struct TensorNode {
  std::vector<size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily during backward
  bool requires_grad = false;
  uint64_t seq = 0;  // recording order
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;  // empty for leaves

  void ensure_grad();
};

// ---- elementwise / structural ops -----------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
// broadcast add of a row vector v (shape [c] or [1 x c]) to every row of a
Tensor add_row(const Tensor& a, const Tensor& v);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor elem_min(const Tensor& a, const Tensor& b);  // ties route grad to a
Tensor elem_max(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor gather_rows(const Tensor& a, const std::vector<size_t>& rows);
Tensor slice_cols(const Tensor& a, size_t c0, size_t c1);  // [c0, c1)
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Row-stochastic softmax, stabilized by row-max subtraction.
Tensor softmax_rows(const Tensor& a);

// Mean negative log-softmax probability of the true class per row.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
// Per-class weighted variant, normalized by the total weight of the batch.
Tensor cross_entropy_weighted(const Tensor& logits, const std::vector<int>& labels,
                              const std::vector<double>& class_weights);

// ---- tape ------------------------------------------------------------------

// Populates grad on every requires_grad tensor reachable from loss.
// loss must be scalar; throws std::logic_error otherwise.
void backward(const Tensor& loss);

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h per element of x.
// f receives a fresh leaf tensor with the perturbed values.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f,
                              const Tensor& x, double h);

}  // namespace gazedet
