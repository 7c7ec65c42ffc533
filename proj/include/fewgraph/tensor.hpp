#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace fewgraph {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

namespace detail {
struct TensorData {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
};
}  // namespace detail

/// Dense array of doubles (rank 1 or 2, row-major) participating in
/// differentiable computation. Copies are shallow: they share storage, which
/// is what ties gradients back to parameter tensors.
class Tensor {
 public:
  Tensor() : Tensor(scalar(0.0)) {}

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from_values(Shape shape, std::vector<double> values);
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);

  const Shape& shape() const { return d_->shape; }
  std::size_t rank() const { return d_->shape.size(); }
  std::size_t numel() const { return d_->values.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return d_->values; }
  std::span<double> mutable_data() { return d_->values; }
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    d_->requires_grad = rg;
    return *this;
  }

  bool all_finite() const;
  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

  const std::shared_ptr<detail::TensorData>& impl() const { return d_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<detail::TensorData> d_;
};

enum class Op {
  Matmul,
  Add,
  Sub,
  Mul,
  ScaleConst,
  ScaleScalar,
  Relu,
  Tanh,
  Exp,
  Log,
  SoftmaxRows,
  ConcatLast,
  ReduceMean,
  ReduceMax,
  ReduceSum,
  L2Norm,
  AddRow,
  Transpose,
  GatherRows,
};

const char* op_name(Op op);

class Gradients;

/// Wengert list of primitive applications. Ops record themselves on the
/// thread's active tape whenever any input requires a gradient; recorded
/// order is a topological order of the computation by construction.
class Tape {
 public:
  struct Node {
    Op op;
    std::vector<std::shared_ptr<detail::TensorData>> inputs;
    std::shared_ptr<detail::TensorData> output;
    double scalar = 0.0;               // ScaleConst factor
    std::size_t axis = 0;              // axis reductions
    std::vector<std::size_t> indices;  // gather indices / argmax positions
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// RAII activation: records ops on this tape for the current thread until
  /// the scope object is destroyed. Scopes nest.
  class Scope {
   public:
    explicit Scope(Tape* tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  [[nodiscard]] Scope activate() { return Scope(this); }
  static Tape* active();

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

  void record(Node node) { nodes_.push_back(std::move(node)); }

 private:
  std::vector<Node> nodes_;
};

/// Gradients of a scalar output with respect to the tape's leaf tensors,
/// keyed by tensor identity.
class Gradients {
 public:
  bool contains(const Tensor& leaf) const {
    return grads_.count(leaf.impl().get()) != 0;
  }
  /// Gradient of the checked output w.r.t. `leaf`; zeros if the leaf did not
  /// influence the output.
  Tensor get(const Tensor& leaf) const;
  std::size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<const detail::TensorData*, Tensor> grads_;
  friend Gradients backward(const Tape& tape, const Tensor& output);
};

/// Reverse pass over `tape` from scalar `output`. Returns, for every leaf
/// with requires_grad that influenced the output, a gradient of identical
/// shape; gradients sum across multiple use sites of a leaf.
Gradients backward(const Tape& tape, const Tensor& output);

// Primitive operations. Each checks its shape rule, computes the forward
// result, and records on the active tape when any input requires a gradient.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor scale(const Tensor& a, const Tensor& factor);  // factor has numel 1
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor concat_last(std::span<const Tensor> parts);
Tensor concat_last(std::initializer_list<Tensor> parts);
Tensor reduce_mean(const Tensor& a, std::size_t axis);
Tensor reduce_max(const Tensor& a, std::size_t axis);
Tensor reduce_sum(const Tensor& a);
Tensor l2_norm(const Tensor& a);
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor transpose(const Tensor& a);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);
Tensor gather_rows(const Tensor& a, std::initializer_list<std::size_t> indices);

}  // namespace fewgraph
