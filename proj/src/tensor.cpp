#include "fewgraph/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace fewgraph {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

namespace {

[[noreturn]] void shape_error(Op op, const std::string& detail) {
  throw std::invalid_argument(std::string(op_name(op)) + ": " + detail);
}

std::size_t checked_numel(const Shape& shape) {
  if (shape.empty()) {
    throw std::invalid_argument("tensor shape must have at least one dimension");
  }
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) {
      throw std::invalid_argument("tensor dimensions must be positive, got " + shape_str(shape));
    }
    n *= d;
  }
  return n;
}

}  // namespace

Tensor Tensor::scalar(double v) { return from_values({1}, {v}); }

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double v) {
  const std::size_t n = checked_numel(shape);
  auto d = std::make_shared<detail::TensorData>();
  d->shape = std::move(shape);
  d->values.assign(n, v);
  return Tensor(std::move(d));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values) {
  const std::size_t n = checked_numel(shape);
  if (n != values.size()) {
    throw std::invalid_argument("tensor shape " + shape_str(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
  auto d = std::make_shared<detail::TensorData>();
  d->shape = std::move(shape);
  d->values = std::move(values);
  return Tensor(std::move(d));
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("from_rows: no rows");
  const std::size_t cols = rows.front().size();
  std::vector<double> values;
  values.reserve(rows.size() * cols);
  for (const auto& row : rows) {
    if (row.size() != cols) throw std::invalid_argument("from_rows: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return from_values({rows.size(), cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("rows(): tensor is not rank 2");
  return d_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("cols(): tensor is not rank 2");
  return d_->shape[1];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item(): tensor has shape " + shape_str(shape()));
  }
  return d_->values[0];
}

double Tensor::at(std::size_t i) const { return d_->values.at(i); }

double Tensor::at(std::size_t r, std::size_t c) const {
  return d_->values.at(r * cols() + c);
}

bool Tensor::all_finite() const {
  for (double v : d_->values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

const char* op_name(Op op) {
  switch (op) {
    case Op::Matmul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::ScaleConst: return "scale";
    case Op::ScaleScalar: return "scale";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::SoftmaxRows: return "softmax_rows";
    case Op::ConcatLast: return "concat_last";
    case Op::ReduceMean: return "reduce_mean";
    case Op::ReduceMax: return "reduce_max";
    case Op::ReduceSum: return "reduce_sum";
    case Op::L2Norm: return "l2_norm";
    case Op::AddRow: return "add_row";
    case Op::Transpose: return "transpose";
    case Op::GatherRows: return "gather_rows";
  }
  return "?";
}

namespace {

thread_local Tape* g_active_tape = nullptr;

// Propagates requires_grad to the output and records the application on the
// active tape when needed.
void finish(Op op, std::vector<Tensor> inputs, Tensor& out, double scalar = 0.0,
            std::size_t axis = 0, std::vector<std::size_t> indices = {}) {
  bool rg = false;
  for (const Tensor& t : inputs) rg = rg || t.requires_grad();
  out.set_requires_grad(rg);
  if (!rg) return;
  if (Tape* tape = Tape::active()) {
    Tape::Node node;
    node.op = op;
    node.inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) node.inputs.push_back(t.impl());
    node.output = out.impl();
    node.scalar = scalar;
    node.axis = axis;
    node.indices = std::move(indices);
    tape->record(std::move(node));
  }
}

void require_same_shape(Op op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_error(op, "operands must have identical shapes, got " + shape_str(a.shape()) +
                        " and " + shape_str(b.shape()));
  }
}

// ---- raw matrix kernels (row-major, accumulate into c) ----

// c[m,n] += a[m,k] b[k,n]
void mm_acc_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,k] += g[m,n] b[k,n]^T
void mm_acc_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t n,
               std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T g[m,n]
void mm_acc_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

// Effective 2-D dims of a matmul operand (1-D operands are promoted).
struct MatDims {
  std::size_t rows, cols;
};

MatDims matmul_dims_a(const Shape& s) {
  return s.size() == 1 ? MatDims{1, s[0]} : MatDims{s[0], s[1]};
}

MatDims matmul_dims_b(const Shape& s) {
  return s.size() == 1 ? MatDims{s[0], 1} : MatDims{s[0], s[1]};
}

void softmax_row(const double* x, double* p, std::size_t n) {
  double mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    p[j] = std::exp(x[j] - mx);
    sum += p[j];
  }
  for (std::size_t j = 0; j < n; ++j) p[j] /= sum;
}

// Rows/cols of a reduction operand viewed as a matrix ({n} acts as {1,n}).
struct ReduceView {
  std::size_t rows, cols;
};

ReduceView reduce_view(Op op, const Tensor& a, std::size_t axis) {
  if (a.rank() == 1) {
    if (axis != 0) shape_error(op, "axis " + std::to_string(axis) + " out of range for shape " +
                                       shape_str(a.shape()));
    return {1, a.shape()[0]};
  }
  if (axis > 1) {
    shape_error(op, "axis " + std::to_string(axis) + " out of range for shape " +
                        shape_str(a.shape()));
  }
  return {a.shape()[0], a.shape()[1]};
}

}  // namespace

Tape::Scope::Scope(Tape* tape) : previous_(g_active_tape) { g_active_tape = tape; }

Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

Tensor Gradients::get(const Tensor& leaf) const {
  auto it = grads_.find(leaf.impl().get());
  if (it == grads_.end()) return Tensor::zeros(leaf.shape());
  return it->second;
}

// ---- forward ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() == 1 && b.rank() == 1) {
    shape_error(Op::Matmul, "at least one operand must be rank 2, got " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  }
  const MatDims da = matmul_dims_a(a.shape());
  const MatDims db = matmul_dims_b(b.shape());
  if (da.cols != db.rows) {
    shape_error(Op::Matmul, "inner dimensions do not match: " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  Shape out_shape;
  if (a.rank() == 1) {
    out_shape = {db.cols};
  } else if (b.rank() == 1) {
    out_shape = {da.rows};
  } else {
    out_shape = {da.rows, db.cols};
  }
  Tensor out = Tensor::zeros(std::move(out_shape));
  mm_acc_nn(a.data().data(), b.data().data(), out.mutable_data().data(), da.rows, da.cols,
            db.cols);
  finish(Op::Matmul, {a, b}, out);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(Op::Add, a, b);
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  finish(Op::Add, {a, b}, out);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(Op::Sub, a, b);
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  finish(Op::Sub, {a, b}, out);
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(Op::Mul, a, b);
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  finish(Op::Mul, {a, b}, out);
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  finish(Op::ScaleConst, {a}, out, factor);
  return out;
}

Tensor scale(const Tensor& a, const Tensor& factor) {
  if (factor.numel() != 1) {
    shape_error(Op::ScaleScalar,
                "factor must be scalar-shaped, got " + shape_str(factor.shape()));
  }
  const double f = factor.data()[0];
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * f;
  finish(Op::ScaleScalar, {a, factor}, out);
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] > 0.0 ? x[i] : 0.0;
  finish(Op::Relu, {a}, out);
  return out;
}

Tensor tanh(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::tanh(x[i]);
  finish(Op::Tanh, {a}, out);
  return out;
}

Tensor exp(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::exp(x[i]);
  finish(Op::Exp, {a}, out);
  return out;
}

Tensor log(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (!(x[i] > 0.0)) {
      throw std::domain_error("log: input must be positive, got " + std::to_string(x[i]));
    }
    o[i] = std::log(x[i]);
  }
  finish(Op::Log, {a}, out);
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  const ReduceView v = a.rank() == 1 ? ReduceView{1, a.shape()[0]}
                                     : ReduceView{a.shape()[0], a.shape()[1]};
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < v.rows; ++i) {
    softmax_row(x.data() + i * v.cols, o.data() + i * v.cols, v.cols);
  }
  finish(Op::SoftmaxRows, {a}, out);
  return out;
}

Tensor concat_last(std::span<const Tensor> parts) {
  if (parts.empty()) shape_error(Op::ConcatLast, "no inputs");
  const std::size_t rank = parts.front().rank();
  for (const Tensor& t : parts) {
    if (t.rank() != rank) {
      shape_error(Op::ConcatLast, "inputs must share rank, got " +
                                      shape_str(parts.front().shape()) + " and " +
                                      shape_str(t.shape()));
    }
  }
  Tensor out;
  if (rank == 1) {
    std::size_t total = 0;
    for (const Tensor& t : parts) total += t.numel();
    out = Tensor::zeros({total});
    auto o = out.mutable_data();
    std::size_t off = 0;
    for (const Tensor& t : parts) {
      auto x = t.data();
      std::copy(x.begin(), x.end(), o.begin() + static_cast<std::ptrdiff_t>(off));
      off += x.size();
    }
  } else {
    const std::size_t m = parts.front().shape()[0];
    std::size_t total_cols = 0;
    for (const Tensor& t : parts) {
      if (t.shape()[0] != m) {
        shape_error(Op::ConcatLast, "row counts differ: " + shape_str(parts.front().shape()) +
                                        " vs " + shape_str(t.shape()));
      }
      total_cols += t.shape()[1];
    }
    out = Tensor::zeros({m, total_cols});
    auto o = out.mutable_data();
    std::size_t col_off = 0;
    for (const Tensor& t : parts) {
      const std::size_t c = t.shape()[1];
      auto x = t.data();
      for (std::size_t i = 0; i < m; ++i) {
        std::copy(x.begin() + static_cast<std::ptrdiff_t>(i * c),
                  x.begin() + static_cast<std::ptrdiff_t>((i + 1) * c),
                  o.begin() + static_cast<std::ptrdiff_t>(i * total_cols + col_off));
      }
      col_off += c;
    }
  }
  finish(Op::ConcatLast, std::vector<Tensor>(parts.begin(), parts.end()), out);
  return out;
}

Tensor concat_last(std::initializer_list<Tensor> parts) {
  return concat_last(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor reduce_mean(const Tensor& a, std::size_t axis) {
  const ReduceView v = reduce_view(Op::ReduceMean, a, axis);
  auto x = a.data();
  Tensor out;
  if (a.rank() == 1) {
    double sum = 0.0;
    for (double e : x) sum += e;
    out = Tensor::scalar(sum / static_cast<double>(x.size()));
  } else if (axis == 0) {
    out = Tensor::zeros({v.cols});
    auto o = out.mutable_data();
    for (std::size_t i = 0; i < v.rows; ++i) {
      for (std::size_t j = 0; j < v.cols; ++j) o[j] += x[i * v.cols + j];
    }
    for (std::size_t j = 0; j < v.cols; ++j) o[j] /= static_cast<double>(v.rows);
  } else {
    out = Tensor::zeros({v.rows});
    auto o = out.mutable_data();
    for (std::size_t i = 0; i < v.rows; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < v.cols; ++j) sum += x[i * v.cols + j];
      o[i] = sum / static_cast<double>(v.cols);
    }
  }
  finish(Op::ReduceMean, {a}, out, 0.0, axis);
  return out;
}

Tensor reduce_max(const Tensor& a, std::size_t axis) {
  const ReduceView v = reduce_view(Op::ReduceMax, a, axis);
  auto x = a.data();
  Tensor out;
  std::vector<std::size_t> argmax;  // flat index of the (first) max per output
  if (a.rank() == 1 || axis == 1) {
    const std::size_t rows = a.rank() == 1 ? 1 : v.rows;
    out = Tensor::zeros(a.rank() == 1 ? Shape{1} : Shape{v.rows});
    auto o = out.mutable_data();
    argmax.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      std::size_t best = i * v.cols;
      for (std::size_t j = 1; j < v.cols; ++j) {
        if (x[i * v.cols + j] > x[best]) best = i * v.cols + j;
      }
      o[i] = x[best];
      argmax[i] = best;
    }
  } else {
    out = Tensor::zeros({v.cols});
    auto o = out.mutable_data();
    argmax.resize(v.cols);
    for (std::size_t j = 0; j < v.cols; ++j) {
      std::size_t best = j;
      for (std::size_t i = 1; i < v.rows; ++i) {
        if (x[i * v.cols + j] > x[best]) best = i * v.cols + j;
      }
      o[j] = x[best];
      argmax[j] = best;
    }
  }
  finish(Op::ReduceMax, {a}, out, 0.0, axis, std::move(argmax));
  return out;
}

Tensor reduce_sum(const Tensor& a) {
  double sum = 0.0;
  for (double e : a.data()) sum += e;
  Tensor out = Tensor::scalar(sum);
  finish(Op::ReduceSum, {a}, out);
  return out;
}

Tensor l2_norm(const Tensor& a) {
  double sq = 0.0;
  for (double e : a.data()) sq += e * e;
  Tensor out = Tensor::scalar(std::sqrt(sq));
  finish(Op::L2Norm, {a}, out);
  return out;
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (a.rank() != 2 || row.rank() != 1 || row.shape()[0] != a.shape()[1]) {
    shape_error(Op::AddRow, "expected matrix + row vector of matching width, got " +
                                shape_str(a.shape()) + " and " + shape_str(row.shape()));
  }
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto r = row.data();
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = x[i * n + j] + r[j];
  }
  finish(Op::AddRow, {a, row}, out);
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    shape_error(Op::Transpose, "expected rank-2 tensor, got " + shape_str(a.shape()));
  }
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out = Tensor::zeros({n, m});
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) o[j * m + i] = x[i * n + j];
  }
  finish(Op::Transpose, {a}, out);
  return out;
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  if (indices.empty()) shape_error(Op::GatherRows, "no indices");
  const std::size_t m = a.shape()[0];
  for (std::size_t idx : indices) {
    if (idx >= m) {
      shape_error(Op::GatherRows, "index " + std::to_string(idx) + " out of range for shape " +
                                      shape_str(a.shape()));
    }
  }
  Tensor out;
  auto x = a.data();
  if (a.rank() == 1) {
    out = Tensor::zeros({indices.size()});
    auto o = out.mutable_data();
    for (std::size_t p = 0; p < indices.size(); ++p) o[p] = x[indices[p]];
  } else {
    const std::size_t n = a.shape()[1];
    out = Tensor::zeros({indices.size(), n});
    auto o = out.mutable_data();
    for (std::size_t p = 0; p < indices.size(); ++p) {
      std::copy(x.begin() + static_cast<std::ptrdiff_t>(indices[p] * n),
                x.begin() + static_cast<std::ptrdiff_t>((indices[p] + 1) * n),
                o.begin() + static_cast<std::ptrdiff_t>(p * n));
    }
  }
  finish(Op::GatherRows, {a}, out, 0.0, 0,
         std::vector<std::size_t>(indices.begin(), indices.end()));
  return out;
}

Tensor gather_rows(const Tensor& a, std::initializer_list<std::size_t> indices) {
  return gather_rows(a, std::span<const std::size_t>(indices.begin(), indices.size()));
}

// ---- reverse pass ----

namespace {

using GradMap = std::unordered_map<const detail::TensorData*, std::vector<double>>;

// Zero-initialized gradient buffer for `t`, created on first touch.
std::vector<double>* slot(GradMap& acc, const std::shared_ptr<detail::TensorData>& t) {
  if (!t->requires_grad) return nullptr;
  auto [it, inserted] = acc.try_emplace(t.get());
  if (inserted) it->second.assign(t->values.size(), 0.0);
  return &it->second;
}

void backprop_node(const Tape::Node& node, const std::vector<double>& g, GradMap& acc) {
  const auto& in = node.inputs;
  switch (node.op) {
    case Op::Matmul: {
      const MatDims da = matmul_dims_a(in[0]->shape);
      const MatDims db = matmul_dims_b(in[1]->shape);
      if (auto* ga = slot(acc, in[0])) {
        mm_acc_nt(g.data(), in[1]->values.data(), ga->data(), da.rows, db.cols, da.cols);
      }
      if (auto* gb = slot(acc, in[1])) {
        mm_acc_tn(in[0]->values.data(), g.data(), gb->data(), da.rows, da.cols, db.cols);
      }
      break;
    }
    case Op::Add: {
      if (auto* ga = slot(acc, in[0])) {
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      }
      if (auto* gb = slot(acc, in[1])) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
      }
      break;
    }
    case Op::Sub: {
      if (auto* ga = slot(acc, in[0])) {
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      }
      if (auto* gb = slot(acc, in[1])) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
      }
      break;
    }
    case Op::Mul: {
      if (auto* ga = slot(acc, in[0])) {
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * in[1]->values[i];
      }
      if (auto* gb = slot(acc, in[1])) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * in[0]->values[i];
      }
      break;
    }
    case Op::ScaleConst: {
      if (auto* ga = slot(acc, in[0])) {
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * node.scalar;
      }
      break;
    }
    case Op::ScaleScalar: {
      const double f = in[1]->values[0];
      if (auto* ga = slot(acc, in[0])) {
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * f;
      }
      if (auto* gf = slot(acc, in[1])) {
        double acc_f = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc_f += g[i] * in[0]->values[i];
        (*gf)[0] += acc_f;
      }
      break;
    }
    case Op::Relu: {
      if (auto* ga = slot(acc, in[0])) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (in[0]->values[i] > 0.0) (*ga)[i] += g[i];
        }
      }
      break;
    }
    case Op::Tanh: {
      if (auto* ga = slot(acc, in[0])) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = node.output->values[i];
          (*ga)[i] += g[i] * (1.0 - y * y);
        }
      }
      break;
    }
    case Op::Exp: {
      if (auto* ga = slot(acc, in[0])) {
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * node.output->values[i];
      }
      break;
    }
    case Op::Log: {
      if (auto* ga = slot(acc, in[0])) {
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / in[0]->values[i];
      }
      break;
    }
    case Op::SoftmaxRows: {
      if (auto* ga = slot(acc, in[0])) {
        const Shape& s = in[0]->shape;
        const std::size_t rows = s.size() == 1 ? 1 : s[0];
        const std::size_t cols = s.size() == 1 ? s[0] : s[1];
        const std::vector<double>& p = node.output->values;
        for (std::size_t i = 0; i < rows; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < cols; ++j) dot += g[i * cols + j] * p[i * cols + j];
          for (std::size_t j = 0; j < cols; ++j) {
            (*ga)[i * cols + j] += p[i * cols + j] * (g[i * cols + j] - dot);
          }
        }
      }
      break;
    }
    case Op::ConcatLast: {
      if (node.output->shape.size() == 1) {
        std::size_t off = 0;
        for (const auto& part : in) {
          if (auto* gp = slot(acc, part)) {
            for (std::size_t i = 0; i < part->values.size(); ++i) (*gp)[i] += g[off + i];
          }
          off += part->values.size();
        }
      } else {
        const std::size_t m = node.output->shape[0];
        const std::size_t total_cols = node.output->shape[1];
        std::size_t col_off = 0;
        for (const auto& part : in) {
          const std::size_t c = part->shape[1];
          if (auto* gp = slot(acc, part)) {
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t j = 0; j < c; ++j) {
                (*gp)[i * c + j] += g[i * total_cols + col_off + j];
              }
            }
          }
          col_off += c;
        }
      }
      break;
    }
    case Op::ReduceMean: {
      if (auto* ga = slot(acc, in[0])) {
        const Shape& s = in[0]->shape;
        if (s.size() == 1) {
          const double inv = 1.0 / static_cast<double>(s[0]);
          for (std::size_t i = 0; i < s[0]; ++i) (*ga)[i] += g[0] * inv;
        } else if (node.axis == 0) {
          const double inv = 1.0 / static_cast<double>(s[0]);
          for (std::size_t i = 0; i < s[0]; ++i) {
            for (std::size_t j = 0; j < s[1]; ++j) (*ga)[i * s[1] + j] += g[j] * inv;
          }
        } else {
          const double inv = 1.0 / static_cast<double>(s[1]);
          for (std::size_t i = 0; i < s[0]; ++i) {
            for (std::size_t j = 0; j < s[1]; ++j) (*ga)[i * s[1] + j] += g[i] * inv;
          }
        }
      }
      break;
    }
    case Op::ReduceMax: {
      if (auto* ga = slot(acc, in[0])) {
        for (std::size_t p = 0; p < node.indices.size(); ++p) {
          (*ga)[node.indices[p]] += g[p];
        }
      }
      break;
    }
    case Op::ReduceSum: {
      if (auto* ga = slot(acc, in[0])) {
        for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += g[0];
      }
      break;
    }
    case Op::L2Norm: {
      if (auto* ga = slot(acc, in[0])) {
        const double norm = node.output->values[0];
        if (norm > 0.0) {
          for (std::size_t i = 0; i < ga->size(); ++i) {
            (*ga)[i] += g[0] * in[0]->values[i] / norm;
          }
        }
      }
      break;
    }
    case Op::AddRow: {
      if (auto* ga = slot(acc, in[0])) {
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      }
      if (auto* gr = slot(acc, in[1])) {
        const std::size_t m = in[0]->shape[0], n = in[0]->shape[1];
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) (*gr)[j] += g[i * n + j];
        }
      }
      break;
    }
    case Op::Transpose: {
      if (auto* ga = slot(acc, in[0])) {
        const std::size_t m = in[0]->shape[0], n = in[0]->shape[1];
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += g[j * m + i];
        }
      }
      break;
    }
    case Op::GatherRows: {
      if (auto* ga = slot(acc, in[0])) {
        if (in[0]->shape.size() == 1) {
          for (std::size_t p = 0; p < node.indices.size(); ++p) {
            (*ga)[node.indices[p]] += g[p];
          }
        } else {
          const std::size_t n = in[0]->shape[1];
          for (std::size_t p = 0; p < node.indices.size(); ++p) {
            for (std::size_t j = 0; j < n; ++j) (*ga)[node.indices[p] * n + j] += g[p * n + j];
          }
        }
      }
      break;
    }
  }
}

}  // namespace

Gradients backward(const Tape& tape, const Tensor& output) {
  if (output.numel() != 1) {
    throw std::invalid_argument("backward: output must be scalar-shaped, got " +
                                shape_str(output.shape()));
  }
  std::unordered_set<const detail::TensorData*> produced;
  produced.reserve(tape.nodes().size());
  for (const auto& node : tape.nodes()) produced.insert(node.output.get());
  if (produced.count(output.impl().get()) == 0) {
    throw std::invalid_argument("backward: output is detached (not produced on this tape)");
  }

  GradMap acc;
  acc[output.impl().get()] = {1.0};

  // Single reverse sweep; recording order is topological, so each node's
  // output gradient is complete when the node is visited.
  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    auto found = acc.find(it->output.get());
    if (found == acc.end()) continue;
    backprop_node(*it, found->second, acc);
  }

  Gradients result;
  for (const auto& node : tape.nodes()) {
    for (const auto& input : node.inputs) {
      if (!input->requires_grad || produced.count(input.get()) != 0) continue;
      auto found = acc.find(input.get());
      if (found == acc.end()) continue;
      if (result.grads_.count(input.get()) != 0) continue;
      result.grads_.emplace(input.get(),
                            Tensor::from_values(input->shape, found->second));
    }
  }
  return result;
}

}  // namespace fewgraph
