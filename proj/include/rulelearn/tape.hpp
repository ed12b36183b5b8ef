#ifndef RULELEARN_TAPE_HPP
#define RULELEARN_TAPE_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rulelearn/errors.hpp"
#include "rulelearn/kb.hpp"
#include "rulelearn/tensor.hpp"

namespace rulelearn {

// Reverse-mode tape over dense tensors plus sparse-constant matvec. Nodes
// are created in topological order; backward walks ids in reverse. One tape
// per forward pass, confined to one worker.
template <class Real>
class TapeT {
 public:
  using Tensor = TensorT<Real>;

  enum class Op : std::uint8_t {
    Leaf, Add, Sub, Mul, Scale, AddConst, OneMinus, Reciprocal, Matmul, MatmulNT,
    Concat0, Concat1, SliceRows, SliceCols, Reshape, TileRows, Affine,
    Relu, Softplus, Sigmoid, SoftmaxRows, LayerNorm, AddRowVec, Sum, Mean, Dot,
    Elem, ScaleT, Spmv, CrossEntropy,
  };

  int constant(Tensor t) { return push(Op::Leaf, std::move(t), -1, -1, -1, false); }
  int leaf(Tensor t) { return push(Op::Leaf, std::move(t), -1, -1, -1, true); }

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }

  // gradient of the last backward() target w.r.t. node id (zeros if untouched)
  Tensor grad(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.numel() > 0) return n.grad;
    return Tensor::zeros(n.val.shape);
  }

  std::size_t size() const { return nodes_.size(); }

  // --- elementwise / scalar ---

  int add(int a, int b) {
    check_same_shape(a, b, "add");
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] += val(b).v[i];
    return push(Op::Add, std::move(out), a, b);
  }

  int sub(int a, int b) {
    check_same_shape(a, b, "sub");
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] -= val(b).v[i];
    return push(Op::Sub, std::move(out), a, b);
  }

  int mul(int a, int b) {
    check_same_shape(a, b, "mul");
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] *= val(b).v[i];
    return push(Op::Mul, std::move(out), a, b);
  }

  int scale(int a, double c) {
    Tensor out = val(a);
    for (auto& x : out.v) x = static_cast<Real>(x * c);
    int id = push(Op::Scale, std::move(out), a);
    node(id).c = c;
    return id;
  }

  int add_const(int a, double c) {
    Tensor out = val(a);
    for (auto& x : out.v) x = static_cast<Real>(x + c);
    int id = push(Op::AddConst, std::move(out), a);
    node(id).c = c;
    return id;
  }

  int one_minus(int a) {
    Tensor out = val(a);
    for (auto& x : out.v) x = static_cast<Real>(1) - x;
    return push(Op::OneMinus, std::move(out), a);
  }

  int reciprocal(int a) {
    Tensor out = val(a);
    for (auto& x : out.v) x = Real(1) / x;
    return push(Op::Reciprocal, std::move(out), a);
  }

  // --- linear algebra ---

  int matmul(int a, int b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.rank() == 2 && B.rank() == 2 && A.shape[1] == B.shape[0], Errc::ShapeMismatch,
            "matmul shapes");
    Tensor out = Tensor::zeros({A.shape[0], B.shape[1]});
    int m = A.shape[0], k = A.shape[1], n = B.shape[1];
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        Real aip = A.at(i, p);
        if (aip == Real(0)) continue;
        for (int j = 0; j < n; ++j) out.at(i, j) += aip * B.at(p, j);
      }
    return push(Op::Matmul, std::move(out), a, b);
  }

  // A (m x k) times B^T (k x n) for B (n x k)
  int matmul_nt(int a, int b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.rank() == 2 && B.rank() == 2 && A.shape[1] == B.shape[1], Errc::ShapeMismatch,
            "matmul_nt shapes");
    int m = A.shape[0], k = A.shape[1], n = B.shape[0];
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        Real s = 0;
        for (int p = 0; p < k; ++p) s += A.at(i, p) * B.at(j, p);
        out.at(i, j) = s;
      }
    return push(Op::MatmulNT, std::move(out), a, b);
  }

  int concat(int a, int b, int axis) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.rank() == B.rank(), Errc::ShapeMismatch, "concat rank");
    // note: push() may reallocate nodes_, so record sizes before pushing
    if (A.rank() == 1) {
      require(axis == 0, Errc::ShapeMismatch, "concat axis");
      int split = A.shape[0];
      Tensor out = Tensor::zeros({A.shape[0] + B.shape[0]});
      std::copy(A.v.begin(), A.v.end(), out.v.begin());
      std::copy(B.v.begin(), B.v.end(), out.v.begin() + split);
      int id = push(Op::Concat0, std::move(out), a, b);
      node(id).i0 = split;
      return id;
    }
    require(A.rank() == 2 && (axis == 0 || axis == 1), Errc::ShapeMismatch, "concat axis");
    if (axis == 0) {
      require(A.shape[1] == B.shape[1], Errc::ShapeMismatch, "concat cols");
      int split = static_cast<int>(A.numel());
      Tensor out = Tensor::zeros({A.shape[0] + B.shape[0], A.shape[1]});
      std::copy(A.v.begin(), A.v.end(), out.v.begin());
      std::copy(B.v.begin(), B.v.end(), out.v.begin() + split);
      int id = push(Op::Concat0, std::move(out), a, b);
      node(id).i0 = split;
      return id;
    }
    require(A.shape[0] == B.shape[0], Errc::ShapeMismatch, "concat rows");
    int ca = A.shape[1];
    Tensor out = Tensor::zeros({A.shape[0], A.shape[1] + B.shape[1]});
    for (int i = 0; i < A.shape[0]; ++i) {
      for (int j = 0; j < A.shape[1]; ++j) out.at(i, j) = A.at(i, j);
      for (int j = 0; j < B.shape[1]; ++j) out.at(i, A.shape[1] + j) = B.at(i, j);
    }
    int id = push(Op::Concat1, std::move(out), a, b);
    node(id).i0 = ca;
    return id;
  }

  int slice_rows(int a, int start, int len) {
    const Tensor& A = val(a);
    require(A.rank() == 2 && start >= 0 && len >= 1 && start + len <= A.shape[0],
            Errc::ShapeMismatch, "slice_rows range");
    Tensor out = Tensor::zeros({len, A.shape[1]});
    std::copy(A.v.begin() + static_cast<std::ptrdiff_t>(start) * A.shape[1],
              A.v.begin() + static_cast<std::ptrdiff_t>(start + len) * A.shape[1], out.v.begin());
    int id = push(Op::SliceRows, std::move(out), a);
    node(id).i0 = start;
    node(id).i1 = len;
    return id;
  }

  int slice_cols(int a, int start, int len) {
    const Tensor& A = val(a);
    require(A.rank() == 2 && start >= 0 && len >= 1 && start + len <= A.shape[1],
            Errc::ShapeMismatch, "slice_cols range");
    Tensor out = Tensor::zeros({A.shape[0], len});
    for (int i = 0; i < A.shape[0]; ++i)
      for (int j = 0; j < len; ++j) out.at(i, j) = A.at(i, start + j);
    int id = push(Op::SliceCols, std::move(out), a);
    node(id).i0 = start;
    node(id).i1 = len;
    return id;
  }

  int reshape(int a, std::vector<int> shape) {
    Tensor out = Tensor::zeros(shape);
    require(out.numel() == val(a).numel(), Errc::ShapeMismatch, "reshape numel");
    out.v = val(a).v;
    return push(Op::Reshape, std::move(out), a);
  }

  // tile a 1 x d row n times into n x d
  int tile_rows(int a, int n) {
    const Tensor& A = val(a);
    require(A.rank() == 2 && A.shape[0] == 1 && n >= 1, Errc::ShapeMismatch, "tile_rows input");
    Tensor out = Tensor::zeros({n, A.shape[1]});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < A.shape[1]; ++j) out.at(i, j) = A.at(0, j);
    int id = push(Op::TileRows, std::move(out), a);
    node(id).i0 = n;
    return id;
  }

  // rows of x (n x p) mapped through W (d x p) plus bias b (d): out = x W^T + b
  int affine(int x, int W, int b) {
    const Tensor& X = val(x);
    const Tensor& Wt = val(W);
    const Tensor& B = val(b);
    require(X.rank() == 2 && Wt.rank() == 2 && X.shape[1] == Wt.shape[1], Errc::ShapeMismatch,
            "affine shapes");
    require(B.rank() == 1 && B.shape[0] == Wt.shape[0], Errc::ShapeMismatch, "affine bias");
    int n = X.shape[0], p = X.shape[1], d = Wt.shape[0];
    Tensor out = Tensor::zeros({n, d});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) {
        Real s = B.at(j);
        for (int q = 0; q < p; ++q) s += X.at(i, q) * Wt.at(j, q);
        out.at(i, j) = s;
      }
    return push(Op::Affine, std::move(out), x, W, b);
  }

  int add_rowvec(int a, int v) {
    const Tensor& A = val(a);
    const Tensor& V = val(v);
    require(A.rank() == 2 && V.rank() == 1 && V.shape[0] == A.shape[1], Errc::ShapeMismatch,
            "add_rowvec shapes");
    Tensor out = A;
    for (int i = 0; i < A.shape[0]; ++i)
      for (int j = 0; j < A.shape[1]; ++j) out.at(i, j) += V.at(j);
    return push(Op::AddRowVec, std::move(out), a, v);
  }

  // --- nonlinearities ---

  int relu(int a) {
    Tensor out = val(a);
    for (auto& x : out.v) x = x > Real(0) ? x : Real(0);
    return push(Op::Relu, std::move(out), a);
  }

  // smooth rectifier; keeps end-to-end central differences clean where a
  // relu kink would not
  int softplus(int a) {
    Tensor out = val(a);
    for (auto& x : out.v) {
      double xd = static_cast<double>(x);
      x = static_cast<Real>(xd >= 0 ? xd + std::log1p(std::exp(-xd)) : std::log1p(std::exp(xd)));
    }
    return push(Op::Softplus, std::move(out), a);
  }

  int sigmoid(int a) {
    Tensor out = val(a);
    for (auto& x : out.v) {
      double xd = static_cast<double>(x);
      double s = xd >= 0 ? 1.0 / (1.0 + std::exp(-xd)) : std::exp(xd) / (1.0 + std::exp(xd));
      x = static_cast<Real>(s);
    }
    return push(Op::Sigmoid, std::move(out), a);
  }

  // stable row softmax with max subtraction; rank-1 input is one row
  int softmax_rows(int a) {
    const Tensor& A = val(a);
    Tensor out = A;
    int rows = A.rank() == 1 ? 1 : A.shape[0];
    int cols_ = A.rank() == 1 ? A.shape[0] : A.shape[1];
    for (int i = 0; i < rows; ++i) {
      Real* row = out.v.data() + static_cast<std::ptrdiff_t>(i) * cols_;
      Real mx = row[0];
      for (int j = 1; j < cols_; ++j) mx = std::max(mx, row[j]);
      double denom = 0;
      for (int j = 0; j < cols_; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
      for (int j = 0; j < cols_; ++j)
        row[j] = static_cast<Real>(std::exp(static_cast<double>(row[j] - mx)) / denom);
    }
    return push(Op::SoftmaxRows, std::move(out), a);
  }

  // pre-norm layer normalization over each row, with gain/bias of width d
  int layer_norm_rows(int x, int gain, int bias) {
    const Tensor& X = val(x);
    const Tensor& G = val(gain);
    const Tensor& B = val(bias);
    require(X.rank() == 2 && G.rank() == 1 && B.rank() == 1 && G.shape[0] == X.shape[1] &&
                B.shape[0] == X.shape[1],
            Errc::ShapeMismatch, "layer_norm shapes");
    Tensor out = X;
    int n = X.shape[0], d = X.shape[1];
    for (int i = 0; i < n; ++i) {
      double mu = 0;
      for (int j = 0; j < d; ++j) mu += X.at(i, j);
      mu /= d;
      double var = 0;
      for (int j = 0; j < d; ++j) {
        double c = X.at(i, j) - mu;
        var += c * c;
      }
      var /= d;
      double inv = 1.0 / std::sqrt(var + kLnEps);
      for (int j = 0; j < d; ++j)
        out.at(i, j) = static_cast<Real>((X.at(i, j) - mu) * inv * G.at(j) + B.at(j));
    }
    return push(Op::LayerNorm, std::move(out), x, gain, bias);
  }

  // --- reductions / scalars ---

  int sum(int a) {
    double s = 0;
    for (Real x : val(a).v) s += x;
    return push(Op::Sum, Tensor::scalar(static_cast<Real>(s)), a);
  }

  int mean(int a) {
    double s = 0;
    for (Real x : val(a).v) s += x;
    s /= static_cast<double>(val(a).numel());
    return push(Op::Mean, Tensor::scalar(static_cast<Real>(s)), a);
  }

  int dot(int a, int b) {
    check_same_shape(a, b, "dot");
    double s = 0;
    for (std::size_t i = 0; i < val(a).numel(); ++i)
      s += static_cast<double>(val(a).v[i]) * static_cast<double>(val(b).v[i]);
    return push(Op::Dot, Tensor::scalar(static_cast<Real>(s)), a, b);
  }

  // one element as a scalar node; j < 0 treats the tensor as flat
  int elem(int a, int i, int j = -1) {
    const Tensor& A = val(a);
    std::size_t flat;
    if (j < 0) {
      flat = static_cast<std::size_t>(i);
    } else {
      require(A.rank() == 2, Errc::ShapeMismatch, "elem needs matrix for (i,j)");
      flat = static_cast<std::size_t>(i) * A.shape[1] + static_cast<std::size_t>(j);
    }
    require(flat < A.numel(), Errc::IndexOutOfRange, "elem index");
    int id = push(Op::Elem, Tensor::scalar(A.v[flat]), a);
    node(id).i0 = static_cast<int>(flat);
    return id;
  }

  // tensor times scalar node
  int scale_t(int a, int s) {
    require(val(s).numel() == 1, Errc::ShapeMismatch, "scale_t scalar");
    Tensor out = val(a);
    Real c = val(s).v[0];
    for (auto& x : out.v) x *= c;
    return push(Op::ScaleT, std::move(out), a, s);
  }

  // sparse-constant matvec: out = M v (or M^T v), optionally skipping one
  // stored coordinate (i,j) of M; the matrix is constant, gradient flows
  // through v only
  int spmv(const SparseBool* M, int v, bool transpose, int skip_i = -1, int skip_j = -1) {
    const Tensor& V = val(v);
    require(V.rank() == 1 && V.shape[0] == M->dim(), Errc::ShapeMismatch, "spmv length");
    Tensor out = Tensor::zeros({M->dim()});
    M->accumulate(V.v.data(), out.v.data(), transpose, skip_i, skip_j);
    int id = push(Op::Spmv, std::move(out), v);
    Node& n = node(id);
    n.mat = M;
    n.flag = transpose;
    n.i0 = skip_i;
    n.i1 = skip_j;
    return id;
  }

  // -y log(p+eps) - (1-y) log(1-p+eps) with eps = 1e-12, p a scalar node
  int cross_entropy(double y, int p) {
    require(val(p).numel() == 1, Errc::ShapeMismatch, "cross_entropy wants scalar probability");
    double pv = static_cast<double>(val(p).v[0]);
    double lo = -y * std::log(pv + kXentEps) - (1.0 - y) * std::log(1.0 - pv + kXentEps);
    int id = push(Op::CrossEntropy, Tensor::scalar(static_cast<Real>(lo)), p);
    node(id).c = y;
    return id;
  }

  // --- backward ---

  void backward(int loss) {
    require(val(loss).numel() == 1, Errc::NonScalarLoss, "backward target must be scalar");
    Node& ln = node(loss);
    ensure_grad(ln);
    ln.grad.v[0] = Real(1);
    for (int id = loss; id >= 0; --id) {
      Node& n = node(id);
      if (n.grad.numel() == 0 || n.op == Op::Leaf || !n.needs_grad) continue;
      accumulate_inputs(n);
    }
  }

  static constexpr double kLnEps = 1e-5;
  static constexpr double kXentEps = 1e-12;

 private:
  struct Node {
    Op op = Op::Leaf;
    int in0 = -1, in1 = -1, in2 = -1;
    int i0 = 0, i1 = 0;
    double c = 0;
    bool flag = false;
    bool needs_grad = false;
    const SparseBool* mat = nullptr;
    Tensor val;
    Tensor grad;
  };

  std::vector<Node> nodes_;

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }

  void check_same_shape(int a, int b, const char* what) {
    require(val(a).same_shape(val(b)), Errc::ShapeMismatch, std::string(what) + ": shape mismatch");
  }

  int push(Op op, Tensor out, int in0, int in1 = -1, int in2 = -1, bool leaf_needs_grad = false) {
    require(out.all_finite(), Errc::NonFiniteValue, "non-finite value produced");
    Node n;
    n.op = op;
    n.in0 = in0;
    n.in1 = in1;
    n.in2 = in2;
    n.val = std::move(out);
    if (op == Op::Leaf) {
      n.needs_grad = leaf_needs_grad;
    } else {
      n.needs_grad = false;
      for (int in : {in0, in1, in2})
        if (in >= 0 && node(in).needs_grad) n.needs_grad = true;
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void ensure_grad(Node& n) {
    if (n.grad.numel() == 0 && n.val.numel() > 0) n.grad = Tensor::zeros(n.val.shape);
  }

  // adds the local gradient contribution of n into each differentiable input
  void accumulate_inputs(Node& n) {
    auto g_into = [&](int in) -> Tensor* {
      if (in < 0) return nullptr;
      Node& m = node(in);
      if (!m.needs_grad) return nullptr;
      ensure_grad(m);
      return &m.grad;
    };
    const Tensor& g = n.grad;
    Tensor* ga = g_into(n.in0);
    Tensor* gb = g_into(n.in1);
    Tensor* gc = g_into(n.in2);
    const Tensor* A = n.in0 >= 0 ? &val(n.in0) : nullptr;
    const Tensor* B = n.in1 >= 0 ? &val(n.in1) : nullptr;

    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        if (ga) for (std::size_t i = 0; i < g.numel(); ++i) ga->v[i] += g.v[i];
        if (gb) for (std::size_t i = 0; i < g.numel(); ++i) gb->v[i] += g.v[i];
        break;
      case Op::Sub:
        if (ga) for (std::size_t i = 0; i < g.numel(); ++i) ga->v[i] += g.v[i];
        if (gb) for (std::size_t i = 0; i < g.numel(); ++i) gb->v[i] -= g.v[i];
        break;
      case Op::Mul:
        if (ga) for (std::size_t i = 0; i < g.numel(); ++i) ga->v[i] += g.v[i] * B->v[i];
        if (gb) for (std::size_t i = 0; i < g.numel(); ++i) gb->v[i] += g.v[i] * A->v[i];
        break;
      case Op::Scale:
        if (ga)
          for (std::size_t i = 0; i < g.numel(); ++i)
            ga->v[i] += static_cast<Real>(g.v[i] * n.c);
        break;
      case Op::AddConst:
        if (ga) for (std::size_t i = 0; i < g.numel(); ++i) ga->v[i] += g.v[i];
        break;
      case Op::OneMinus:
        if (ga) for (std::size_t i = 0; i < g.numel(); ++i) ga->v[i] -= g.v[i];
        break;
      case Op::Reciprocal:
        if (ga)
          for (std::size_t i = 0; i < g.numel(); ++i) {
            Real y = n.val.v[i];
            ga->v[i] -= g.v[i] * y * y;
          }
        break;
      case Op::Matmul: {
        int m = A->shape[0], k = A->shape[1], c = B->shape[1];
        if (ga)
          for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
              Real s = 0;
              for (int j = 0; j < c; ++j) s += g.v[static_cast<std::size_t>(i) * c + j] * B->at(p, j);
              ga->at(i, p) += s;
            }
        if (gb)
          for (int p = 0; p < k; ++p)
            for (int j = 0; j < c; ++j) {
              Real s = 0;
              for (int i = 0; i < m; ++i) s += A->at(i, p) * g.v[static_cast<std::size_t>(i) * c + j];
              gb->at(p, j) += s;
            }
        break;
      }
      case Op::MatmulNT: {
        int m = A->shape[0], k = A->shape[1], c = B->shape[0];
        if (ga)
          for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
              Real s = 0;
              for (int j = 0; j < c; ++j) s += g.v[static_cast<std::size_t>(i) * c + j] * B->at(j, p);
              ga->at(i, p) += s;
            }
        if (gb)
          for (int j = 0; j < c; ++j)
            for (int p = 0; p < k; ++p) {
              Real s = 0;
              for (int i = 0; i < m; ++i) s += g.v[static_cast<std::size_t>(i) * c + j] * A->at(i, p);
              gb->at(j, p) += s;
            }
        break;
      }
      case Op::Concat0: {
        // i0 stores the flat length of the first input
        std::size_t split = static_cast<std::size_t>(n.i0);
        if (ga) for (std::size_t i = 0; i < split; ++i) ga->v[i] += g.v[i];
        if (gb) for (std::size_t i = split; i < g.numel(); ++i) gb->v[i - split] += g.v[i];
        break;
      }
      case Op::Concat1: {
        int rows = n.val.shape[0], ca = n.i0, cb = n.val.shape[1] - n.i0;
        if (ga)
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < ca; ++j) ga->at(i, j) += g.at(i, j);
        if (gb)
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cb; ++j) gb->at(i, j) += g.at(i, ca + j);
        break;
      }
      case Op::SliceRows:
        if (ga)
          for (int i = 0; i < n.i1; ++i)
            for (int j = 0; j < n.val.shape[1]; ++j) ga->at(n.i0 + i, j) += g.at(i, j);
        break;
      case Op::SliceCols:
        if (ga)
          for (int i = 0; i < n.val.shape[0]; ++i)
            for (int j = 0; j < n.i1; ++j) ga->at(i, n.i0 + j) += g.at(i, j);
        break;
      case Op::Reshape:
        if (ga) for (std::size_t i = 0; i < g.numel(); ++i) ga->v[i] += g.v[i];
        break;
      case Op::TileRows:
        if (ga)
          for (int i = 0; i < n.i0; ++i)
            for (int j = 0; j < n.val.shape[1]; ++j) ga->at(0, j) += g.at(i, j);
        break;
      case Op::Affine: {
        const Tensor& X = *A;
        const Tensor& W = *B;
        int rows = X.shape[0], p = X.shape[1], d = W.shape[0];
        if (ga)
          for (int i = 0; i < rows; ++i)
            for (int q = 0; q < p; ++q) {
              Real s = 0;
              for (int j = 0; j < d; ++j) s += g.at(i, j) * W.at(j, q);
              ga->at(i, q) += s;
            }
        if (gb)
          for (int j = 0; j < d; ++j)
            for (int q = 0; q < p; ++q) {
              Real s = 0;
              for (int i = 0; i < rows; ++i) s += g.at(i, j) * X.at(i, q);
              gb->at(j, q) += s;
            }
        if (gc)
          for (int j = 0; j < d; ++j) {
            Real s = 0;
            for (int i = 0; i < rows; ++i) s += g.at(i, j);
            gc->v[static_cast<std::size_t>(j)] += s;
          }
        break;
      }
      case Op::AddRowVec: {
        int rows = n.val.shape[0], d = n.val.shape[1];
        if (ga) for (std::size_t i = 0; i < g.numel(); ++i) ga->v[i] += g.v[i];
        if (gb)
          for (int j = 0; j < d; ++j) {
            Real s = 0;
            for (int i = 0; i < rows; ++i) s += g.at(i, j);
            gb->v[static_cast<std::size_t>(j)] += s;
          }
        break;
      }
      case Op::Relu:
        if (ga)
          for (std::size_t i = 0; i < g.numel(); ++i)
            if (A->v[i] > Real(0)) ga->v[i] += g.v[i];
        break;
      case Op::Softplus:
        if (ga)
          for (std::size_t i = 0; i < g.numel(); ++i) {
            double xd = static_cast<double>(A->v[i]);
            double s = xd >= 0 ? 1.0 / (1.0 + std::exp(-xd)) : std::exp(xd) / (1.0 + std::exp(xd));
            ga->v[i] += static_cast<Real>(static_cast<double>(g.v[i]) * s);
          }
        break;
      case Op::Sigmoid:
        if (ga)
          for (std::size_t i = 0; i < g.numel(); ++i) {
            Real s = n.val.v[i];
            ga->v[i] += g.v[i] * s * (Real(1) - s);
          }
        break;
      case Op::SoftmaxRows: {
        if (!ga) break;
        int rows = n.val.rank() == 1 ? 1 : n.val.shape[0];
        int cols_ = n.val.rank() == 1 ? n.val.shape[0] : n.val.shape[1];
        for (int i = 0; i < rows; ++i) {
          const Real* s = n.val.v.data() + static_cast<std::ptrdiff_t>(i) * cols_;
          const Real* gr = g.v.data() + static_cast<std::ptrdiff_t>(i) * cols_;
          double dotv = 0;
          for (int j = 0; j < cols_; ++j) dotv += static_cast<double>(gr[j]) * s[j];
          Real* out = ga->v.data() + static_cast<std::ptrdiff_t>(i) * cols_;
          for (int j = 0; j < cols_; ++j)
            out[j] += static_cast<Real>(s[j] * (static_cast<double>(gr[j]) - dotv));
        }
        break;
      }
      case Op::LayerNorm: {
        const Tensor& X = *A;
        const Tensor& G = *B;
        int rows = X.shape[0], d = X.shape[1];
        for (int i = 0; i < rows; ++i) {
          double mu = 0;
          for (int j = 0; j < d; ++j) mu += X.at(i, j);
          mu /= d;
          double var = 0;
          for (int j = 0; j < d; ++j) {
            double c2 = X.at(i, j) - mu;
            var += c2 * c2;
          }
          var /= d;
          double inv = 1.0 / std::sqrt(var + kLnEps);
          double sum_dxhat = 0, sum_dxhat_xhat = 0;
          std::vector<double> dxhat(static_cast<std::size_t>(d));
          for (int j = 0; j < d; ++j) {
            double xhat = (X.at(i, j) - mu) * inv;
            double dxh = static_cast<double>(g.at(i, j)) * G.at(j);
            dxhat[static_cast<std::size_t>(j)] = dxh;
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xhat;
            if (gb) gb->v[static_cast<std::size_t>(j)] += static_cast<Real>(g.at(i, j) * xhat);
            if (gc) gc->v[static_cast<std::size_t>(j)] += g.at(i, j);
          }
          if (ga)
            for (int j = 0; j < d; ++j) {
              double xhat = (X.at(i, j) - mu) * inv;
              double dx = inv * (dxhat[static_cast<std::size_t>(j)] - sum_dxhat / d -
                                 xhat * sum_dxhat_xhat / d);
              ga->at(i, j) += static_cast<Real>(dx);
            }
        }
        break;
      }
      case Op::Sum:
        if (ga) for (auto& x : ga->v) x += g.v[0];
        break;
      case Op::Mean: {
        if (ga) {
          Real s = static_cast<Real>(static_cast<double>(g.v[0]) / static_cast<double>(ga->numel()));
          for (auto& x : ga->v) x += s;
        }
        break;
      }
      case Op::Dot:
        if (ga) for (std::size_t i = 0; i < ga->numel(); ++i) ga->v[i] += g.v[0] * B->v[i];
        if (gb) for (std::size_t i = 0; i < gb->numel(); ++i) gb->v[i] += g.v[0] * A->v[i];
        break;
      case Op::Elem:
        if (ga) ga->v[static_cast<std::size_t>(n.i0)] += g.v[0];
        break;
      case Op::ScaleT: {
        Real c2 = B->v[0];
        if (ga) for (std::size_t i = 0; i < g.numel(); ++i) ga->v[i] += g.v[i] * c2;
        if (gb) {
          double s = 0;
          for (std::size_t i = 0; i < g.numel(); ++i)
            s += static_cast<double>(g.v[i]) * static_cast<double>(A->v[i]);
          gb->v[0] += static_cast<Real>(s);
        }
        break;
      }
      case Op::Spmv:
        // d/dv (op(M) v) applied to g is op(M)^T g with the same skip
        if (ga) n.mat->accumulate(g.v.data(), ga->v.data(), !n.flag, n.i0, n.i1);
        break;
      case Op::CrossEntropy: {
        if (!ga) break;
        double pv = static_cast<double>(A->v[0]);
        double d = -n.c / (pv + kXentEps) + (1.0 - n.c) / (1.0 - pv + kXentEps);
        ga->v[0] += static_cast<Real>(static_cast<double>(g.v[0]) * d);
        break;
      }
    }
  }
};

using Tape32 = TapeT<float>;
using Tape64 = TapeT<double>;

// Central-difference gradient check. The builder registers its parameters
// as leaves on the given tape (in order) and returns the scalar loss node.
// Returns the max relative error over all parameter elements.
template <class Builder>
double finite_diff_check(Builder&& build, std::vector<Tensor64> params, double eps = 1e-5) {
  auto forward = [&]() {
    Tape64 tape;
    std::vector<int> ids;
    ids.reserve(params.size());
    for (const auto& p : params) ids.push_back(tape.leaf(p));
    int loss = build(tape, ids);
    require(tape.value(loss).numel() == 1, Errc::NonScalarLoss, "finite_diff loss must be scalar");
    return static_cast<double>(tape.value(loss).v[0]);
  };

  Tape64 tape;
  std::vector<int> ids;
  for (const auto& p : params) ids.push_back(tape.leaf(p));
  int loss = build(tape, ids);
  tape.backward(loss);
  std::vector<Tensor64> analytic;
  for (int id : ids) analytic.push_back(tape.grad(id));

  double max_rel = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t e = 0; e < params[pi].numel(); ++e) {
      double orig = params[pi].v[e];
      params[pi].v[e] = orig + eps;
      double fp = forward();
      params[pi].v[e] = orig - eps;
      double fm = forward();
      params[pi].v[e] = orig;
      double numeric = (fp - fm) / (2 * eps);
      double a = analytic[pi].v[e];
      double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace rulelearn

#endif
