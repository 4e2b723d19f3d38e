#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fnr/errors.hpp"
#include "fnr/tensor.hpp"

namespace fnr {

using NodeId = int;

enum class Op {
  kLeaf,
  kMatMul,
  kTranspose,
  kAdd,
  kAddRowVec,
  kScale,
  kMul,
  kConcatCols,
  kGelu,
  kSoftmaxRows,
  kDropout,
  kSum,
  kMean,
  kBceMean,
  kWeightedNll,
};

namespace detail {

// Exact GELU: x * Phi(x) with Phi the standard normal CDF via erfc.
template <typename T>
inline T gelu_scalar(T x) {
  const T inv_sqrt2 = T(0.70710678118654752440084436210484903L);
  return x * T(0.5) * std::erfc(-x * inv_sqrt2);
}

template <typename T>
inline T gelu_deriv_scalar(T x) {
  const T inv_sqrt2 = T(0.70710678118654752440084436210484903L);
  const T inv_sqrt2pi = T(0.39894228040143267793994605993438187L);
  T cdf = T(0.5) * std::erfc(-x * inv_sqrt2);
  T pdf = inv_sqrt2pi * std::exp(-x * x / T(2));
  return cdf + x * pdf;
}

}  // namespace detail

/// Reverse-mode tape over Tensor2 values. Nodes are appended in topological
/// order by construction; one backward() pass fills a gradient for every
/// trainable leaf reachable from the loss node.
template <typename T>
class Graph {
 public:
  static constexpr T kLogClamp = T(1e-7);

  NodeId leaf(Tensor2<T> value, bool trainable = false) {
    check_finite(value, "leaf");
    Node n;
    n.op = Op::kLeaf;
    n.value = std::move(value);
    n.trainable = trainable;
    return push(std::move(n));
  }

  NodeId matmul(NodeId a, NodeId b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.cols != B.rows)
      throw ShapeError("matmul: " + A.shape_str() + " x " + B.shape_str());
    Tensor2<T> C(A.rows, B.cols);
    for (std::size_t i = 0; i < A.rows; ++i)
      for (std::size_t k = 0; k < A.cols; ++k) {
        T aik = A.at(i, k);
        if (aik == T(0)) continue;
        const T* brow = &B.data[k * B.cols];
        T* crow = &C.data[i * C.cols];
        for (std::size_t j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
      }
    return push_op(Op::kMatMul, {a, b}, std::move(C));
  }

  NodeId transpose(NodeId a) {
    const auto& A = value(a);
    Tensor2<T> C(A.cols, A.rows);
    for (std::size_t i = 0; i < A.rows; ++i)
      for (std::size_t j = 0; j < A.cols; ++j) C.at(j, i) = A.at(i, j);
    return push_op(Op::kTranspose, {a}, std::move(C));
  }

  NodeId add(NodeId a, NodeId b) {
    const auto& A = value(a);
    const auto& B = value(b);
    require_same_shape(A, B, "add");
    Tensor2<T> C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
    return push_op(Op::kAdd, {a, b}, std::move(C));
  }

  /// A (m x n) plus a broadcast row vector (1 x n).
  NodeId add_rowvec(NodeId a, NodeId v) {
    const auto& A = value(a);
    const auto& V = value(v);
    if (V.rows != 1 || V.cols != A.cols)
      throw ShapeError("add_rowvec: " + A.shape_str() + " + " + V.shape_str());
    Tensor2<T> C = A;
    for (std::size_t i = 0; i < A.rows; ++i)
      for (std::size_t j = 0; j < A.cols; ++j) C.at(i, j) += V.at(0, j);
    return push_op(Op::kAddRowVec, {a, v}, std::move(C));
  }

  NodeId scale(NodeId a, T c) {
    Tensor2<T> C = value(a);
    for (auto& x : C.data) x *= c;
    NodeId id = push_op(Op::kScale, {a}, std::move(C));
    nodes_[id].scalar = c;
    return id;
  }

  NodeId mul(NodeId a, NodeId b) {
    const auto& A = value(a);
    const auto& B = value(b);
    require_same_shape(A, B, "mul");
    Tensor2<T> C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C.data[i] *= B.data[i];
    return push_op(Op::kMul, {a, b}, std::move(C));
  }

  NodeId concat_cols(NodeId a, NodeId b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.rows != B.rows)
      throw ShapeError("concat_cols: row counts " + A.shape_str() + " vs " +
                       B.shape_str());
    Tensor2<T> C(A.rows, A.cols + B.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
      for (std::size_t j = 0; j < A.cols; ++j) C.at(i, j) = A.at(i, j);
      for (std::size_t j = 0; j < B.cols; ++j) C.at(i, A.cols + j) = B.at(i, j);
    }
    return push_op(Op::kConcatCols, {a, b}, std::move(C));
  }

  NodeId gelu(NodeId a) {
    Tensor2<T> C = value(a);
    for (auto& x : C.data) x = detail::gelu_scalar(x);
    return push_op(Op::kGelu, {a}, std::move(C));
  }

  /// Row softmax with per-row max subtraction.
  NodeId softmax_rows(NodeId a) {
    const auto& A = value(a);
    Tensor2<T> C(A.rows, A.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
      T mx = A.at(i, 0);
      for (std::size_t j = 1; j < A.cols; ++j) mx = std::max(mx, A.at(i, j));
      T sum = 0;
      for (std::size_t j = 0; j < A.cols; ++j) {
        T e = std::exp(A.at(i, j) - mx);
        C.at(i, j) = e;
        sum += e;
      }
      for (std::size_t j = 0; j < A.cols; ++j) C.at(i, j) /= sum;
    }
    return push_op(Op::kSoftmaxRows, {a}, std::move(C));
  }

  /// Inverted dropout with a caller-supplied mask of {0, 1/(1-rate)} entries.
  NodeId dropout(NodeId a, Tensor2<T> mask) {
    const auto& A = value(a);
    require_same_shape(A, mask, "dropout");
    Tensor2<T> C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C.data[i] *= mask.data[i];
    NodeId id = push_op(Op::kDropout, {a}, std::move(C));
    nodes_[id].aux = std::move(mask);
    return id;
  }

  static Tensor2<T> make_dropout_mask(std::size_t rows, std::size_t cols,
                                      T rate, std::mt19937_64& rng) {
    Tensor2<T> m(rows, cols);
    T keep = T(1) - rate;
    for (auto& x : m.data) {
      double u = (rng() >> 11) * 0x1.0p-53;
      x = (u < static_cast<double>(rate)) ? T(0) : T(1) / keep;
    }
    return m;
  }

  NodeId sum(NodeId a) {
    T s = 0;
    for (T v : value(a).data) s += v;
    return push_op(Op::kSum, {a}, Tensor2<T>(1, 1, s));
  }

  NodeId mean(NodeId a) {
    T s = 0;
    const auto& A = value(a);
    for (T v : A.data) s += v;
    return push_op(Op::kMean, {a}, Tensor2<T>(1, 1, s / T(A.size())));
  }

  /// Mean over all elements of -(t ln p + (1-t) ln(1-p)); p clamped to
  /// [1e-7, 1-1e-7] before the logs. Differentiable w.r.t. both arguments.
  NodeId bce_mean(NodeId target, NodeId pred) {
    const auto& Tg = value(target);
    const auto& P = value(pred);
    require_same_shape(Tg, P, "bce_mean");
    T acc = 0;
    for (std::size_t i = 0; i < P.size(); ++i) {
      T p = clamp_log_arg(P.data[i]);
      T t = Tg.data[i];
      acc += -(t * std::log(p) + (T(1) - t) * std::log(T(1) - p));
    }
    return push_op(Op::kBceMean, {target, pred},
                   Tensor2<T>(1, 1, acc / T(P.size())));
  }

  /// Mean over rows of -w[y_i] * ln(probs[i, y_i]), clamped log.
  NodeId weighted_nll(NodeId probs, const std::vector<int>& labels,
                      std::array<T, 2> class_weights) {
    const auto& P = value(probs);
    if (P.cols != 2)
      throw ShapeError("weighted_nll: probs must be b x 2, got " +
                       P.shape_str());
    if (labels.size() != P.rows)
      throw ShapeError("weighted_nll: " + std::to_string(labels.size()) +
                       " labels for " + std::to_string(P.rows) + " rows");
    T acc = 0;
    for (std::size_t i = 0; i < P.rows; ++i) {
      int y = labels[i];
      if (y != 0 && y != 1)
        throw DataError("weighted_nll: label " + std::to_string(y) +
                        " at row " + std::to_string(i) + " not in {0,1}");
      acc += -class_weights[y] * std::log(clamp_log_arg(P.at(i, y)));
    }
    NodeId id = push_op(Op::kWeightedNll, {probs},
                        Tensor2<T>(1, 1, acc / T(P.rows)));
    nodes_[id].labels = labels;
    nodes_[id].class_weights = class_weights;
    return id;
  }

  const Tensor2<T>& value(NodeId id) const { return node(id).value; }
  const Tensor2<T>& grad(NodeId id) const { return node(id).grad; }
  bool trainable(NodeId id) const { return node(id).trainable; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse accumulation from a scalar loss node. Every node gets a gradient
  /// tensor; unreachable leaves keep zeros.
  void backward(NodeId loss) {
    const auto& L = value(loss);
    if (L.rows != 1 || L.cols != 1)
      throw ContractError("backward: loss node is " + L.shape_str() +
                          ", expected 1x1 scalar");
    for (auto& n : nodes_) n.grad = Tensor2<T>(n.value.rows, n.value.cols);
    nodes_[loss].grad.data[0] = T(1);
    for (NodeId id = loss; id >= 0; --id) backward_one(id);
  }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::array<NodeId, 2> in = {-1, -1};
    Tensor2<T> value;
    Tensor2<T> grad;
    Tensor2<T> aux;  // dropout mask
    std::vector<int> labels;
    std::array<T, 2> class_weights = {T(1), T(1)};
    T scalar = T(0);
    bool trainable = false;
  };

  static T clamp_log_arg(T p) {
    return std::min(std::max(p, kLogClamp), T(1) - kLogClamp);
  }

  const Node& node(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw ContractError("bad node id " + std::to_string(id));
    return nodes_[id];
  }

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId push_op(Op op, std::initializer_list<NodeId> in, Tensor2<T> out) {
    check_finite(out, op_name(op));
    Node n;
    n.op = op;
    int i = 0;
    for (NodeId x : in) n.in[i++] = x;
    n.value = std::move(out);
    return push(std::move(n));
  }

  static void check_finite(const Tensor2<T>& t, const char* what) {
    if (!t.all_finite())
      throw NumericError(std::string(what) + " produced a non-finite value");
  }

  static const char* op_name(Op op) {
    switch (op) {
      case Op::kLeaf: return "leaf";
      case Op::kMatMul: return "matmul";
      case Op::kTranspose: return "transpose";
      case Op::kAdd: return "add";
      case Op::kAddRowVec: return "add_rowvec";
      case Op::kScale: return "scale";
      case Op::kMul: return "mul";
      case Op::kConcatCols: return "concat_cols";
      case Op::kGelu: return "gelu";
      case Op::kSoftmaxRows: return "softmax_rows";
      case Op::kDropout: return "dropout";
      case Op::kSum: return "sum";
      case Op::kMean: return "mean";
      case Op::kBceMean: return "bce_mean";
      case Op::kWeightedNll: return "weighted_nll";
    }
    return "?";
  }

  void backward_one(NodeId id) {
    Node& n = nodes_[id];
    const Tensor2<T>& g = n.grad;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatMul: {
        const auto& A = nodes_[n.in[0]].value;
        const auto& B = nodes_[n.in[1]].value;
        auto& dA = nodes_[n.in[0]].grad;
        auto& dB = nodes_[n.in[1]].grad;
        // dA += g * B^T
        for (std::size_t i = 0; i < A.rows; ++i)
          for (std::size_t k = 0; k < A.cols; ++k) {
            T acc = 0;
            for (std::size_t j = 0; j < B.cols; ++j)
              acc += g.at(i, j) * B.at(k, j);
            dA.at(i, k) += acc;
          }
        // dB += A^T * g
        for (std::size_t k = 0; k < B.rows; ++k)
          for (std::size_t j = 0; j < B.cols; ++j) {
            T acc = 0;
            for (std::size_t i = 0; i < A.rows; ++i)
              acc += A.at(i, k) * g.at(i, j);
            dB.at(k, j) += acc;
          }
        break;
      }
      case Op::kTranspose: {
        auto& dA = nodes_[n.in[0]].grad;
        for (std::size_t i = 0; i < g.rows; ++i)
          for (std::size_t j = 0; j < g.cols; ++j) dA.at(j, i) += g.at(i, j);
        break;
      }
      case Op::kAdd: {
        auto& dA = nodes_[n.in[0]].grad;
        auto& dB = nodes_[n.in[1]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          dA.data[i] += g.data[i];
          dB.data[i] += g.data[i];
        }
        break;
      }
      case Op::kAddRowVec: {
        auto& dA = nodes_[n.in[0]].grad;
        auto& dV = nodes_[n.in[1]].grad;
        for (std::size_t i = 0; i < g.rows; ++i)
          for (std::size_t j = 0; j < g.cols; ++j) {
            dA.at(i, j) += g.at(i, j);
            dV.at(0, j) += g.at(i, j);
          }
        break;
      }
      case Op::kScale: {
        auto& dA = nodes_[n.in[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
          dA.data[i] += n.scalar * g.data[i];
        break;
      }
      case Op::kMul: {
        const auto& A = nodes_[n.in[0]].value;
        const auto& B = nodes_[n.in[1]].value;
        auto& dA = nodes_[n.in[0]].grad;
        auto& dB = nodes_[n.in[1]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          dA.data[i] += g.data[i] * B.data[i];
          dB.data[i] += g.data[i] * A.data[i];
        }
        break;
      }
      case Op::kConcatCols: {
        auto& dA = nodes_[n.in[0]].grad;
        auto& dB = nodes_[n.in[1]].grad;
        for (std::size_t i = 0; i < g.rows; ++i) {
          for (std::size_t j = 0; j < dA.cols; ++j)
            dA.at(i, j) += g.at(i, j);
          for (std::size_t j = 0; j < dB.cols; ++j)
            dB.at(i, j) += g.at(i, dA.cols + j);
        }
        break;
      }
      case Op::kGelu: {
        const auto& X = nodes_[n.in[0]].value;
        auto& dX = nodes_[n.in[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
          dX.data[i] += g.data[i] * detail::gelu_deriv_scalar(X.data[i]);
        break;
      }
      case Op::kSoftmaxRows: {
        const auto& Y = n.value;
        auto& dX = nodes_[n.in[0]].grad;
        for (std::size_t i = 0; i < Y.rows; ++i) {
          T dot = 0;
          for (std::size_t j = 0; j < Y.cols; ++j)
            dot += g.at(i, j) * Y.at(i, j);
          for (std::size_t j = 0; j < Y.cols; ++j)
            dX.at(i, j) += Y.at(i, j) * (g.at(i, j) - dot);
        }
        break;
      }
      case Op::kDropout: {
        auto& dX = nodes_[n.in[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
          dX.data[i] += g.data[i] * n.aux.data[i];
        break;
      }
      case Op::kSum: {
        auto& dX = nodes_[n.in[0]].grad;
        T s = g.data[0];
        for (auto& x : dX.data) x += s;
        break;
      }
      case Op::kMean: {
        auto& dX = nodes_[n.in[0]].grad;
        T s = g.data[0] / T(dX.size());
        for (auto& x : dX.data) x += s;
        break;
      }
      case Op::kBceMean: {
        const auto& Tg = nodes_[n.in[0]].value;
        const auto& P = nodes_[n.in[1]].value;
        auto& dT = nodes_[n.in[0]].grad;
        auto& dP = nodes_[n.in[1]].grad;
        T s = g.data[0] / T(P.size());
        for (std::size_t i = 0; i < P.size(); ++i) {
          T p = clamp_log_arg(P.data[i]);
          T t = Tg.data[i];
          dT.data[i] += s * (std::log(T(1) - p) - std::log(p));
          // Clamped entries are flat in p.
          if (P.data[i] > kLogClamp && P.data[i] < T(1) - kLogClamp)
            dP.data[i] += s * (-t / p + (T(1) - t) / (T(1) - p));
        }
        break;
      }
      case Op::kWeightedNll: {
        const auto& P = nodes_[n.in[0]].value;
        auto& dP = nodes_[n.in[0]].grad;
        T s = g.data[0] / T(P.rows);
        for (std::size_t i = 0; i < P.rows; ++i) {
          int y = n.labels[i];
          T p = P.at(i, y);
          if (p > kLogClamp && p < T(1) - kLogClamp)
            dP.at(i, y) += s * (-n.class_weights[y] / p);
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace fnr
