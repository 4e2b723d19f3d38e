#pragma once

#include "fnr/graph.hpp"
#include "fnr/tensor.hpp"

namespace fnr {

/// P = F_T * F_I^T, raw batch inner products between projected text and image
/// features. No normalization at this stage.
template <typename T>
NodeId predicted_matrix(Graph<T>& g, NodeId f_t, NodeId f_i) {
  require_same_shape(g.value(f_t), g.value(f_i), "predicted_matrix");
  return g.matmul(f_t, g.transpose(f_i));
}

/// E = rowsoftmax((F_T F_T^T + F_I F_I^T) / 2), the soft target built from the
/// averaged within-modality Gram matrices.
template <typename T>
NodeId expected_matrix(Graph<T>& g, NodeId f_t, NodeId f_i) {
  require_same_shape(g.value(f_t), g.value(f_i), "expected_matrix");
  NodeId gram_t = g.matmul(f_t, g.transpose(f_t));
  NodeId gram_i = g.matmul(f_i, g.transpose(f_i));
  return g.softmax_rows(g.scale(g.add(gram_t, gram_i), T(0.5)));
}

template <typename T>
struct ContrastiveNodes {
  NodeId l_t = -1;
  NodeId l_i = -1;
  NodeId l_s = -1;
};

/// Supervised contrastive loss over one batch:
///   l_T = bce(E, rowsoftmax(P)),  l_I = bce(E, rowsoftmax(P^T)),
///   l_s = (l_T + l_I) / 2.
/// Raw inner products are row-softmaxed before the cross-entropy so every
/// logarithm is well-defined. Both directions target E, which makes l_s
/// exactly symmetric in the two modalities.
template <typename T>
ContrastiveNodes<T> contrastive_loss_nodes(Graph<T>& g, NodeId f_t,
                                           NodeId f_i) {
  const auto& ft = g.value(f_t);
  require_same_shape(ft, g.value(f_i), "contrastive_loss");
  if (ft.rows < 2)
    throw ContractError("contrastive_loss: batch size " +
                        std::to_string(ft.rows) + " < 2");
  NodeId p = predicted_matrix(g, f_t, f_i);
  NodeId e = expected_matrix(g, f_t, f_i);
  ContrastiveNodes<T> out;
  out.l_t = g.bce_mean(e, g.softmax_rows(p));
  out.l_i = g.bce_mean(e, g.softmax_rows(g.transpose(p)));
  out.l_s = g.scale(g.add(out.l_t, out.l_i), T(0.5));
  return out;
}

template <typename T>
struct ContrastiveValues {
  T l_t = 0;
  T l_i = 0;
  T l_s = 0;
};

// Value-only conveniences over plain tensors.

template <typename T>
Tensor2<T> predicted_matrix(const Tensor2<T>& f_t, const Tensor2<T>& f_i) {
  Graph<T> g;
  return g.value(predicted_matrix(g, g.leaf(f_t), g.leaf(f_i)));
}

template <typename T>
Tensor2<T> expected_matrix(const Tensor2<T>& f_t, const Tensor2<T>& f_i) {
  Graph<T> g;
  return g.value(expected_matrix(g, g.leaf(f_t), g.leaf(f_i)));
}

template <typename T>
ContrastiveValues<T> contrastive_loss(const Tensor2<T>& f_t,
                                      const Tensor2<T>& f_i) {
  Graph<T> g;
  auto nodes = contrastive_loss_nodes(g, g.leaf(f_t), g.leaf(f_i));
  return {g.value(nodes.l_t).data[0], g.value(nodes.l_i).data[0],
          g.value(nodes.l_s).data[0]};
}

}  // namespace fnr
