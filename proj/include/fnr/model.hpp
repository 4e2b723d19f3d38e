#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fnr/contrastive.hpp"
#include "fnr/errors.hpp"
#include "fnr/graph.hpp"
#include "fnr/tensor.hpp"

namespace fnr {

enum class Mode { kTextOnly, kImageOnly, kFusedWs, kFusedS };

inline std::string mode_name(Mode m) {
  switch (m) {
    case Mode::kTextOnly: return "text_only";
    case Mode::kImageOnly: return "image_only";
    case Mode::kFusedWs: return "fused_ws";
    case Mode::kFusedS: return "fused_s";
  }
  return "?";
}

inline Mode mode_from_name(const std::string& s) {
  if (s == "text_only") return Mode::kTextOnly;
  if (s == "image_only") return Mode::kImageOnly;
  if (s == "fused_ws") return Mode::kFusedWs;
  if (s == "fused_s") return Mode::kFusedS;
  throw ConfigError("unknown mode '" + s + "'");
}

struct ModelConfig {
  std::size_t d_in = 768;
  std::size_t k = 64;        // projection size
  std::size_t h = 64;        // classifier hidden width
  double dropout_rate = 0.3;
  double lambda = 1.0;       // similarity tradeoff, fused_s only
  Mode mode = Mode::kFusedS;
  std::uint64_t seed = 0;
};

/// Residual projection head: out = w2 * gelu(w1*x + b1) + (w1*x + b1) + b2,
/// with dropout on the gelu branch at train time.
template <typename T>
struct ProjectorParams {
  Tensor2<T> w1, b1, w2, b2;

  ProjectorParams() = default;
  ProjectorParams(std::size_t d_in, std::size_t k)
      : w1(d_in, k), b1(1, k), w2(k, k), b2(1, k) {}
};

/// Two-layer fusion classifier: softmax(w6 * gelu(w5*F_c + b5) + b6).
template <typename T>
struct ClassifierParams {
  Tensor2<T> w5, b5, w6, b6;

  ClassifierParams() = default;
  ClassifierParams(std::size_t k, std::size_t h)
      : w5(2 * k, h), b5(1, h), w6(h, 2), b6(1, 2) {}
};

template <typename T>
struct LossBreakdown {
  T l_t = 0;
  T l_i = 0;
  T l_s = 0;
  T l_c = 0;
  T total = 0;
  T alpha = 1;
};

/// Class weights for the weighted classification loss: alpha on the training
/// split's minority class, 1 on the other. Label encoding: 0=real, 1=fake.
template <typename T>
struct ClassWeights {
  std::array<T, 2> w = {T(1), T(1)};
  T alpha = 1;
  int minority = -1;  // -1 when balanced
};

template <typename T>
struct Batch {
  Tensor2<T> text;   // b x d_in
  Tensor2<T> image;  // b x d_in
  std::vector<int> labels;
};

template <typename T>
struct ParamRef {
  std::string name;
  std::string group;  // "projector" or "classifier"
  Tensor2<T>* tensor;
};

namespace detail {

template <typename T>
inline T uniform01(std::mt19937_64& rng) {
  return T((rng() >> 11) * 0x1.0p-53);
}

template <typename T>
inline void glorot_init(Tensor2<T>& w, std::mt19937_64& rng) {
  T limit = std::sqrt(T(6) / T(w.rows + w.cols));
  for (auto& x : w.data) x = (T(2) * uniform01<T>(rng) - T(1)) * limit;
}

}  // namespace detail

template <typename T>
struct Model {
  ModelConfig config;
  ProjectorParams<T> text_proj;
  ProjectorParams<T> image_proj;
  ClassifierParams<T> cls;

  Model() = default;

  explicit Model(const ModelConfig& cfg)
      : config(cfg),
        text_proj(cfg.d_in, cfg.k),
        image_proj(cfg.d_in, cfg.k),
        cls(cfg.k, cfg.h) {
    std::mt19937_64 rng(cfg.seed);
    detail::glorot_init(text_proj.w1, rng);
    detail::glorot_init(text_proj.w2, rng);
    detail::glorot_init(image_proj.w1, rng);
    detail::glorot_init(image_proj.w2, rng);
    detail::glorot_init(cls.w5, rng);
    detail::glorot_init(cls.w6, rng);
    // biases stay zero
  }

  std::vector<ParamRef<T>> param_refs() {
    return {
        {"text_proj.w1", "projector", &text_proj.w1},
        {"text_proj.b1", "projector", &text_proj.b1},
        {"text_proj.w2", "projector", &text_proj.w2},
        {"text_proj.b2", "projector", &text_proj.b2},
        {"image_proj.w1", "projector", &image_proj.w1},
        {"image_proj.b1", "projector", &image_proj.b1},
        {"image_proj.w2", "projector", &image_proj.w2},
        {"image_proj.b2", "projector", &image_proj.b2},
        {"cls.w5", "classifier", &cls.w5},
        {"cls.b5", "classifier", &cls.b5},
        {"cls.w6", "classifier", &cls.w6},
        {"cls.b6", "classifier", &cls.b6},
    };
  }

  template <typename U>
  Model<U> cast() const {
    Model<U> out;
    out.config = config;
    out.text_proj.w1 = text_proj.w1.template cast<U>();
    out.text_proj.b1 = text_proj.b1.template cast<U>();
    out.text_proj.w2 = text_proj.w2.template cast<U>();
    out.text_proj.b2 = text_proj.b2.template cast<U>();
    out.image_proj.w1 = image_proj.w1.template cast<U>();
    out.image_proj.b1 = image_proj.b1.template cast<U>();
    out.image_proj.w2 = image_proj.w2.template cast<U>();
    out.image_proj.b2 = image_proj.b2.template cast<U>();
    out.cls.w5 = cls.w5.template cast<U>();
    out.cls.b5 = cls.b5.template cast<U>();
    out.cls.w6 = cls.w6.template cast<U>();
    out.cls.b6 = cls.b6.template cast<U>();
    return out;
  }
};

namespace detail {

template <typename T>
struct ProjectorNodes {
  NodeId w1, b1, w2, b2;
};

template <typename T>
ProjectorNodes<T> projector_leaves(Graph<T>& g, ProjectorParams<T>& p) {
  return {g.leaf(p.w1, true), g.leaf(p.b1, true), g.leaf(p.w2, true),
          g.leaf(p.b2, true)};
}

}  // namespace detail

/// Projector forward on graph nodes. Dropout (inverted, rate from cfg) hits
/// the gelu branch between the two linear layers; the residual path is clean.
template <typename T>
NodeId project_nodes(Graph<T>& g, const detail::ProjectorNodes<T>& p, NodeId x,
                     T dropout_rate, bool dropout_on, std::mt19937_64& rng) {
  NodeId z = g.add_rowvec(g.matmul(x, p.w1), p.b1);
  NodeId branch = g.gelu(z);
  if (dropout_on && dropout_rate > T(0)) {
    const auto& zv = g.value(z);
    branch = g.dropout(branch, Graph<T>::make_dropout_mask(
                                   zv.rows, zv.cols, dropout_rate, rng));
  }
  return g.add_rowvec(g.add(g.matmul(branch, p.w2), z), p.b2);
}

/// Value-level projector (same computation as above), used by tests and eval.
template <typename T>
Tensor2<T> project(ProjectorParams<T>& p, const Tensor2<T>& x,
                   bool dropout_on, T dropout_rate, std::mt19937_64& rng) {
  if (x.cols != p.w1.rows)
    throw ShapeError("project: input " + x.shape_str() + " vs w1 " +
                     p.w1.shape_str());
  Graph<T> g;
  auto nodes = detail::projector_leaves(g, p);
  return g.value(project_nodes(g, nodes, g.leaf(x), dropout_rate, dropout_on,
                               rng));
}

namespace detail {

template <typename T>
struct ClassifierNodes {
  NodeId w5, b5, w6, b6;
};

template <typename T>
ClassifierNodes<T> classifier_leaves(Graph<T>& g, ClassifierParams<T>& p) {
  return {g.leaf(p.w5, true), g.leaf(p.b5, true), g.leaf(p.w6, true),
          g.leaf(p.b6, true)};
}

template <typename T>
NodeId classify_nodes(Graph<T>& g, const ClassifierNodes<T>& p, NodeId f_t,
                      NodeId f_i) {
  NodeId f_c = g.concat_cols(f_t, f_i);
  NodeId hidden = g.gelu(g.add_rowvec(g.matmul(f_c, p.w5), p.b5));
  return g.softmax_rows(g.add_rowvec(g.matmul(hidden, p.w6), p.b6));
}

}  // namespace detail

/// Fusion classifier over projected features; absent-modality blocks are
/// zero-filled by the caller. Output rows are [real, fake] probabilities.
template <typename T>
Tensor2<T> classify(const Tensor2<T>& f_t, const Tensor2<T>& f_i,
                    ClassifierParams<T>& p) {
  if (f_t.rows != f_i.rows)
    throw ShapeError("classify: batch sizes " + f_t.shape_str() + " vs " +
                     f_i.shape_str());
  Graph<T> g;
  auto nodes = detail::classifier_leaves(g, p);
  return g.value(
      detail::classify_nodes(g, nodes, g.leaf(f_t), g.leaf(f_i)));
}

/// Weighted classification loss on plain values (class-indexed CE).
template <typename T>
T classification_loss(const Tensor2<T>& probs, const std::vector<int>& labels,
                      const ClassWeights<T>& cw) {
  Graph<T> g;
  return g.value(g.weighted_nll(g.leaf(probs), labels, cw.w)).data[0];
}

template <typename T>
struct ForwardResult {
  LossBreakdown<T> loss;
  Tensor2<T> probs;  // b x 2, rows [real, fake]
};

/// Full forward pass for one batch under the configured mode; when `grads` is
/// given, also runs backward and fills gradients keyed by parameter name.
template <typename T>
ForwardResult<T> forward_loss(Model<T>& m, const Batch<T>& batch,
                              const ClassWeights<T>& cw, bool dropout_on,
                              std::mt19937_64& rng,
                              std::map<std::string, Tensor2<T>>* grads =
                                  nullptr) {
  if (batch.labels.empty()) throw ContractError("forward_loss: empty batch");
  const std::size_t b = batch.labels.size();
  const Mode mode = m.config.mode;
  const bool use_text = mode != Mode::kImageOnly;
  const bool use_image = mode != Mode::kTextOnly;
  const T rate = T(m.config.dropout_rate);

  Graph<T> g;
  auto tp = detail::projector_leaves(g, m.text_proj);
  auto ip = detail::projector_leaves(g, m.image_proj);
  auto cp = detail::classifier_leaves(g, m.cls);

  NodeId zeros_k = -1;
  if (!use_text || !use_image)
    zeros_k = g.leaf(Tensor2<T>(b, m.config.k));

  NodeId f_t = use_text
                   ? project_nodes(g, tp, g.leaf(batch.text), rate, dropout_on,
                                   rng)
                   : zeros_k;
  NodeId f_i = use_image
                   ? project_nodes(g, ip, g.leaf(batch.image), rate,
                                   dropout_on, rng)
                   : zeros_k;

  NodeId probs = detail::classify_nodes(g, cp, f_t, f_i);
  NodeId l_c = g.weighted_nll(probs, batch.labels, cw.w);

  ForwardResult<T> out;
  out.loss.l_c = g.value(l_c).data[0];
  out.loss.alpha = cw.alpha;
  NodeId total = l_c;

  if (mode == Mode::kFusedS) {
    auto c = contrastive_loss_nodes(g, f_t, f_i);
    out.loss.l_t = g.value(c.l_t).data[0];
    out.loss.l_i = g.value(c.l_i).data[0];
    out.loss.l_s = g.value(c.l_s).data[0];
    total = g.add(l_c, g.scale(c.l_s, T(m.config.lambda)));
  }
  out.loss.total = g.value(total).data[0];
  out.probs = g.value(probs);

  if (grads) {
    g.backward(total);
    auto store = [&](const char* name, NodeId id) {
      (*grads)[name] = g.grad(id);
    };
    store("text_proj.w1", tp.w1);
    store("text_proj.b1", tp.b1);
    store("text_proj.w2", tp.w2);
    store("text_proj.b2", tp.b2);
    store("image_proj.w1", ip.w1);
    store("image_proj.b1", ip.b1);
    store("image_proj.w2", ip.w2);
    store("image_proj.b2", ip.b2);
    store("cls.w5", cp.w5);
    store("cls.b5", cp.b5);
    store("cls.w6", cp.w6);
    store("cls.b6", cp.b6);
  }
  return out;
}

}  // namespace fnr
