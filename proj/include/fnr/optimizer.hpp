#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fnr/errors.hpp"
#include "fnr/model.hpp"
#include "fnr/tensor.hpp"

namespace fnr {

struct ParamGroupConfig {
  std::string name;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Published classifier hyperparameters; projector values are exposed config.
inline ParamGroupConfig classifier_group_defaults() {
  return {"classifier", 0.005, 0.07};
}

inline ParamGroupConfig projector_group_defaults() {
  return {"projector", 1e-3, 1e-3};
}

/// AdamW over named parameter tensors. Weight decay is decoupled:
///   theta <- theta - lr*f*mhat/(sqrt(vhat)+eps) - lr*f*wd*theta.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<ParamRef<T>> params,
        std::vector<ParamGroupConfig> groups)
      : groups_(std::move(groups)) {
    for (auto& p : params) {
      Slot s;
      s.ref = p;
      s.group = -1;
      for (std::size_t gi = 0; gi < groups_.size(); ++gi)
        if (groups_[gi].name == p.group) s.group = static_cast<int>(gi);
      if (s.group < 0)
        throw ContractError("no optimizer group named '" + p.group + "'");
      s.m = Tensor2<T>(p.tensor->rows, p.tensor->cols);
      s.v = Tensor2<T>(p.tensor->rows, p.tensor->cols);
      slots_.push_back(std::move(s));
    }
  }

  std::uint64_t step_count() const { return step_; }

  /// One update over all parameters; `lr_scale` is the scheduler factor.
  void step(const std::map<std::string, Tensor2<T>>& grads, double lr_scale) {
    ++step_;
    for (auto& s : slots_) {
      auto it = grads.find(s.ref.name);
      if (it == grads.end())
        throw ContractError("missing gradient for '" + s.ref.name + "'");
      const Tensor2<T>& g = it->second;
      Tensor2<T>& theta = *s.ref.tensor;
      if (!g.same_shape(theta))
        throw ContractError("gradient shape " + g.shape_str() +
                            " mismatches parameter '" + s.ref.name + "' " +
                            theta.shape_str());
      const ParamGroupConfig& gc = groups_[s.group];
      const T lr = T(gc.lr) * T(lr_scale);
      const T b1 = T(gc.beta1), b2 = T(gc.beta2);
      const T bc1 = T(1) - std::pow(b1, T(step_));
      const T bc2 = T(1) - std::pow(b2, T(step_));
      for (std::size_t i = 0; i < theta.size(); ++i) {
        T gi = g.data[i];
        s.m.data[i] = b1 * s.m.data[i] + (T(1) - b1) * gi;
        s.v.data[i] = b2 * s.v.data[i] + (T(1) - b2) * gi * gi;
        T mhat = s.m.data[i] / bc1;
        T vhat = s.v.data[i] / bc2;
        T t0 = theta.data[i];
        theta.data[i] = t0 - lr * mhat / (std::sqrt(vhat) + T(gc.epsilon)) -
                        lr * T(gc.weight_decay) * t0;
      }
    }
  }

  // Moment access for checkpointing.
  struct MomentView {
    std::string name;
    Tensor2<T>* m;
    Tensor2<T>* v;
  };
  std::vector<MomentView> moments() {
    std::vector<MomentView> out;
    for (auto& s : slots_) out.push_back({s.ref.name, &s.m, &s.v});
    return out;
  }
  void set_step_count(std::uint64_t n) { step_ = n; }

 private:
  struct Slot {
    ParamRef<T> ref;
    int group;
    Tensor2<T> m, v;
  };
  std::vector<ParamGroupConfig> groups_;
  std::vector<Slot> slots_;
  std::uint64_t step_ = 0;
};

/// Reduce-on-plateau: halve the lr factor after `patience` consecutive epochs
/// without a >= threshold improvement in validation loss; floored so that
/// base_lr * factor never drops below min_lr.
class PlateauScheduler {
 public:
  PlateauScheduler(double min_base_lr, int patience = 5,
                   double threshold = 1e-4, double min_lr = 1e-6)
      : patience_(patience),
        threshold_(threshold),
        floor_(min_lr / min_base_lr) {}

  double factor() const { return factor_; }

  /// Call once per epoch after validation; returns the (possibly new) factor.
  double update(double val_loss) {
    if (std::isnan(val_loss))
      throw NumericError("scheduler_update: NaN validation loss");
    if (!seen_ || val_loss < best_ - threshold_) {
      best_ = val_loss;
      seen_ = true;
      bad_epochs_ = 0;
    } else if (++bad_epochs_ >= patience_) {
      factor_ = std::max(factor_ * 0.5, floor_);
      bad_epochs_ = 0;
    }
    return factor_;
  }

 private:
  int patience_;
  double threshold_;
  double floor_;
  double factor_ = 1.0;
  double best_ = 0.0;
  int bad_epochs_ = 0;
  bool seen_ = false;
};

/// Early stopping on validation loss: stop after `patience` epochs without a
/// >= threshold improvement. The caller keeps the best-epoch snapshot.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience = 10, double threshold = 1e-4)
      : patience_(patience), threshold_(threshold) {}

  /// Call once per epoch; returns true when training should stop.
  /// `improved()` right after reports whether this epoch is the new best.
  bool update(double val_loss) {
    if (std::isnan(val_loss))
      throw NumericError("early_stop_check: NaN validation loss");
    ++epoch_;
    if (!seen_ || val_loss < best_ - threshold_) {
      best_ = val_loss;
      best_epoch_ = epoch_;
      seen_ = true;
      bad_epochs_ = 0;
      improved_ = true;
      return false;
    }
    improved_ = false;
    return ++bad_epochs_ >= patience_;
  }

  bool improved() const { return improved_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  double threshold_;
  double best_ = 0.0;
  int best_epoch_ = 0;
  int epoch_ = 0;
  int bad_epochs_ = 0;
  bool seen_ = false;
  bool improved_ = false;
};

}  // namespace fnr
