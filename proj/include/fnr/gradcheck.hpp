#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fnr/errors.hpp"
#include "fnr/tensor.hpp"

namespace fnr {

/// One parameter tensor under check, with its analytic gradient.
template <typename T>
struct ParamCheck {
  std::string name;
  Tensor2<T>* param = nullptr;
  Tensor2<T> analytic;
};

template <typename T>
struct GradCheckWorst {
  std::string name;
  std::size_t index = 0;
  T analytic = 0;
  T numeric = 0;
  T rel_err = 0;
};

template <typename T>
struct GradCheckReport {
  GradCheckWorst<T> worst;                     // over all parameters
  std::vector<GradCheckWorst<T>> per_param;    // one row per tensor
  T tol = 0;

  bool passed() const { return worst.rel_err < tol; }
};

/// Central-difference check of analytic gradients: perturbs every entry of
/// every parameter by +-step, re-evaluates loss_fn, and compares against the
/// supplied analytic gradient. loss_fn must be deterministic (dropout off,
/// fixed batch); two baseline evaluations that differ are a contract error.
template <typename T>
GradCheckReport<T> finite_diff_check(const std::function<T()>& loss_fn,
                                     std::vector<ParamCheck<T>> params,
                                     T step, T tol) {
  T base = loss_fn();
  if (loss_fn() != base)
    throw ContractError(
        "finite_diff_check: loss_fn is non-deterministic (two evaluations "
        "differ)");

  GradCheckReport<T> report;
  report.tol = tol;
  for (auto& pc : params) {
    require_same_shape(*pc.param, pc.analytic, "finite_diff_check");
    GradCheckWorst<T> w;
    w.name = pc.name;
    for (std::size_t i = 0; i < pc.param->size(); ++i) {
      T saved = pc.param->data[i];
      pc.param->data[i] = saved + step;
      T up = loss_fn();
      pc.param->data[i] = saved - step;
      T down = loss_fn();
      pc.param->data[i] = saved;
      T numeric = (up - down) / (T(2) * step);
      T analytic = pc.analytic.data[i];
      T denom = std::max({std::abs(analytic), std::abs(numeric), T(1e-12)});
      T rel = std::abs(analytic - numeric) / denom;
      if (rel >= w.rel_err) {
        w.index = i;
        w.analytic = analytic;
        w.numeric = numeric;
        w.rel_err = rel;
      }
    }
    if (w.rel_err >= report.worst.rel_err) report.worst = w;
    report.per_param.push_back(std::move(w));
  }
  return report;
}

}  // namespace fnr
