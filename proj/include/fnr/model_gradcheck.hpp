#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fnr/data.hpp"
#include "fnr/gradcheck.hpp"
#include "fnr/model.hpp"

namespace fnr {

/// Checks analytic gradients of the full combined loss (both projectors, the
/// classifier, classification + similarity terms) against central finite
/// differences in extended precision, dropout off.
///
/// `fault_param` (optional) perturbs that parameter's analytic gradient by
/// +10% so the detection path itself can be exercised.
inline GradCheckReport<long double> model_gradcheck(
    std::size_t b = 4, std::size_t d_in = 8, std::size_t k = 3,
    std::size_t h = 3, std::uint64_t seed = 2024,
    long double step = 1e-6L, long double tol = 1e-5L,
    const std::string& fault_param = "") {
  using T = long double;
  ModelConfig cfg;
  cfg.d_in = d_in;
  cfg.k = k;
  cfg.h = h;
  cfg.dropout_rate = 0.0;
  cfg.lambda = 1.0;
  cfg.mode = Mode::kFusedS;
  cfg.seed = seed;
  Model<T> model(cfg);

  std::mt19937_64 data_rng(seed ^ 0xABCDEF);
  Batch<T> batch;
  batch.text = Tensor2<T>(b, d_in);
  batch.image = Tensor2<T>(b, d_in);
  for (auto& x : batch.text.data)
    x = T(2) * detail::uniform01<T>(data_rng) - T(1);
  for (auto& x : batch.image.data)
    x = T(2) * detail::uniform01<T>(data_rng) - T(1);
  // unbalanced labels so the alpha weighting participates
  batch.labels.assign(b, 1);
  batch.labels[0] = 0;
  auto cw = compute_alpha<T>(batch.labels);

  std::mt19937_64 unused_rng(0);
  auto loss_fn = [&]() -> T {
    return forward_loss(model, batch, cw, false, unused_rng).loss.total;
  };

  std::map<std::string, Tensor2<T>> grads;
  forward_loss(model, batch, cw, false, unused_rng, &grads);

  std::vector<ParamCheck<T>> checks;
  for (auto& ref : model.param_refs()) {
    Tensor2<T> analytic = grads.at(ref.name);
    if (ref.name == fault_param)
      for (auto& v : analytic.data) v *= T(1.1);
    checks.push_back({ref.name, ref.tensor, std::move(analytic)});
  }
  return finite_diff_check<T>(loss_fn, std::move(checks), step, tol);
}

}  // namespace fnr
