#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fnr/checkpoint.hpp"
#include "fnr/config.hpp"
#include "fnr/data.hpp"
#include "fnr/metrics.hpp"
#include "fnr/model.hpp"
#include "fnr/optimizer.hpp"

namespace fnr {

struct EpochLog {
  int epoch = 0;
  double l_t = 0, l_i = 0, l_s = 0, l_c = 0, total = 0;
  double val_total = 0;
  double lr_factor = 1.0;
};

struct TrainOutcome {
  Model<double> model;  // best-epoch snapshot
  std::vector<EpochLog> history;
  ClassWeights<double> class_weights;
  int best_epoch = 0;
  EvalReport test_report;
};

/// Deterministic evaluation: dropout off, fixed batch order. The similarity
/// term is skipped (it does not affect probabilities).
template <typename T>
EvalReport evaluate_model(Model<T>& model,
                          const std::vector<EmbeddingRecord>& records,
                          std::size_t batch_size) {
  if (records.empty()) throw DataError("evaluate_model: no records");
  if (records[0].text_embedding.size() != model.config.d_in)
    throw DataError("evaluate_model: dataset d_in " +
                    std::to_string(records[0].text_embedding.size()) +
                    " does not match checkpoint d_in " +
                    std::to_string(model.config.d_in));
  Mode saved = model.config.mode;
  if (saved == Mode::kFusedS) model.config.mode = Mode::kFusedWs;
  std::vector<int> labels, preds;
  std::vector<double> scores;
  std::mt19937_64 rng(0);
  ClassWeights<T> unweighted;
  for (auto& batch : make_batches<T>(records, batch_size, 0, false)) {
    auto res = forward_loss(model, batch, unweighted, false, rng);
    for (std::size_t i = 0; i < batch.labels.size(); ++i) {
      labels.push_back(batch.labels[i]);
      double p_fake = double(res.probs.at(i, 1));
      scores.push_back(p_fake);
      preds.push_back(p_fake > double(res.probs.at(i, 0)) ? 1 : 0);
    }
  }
  model.config.mode = saved;
  return evaluate(labels, preds, scores);
}

namespace detail {

template <typename T>
double mean_total_loss(Model<T>& model, const std::vector<Batch<T>>& batches,
                       const ClassWeights<T>& cw) {
  std::mt19937_64 rng(0);  // unused, dropout off
  double acc = 0;
  std::size_t n = 0;
  for (auto& batch : const_cast<std::vector<Batch<T>>&>(batches)) {
    auto res = forward_loss(model, batch, cw, false, rng);
    acc += double(res.loss.total) * double(batch.labels.size());
    n += batch.labels.size();
  }
  return acc / double(n);
}

}  // namespace detail

/// Full training run: stratified validation carve-out, AdamW with parameter
/// groups, reduce-on-plateau scheduling, early stopping with best-epoch
/// snapshot, final evaluation on the test split.
inline TrainOutcome train(const RunConfig& rc, const Dataset& ds) {
  auto train_records = split_records(ds, Split::kTrain);
  auto test_records = split_records(ds, Split::kTest);
  if (train_records.empty()) throw DataError("train: no training records");

  std::vector<int> train_labels;
  for (auto& r : train_records) train_labels.push_back(r.label);
  auto cw = compute_alpha<double>(train_labels);

  auto [fit_records, val_records] =
      split_validation(train_records, rc.val_fraction, rc.seed);
  auto val_batches = make_batches<double>(val_records, rc.batch_size, 0, false);

  Model<double> model(rc.model_config(ds.meta.d_in));
  AdamW<double> opt(model.param_refs(), rc.groups());
  PlateauScheduler scheduler(std::min(rc.classifier_lr, rc.projector_lr));
  EarlyStopper stopper;

  std::mt19937_64 dropout_rng(rc.seed ^ 0x9E3779B97F4A7C15ull);
  TrainOutcome out;
  out.class_weights = cw;
  Model<double> best = model;
  int best_epoch = 0;

  for (std::size_t epoch = 1; epoch <= rc.max_epochs; ++epoch) {
    auto batches =
        make_batches<double>(fit_records, rc.batch_size, rc.seed + epoch, true);
    EpochLog log;
    log.epoch = static_cast<int>(epoch);
    std::size_t seen = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      std::map<std::string, Tensor2<double>> grads;
      ForwardResult<double> res;
      try {
        res = forward_loss(model, batches[bi], cw, true, dropout_rng, &grads);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(bi) + ": " + e.what());
      }
      opt.step(grads, scheduler.factor());
      double w = double(batches[bi].labels.size());
      log.l_t += double(res.loss.l_t) * w;
      log.l_i += double(res.loss.l_i) * w;
      log.l_s += double(res.loss.l_s) * w;
      log.l_c += double(res.loss.l_c) * w;
      log.total += double(res.loss.total) * w;
      seen += batches[bi].labels.size();
    }
    log.l_t /= double(seen);
    log.l_i /= double(seen);
    log.l_s /= double(seen);
    log.l_c /= double(seen);
    log.total /= double(seen);

    log.val_total = detail::mean_total_loss(model, val_batches, cw);
    log.lr_factor = scheduler.update(log.val_total);
    bool stop = stopper.update(log.val_total);
    if (stopper.improved()) {
      best = model;
      best_epoch = static_cast<int>(epoch);
    }
    out.history.push_back(log);
    if (stop) break;
  }

  out.model = std::move(best);
  out.best_epoch = best_epoch;
  if (!test_records.empty())
    out.test_report = evaluate_model(out.model, test_records, rc.batch_size);
  return out;
}

/// Per-epoch loss log, one JSON record per line.
inline void write_loss_log(const std::filesystem::path& path,
                           const std::vector<EpochLog>& history) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& e : history) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["l_T"] = e.l_t;
    j["l_I"] = e.l_i;
    j["l_s"] = e.l_s;
    j["l_c"] = e.l_c;
    j["total"] = e.total;
    j["val_total"] = e.val_total;
    j["lr_factor"] = e.lr_factor;
    os << j.dump() << "\n";
  }
}

/// Writes the standard run artifacts into `dir`.
inline void write_run_outputs(const std::filesystem::path& dir,
                              const RunConfig& rc, TrainOutcome& outcome) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "resolved_config.txt");
    os << config_to_text(rc);
  }
  write_loss_log(dir / "loss_log.jsonl", outcome.history);
  save_checkpoint(dir / "checkpoint.fnrc", outcome.model);
  {
    std::ofstream os(dir / "eval_report.json");
    nlohmann::json j = report_to_json(outcome.test_report);
    j["best_epoch"] = outcome.best_epoch;
    j["alpha"] = outcome.class_weights.alpha;
    os << j.dump(2) << "\n";
  }
  {
    std::ofstream os(dir / "eval_report.txt");
    os << report_to_text(outcome.test_report);
  }
  write_roc_csv(outcome.test_report.roc, dir / "roc.csv");
}

}  // namespace fnr
