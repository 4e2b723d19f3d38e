#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fnr/errors.hpp"

namespace fnr {

/// Binary confusion counts with fake (label 1) as the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

struct ClassMetrics {
  double precision = 0, recall = 0, f1 = 0;
  bool degenerate = false;  // a zero denominator was hit
};

struct RocPoint {
  double fpr = 0, tpr = 0;
};

struct EvalReport {
  ConfusionMatrix cm;
  double accuracy = 0;
  ClassMetrics fake, real;
  double micro_f1 = 0;
  double auc = 0;
  std::vector<RocPoint> roc;
};

inline ConfusionMatrix confusion(const std::vector<int>& labels,
                                 const std::vector<int>& predictions) {
  if (labels.size() != predictions.size())
    throw ContractError("confusion: " + std::to_string(labels.size()) +
                        " labels vs " + std::to_string(predictions.size()) +
                        " predictions");
  if (labels.empty()) throw ContractError("confusion: empty input");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int y = labels[i], p = predictions[i];
    if ((y != 0 && y != 1) || (p != 0 && p != 1))
      throw ContractError("confusion: entries must be in {0,1}");
    if (y == 1)
      (p == 1 ? cm.tp : cm.fn)++;
    else
      (p == 1 ? cm.fp : cm.tn)++;
  }
  return cm;
}

namespace detail {

inline ClassMetrics prf1_one(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassMetrics m;
  if (tp + fp == 0)
    m.degenerate = true;
  else
    m.precision = double(tp) / double(tp + fp);
  if (tp + fn == 0)
    m.degenerate = true;
  else
    m.recall = double(tp) / double(tp + fn);
  if (m.precision + m.recall == 0)
    m.degenerate = true;
  else
    m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

}  // namespace detail

/// Accuracy, per-class precision/recall/F1 and micro F1 from pooled counts.
/// Zero-denominator cases report 0 with the degenerate flag set.
inline EvalReport prf1(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ContractError("prf1: empty confusion matrix");
  EvalReport r;
  r.cm = cm;
  r.accuracy = double(cm.tp + cm.tn) / double(cm.total());
  r.fake = detail::prf1_one(cm.tp, cm.fp, cm.fn);
  // real as positive: tp'=tn, fp'=fn, fn'=fp
  r.real = detail::prf1_one(cm.tn, cm.fn, cm.fp);
  // micro F1 over pooled counts; equals accuracy for single-label binary data
  std::size_t pooled_tp = cm.tp + cm.tn;
  std::size_t pooled_fp = cm.fp + cm.fn;
  r.micro_f1 = double(pooled_tp) / double(pooled_tp + pooled_fp);
  return r;
}

/// AUC by the Mann-Whitney rank statistic (ties counted one half) plus the
/// swept ROC polyline with tie groups collapsed to single vertices.
inline std::pair<double, std::vector<RocPoint>> roc_auc(
    const std::vector<int>& labels, const std::vector<double>& scores) {
  if (labels.size() != scores.size())
    throw ContractError("roc_auc: size mismatch");
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(scores[i]))
      throw ContractError("roc_auc: non-finite score at index " +
                          std::to_string(i));
    (labels[i] == 1 ? pos : neg)++;
  }
  if (pos == 0 || neg == 0)
    throw ContractError("roc_auc: both classes must be present (" +
                        std::to_string(pos) + " fake, " + std::to_string(neg) +
                        " real)");

  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  // Sweep descending scores; each tie group contributes one ROC vertex and
  // pos_in_group * (neg_seen_before + neg_in_group / 2) concordant mass.
  std::vector<RocPoint> roc{{0.0, 0.0}};
  double concordant = 0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::size_t gp = 0, gn = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? gp : gn)++;
      ++j;
    }
    concordant += double(gp) * (double(neg - fp - gn) + double(gn) / 2.0);
    tp += gp;
    fp += gn;
    roc.push_back({double(fp) / double(neg), double(tp) / double(pos)});
    i = j;
  }
  return {concordant / (double(pos) * double(neg)), std::move(roc)};
}

/// Trapezoidal area under an ROC polyline; internal cross-check for the rank
/// statistic.
inline double trapezoid_area(const std::vector<RocPoint>& roc) {
  double area = 0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2;
  return area;
}

/// Full report from labels, hard predictions and fake-class scores.
inline EvalReport evaluate(const std::vector<int>& labels,
                           const std::vector<int>& predictions,
                           const std::vector<double>& scores) {
  EvalReport r = prf1(confusion(labels, predictions));
  auto [auc, roc] = roc_auc(labels, scores);
  r.auc = auc;
  r.roc = std::move(roc);
  return r;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["confusion"] = {{"tp", r.cm.tp}, {"fp", r.cm.fp}, {"tn", r.cm.tn},
                    {"fn", r.cm.fn}};
  j["accuracy"] = r.accuracy;
  auto cls = [](const ClassMetrics& m) {
    return nlohmann::json{{"precision", m.precision},
                          {"recall", m.recall},
                          {"f1", m.f1},
                          {"degenerate", m.degenerate}};
  };
  j["fake"] = cls(r.fake);
  j["real"] = cls(r.real);
  j["micro_f1"] = r.micro_f1;
  j["auc"] = r.auc;
  return j;
}

inline std::string report_to_text(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "confusion (fake positive): tp=" << r.cm.tp << " fp=" << r.cm.fp
     << " tn=" << r.cm.tn << " fn=" << r.cm.fn << "\n";
  os << "accuracy:  " << r.accuracy << "\n";
  auto line = [&](const char* name, const ClassMetrics& m) {
    os << name << " P=" << m.precision << " R=" << m.recall << " F1=" << m.f1
       << (m.degenerate ? "  (zero-denominator)" : "") << "\n";
  };
  line("fake:     ", r.fake);
  line("real:     ", r.real);
  os << "micro F1:  " << r.micro_f1 << "\n";
  os << "AUC:       " << r.auc << "\n";
  return os.str();
}

/// Two-column CSV with a "fpr,tpr" header, for external plotting.
inline void write_roc_csv(const std::vector<RocPoint>& roc,
                          const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "fpr,tpr\n";
  os << std::setprecision(17);
  for (const auto& p : roc) os << p.fpr << "," << p.tpr << "\n";
}

}  // namespace fnr
