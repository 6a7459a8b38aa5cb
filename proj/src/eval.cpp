/* Copyright 2026 The Coughnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "coughnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "coughnet/errors.hpp"

namespace coughnet {

namespace {

using json = nlohmann::json;

void validate_inputs(const Eigen::VectorXd& scores, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(scores.size()) != labels.size()) {
    throw ShapeMismatch("evaluation: scores and labels differ in length");
  }
  long positives = 0, negatives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw LabelOutOfDomain("evaluation: labels must be 0 or 1");
    (y == 1 ? positives : negatives) += 1;
  }
  if (positives == 0 || negatives == 0) {
    throw OneClassOnly("evaluation: both classes must be present");
  }
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw DomainError("evaluation: non-finite score");
  }
}

// Indices sorted by descending score.
std::vector<Eigen::Index> descending_order(const Eigen::VectorXd& scores) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&scores](Eigen::Index a, Eigen::Index b) {
    return scores[a] > scores[b];
  });
  return order;
}

}  // namespace

RocCurve roc_curve(const Eigen::VectorXd& scores, const std::vector<int>& labels) {
  validate_inputs(scores, labels);
  const auto order = descending_order(scores);
  double total_pos = 0, total_neg = 0;
  for (int y : labels) (y == 1 ? total_pos : total_neg) += 1;

  RocCurve curve;
  curve.fpr.push_back(0.0);
  curve.tpr.push_back(0.0);
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());

  double tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double threshold = scores[order[i]];
    // Consume the whole tie group at this threshold.
    while (i < order.size() && scores[order[i]] == threshold) {
      (labels[static_cast<std::size_t>(order[i])] == 1 ? tp : fp) += 1;
      ++i;
    }
    curve.fpr.push_back(fp / total_neg);
    curve.tpr.push_back(tp / total_pos);
    curve.thresholds.push_back(threshold);
  }
  return curve;
}

double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.fpr.size(); ++i) {
    area += (curve.fpr[i] - curve.fpr[i - 1]) * (curve.tpr[i] + curve.tpr[i - 1]) / 2.0;
  }
  return area;
}

SensitivityPoint confusion_at_sensitivity(const Eigen::VectorXd& scores,
                                          const std::vector<int>& labels,
                                          double target_tpr) {
  validate_inputs(scores, labels);
  const auto order = descending_order(scores);
  double total_pos = 0, total_neg = 0;
  for (int y : labels) (y == 1 ? total_pos : total_neg) += 1;

  double tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      (labels[static_cast<std::size_t>(order[i])] == 1 ? tp : fp) += 1;
      ++i;
    }
    if (tp / total_pos >= target_tpr) {
      SensitivityPoint p;
      p.threshold = threshold;
      p.matrix.tp = tp;
      p.matrix.fp = fp;
      p.matrix.fn = total_pos - tp;
      p.matrix.tn = total_neg - fp;
      return p;
    }
  }
  // Unreachable: the smallest threshold always yields TPR == 1.
  throw Error("confusion_at_sensitivity: no qualifying threshold");
}

EvalReport evaluate_scores(const Eigen::VectorXd& scores,
                           const std::vector<int>& labels, double target_tpr) {
  EvalReport report;
  report.roc = roc_curve(scores, labels);
  report.auc = auc(report.roc);

  double correct = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const int predicted = scores[i] >= 0.5 ? 1 : 0;
    if (predicted == labels[static_cast<std::size_t>(i)]) correct += 1;
  }
  report.accuracy = correct / static_cast<double>(scores.size());

  const SensitivityPoint point = confusion_at_sensitivity(scores, labels, target_tpr);
  report.threshold_80 = point.threshold;
  report.confusion = point.matrix;
  return report;
}

AggregateReport average_reports(const std::vector<EvalReport>& per_fold) {
  if (per_fold.empty()) throw DomainError("average_reports: no reports");
  const auto n = static_cast<double>(per_fold.size());

  AggregateReport agg;
  for (const EvalReport& r : per_fold) {
    agg.mean_auc += r.auc;
    agg.mean_accuracy += r.accuracy;
    agg.mean_confusion.tp += r.confusion.tp;
    agg.mean_confusion.fp += r.confusion.fp;
    agg.mean_confusion.tn += r.confusion.tn;
    agg.mean_confusion.fn += r.confusion.fn;
  }
  agg.mean_auc /= n;
  agg.mean_accuracy /= n;
  agg.mean_confusion.tp /= n;
  agg.mean_confusion.fp /= n;
  agg.mean_confusion.tn /= n;
  agg.mean_confusion.fn /= n;

  if (per_fold.size() > 1) {
    double ss_auc = 0, ss_acc = 0;
    for (const EvalReport& r : per_fold) {
      ss_auc += (r.auc - agg.mean_auc) * (r.auc - agg.mean_auc);
      ss_acc += (r.accuracy - agg.mean_accuracy) * (r.accuracy - agg.mean_accuracy);
    }
    agg.sd_auc = std::sqrt(ss_auc / (n - 1.0));
    agg.sd_accuracy = std::sqrt(ss_acc / (n - 1.0));
  }
  return agg;
}

namespace {

json confusion_json(const ConfusionMatrix& m) {
  return {{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}};
}

}  // namespace

std::string report_json(const std::vector<EvalReport>& per_fold,
                        const AggregateReport& aggregate) {
  json folds = json::array();
  for (const EvalReport& r : per_fold) {
    json roc = json::array();
    for (std::size_t i = 0; i < r.roc.fpr.size(); ++i) {
      roc.push_back({r.roc.fpr[i], r.roc.tpr[i]});
    }
    folds.push_back({{"auc", r.auc},
                     {"accuracy", r.accuracy},
                     {"threshold_80", r.threshold_80},
                     {"confusion", confusion_json(r.confusion)},
                     {"roc", roc}});
  }
  json doc;
  doc["folds"] = folds;
  doc["aggregate"] = {{"mean_auc", aggregate.mean_auc},
                      {"sd_auc", aggregate.sd_auc},
                      {"mean_accuracy", aggregate.mean_accuracy},
                      {"sd_accuracy", aggregate.sd_accuracy},
                      {"mean_confusion", confusion_json(aggregate.mean_confusion)}};
  return doc.dump(2) + "\n";
}

void write_roc_csv(const std::string& path, const RocCurve& curve) {
  std::ofstream os(path);
  if (!os) throw IoError(path + ": cannot open for writing");
  os << "fpr,tpr,threshold\n";
  os.precision(17);
  for (std::size_t i = 0; i < curve.fpr.size(); ++i) {
    os << curve.fpr[i] << ',' << curve.tpr[i] << ',' << curve.thresholds[i] << '\n';
  }
  if (!os) throw IoError(path + ": short write");
}

}  // namespace coughnet
