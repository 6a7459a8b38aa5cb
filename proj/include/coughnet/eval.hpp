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

#ifndef COUGHNET_EVAL_HPP_
#define COUGHNET_EVAL_HPP_

#include <Eigen/Core>
#include <string>
#include <vector>

namespace coughnet {

// Threshold-swept operating points, FPR non-decreasing, anchored at (0, 0)
// (threshold +inf) and reaching (1, 1) at the smallest score.
struct RocCurve {
  std::vector<double> fpr;
  std::vector<double> tpr;
  std::vector<double> thresholds;
};

// Counts are integral per fold; averaging across folds yields reals.
struct ConfusionMatrix {
  double tp = 0, fp = 0, tn = 0, fn = 0;
};

struct EvalReport {
  RocCurve roc;
  double auc = 0.0;
  double accuracy = 0.0;      // at the 0.5 probability threshold
  double threshold_80 = 0.0;  // largest threshold with TPR >= 0.80
  ConfusionMatrix confusion;  // at threshold_80
};

struct AggregateReport {
  double mean_auc = 0.0, sd_auc = 0.0;
  double mean_accuracy = 0.0, sd_accuracy = 0.0;
  ConfusionMatrix mean_confusion;
};

// Sweeps the distinct score values in decreasing order, predicting positive
// where score >= threshold; tied scores collapse to one point. Throws
// OneClassOnly unless both classes are present.
RocCurve roc_curve(const Eigen::VectorXd& scores, const std::vector<int>& labels);

// Trapezoidal area under the curve. Equals the Mann-Whitney pair statistic
// (ties credited 0.5), which the test suite enforces to 1e-12.
double auc(const RocCurve& curve);

struct SensitivityPoint {
  double threshold = 0.0;
  ConfusionMatrix matrix;
};

// Largest threshold whose TPR meets the target; maximal specificity among
// qualifying operating points. The achieved TPR may exceed the target when
// the positive count makes it unattainable exactly.
SensitivityPoint confusion_at_sensitivity(const Eigen::VectorXd& scores,
                                          const std::vector<int>& labels,
                                          double target_tpr = 0.80);

// Full per-fold report: ROC, AUC, accuracy at 0.5, and the sensitivity-
// anchored confusion matrix.
EvalReport evaluate_scores(const Eigen::VectorXd& scores,
                           const std::vector<int>& labels,
                           double target_tpr = 0.80);

// Element-wise mean confusion plus mean / sample standard deviation of
// accuracy and AUC across folds.
AggregateReport average_reports(const std::vector<EvalReport>& per_fold);

// Report JSON: per-fold {auc, accuracy, threshold_80, confusion, roc} and
// aggregate {mean_auc, sd_auc, mean_accuracy, sd_accuracy, mean_confusion}.
std::string report_json(const std::vector<EvalReport>& per_fold,
                        const AggregateReport& aggregate);

// Plot-data export: one CSV per fold with columns fpr,tpr,threshold.
void write_roc_csv(const std::string& path, const RocCurve& curve);

}  // namespace coughnet

#endif  // COUGHNET_EVAL_HPP_
