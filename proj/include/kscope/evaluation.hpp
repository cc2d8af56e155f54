#pragma once

#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

namespace kscope {

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;  // scores >= threshold are predicted positive
};

struct ClassifierReport {
    double threshold = 0.1;
    long tp = 0, fp = 0, tn = 0, fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f2 = 0.0;
    double auroc = 0.0;
    std::vector<RocPoint> roc;
};

/// F-beta from precision and recall; 0 when both are 0.
double f_beta(double precision, double recall, double beta);
inline double f2_score(double precision, double recall) { return f_beta(precision, recall, 2.0); }

/// ROC from (0,0) to (1,1), one point per distinct score.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);
double trapezoid_auc(std::span<const RocPoint> roc);

/// Labels are 0/1; positive prediction is score >= threshold. Throws
/// std::invalid_argument on length mismatch, non-binary labels or a
/// single-class label set (AUROC undefined).
ClassifierReport evaluate_classifier(std::span<const double> scores, std::span<const int> labels, double threshold);

nlohmann::json to_json(const ClassifierReport& r);

}  // namespace kscope
