#include "kscope/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace kscope {

double f_beta(double precision, double recall, double beta) {
    const double b2 = beta * beta;
    const double den = b2 * precision + recall;
    return den > 0.0 ? (1.0 + b2) * precision * recall / den : 0.0;
}

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("classifier: scores and labels differ in length");
    for (int l : labels)
        if (l != 0 && l != 1) throw std::invalid_argument("classifier: labels must be 0 or 1");
    for (double s : scores)
        if (!std::isfinite(s)) throw std::invalid_argument("classifier: non-finite score");
}

}  // namespace

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels);
    const auto pos = std::count(labels.begin(), labels.end(), 1);
    const auto neg = static_cast<long>(labels.size()) - pos;
    if (pos == 0 || neg == 0) throw std::invalid_argument("classifier: AUROC undefined for a single-class label set");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::vector<RocPoint> roc{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
    long tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? tp : fp)++;
        roc.push_back({static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos), s});
    }
    return roc;
}

double trapezoid_auc(std::span<const RocPoint> roc) {
    double a = 0.0;
    for (std::size_t i = 1; i < roc.size(); ++i)
        a += (roc[i].fpr - roc[i - 1].fpr) * 0.5 * (roc[i].tpr + roc[i - 1].tpr);
    return a;
}

ClassifierReport evaluate_classifier(std::span<const double> scores, std::span<const int> labels, double threshold) {
    ClassifierReport r;
    r.threshold = threshold;
    r.roc = roc_curve(scores, labels);
    r.auroc = trapezoid_auc(r.roc);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        if (labels[i]) (predicted ? r.tp : r.fn)++;
        else (predicted ? r.fp : r.tn)++;
    }
    r.precision = r.tp + r.fp > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
    r.recall = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
    r.f2 = f2_score(r.precision, r.recall);
    return r;
}

nlohmann::json to_json(const ClassifierReport& r) {
    nlohmann::json roc = nlohmann::json::array();
    for (const auto& p : r.roc) roc.push_back({p.fpr, p.tpr});
    return {{"threshold", r.threshold},
            {"confusion", {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}}},
            {"precision", r.precision},
            {"recall", r.recall},
            {"f2", r.f2},
            {"auroc", r.auroc},
            {"roc", roc}};
}

}  // namespace kscope
