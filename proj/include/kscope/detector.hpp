#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "kscope/core.hpp"
#include "kscope/corruption.hpp"
#include "kscope/nn.hpp"

namespace kscope {

/// conv(2->c1, k) -> pool -> conv(c1->c2, k) -> pool -> dense(hidden) -> dense(1) -> sigmoid,
/// leaky ReLU after every layer but the last. Parameters are flattened layer by
/// layer, weights ([out][in][k] or [out][in]) before biases.
struct DetectorArch {
    Index input_length = 640;
    Index conv1_channels = 8;
    Index conv2_channels = 16;
    Index kernel = 9;
    Index pool = 4;
    Index hidden = 32;

    Index conv1_length() const { return input_length - kernel + 1; }
    Index pool1_length() const { return conv1_length() / pool; }
    Index conv2_length() const { return pool1_length() - kernel + 1; }
    Index pool2_length() const { return conv2_length() / pool; }
    Index flat_size() const { return conv2_channels * pool2_length(); }
    Index param_count() const;
    void validate() const;

    bool operator==(const DetectorArch&) const = default;
};

nlohmann::json to_json(const DetectorArch& a);
DetectorArch detector_arch_from_json(const nlohmann::json& j);

struct DetectorNet {
    DetectorArch arch;
    nn::Vec params;
};

/// He-uniform weights, zero biases.
DetectorNet make_detector(const DetectorArch& arch, std::uint64_t seed);

/// Zero-pads a readout symmetrically (extra zero at the end) or center-crops it.
std::vector<double> fit_readout(std::span<const float> line, Index length);

/// 2 x L network input: log1p(|k| / s) for both lines, s = 1e-3 * max |k_low|.
nn::Mat detector_features(std::span<const float> high, std::span<const float> low, Index length);

double detector_logit(const DetectorNet& net, const nn::Mat& features);
double detector_pair_score(const DetectorNet& net, std::span<const float> high, std::span<const float> low);
/// Mean pair score over the ACS lines.
double detector_forward(const DetectorNet& net, std::span<const float> high, std::span<const std::vector<float>> acs);

/// Adds weight * d BCE / d params to grad and returns weight * BCE.
double detector_loss_grad(const DetectorNet& net, const nn::Mat& features, double label, double weight, nn::Vec& grad);

struct DetectorHyper {
    int epochs = 20;
    Index batch = 64;
    double lr = 1e-3;
    int decay_every = 40;
    double decay = 0.1;
    bool class_weighting = true;
    std::uint64_t seed = 0;
};

struct DetectorEpoch {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

/// Adam on class-reweighted BCE. Deterministic given the seed and independent
/// of the thread count.
DetectorNet detector_train(const std::vector<LinePair>& train, const std::vector<LinePair>& val,
                           const DetectorHyper& hyper, const DetectorArch& arch = {},
                           std::vector<DetectorEpoch>* log = nullptr);

/// Unweighted mean BCE over pairs.
double detector_mean_loss(const DetectorNet& net, const std::vector<LinePair>& pairs);

void save_detector(const std::filesystem::path& path, const DetectorNet& net);
DetectorNet load_detector(const std::filesystem::path& path);

/// Sum over all lags of |(a * b)[lag]|, (a * b)[m] = sum_n conj(a[n]) b[n + m].
double cross_correlation_sum(std::span<const cdouble> a, std::span<const cdouble> b);

/// Mean over ACS lines of the observed-to-ground-truth ratio of summed
/// cross-correlation magnitude. Throws NumericalError on a zero denominator.
double baseline_score(std::span<const cdouble> observed, std::span<const std::vector<cdouble>> acs,
                      std::span<const cdouble> ground_truth);

struct LineScore {
    std::size_t slice = 0;
    Index column = 0;
    int label = 0;
    double score = 0.0;
};

/// Scores every acquired non-ACS line of every slice.
std::vector<LineScore> detector_line_scores(const DetectorNet& net, const std::vector<CorruptedSlice>& slices);
std::vector<LineScore> baseline_line_scores(const std::vector<CorruptedSlice>& slices);

}  // namespace kscope
