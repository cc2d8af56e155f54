#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "kscope/core.hpp"
#include "kscope/nn.hpp"

namespace kscope {

/// Per-parameter diagonal Fisher values.
struct FisherDiagonal {
    nn::Vec values;
    std::string task;
    bool unit_trace = false;

    void validate() const;
};

/// Rescales to unit trace. Throws NumericalError when the trace is zero.
FisherDiagonal normalized(const FisherDiagonal& f);

inline constexpr double kLambdaInfinity = std::numeric_limits<double>::infinity();

/// Anchor parameters plus Fisher and weight for the consolidation penalty.
/// lambda == infinity means "do not train on the second task at all".
struct EwcAnchor {
    nn::Vec anchor;
    FisherDiagonal fisher;
    double lambda = 0.0;
};

/// (lambda / 2) sum_i F_i (theta_i - anchor_i)^2. Adds its gradient to grad
/// when grad is non-null. Throws std::invalid_argument for misaligned
/// vectors, negative lambda, or an infinite lambda.
double ewc_penalty(const nn::Vec& params, const EwcAnchor& anchor, nn::Vec* grad = nullptr);

/// 1 - SSIM plus the consolidation penalty.
double ewc_loss(double ssim_value, const nn::Vec& params, const EwcAnchor& anchor);

/// Computes one sample's loss gradient into grad (already sized and zeroed).
using SampleGradient = std::function<void(std::size_t sample, nn::Vec& grad)>;

/// Empirical Fisher: mean over samples of the squared per-sample loss gradient.
FisherDiagonal fisher_diagonal(std::size_t samples, Index param_count, const SampleGradient& gradient,
                               const std::string& task = {});

/// 1 - 1/2 sum_i (sqrt(Fa_i) - sqrt(Fb_i))^2 on unit-trace diagonals; raw
/// inputs are normalized first.
double fisher_overlap(const FisherDiagonal& a, const FisherDiagonal& b);

/// Named, disjoint parameter groups covering every parameter.
struct Partition {
    std::vector<std::string> names;
    std::vector<int> assignment;  // component index per parameter

    /// Throws std::invalid_argument unless every parameter has a valid component.
    void validate(Index param_count) const;
};

nlohmann::json to_json(const Partition& p);
/// {"components": {"name": [[begin, end), ...], ...}, "param_count": n}
Partition partition_from_json(const nlohmann::json& j);

struct ComponentOverlap {
    std::string name;
    double omega = 0.0;
};

/// Restricts both Fishers to each component, renormalizes, and computes the overlap.
std::vector<ComponentOverlap> fisher_overlap_by_component(const FisherDiagonal& a, const FisherDiagonal& b,
                                                          const Partition& partition);

}  // namespace kscope
