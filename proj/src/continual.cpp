#include "kscope/continual.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kscope/parallel.hpp"

namespace kscope {
using nn::Vec;

void FisherDiagonal::validate() const {
    if (!values.allFinite()) throw NumericalError("Fisher diagonal has non-finite entries");
    if ((values.array() < 0.0).any()) throw std::invalid_argument("Fisher diagonal has negative entries");
}

FisherDiagonal normalized(const FisherDiagonal& f) {
    f.validate();
    const double trace = f.values.sum();
    if (!(trace > 0.0)) throw NumericalError("Fisher diagonal is all zero; cannot normalize to unit trace");
    return {f.values / trace, f.task, true};
}

double ewc_penalty(const Vec& params, const EwcAnchor& anchor, Vec* grad) {
    if (anchor.anchor.size() != params.size() || anchor.fisher.values.size() != params.size())
        throw std::invalid_argument("ewc: parameters, anchor and Fisher must have equal length");
    if (!(anchor.lambda >= 0.0)) throw std::invalid_argument("ewc: lambda must be nonnegative");
    if (std::isinf(anchor.lambda)) throw std::invalid_argument("ewc: infinite lambda has no finite penalty");
    if (anchor.lambda == 0.0) return 0.0;
    const Vec d = params - anchor.anchor;
    if (grad) *grad += anchor.lambda * anchor.fisher.values.cwiseProduct(d);
    return 0.5 * anchor.lambda * anchor.fisher.values.dot(d.cwiseAbs2());
}

double ewc_loss(double ssim_value, const Vec& params, const EwcAnchor& anchor) {
    return 1.0 - ssim_value + ewc_penalty(params, anchor);
}

FisherDiagonal fisher_diagonal(std::size_t samples, Index param_count, const SampleGradient& gradient,
                               const std::string& task) {
    if (samples == 0) throw DataError("fisher_diagonal: empty sample set");
    constexpr std::size_t kChunk = 4;
    const std::size_t chunks = (samples + kChunk - 1) / kChunk;
    std::vector<Vec> partial(chunks, Vec::Zero(param_count));
    parallel_for(chunks, [&](std::size_t c) {
        Vec g(param_count);
        for (std::size_t i = c * kChunk; i < std::min(samples, (c + 1) * kChunk); ++i) {
            g.setZero();
            gradient(i, g);
            if (!g.allFinite()) throw NumericalError("fisher_diagonal: non-finite gradient for sample " + std::to_string(i));
            partial[c] += g.cwiseAbs2();
        }
    });
    FisherDiagonal f{Vec::Zero(param_count), task, false};
    for (const auto& p : partial) f.values += p;
    f.values /= static_cast<double>(samples);
    return f;
}

double fisher_overlap(const FisherDiagonal& a, const FisherDiagonal& b) {
    if (a.values.size() != b.values.size()) throw std::invalid_argument("fisher_overlap: Fisher lengths differ");
    const Vec fa = normalized(a).values, fb = normalized(b).values;
    const double d = (fa.cwiseSqrt() - fb.cwiseSqrt()).squaredNorm();
    return std::clamp(1.0 - 0.5 * d, 0.0, 1.0);
}

void Partition::validate(Index param_count) const {
    if (static_cast<Index>(assignment.size()) != param_count)
        throw std::invalid_argument("partition covers " + std::to_string(assignment.size()) + " parameters, model has " +
                                    std::to_string(param_count));
    for (int c : assignment)
        if (c < 0 || c >= static_cast<int>(names.size()))
            throw std::invalid_argument("partition assigns a parameter to no component");
}

nlohmann::json to_json(const Partition& p) {
    nlohmann::json comps = nlohmann::json::object();
    for (const auto& n : p.names) comps[n] = nlohmann::json::array();
    for (std::size_t i = 0; i < p.assignment.size();) {
        std::size_t j = i;
        while (j < p.assignment.size() && p.assignment[j] == p.assignment[i]) ++j;
        comps[p.names[static_cast<std::size_t>(p.assignment[i])]].push_back({i, j});
        i = j;
    }
    return {{"param_count", p.assignment.size()}, {"components", comps}};
}

Partition partition_from_json(const nlohmann::json& j) {
    Partition p;
    const auto n = j.at("param_count").get<std::size_t>();
    p.assignment.assign(n, -1);
    for (const auto& [name, ranges] : j.at("components").items()) {
        const int id = static_cast<int>(p.names.size());
        p.names.push_back(name);
        for (const auto& r : ranges) {
            const auto b = r.at(0).get<std::size_t>(), e = r.at(1).get<std::size_t>();
            if (b > e || e > n) throw std::invalid_argument("partition range out of bounds in component " + name);
            for (std::size_t i = b; i < e; ++i) {
                if (p.assignment[i] != -1) throw std::invalid_argument("partition components overlap at parameter " + std::to_string(i));
                p.assignment[i] = id;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (p.assignment[i] == -1) throw std::invalid_argument("partition does not cover parameter " + std::to_string(i));
    return p;
}

std::vector<ComponentOverlap> fisher_overlap_by_component(const FisherDiagonal& a, const FisherDiagonal& b,
                                                          const Partition& partition) {
    if (a.values.size() != b.values.size()) throw std::invalid_argument("fisher_overlap: Fisher lengths differ");
    partition.validate(a.values.size());
    std::vector<ComponentOverlap> out;
    for (std::size_t c = 0; c < partition.names.size(); ++c) {
        std::vector<double> va, vb;
        for (std::size_t i = 0; i < partition.assignment.size(); ++i)
            if (partition.assignment[i] == static_cast<int>(c)) {
                va.push_back(a.values[static_cast<Index>(i)]);
                vb.push_back(b.values[static_cast<Index>(i)]);
            }
        const FisherDiagonal ra{Eigen::Map<Vec>(va.data(), static_cast<Index>(va.size())), a.task, false};
        const FisherDiagonal rb{Eigen::Map<Vec>(vb.data(), static_cast<Index>(vb.size())), b.task, false};
        out.push_back({partition.names[c], fisher_overlap(ra, rb)});
    }
    return out;
}

}  // namespace kscope
