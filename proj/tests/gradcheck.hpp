#pragma once

// Central-difference checks of the two hand-written backward passes on small
// random instances. Each returns the largest per-parameter relative error.

#include <random>

#include "kscope/detector.hpp"
#include "kscope/fft.hpp"
#include "kscope/metrics.hpp"
#include "kscope/recon.hpp"
#include "kscope/sampling.hpp"
#include "oracles.hpp"

namespace gradcheck {

inline double detector_bce(std::uint64_t seed) {
    using namespace kscope;
    std::mt19937_64 rng(seed);
    DetectorArch a;
    a.input_length = 40;
    a.conv1_channels = 3;
    a.conv2_channels = 4;
    a.kernel = 5;
    a.pool = 2;
    a.hidden = 6;
    auto net = make_detector(a, seed);
    std::normal_distribution<double> g(0.0, 0.1);
    for (Index i = 0; i < net.params.size(); ++i) net.params[i] += g(rng);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    nn::Mat x(2, a.input_length);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
    const double y = static_cast<double>(seed % 2);
    nn::Vec grad = nn::Vec::Zero(net.params.size());
    detector_loss_grad(net, x, y, 1.0, grad);
    double worst = 0.0;
    const double h = 1e-4;
    for (Index i = 0; i < net.params.size(); ++i) {
        const double keep = net.params[i];
        net.params[i] = keep + h;
        const double up = nn::bce_with_logits(detector_logit(net, x), y);
        net.params[i] = keep - h;
        const double dn = nn::bce_with_logits(detector_logit(net, x), y);
        net.params[i] = keep;
        worst = std::max(worst, oracle::rel_err(grad[i], (up - dn) / (2 * h), 1e-7));
    }
    return worst;
}

inline double varnet_ssim(std::uint64_t seed) {
    using namespace kscope;
    std::mt19937_64 rng(seed);
    const Index n = 12;
    KSpaceSlice ks(2, n, n);
    // Smooth-ish random images so the target has structure.
    for (auto& c : ks.coils) {
        ComplexImage img = oracle::random_complex(n, n, rng);
        img += 2.0;
        c = dft2(img).cast<cfloat>();
    }
    VarNetArch a;
    a.cascades = 2;
    a.channels = 3;
    a.kernel = 3;
    auto net = make_varnet(a, seed);
    std::normal_distribution<double> g(0.0, 0.05);
    for (Index i = 0; i < net.params.size(); ++i) net.params[i] += g(rng);
    const auto mask = equispaced_mask(n, 2.0, 0.17);
    const RealImage target = target_image(ks);
    nn::Vec grad = nn::Vec::Zero(net.params.size());
    varnet_loss_grad(net, ks, mask, target, grad);
    auto loss = [&] { return 1.0 - ssim(minivarnet_forward(net, ks, mask), target); };
    double worst = 0.0;
    const double h = 1e-6;
    for (Index i = 0; i < net.params.size(); ++i) {
        const double keep = net.params[i];
        net.params[i] = keep + h;
        const double up = loss();
        net.params[i] = keep - h;
        const double dn = loss();
        net.params[i] = keep;
        worst = std::max(worst, oracle::rel_err(grad[i], (up - dn) / (2 * h), 1e-6));
    }
    return worst;
}

}  // namespace gradcheck
