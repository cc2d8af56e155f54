#include "kscope/recon.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "kscope/fft.hpp"
#include "kscope/image.hpp"
#include "kscope/parallel.hpp"
#include "kscope/phantom.hpp"

namespace kscope {
using nn::Mat;
using nn::Vec;

RealImage crop_to(const RealImage& img, CropSize crop) {
    const Index h = crop.height > 0 ? crop.height : img.rows();
    const Index w = crop.width > 0 ? crop.width : img.cols();
    return center_crop(img, h, w);
}

RealImage zero_filled(const KSpaceSlice& ks, const SamplingMask& mask, CropSize crop) {
    return crop_to(rss_combine(apply_mask(ks, mask)), crop);
}

RealImage target_image(const KSpaceSlice& ks, CropSize crop) { return crop_to(rss_combine(ks), crop); }

// ---------------------------------------------------------------------------
// Architecture

namespace {

struct ConvLayout {
    Index in, out, w, b;  // channel counts and offsets within a cascade
};

std::array<ConvLayout, 3> conv_layout(const VarNetArch& a) {
    const Index k2 = a.kernel * a.kernel;
    std::array<ConvLayout, 3> l{};
    const Index ins[3] = {2, a.channels, a.channels};
    const Index outs[3] = {a.channels, a.channels, 2};
    Index at = 1;  // offset 0 is eta
    for (int i = 0; i < 3; ++i) {
        l[i].in = ins[i];
        l[i].out = outs[i];
        l[i].w = at;
        at += outs[i] * ins[i] * k2;
        l[i].b = at;
        at += outs[i];
    }
    return l;
}

}  // namespace

Index VarNetArch::cascade_size() const {
    const auto l = conv_layout(*this);
    return l[2].b + l[2].out;
}

void VarNetArch::validate() const {
    if (cascades < 1) throw std::invalid_argument("varnet: at least one cascade required");
    if (channels < 1) throw std::invalid_argument("varnet: channel count must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("varnet: kernel must be odd and positive");
}

nlohmann::json to_json(const VarNetArch& a) {
    return {{"model", "minivarnet"}, {"cascades", a.cascades}, {"channels", a.channels}, {"kernel", a.kernel}};
}

VarNetArch varnet_arch_from_json(const nlohmann::json& j) {
    if (j.value("model", std::string{}) != "minivarnet") throw DataError("weight file does not hold a MiniVarNet");
    VarNetArch a;
    a.cascades = j.at("cascades").get<int>();
    a.channels = j.at("channels").get<Index>();
    a.kernel = j.at("kernel").get<Index>();
    a.validate();
    return a;
}

MiniVarNet make_varnet(const VarNetArch& arch, std::uint64_t seed) {
    arch.validate();
    MiniVarNet net{arch, Vec::Zero(arch.param_count())};
    const auto l = conv_layout(arch);
    const Index k2 = arch.kernel * arch.kernel;
    for (int t = 0; t < arch.cascades; ++t) {
        double* p = net.params.data() + arch.eta_index(t);
        p[0] = 1.0;
        for (int i = 0; i < 3; ++i) {
            const Index n = l[i].out * l[i].in * k2;
            nn::he_uniform(p + l[i].w, n, l[i].in * k2, split_seed(seed, static_cast<std::uint64_t>(3 * t + i)));
            if (i == 2) Eigen::Map<Vec>(p + l[i].w, n) *= 0.1;
        }
    }
    return net;
}

Partition varnet_partition(const VarNetArch& arch) {
    Partition p;
    p.names = {"data_consistency", "refinement"};
    p.assignment.assign(static_cast<std::size_t>(arch.param_count()), 1);
    for (int t = 0; t < arch.cascades; ++t) p.assignment[static_cast<std::size_t>(arch.eta_index(t))] = 0;
    return p;
}

void save_varnet(const std::filesystem::path& path, const MiniVarNet& net) {
    nn::write_weights(path, to_json(net.arch), net.params);
}

MiniVarNet load_varnet(const std::filesystem::path& path) {
    auto wf = nn::read_weights(path);
    MiniVarNet net{varnet_arch_from_json(wf.arch), std::move(wf.params)};
    if (net.params.size() != net.arch.param_count()) throw DataError("MiniVarNet weight count does not match architecture");
    return net;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

using Coils = std::vector<ComplexImage>;

struct CascadeTape {
    Coils k;       // input k-space of this cascade
    Mat x;         // normalized 2-channel CNN input
    Mat h1, a1, h2, a2;
};

struct Problem {
    Coils k0;
    Coils maps;
    std::vector<double> column_mask;  // 1 for acquired columns
    double scale = 1.0;
    Index h = 0, w = 0;
};

Problem make_problem(const KSpaceSlice& ks, const SamplingMask& mask) {
    if (mask.width() != ks.width()) throw std::invalid_argument("varnet: mask width does not match k-space");
    Problem p;
    p.h = ks.height();
    p.w = ks.width();
    p.maps = coil_sensitivities(static_cast<int>(ks.num_coils()), p.h, p.w);
    p.column_mask.resize(static_cast<std::size_t>(p.w));
    for (Index c = 0; c < p.w; ++c) p.column_mask[static_cast<std::size_t>(c)] = mask.is_acquired(c) ? 1.0 : 0.0;
    for (Index c = 0; c < ks.num_coils(); ++c) {
        ComplexImage k = ks.coil(c).cast<cdouble>();
        for (Index col = 0; col < p.w; ++col)
            if (!mask.is_acquired(col)) k.col(col).setZero();
        p.k0.push_back(std::move(k));
    }
    ComplexImage z = ComplexImage::Zero(p.h, p.w);
    for (std::size_t c = 0; c < p.k0.size(); ++c) z += p.maps[c].conjugate() * idft2(p.k0[c]);
    const double m = z.abs().maxCoeff();
    p.scale = m > 0.0 ? m : 1.0;
    return p;
}

ComplexImage combine(const Coils& k, const Coils& maps) {
    ComplexImage z = ComplexImage::Zero(k.front().rows(), k.front().cols());
    for (std::size_t c = 0; c < k.size(); ++c) z += maps[c].conjugate() * idft2(k[c]);
    return z;
}

void mask_columns(ComplexImage& k, const std::vector<double>& m) {
    for (Index col = 0; col < k.cols(); ++col)
        if (m[static_cast<std::size_t>(col)] == 0.0) k.col(col).setZero();
}

Coils run_cascades(const MiniVarNet& net, const Problem& pb, std::vector<CascadeTape>* tape) {
    const auto& a = net.arch;
    const auto l = conv_layout(a);
    const Index hw = pb.h * pb.w;
    Coils k = pb.k0;
    for (int t = 0; t < a.cascades; ++t) {
        const double* p = net.params.data() + a.eta_index(t);
        const double eta = p[0];
        const ComplexImage z = combine(k, pb.maps);
        Mat x(2, hw);
        for (Index i = 0; i < hw; ++i) {
            x(0, i) = z.data()[i].real() / pb.scale;
            x(1, i) = z.data()[i].imag() / pb.scale;
        }
        Mat h1 = nn::conv2d_forward(x, pb.h, pb.w, p + l[0].w, p + l[0].b, l[0].out, a.kernel);
        Mat a1 = h1;
        nn::leaky_relu_inplace(a1);
        Mat h2 = nn::conv2d_forward(a1, pb.h, pb.w, p + l[1].w, p + l[1].b, l[1].out, a.kernel);
        Mat a2 = h2;
        nn::leaky_relu_inplace(a2);
        const Mat h3 = nn::conv2d_forward(a2, pb.h, pb.w, p + l[2].w, p + l[2].b, l[2].out, a.kernel);
        ComplexImage r(pb.h, pb.w);
        for (Index i = 0; i < hw; ++i) r.data()[i] = pb.scale * cdouble(h3(0, i), h3(1, i));

        Coils next(k.size());
        for (std::size_t c = 0; c < k.size(); ++c) {
            ComplexImage dc = k[c] - pb.k0[c];
            mask_columns(dc, pb.column_mask);
            next[c] = k[c] - eta * dc + dft2(ComplexImage(pb.maps[c] * r));
        }
        if (tape) tape->push_back({std::move(k), std::move(x), std::move(h1), std::move(a1), std::move(h2), std::move(a2)});
        k = std::move(next);
    }
    return k;
}

}  // namespace

std::vector<ComplexImage> varnet_kspace(const MiniVarNet& net, const KSpaceSlice& ks, const SamplingMask& mask) {
    return run_cascades(net, make_problem(ks, mask), nullptr);
}

RealImage minivarnet_forward(const MiniVarNet& net, const KSpaceSlice& ks, const SamplingMask& mask, CropSize crop) {
    const auto k = varnet_kspace(net, ks, mask);
    Coils images;
    for (const auto& kc : k) images.push_back(idft2(kc));
    return crop_to(rss_combine(images), crop);
}

double varnet_loss_grad(const MiniVarNet& net, const KSpaceSlice& ks, const SamplingMask& mask, const RealImage& target,
                        Vec& grad, CropSize crop, double weight) {
    if (grad.size() != net.params.size()) throw std::invalid_argument("varnet: gradient size mismatch");
    const auto& a = net.arch;
    const auto l = conv_layout(a);
    const Problem pb = make_problem(ks, mask);
    std::vector<CascadeTape> tape;
    const Coils kT = run_cascades(net, pb, &tape);

    Coils u;
    for (const auto& kc : kT) u.push_back(idft2(kc));
    const RealImage y = rss_combine(u);
    const RealImage yc = crop_to(y, crop);
    RealImage gc;
    const double s = ssim_grad(yc, target, gc);
    const RealImage gy = center_pad(RealImage(-weight * gc), y.rows(), y.cols());

    Coils g(kT.size());
    for (std::size_t c = 0; c < kT.size(); ++c) {
        ComplexImage gu(pb.h, pb.w);
        for (Index i = 0; i < gu.size(); ++i) {
            const double yi = y.data()[i];
            gu.data()[i] = yi > 0.0 ? gy.data()[i] * u[c].data()[i] / yi : cdouble{};
        }
        g[c] = dft2(gu);
    }

    const Index hw = pb.h * pb.w;
    for (int t = a.cascades - 1; t >= 0; --t) {
        const auto& tp = tape[static_cast<std::size_t>(t)];
        const double* p = net.params.data() + a.eta_index(t);
        double* gp = grad.data() + a.eta_index(t);
        const double eta = p[0];

        double geta = 0.0;
        ComplexImage gr = ComplexImage::Zero(pb.h, pb.w);
        for (std::size_t c = 0; c < g.size(); ++c) {
            ComplexImage dc = tp.k[c] - pb.k0[c];
            mask_columns(dc, pb.column_mask);
            geta -= (g[c].conjugate() * dc).real().sum();
            gr += pb.maps[c].conjugate() * idft2(g[c]);
        }
        gp[0] += geta;

        Mat gh3(2, hw);
        for (Index i = 0; i < hw; ++i) {
            gh3(0, i) = pb.scale * gr.data()[i].real();
            gh3(1, i) = pb.scale * gr.data()[i].imag();
        }
        Mat ga2;
        nn::conv2d_backward(tp.a2, pb.h, pb.w, p + l[2].w, l[2].out, a.kernel, gh3, gp + l[2].w, gp + l[2].b, &ga2);
        nn::leaky_relu_backward(tp.h2, ga2);
        Mat ga1;
        nn::conv2d_backward(tp.a1, pb.h, pb.w, p + l[1].w, l[1].out, a.kernel, ga2, gp + l[1].w, gp + l[1].b, &ga1);
        nn::leaky_relu_backward(tp.h1, ga1);
        Mat gx;
        nn::conv2d_backward(tp.x, pb.h, pb.w, p + l[0].w, l[0].out, a.kernel, ga1, gp + l[0].w, gp + l[0].b, &gx);
        ComplexImage gz(pb.h, pb.w);
        for (Index i = 0; i < hw; ++i) gz.data()[i] = cdouble(gx(0, i), gx(1, i)) / pb.scale;

        for (std::size_t c = 0; c < g.size(); ++c) {
            ComplexImage mg = g[c];
            mask_columns(mg, pb.column_mask);
            g[c] = g[c] - eta * mg + dft2(ComplexImage(pb.maps[c] * gz));
        }
    }
    return 1.0 - s;
}

// ---------------------------------------------------------------------------
// Masks and training

void MaskPolicy::validate() const {
    if (kind != "variable" && kind != "fixed") throw std::invalid_argument("mask policy must be variable or fixed");
    if (kind == "fixed" && accelerations.empty()) throw std::invalid_argument("fixed mask policy needs accelerations");
    for (double a : accelerations)
        if (!(a >= 1.0)) throw std::invalid_argument("mask policy: acceleration must be >= 1");
    if (!(acs_fraction > 0.0 && acs_fraction <= 1.0)) throw std::invalid_argument("mask policy: bad acs fraction");
}

SamplingMask fixed_mask(Index width, double acceleration) {
    return equispaced_mask(width, acceleration, default_center_fraction(acceleration));
}

SamplingMask draw_mask(const MaskPolicy& policy, Index width, Rng& rng) {
    if (policy.kind == "variable") return sample_variable_mask(width, std::min(policy.min_lines, width), policy.acs_fraction, rng);
    std::uniform_int_distribution<std::size_t> pick(0, policy.accelerations.size() - 1);
    return fixed_mask(width, policy.accelerations[pick(rng)]);
}

MaskPolicy scaled_variable_policy(Index width, Index reference_min_lines, Index reference_width) {
    MaskPolicy p;
    p.kind = "variable";
    const Index scaled = round_half_up(static_cast<double>(reference_min_lines * width) / static_cast<double>(reference_width));
    p.min_lines = std::clamp(std::max(scaled, acs_block_size(width, p.acs_fraction)), Index{1}, width);
    return p;
}

MiniVarNet train_recon(MiniVarNet net, const std::vector<KSpaceSlice>& train, const MaskPolicy& policy,
                       const ReconHyper& hyper, const EwcAnchor* ewc, std::vector<ReconEpoch>* log,
                       const EpochHook& hook) {
    if (train.empty()) throw DataError("train_recon: empty training set");
    policy.validate();
    if (hyper.batch < 1 || hyper.epochs < 0) throw std::invalid_argument("train_recon: bad batch size or epoch count");
    if (ewc && std::isinf(ewc->lambda)) throw std::invalid_argument("train_recon: infinite lambda means no training");
    std::vector<RealImage> targets(train.size());
    parallel_for(train.size(), [&](std::size_t i) { targets[i] = target_image(train[i], hyper.crop); });

    nn::Adam adam;
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        const std::uint64_t epoch_seed = split_seed(hyper.seed, static_cast<std::uint64_t>(epoch));
        Rng shuffle_rng(split_seed(epoch_seed, 0xffff));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const double lr = nn::step_decay_lr(hyper.lr, epoch, hyper.decay_every, hyper.decay);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.batch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch));
            const auto n = end - start;
            std::vector<Vec> grads(n, Vec::Zero(net.params.size()));
            std::vector<double> losses(n);
            parallel_for(n, [&](std::size_t j) {
                const std::size_t idx = order[start + j];
                Rng mask_rng(split_seed(epoch_seed, idx));
                const auto mask = draw_mask(policy, train[idx].width(), mask_rng);
                losses[j] = varnet_loss_grad(net, train[idx], mask, targets[idx], grads[j], hyper.crop,
                                             1.0 / static_cast<double>(n));
            });
            Vec grad = Vec::Zero(net.params.size());
            double loss = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                grad += grads[j];
                loss += losses[j];
            }
            loss /= static_cast<double>(n);
            if (ewc) loss += ewc_penalty(net.params, *ewc, &grad);
            if (!std::isfinite(loss) || !grad.allFinite())
                throw NumericalError("train_recon: non-finite loss at epoch " + std::to_string(epoch));
            adam.step(net.params, grad, lr);
            epoch_loss += loss * static_cast<double>(n);
        }
        if (log) log->push_back({epoch, lr, epoch_loss / static_cast<double>(train.size())});
        if (hook) hook(epoch, net);
    }
    return net;
}

ReconMetrics evaluate_varnet(const MiniVarNet& net, const std::vector<KSpaceSlice>& slices,
                             const std::vector<SamplingMask>& masks, CropSize crop, std::vector<ReconMetrics>* per_slice) {
    if (slices.empty()) throw DataError("evaluate_varnet: empty slice set");
    if (masks.size() != slices.size()) throw std::invalid_argument("evaluate_varnet: one mask per slice required");
    std::vector<ReconMetrics> m(slices.size());
    parallel_for(slices.size(), [&](std::size_t i) {
        m[i] = evaluate_metrics(minivarnet_forward(net, slices[i], masks[i], crop), target_image(slices[i], crop));
    });
    ReconMetrics mean;
    for (const auto& v : m) {
        mean.ssim += v.ssim;
        mean.nmse += v.nmse;
        mean.psnr += v.psnr;
    }
    const auto n = static_cast<double>(m.size());
    mean.ssim /= n;
    mean.nmse /= n;
    mean.psnr /= n;
    if (per_slice) *per_slice = std::move(m);
    return mean;
}

FisherDiagonal varnet_fisher(const MiniVarNet& net, const std::vector<KSpaceSlice>& slices, const MaskPolicy& policy,
                             std::uint64_t seed, CropSize crop, const std::string& task) {
    return fisher_diagonal(slices.size(), net.params.size(), [&](std::size_t i, Vec& g) {
        Rng rng(split_seed(seed, i));
        const auto mask = draw_mask(policy, slices[i].width(), rng);
        varnet_loss_grad(net, slices[i], mask, target_image(slices[i], crop), g, crop);
    }, task);
}

}  // namespace kscope
