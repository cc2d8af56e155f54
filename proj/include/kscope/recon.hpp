#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kscope/continual.hpp"
#include "kscope/core.hpp"
#include "kscope/metrics.hpp"
#include "kscope/nn.hpp"
#include "kscope/sampling.hpp"

namespace kscope {

/// Crop size 0 means "no crop" in that dimension.
struct CropSize {
    Index height = 0;
    Index width = 0;
};

RealImage crop_to(const RealImage& img, CropSize crop);

/// RSS of the masked data, center-cropped.
RealImage zero_filled(const KSpaceSlice& ks, const SamplingMask& mask, CropSize crop = {});

/// RSS of the fully sampled data, center-cropped: the reconstruction target.
RealImage target_image(const KSpaceSlice& ks, CropSize crop = {});

/// T cascades, each a data-consistency weight eta_t and a three-layer
/// "same"-padded CNN (2 -> c -> c -> 2 channels, leaky ReLU between) acting on
/// the sensitivity-combined image. Parameters per cascade: eta, then each
/// conv's weights [out][in][ky][kx] followed by its biases.
struct VarNetArch {
    int cascades = 3;
    Index channels = 16;
    Index kernel = 3;

    Index cascade_size() const;
    Index param_count() const { return cascade_size() * cascades; }
    Index eta_index(int cascade) const { return cascade_size() * cascade; }
    void validate() const;

    bool operator==(const VarNetArch&) const = default;
};

nlohmann::json to_json(const VarNetArch& a);
VarNetArch varnet_arch_from_json(const nlohmann::json& j);

struct MiniVarNet {
    VarNetArch arch;
    nn::Vec params;
};

/// eta = 1, He-uniform convolutions with the last layer scaled by 0.1, zero biases.
MiniVarNet make_varnet(const VarNetArch& arch, std::uint64_t seed);

/// Splits parameters into "data_consistency" (the eta weights) and "refinement".
Partition varnet_partition(const VarNetArch& arch);

/// Final k-space of the cascade for masked input (pre-crop), one plane per coil.
std::vector<ComplexImage> varnet_kspace(const MiniVarNet& net, const KSpaceSlice& ks, const SamplingMask& mask);

RealImage minivarnet_forward(const MiniVarNet& net, const KSpaceSlice& ks, const SamplingMask& mask, CropSize crop = {});

/// Returns 1 - SSIM(forward, target) and adds weight * its gradient to grad.
double varnet_loss_grad(const MiniVarNet& net, const KSpaceSlice& ks, const SamplingMask& mask, const RealImage& target,
                        nn::Vec& grad, CropSize crop = {}, double weight = 1.0);

void save_varnet(const std::filesystem::path& path, const MiniVarNet& net);
MiniVarNet load_varnet(const std::filesystem::path& path);

/// How training masks are drawn: "variable" draws a fresh variable-density mask
/// per slice per epoch, "fixed" picks one of the listed accelerations and uses
/// its equispaced mask.
struct MaskPolicy {
    std::string kind = "variable";
    Index min_lines = 16;
    double acs_fraction = 0.08;
    std::vector<double> accelerations{4.0, 8.0};

    void validate() const;
};

SamplingMask draw_mask(const MaskPolicy& policy, Index width, Rng& rng);
/// Equispaced mask at the conventional center fraction for that acceleration.
SamplingMask fixed_mask(Index width, double acceleration);
/// Variable policy with min_lines scaled from a 368-column reference so the
/// maximum acceleration is comparable, but never below the ACS block.
MaskPolicy scaled_variable_policy(Index width, Index reference_min_lines = 16, Index reference_width = 368);

struct ReconHyper {
    int epochs = 10;
    Index batch = 4;
    double lr = 1e-3;
    int decay_every = 40;
    double decay = 0.1;
    std::uint64_t seed = 0;
    CropSize crop;
};

struct ReconEpoch {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
};

/// Called after every epoch with the current network.
using EpochHook = std::function<void(int epoch, const MiniVarNet& net)>;

/// Adam on mean (1 - SSIM) per batch plus the optional consolidation penalty.
MiniVarNet train_recon(MiniVarNet net, const std::vector<KSpaceSlice>& train, const MaskPolicy& policy,
                       const ReconHyper& hyper, const EwcAnchor* ewc = nullptr, std::vector<ReconEpoch>* log = nullptr,
                       const EpochHook& hook = {});

/// Mean metrics of the network over slices, each paired with its mask.
ReconMetrics evaluate_varnet(const MiniVarNet& net, const std::vector<KSpaceSlice>& slices,
                             const std::vector<SamplingMask>& masks, CropSize crop = {},
                             std::vector<ReconMetrics>* per_slice = nullptr);

/// Per-slice mean (1 - SSIM) gradient for the empirical Fisher, masks drawn
/// from the policy with split_seed(seed, i).
FisherDiagonal varnet_fisher(const MiniVarNet& net, const std::vector<KSpaceSlice>& slices, const MaskPolicy& policy,
                             std::uint64_t seed, CropSize crop = {}, const std::string& task = {});

}  // namespace kscope
