#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kscope/continual.hpp"
#include "kscope/cs.hpp"
#include "kscope/recon.hpp"

namespace kscope {

/// Equispaced masks at the given acceleration, one per slice.
std::vector<SamplingMask> fixed_masks(const std::vector<KSpaceSlice>& slices, double acceleration);
/// Policy-drawn masks, slice i seeded with split_seed(seed, i).
std::vector<SamplingMask> policy_masks(const std::vector<KSpaceSlice>& slices, const MaskPolicy& policy,
                                       std::uint64_t seed);

ReconMetrics mean_metrics(const std::vector<ReconMetrics>& m);
ReconMetrics evaluate_zero_filled(const std::vector<KSpaceSlice>& slices, const std::vector<SamplingMask>& masks,
                                  CropSize crop = {}, std::vector<ReconMetrics>* per_slice = nullptr);
ReconMetrics evaluate_cs(const std::vector<KSpaceSlice>& slices, const std::vector<SamplingMask>& masks,
                         const CsConfig& cfg, CropSize crop = {}, std::vector<ReconMetrics>* per_slice = nullptr);

/// Rejects splits that share an (anatomy, volume id) pair.
void require_disjoint_volumes(const std::vector<const std::vector<KSpaceSlice>*>& splits);

// ---------------------------------------------------------------------------

struct PolicyComparison {
    std::vector<double> accelerations;
    std::map<std::string, std::vector<ReconMetrics>> rows;  // method -> metrics per acceleration
    std::map<std::string, std::vector<std::vector<double>>> slice_ssim;  // method -> per acceleration -> per slice
};

/// Trains one MiniVarNet per policy from the same initialization and seed and
/// evaluates each at equispaced masks of every acceleration; zero-filled rows
/// are included for reference.
PolicyComparison compare_mask_policies(const std::vector<KSpaceSlice>& train, const std::vector<KSpaceSlice>& test,
                                       const std::map<std::string, MaskPolicy>& policies, const VarNetArch& arch,
                                       const ReconHyper& hyper, const std::vector<double>& accelerations);
nlohmann::json to_json(const PolicyComparison& c);

// ---------------------------------------------------------------------------

struct TaskScores {
    ReconMetrics variable;  // policy-drawn masks
    ReconMetrics fixed;     // equispaced masks at the fixed acceleration
};

struct EwcArm {
    double lambda = 0.0;
    TaskScores task_a;
    TaskScores task_b;
    std::vector<double> task_a_curve;  // task-A SSIM at the fixed acceleration: after phase 1, then after each phase-2 epoch
    double omega = 0.0;
    std::vector<ComponentOverlap> omega_by_component;
};

struct SequentialConfig {
    VarNetArch arch;
    MaskPolicy policy;
    double fixed_acceleration = 8.0;
    int epochs_a = 10;
    int epochs_b = 10;
    Index batch = 4;
    double lr = 1e-3;
    std::size_t fisher_samples = 16;  // leading task-A training slices used for the anchor Fisher
    std::size_t overlap_samples = 8;  // leading test slices of each task used for the overlap Fishers
    bool compute_overlap = true;
    std::uint64_t seed = 0;
    CropSize crop;
};

struct SequentialReport {
    TaskScores phase1_a;
    TaskScores phase1_b;
    std::vector<EwcArm> arms;
};

/// Train on A, anchor with the empirical Fisher, then train on B under each
/// lambda (infinity skips phase 2). Every arm starts from the same phase-1
/// network and uses the same phase-2 seed.
SequentialReport sequential_experiment(const std::vector<KSpaceSlice>& train_a, const std::vector<KSpaceSlice>& train_b,
                                       const std::vector<KSpaceSlice>& test_a, const std::vector<KSpaceSlice>& test_b,
                                       const std::vector<double>& lambdas, const SequentialConfig& cfg);
nlohmann::json to_json(const SequentialReport& r);

/// Parses "0,3e2,inf" style lists.
std::vector<double> parse_lambda_list(const std::string& s);

// ---------------------------------------------------------------------------

struct TransferConfig {
    VarNetArch arch;
    std::vector<double> accelerations{4.0, 8.0};
    int pretrain_epochs = 10;
    int finetune_epochs = 10;
    Index batch = 4;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    CropSize crop;
};

struct TransferArm {
    std::string pretraining;  // "none", "finetune", "phantom", "large"
    std::string finetuning;
    bool available = true;
    std::vector<ReconMetrics> metrics;  // per acceleration
    std::vector<std::vector<double>> slice_ssim;
    ReconMetrics mean;
};

struct TransferReport {
    std::vector<double> accelerations;
    std::vector<TransferArm> arms;
};

/// Four arms: no pre-training, pre-training on the fine-tuning set, phantom
/// pre-training and (when `large` is non-empty) large-set pre-training; all
/// fine-tuned on `finetune` with fixed masks and tested on `test`.
TransferReport transfer_pipeline(const std::vector<KSpaceSlice>& phantom, const std::vector<KSpaceSlice>& finetune,
                                 const std::vector<KSpaceSlice>& test, const std::vector<KSpaceSlice>& large,
                                 const TransferConfig& cfg);
nlohmann::json to_json(const TransferReport& r);

}  // namespace kscope
