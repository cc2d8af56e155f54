#include "kscope/experiments.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "kscope/parallel.hpp"
#include "kscope/phantom.hpp"

namespace kscope {

std::vector<SamplingMask> fixed_masks(const std::vector<KSpaceSlice>& slices, double acceleration) {
    std::vector<SamplingMask> out;
    for (const auto& s : slices) out.push_back(fixed_mask(s.width(), acceleration));
    return out;
}

std::vector<SamplingMask> policy_masks(const std::vector<KSpaceSlice>& slices, const MaskPolicy& policy,
                                       std::uint64_t seed) {
    std::vector<SamplingMask> out;
    for (std::size_t i = 0; i < slices.size(); ++i) {
        Rng rng(split_seed(seed, i));
        out.push_back(draw_mask(policy, slices[i].width(), rng));
    }
    return out;
}

ReconMetrics mean_metrics(const std::vector<ReconMetrics>& m) {
    ReconMetrics r;
    if (m.empty()) return r;
    for (const auto& v : m) {
        r.ssim += v.ssim;
        r.nmse += v.nmse;
        r.psnr += v.psnr;
    }
    const auto n = static_cast<double>(m.size());
    return {r.ssim / n, r.nmse / n, r.psnr / n};
}

ReconMetrics evaluate_zero_filled(const std::vector<KSpaceSlice>& slices, const std::vector<SamplingMask>& masks,
                                  CropSize crop, std::vector<ReconMetrics>* per_slice) {
    std::vector<ReconMetrics> m(slices.size());
    parallel_for(slices.size(), [&](std::size_t i) {
        m[i] = evaluate_metrics(zero_filled(slices[i], masks[i], crop), target_image(slices[i], crop));
    });
    const auto mean = mean_metrics(m);
    if (per_slice) *per_slice = std::move(m);
    return mean;
}

ReconMetrics evaluate_cs(const std::vector<KSpaceSlice>& slices, const std::vector<SamplingMask>& masks,
                         const CsConfig& cfg, CropSize crop, std::vector<ReconMetrics>* per_slice) {
    std::vector<ReconMetrics> m(slices.size());
    parallel_for(slices.size(), [&](std::size_t i) {
        const auto maps = coil_sensitivities(static_cast<int>(slices[i].num_coils()), slices[i].height(), slices[i].width());
        const auto r = cs_recon(slices[i], masks[i], maps, cfg);
        m[i] = evaluate_metrics(crop_to(r.magnitude, crop), target_image(slices[i], crop));
    });
    const auto mean = mean_metrics(m);
    if (per_slice) *per_slice = std::move(m);
    return mean;
}

void require_disjoint_volumes(const std::vector<const std::vector<KSpaceSlice>*>& splits) {
    std::map<std::pair<std::string, std::uint64_t>, std::size_t> owner;
    for (std::size_t s = 0; s < splits.size(); ++s)
        for (const auto& sl : *splits[s]) {
            const auto key = std::make_pair(sl.meta.anatomy, sl.meta.volume_id);
            auto [it, inserted] = owner.emplace(key, s);
            if (!inserted && it->second != s)
                throw DataError("volume " + std::to_string(key.second) + " (" + key.first + ") appears in two splits");
        }
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> slice_ssims(const std::vector<ReconMetrics>& per) {
    std::vector<double> out;
    for (const auto& m : per) out.push_back(m.ssim);
    return out;
}

}  // namespace

PolicyComparison compare_mask_policies(const std::vector<KSpaceSlice>& train, const std::vector<KSpaceSlice>& test,
                                       const std::map<std::string, MaskPolicy>& policies, const VarNetArch& arch,
                                       const ReconHyper& hyper, const std::vector<double>& accelerations) {
    require_disjoint_volumes({&train, &test});
    PolicyComparison out;
    out.accelerations = accelerations;
    std::vector<std::vector<SamplingMask>> masks;
    for (double a : accelerations) masks.push_back(fixed_masks(test, a));
    auto record = [&](const std::string& name, const ReconMetrics& mean, const std::vector<ReconMetrics>& per) {
        out.rows[name].push_back(mean);
        out.slice_ssim[name].push_back(slice_ssims(per));
    };
    for (std::size_t i = 0; i < accelerations.size(); ++i) {
        std::vector<ReconMetrics> per;
        const auto mean = evaluate_zero_filled(test, masks[i], hyper.crop, &per);
        record("zero_filled", mean, per);
    }
    const MiniVarNet init = make_varnet(arch, split_seed(hyper.seed, 77));
    for (const auto& [name, policy] : policies) {
        const MiniVarNet net = train_recon(init, train, policy, hyper);
        for (std::size_t i = 0; i < accelerations.size(); ++i) {
            std::vector<ReconMetrics> per;
            const auto mean = evaluate_varnet(net, test, masks[i], hyper.crop, &per);
            record("varnet_" + name, mean, per);
        }
    }
    return out;
}

nlohmann::json to_json(const PolicyComparison& c) {
    nlohmann::json rows = nlohmann::json::object();
    for (const auto& [name, ms] : c.rows) {
        nlohmann::json cells = nlohmann::json::array();
        for (std::size_t i = 0; i < ms.size(); ++i) {
            auto cell = to_json(ms[i]);
            cell["acceleration"] = c.accelerations[i];
            cells.push_back(cell);
        }
        rows[name] = cells;
    }
    return {{"kind", "policy_comparison"}, {"accelerations", c.accelerations}, {"rows", rows}, {"slice_ssim", c.slice_ssim}};
}

// ---------------------------------------------------------------------------

namespace {

TaskScores score_task(const MiniVarNet& net, const std::vector<KSpaceSlice>& test,
                      const std::vector<SamplingMask>& variable, const std::vector<SamplingMask>& fixed, CropSize crop) {
    return {evaluate_varnet(net, test, variable, crop), evaluate_varnet(net, test, fixed, crop)};
}

std::vector<KSpaceSlice> leading(const std::vector<KSpaceSlice>& v, std::size_t n) {
    return {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(n, v.size()))};
}

nlohmann::json to_json(const TaskScores& t) { return {{"variable", to_json(t.variable)}, {"fixed", to_json(t.fixed)}}; }

}  // namespace

SequentialReport sequential_experiment(const std::vector<KSpaceSlice>& train_a, const std::vector<KSpaceSlice>& train_b,
                                       const std::vector<KSpaceSlice>& test_a, const std::vector<KSpaceSlice>& test_b,
                                       const std::vector<double>& lambdas, const SequentialConfig& cfg) {
    for (double l : lambdas)
        if (!(l >= 0.0)) throw std::invalid_argument("sequential_experiment: lambda must be nonnegative");
    if (train_a.empty() || train_b.empty() || test_a.empty() || test_b.empty())
        throw DataError("sequential_experiment: every split must be nonempty");
    require_disjoint_volumes({&train_a, &test_a});
    require_disjoint_volumes({&train_b, &test_b});

    const auto var_a = policy_masks(test_a, cfg.policy, split_seed(cfg.seed, 11));
    const auto var_b = policy_masks(test_b, cfg.policy, split_seed(cfg.seed, 12));
    const auto fix_a = fixed_masks(test_a, cfg.fixed_acceleration);
    const auto fix_b = fixed_masks(test_b, cfg.fixed_acceleration);

    ReconHyper ha;
    ha.epochs = cfg.epochs_a;
    ha.batch = cfg.batch;
    ha.lr = cfg.lr;
    ha.seed = split_seed(cfg.seed, 1);
    ha.crop = cfg.crop;
    const MiniVarNet net_a = train_recon(make_varnet(cfg.arch, split_seed(cfg.seed, 0)), train_a, cfg.policy, ha);

    SequentialReport rep;
    rep.phase1_a = score_task(net_a, test_a, var_a, fix_a, cfg.crop);
    rep.phase1_b = score_task(net_a, test_b, var_b, fix_b, cfg.crop);

    EwcAnchor anchor;
    anchor.anchor = net_a.params;
    anchor.fisher = varnet_fisher(net_a, leading(train_a, cfg.fisher_samples), cfg.policy, split_seed(cfg.seed, 2),
                                  cfg.crop, "A");

    ReconHyper hb = ha;
    hb.epochs = cfg.epochs_b;
    hb.seed = split_seed(cfg.seed, 3);
    const auto over_a = leading(test_a, cfg.overlap_samples), over_b = leading(test_b, cfg.overlap_samples);
    const Partition partition = varnet_partition(cfg.arch);

    for (double lambda : lambdas) {
        EwcArm arm;
        arm.lambda = lambda;
        arm.task_a_curve.push_back(rep.phase1_a.fixed.ssim);
        MiniVarNet net = net_a;
        if (!std::isinf(lambda)) {
            anchor.lambda = lambda;
            net = train_recon(net_a, train_b, cfg.policy, hb, &anchor, nullptr, [&](int, const MiniVarNet& n) {
                arm.task_a_curve.push_back(evaluate_varnet(n, test_a, fix_a, cfg.crop).ssim);
            });
        }
        arm.task_a = score_task(net, test_a, var_a, fix_a, cfg.crop);
        arm.task_b = score_task(net, test_b, var_b, fix_b, cfg.crop);
        if (cfg.compute_overlap) {
            const auto fa = varnet_fisher(net, over_a, cfg.policy, split_seed(cfg.seed, 4), cfg.crop, "A");
            const auto fb = varnet_fisher(net, over_b, cfg.policy, split_seed(cfg.seed, 5), cfg.crop, "B");
            arm.omega = fisher_overlap(fa, fb);
            arm.omega_by_component = fisher_overlap_by_component(fa, fb, partition);
        }
        rep.arms.push_back(std::move(arm));
    }
    return rep;
}

nlohmann::json to_json(const SequentialReport& r) {
    nlohmann::json arms = nlohmann::json::array();
    for (const auto& a : r.arms) {
        nlohmann::json comps = nlohmann::json::object();
        for (const auto& c : a.omega_by_component) comps[c.name] = c.omega;
        arms.push_back({{"lambda", std::isinf(a.lambda) ? nlohmann::json("inf") : nlohmann::json(a.lambda)},
                        {"task_a", to_json(a.task_a)},
                        {"task_b", to_json(a.task_b)},
                        {"task_a_curve", a.task_a_curve},
                        {"omega", a.omega},
                        {"omega_by_component", comps}});
    }
    return {{"kind", "sequential"}, {"phase1", {{"task_a", to_json(r.phase1_a)}, {"task_b", to_json(r.phase1_b)}}}, {"arms", arms}};
}

std::vector<double> parse_lambda_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok == "inf" || tok == "+inf" || tok == "infinity") {
            out.push_back(kLambdaInfinity);
            continue;
        }
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size() || tok.empty()) throw std::invalid_argument("bad lambda value: '" + tok + "'");
        if (!(v >= 0.0)) throw std::invalid_argument("lambda must be nonnegative: " + tok);
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("empty lambda list");
    return out;
}

// ---------------------------------------------------------------------------

TransferReport transfer_pipeline(const std::vector<KSpaceSlice>& phantom, const std::vector<KSpaceSlice>& finetune,
                                 const std::vector<KSpaceSlice>& test, const std::vector<KSpaceSlice>& large,
                                 const TransferConfig& cfg) {
    if (phantom.empty() || finetune.empty() || test.empty())
        throw DataError("transfer_pipeline: pretrain, finetune and test sets must be nonempty");
    std::vector<const std::vector<KSpaceSlice>*> splits{&phantom, &finetune, &test};
    if (!large.empty()) splits.push_back(&large);
    require_disjoint_volumes(splits);

    MaskPolicy policy;
    policy.kind = "fixed";
    policy.accelerations = cfg.accelerations;
    ReconHyper pre;
    pre.epochs = cfg.pretrain_epochs;
    pre.batch = cfg.batch;
    pre.lr = cfg.lr;
    pre.crop = cfg.crop;
    pre.seed = split_seed(cfg.seed, 1);
    ReconHyper fine = pre;
    fine.epochs = cfg.finetune_epochs;
    fine.seed = split_seed(cfg.seed, 2);

    std::vector<std::vector<SamplingMask>> masks;
    for (double a : cfg.accelerations) masks.push_back(fixed_masks(test, a));
    const MiniVarNet init = make_varnet(cfg.arch, split_seed(cfg.seed, 0));

    TransferReport rep;
    rep.accelerations = cfg.accelerations;
    auto run_arm = [&](const std::string& name, const std::vector<KSpaceSlice>* pretrain) {
        TransferArm arm{name, "finetune", true, {}, {}, {}};
        if (name == "large" && large.empty()) {
            arm.available = false;
            rep.arms.push_back(arm);
            return;
        }
        MiniVarNet net = pretrain ? train_recon(init, *pretrain, policy, pre) : init;
        net = train_recon(net, finetune, policy, fine);
        for (const auto& m : masks) {
            std::vector<ReconMetrics> per;
            arm.metrics.push_back(evaluate_varnet(net, test, m, cfg.crop, &per));
            arm.slice_ssim.push_back(slice_ssims(per));
        }
        arm.mean = mean_metrics(arm.metrics);
        rep.arms.push_back(arm);
    };
    run_arm("none", nullptr);
    run_arm("finetune", &finetune);
    run_arm("phantom", &phantom);
    run_arm("large", &large);
    return rep;
}

nlohmann::json to_json(const TransferReport& r) {
    nlohmann::json arms = nlohmann::json::array();
    for (const auto& a : r.arms) {
        nlohmann::json per = nlohmann::json::array();
        for (std::size_t i = 0; i < a.metrics.size(); ++i) {
            auto cell = to_json(a.metrics[i]);
            cell["acceleration"] = r.accelerations[i];
            per.push_back(cell);
        }
        arms.push_back({{"pretraining", a.pretraining},
                        {"finetuning", a.finetuning},
                        {"available", a.available},
                        {"per_acceleration", per},
                        {"slice_ssim", a.slice_ssim},
                        {"mean", a.available ? to_json(a.mean) : nlohmann::json(nullptr)}});
    }
    return {{"kind", "transfer"}, {"accelerations", r.accelerations}, {"arms", arms}};
}

}  // namespace kscope
