#include "kscope/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "kscope/analysis.hpp"
#include "kscope/corruption.hpp"
#include "kscope/cs.hpp"
#include "kscope/dataset.hpp"
#include "kscope/defaults_json.hpp"
#include "kscope/detector.hpp"
#include "kscope/evaluation.hpp"
#include "kscope/experiments.hpp"
#include "kscope/parallel.hpp"
#include "kscope/phantom.hpp"
#include "kscope/recon.hpp"
#include "kscope/sampling.hpp"

namespace kscope::cli {

namespace fs = std::filesystem;
using nlohmann::json;

json profile_defaults(const std::string& profile) {
    const json all = json::parse(kDefaultsJson);
    if (all.at("version").get<int>() != 1) throw DataError("defaults file has an unsupported version");
    const auto& profiles = all.at("profiles");
    if (!profiles.contains(profile)) throw std::invalid_argument("unknown profile '" + profile + "' (expected desk or paper)");
    return profiles.at(profile);
}

namespace {

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    f << j.dump(2) << "\n";
    if (!f) throw DataError("cannot write " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open " + path.string());
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

/// Parses a JSON file with `parse`; schema errors become DataError.
template <typename Parse>
auto parse_file(const fs::path& path, Parse&& parse) {
    const json j = read_json(path);
    try {
        return parse(j);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

fs::path dir_of(const fs::path& file) {
    const auto p = file.parent_path();
    return p.empty() ? fs::path(".") : p;
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* what) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::istringstream is(tok);
        T v{};
        if (!(is >> v) || !is.eof()) throw std::invalid_argument(std::string("bad ") + what + " value '" + tok + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument(std::string("empty ") + what + " list");
    return out;
}

/// Output directory of one invocation: config echo and log live here.
class Run {
public:
    Run(std::string name, const fs::path& dir) : name_(std::move(name)), dir_(dir), start_(std::chrono::steady_clock::now()) {
        fs::create_directories(dir_);
        log_.open(dir_ / (name_ + ".log"), std::ios::binary);
        if (!log_) throw DataError("cannot write " + (dir_ / (name_ + ".log")).string());
    }
    ~Run() {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        log_ << "done in " << s << " s\n";
    }
    void echo(json cfg) const {
        cfg["subcommand"] = name_;
        write_json(dir_ / (name_ + ".config.json"), cfg);
    }
    void note(const std::string& line) {
        log_ << line << "\n";
        log_.flush();
    }

private:
    std::string name_;
    fs::path dir_;
    std::ofstream log_;
    std::chrono::steady_clock::time_point start_;
};

struct Options {
    // global
    int threads = 0;
    std::string profile = "desk";
    std::string run_dir;
    std::uint64_t seed = 0;
    // shared
    std::string in, out, data, config, net, report;
    Index grid = 0;
    int coils = 0;
    int epochs = 0;
    Index batch = 0;
    double lr = 0.0;
    Index crop = 0;
    Index min_lines = 0;
    // phantom-gen
    std::string preset = "shepp-logan";
    Index volumes = 0, slices = 0;
    std::uint64_t first_volume_id = 0;
    // mask
    std::string mode;
    Index width = 0;
    double accel = 0.0;
    double acs_fraction = 0.0;
    // detector
    std::string val, roc;
    double threshold = 0.1;
    Index input_length = 0;
    // recon
    std::string method, mask, metrics, policy = "variable", accels, init;
    int cascades = 0;
    Index channels = 0, kernel = 0;
    // transfer
    std::string pretrain, finetune, test, large;
    int pretrain_epochs = 0, finetune_epochs = 0;
    // ewc / fisher
    std::string task_a, task_b, test_a, test_b, lambdas, curves, net_a, net_b, data_a, data_b, partition;
    int epochs_a = 0, epochs_b = 0;
    std::size_t samples = 0;
    // autocorr / report
    std::string anchors;
    std::vector<std::string> inputs;
};

/// Option value if given on the command line, else the profile default.
template <typename T>
T pick(const CLI::App* sub, const char* flag, const T& given, const json& prof, const char* key) {
    if (sub->count(flag) > 0) return given;
    return prof.at(key).get<T>();
}

fs::path run_dir(const Options& o, const fs::path& fallback) { return o.run_dir.empty() ? fallback : fs::path(o.run_dir); }

// ---------------------------------------------------------------------------

int cmd_phantom_gen(const Options& o, const CLI::App* sub, const json& prof) {
    PhantomConfig cfg;
    json file;
    if (!o.config.empty()) {
        file = read_json(o.config);
        cfg = parse_file(o.config, phantom_config_from_json);
    } else {
        cfg = preset_config(o.preset);
    }
    if (sub->count("--grid") || !file.contains("height")) cfg.height = pick<Index>(sub, "--grid", o.grid, prof, "grid");
    if (sub->count("--grid") || !file.contains("width")) cfg.width = pick<Index>(sub, "--grid", o.grid, prof, "grid");
    if (sub->count("--coils") || !file.contains("coils")) cfg.coils = pick<int>(sub, "--coils", o.coils, prof, "coils");
    cfg.validate();
    const Index volumes = pick<Index>(sub, "--volumes", o.volumes, prof, "volumes");
    const Index slices = pick<Index>(sub, "--slices", o.slices, prof, "slices");
    if (volumes < 1 || slices < 1) throw std::invalid_argument("--volumes and --slices must be positive");

    Run run("phantom-gen", run_dir(o, o.out));
    run.echo({{"profile", o.profile}, {"seed", o.seed}, {"volumes", volumes}, {"slices", slices},
              {"first_volume_id", o.first_volume_id}, {"out", o.out}, {"phantom", to_json(cfg)}});
    const auto ds = make_phantom_slices(cfg, volumes, slices, o.seed, o.first_volume_id);
    write_dataset(o.out, ds);
    run.note("wrote " + std::to_string(ds.size()) + " slices of " + cfg.anatomy + " to " + o.out);
    std::cout << ds.size() << " slices written to " << o.out << "\n";
    return kOk;
}

int cmd_mask(const Options& o, const CLI::App* sub, const json& prof) {
    SamplingMask m;
    json echo = {{"profile", o.profile}, {"mode", o.mode}, {"width", o.width}, {"seed", o.seed}};
    if (o.mode == "variable") {
        const Index min_lines = pick<Index>(sub, "--min-lines", o.min_lines, prof, "min_lines");
        const double acs = sub->count("--acs-fraction") ? o.acs_fraction : 0.08;
        Rng rng(o.seed);
        m = sample_variable_mask(o.width, min_lines, acs, rng);
        echo["min_lines"] = min_lines;
        echo["acs_fraction"] = acs;
    } else {
        if (!sub->count("--accel")) throw std::invalid_argument("--mode fixed needs --accel");
        const double cf = sub->count("--acs-fraction") ? o.acs_fraction : default_center_fraction(o.accel);
        m = equispaced_mask(o.width, o.accel, cf);
        echo["accel"] = o.accel;
        echo["acs_fraction"] = cf;
    }
    Run run("mask", run_dir(o, dir_of(o.out)));
    run.echo(echo);
    write_json(o.out, to_json(m));
    run.note("acquired " + std::to_string(m.acquired_indices().size()) + " of " + std::to_string(o.width) + " columns");
    return kOk;
}

int cmd_corrupt(const Options& o, const CLI::App*, const json&) {
    const CorruptionConfig cc = o.config.empty() ? CorruptionConfig{} : parse_file(o.config, corruption_config_from_json);
    cc.validate();
    const auto ds = read_dataset(o.in);
    Run run("corrupt", run_dir(o, o.out));
    run.echo({{"profile", o.profile}, {"seed", o.seed}, {"in", o.in}, {"out", o.out}, {"corruption", to_json(cc)}});
    const auto slices = make_corruption_dataset(ds, cc, o.seed);
    write_corruption_dataset(o.out, slices);
    std::map<std::string, std::size_t> counts;
    for (const auto& s : slices)
        for (const auto& [col, label] : s.record.labels) ++counts[to_string(label.kind)];
    std::string summary = "labels:";
    for (const auto& [k, n] : counts) summary += " " + k + "=" + std::to_string(n);
    run.note(summary);
    std::cout << slices.size() << " corrupted slices written to " << o.out << " (" << summary << ")\n";
    return kOk;
}

int cmd_train_detector(const Options& o, const CLI::App* sub, const json& prof) {
    DetectorArch arch;
    arch.input_length = pick<Index>(sub, "--input-length", o.input_length, prof, "detector_input_length");
    arch.validate();
    DetectorHyper h;
    h.epochs = pick<int>(sub, "--epochs", o.epochs, prof, "detector_epochs");
    h.batch = pick<Index>(sub, "--batch", o.batch, prof, "detector_batch");
    h.lr = pick<double>(sub, "--lr", o.lr, prof, "detector_lr");
    h.decay_every = prof.at("lr_decay_every").get<int>();
    h.decay = prof.at("lr_decay").get<double>();
    h.seed = o.seed;

    const auto train = line_pairs(read_corruption_dataset(o.data));
    const auto val = o.val.empty() ? std::vector<LinePair>{} : line_pairs(read_corruption_dataset(o.val));
    if (train.empty()) throw DataError("no labeled line pairs in " + o.data);

    Run run("train-detector", run_dir(o, dir_of(o.out)));
    run.echo({{"profile", o.profile}, {"seed", o.seed}, {"data", o.data}, {"val", o.val}, {"out", o.out},
              {"arch", to_json(arch)},
              {"hyper", {{"epochs", h.epochs}, {"batch", h.batch}, {"lr", h.lr}, {"decay_every", h.decay_every},
                         {"decay", h.decay}, {"class_weighting", h.class_weighting}}}});
    run.note("training pairs: " + std::to_string(train.size()) + ", validation pairs: " + std::to_string(val.size()));
    std::vector<DetectorEpoch> hist;
    const auto net = detector_train(train, val, h, arch, &hist);
    for (const auto& e : hist)
        run.note("epoch " + std::to_string(e.epoch) + " lr " + std::to_string(e.lr) + " train_loss " +
                 std::to_string(e.train_loss) + " val_loss " + std::to_string(e.val_loss));
    save_detector(o.out, net);
    std::cout << "detector (" << arch.param_count() << " parameters) saved to " << o.out << "\n";
    return kOk;
}

int cmd_eval_detector(const Options& o, const CLI::App*, const json&) {
    const auto net = load_detector(o.net);
    const auto slices = read_corruption_dataset(o.data);
    const auto ds = detector_line_scores(net, slices);
    const auto bs = baseline_line_scores(slices);
    std::vector<int> labels;
    std::vector<double> sn, sb;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        labels.push_back(ds[i].label);
        sn.push_back(ds[i].score);
        sb.push_back(bs[i].score);
    }
    ClassifierReport rn, rb;
    try {
        rn = evaluate_classifier(sn, labels, o.threshold);
        rb = evaluate_classifier(sb, labels, o.threshold);
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("cannot evaluate: ") + e.what());
    }
    auto strip = [](const ClassifierReport& r) {
        auto j = to_json(r);
        j.erase("roc");
        return j;
    };
    const fs::path report = o.report.empty() ? fs::path("report.json") : fs::path(o.report);
    Run run("eval-detector", run_dir(o, dir_of(report)));
    run.echo({{"profile", o.profile}, {"net", o.net}, {"data", o.data}, {"threshold", o.threshold}, {"report", report.string()},
              {"roc", o.roc}});
    json lines = json::array();
    for (const auto& s : ds) lines.push_back({s.slice, s.column});
    write_json(report, {{"kind", "detector"},
                        {"threshold", o.threshold},
                        {"net", strip(rn)},
                        {"baseline", strip(rb)},
                        {"labels", labels},
                        {"scores", {{"net", sn}, {"baseline", sb}}},
                        {"lines", lines}});
    if (!o.roc.empty()) {
        std::vector<Series> curves;
        for (const auto& [name, r] : {std::pair{"ConvNet", &rn}, std::pair{"baseline", &rb}}) {
            Series s{name, {}, {}};
            for (const auto& p : r->roc) {
                s.x.push_back(p.fpr);
                s.y.push_back(p.tpr);
            }
            curves.push_back(s);
        }
        if (dir_of(o.roc) != ".") fs::create_directories(dir_of(o.roc));
        std::ofstream(o.roc, std::ios::binary) << svg_lines("ROC", "false positive rate", "true positive rate", curves);
    }
    char line[256];
    std::snprintf(line, sizeof line, "ConvNet AUROC %.4f F2 %.4f (P %.4f R %.4f) | baseline AUROC %.4f", rn.auroc, rn.f2,
                  rn.precision, rn.recall, rb.auroc);
    run.note(line);
    std::cout << line << "\n";
    return kOk;
}

void write_pgm(const fs::path& path, const RealImage& img, double peak) {
    std::ofstream f(path, std::ios::binary);
    f << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
    for (Index y = 0; y < img.rows(); ++y)
        for (Index x = 0; x < img.cols(); ++x) {
            const double v = peak > 0.0 ? std::clamp(img(y, x) / peak, 0.0, 1.0) : 0.0;
            f.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
        }
    if (!f) throw DataError("cannot write " + path.string());
}

int cmd_recon(const Options& o, const CLI::App*, const json&) {
    const auto slices = read_dataset(o.in);
    const SamplingMask mask = parse_file(o.mask, mask_from_json);
    for (const auto& s : slices)
        if (s.width() != mask.width())
            throw DataError("mask width " + std::to_string(mask.width()) + " does not match data width " + std::to_string(s.width()));
    const CropSize crop{o.crop, o.crop};
    MiniVarNet net;
    if (o.method == "varnet") {
        if (o.net.empty()) throw std::invalid_argument("--method varnet needs --net");
        net = load_varnet(o.net);
    }
    const CsConfig cc = o.config.empty() ? CsConfig{} : parse_file(o.config, cs_config_from_json);
    cc.validate();

    Run run("recon", run_dir(o, o.out));
    run.echo({{"profile", o.profile}, {"method", o.method}, {"net", o.net}, {"in", o.in}, {"mask", o.mask},
              {"crop", o.crop}, {"cs", to_json(cc)}, {"out", o.out}, {"metrics", o.metrics}});
    std::vector<RealImage> images(slices.size());
    std::vector<ReconMetrics> m(slices.size());
    std::vector<int> restarts(slices.size(), 0);
    parallel_for(slices.size(), [&](std::size_t i) {
        const auto& s = slices[i];
        if (o.method == "zf") {
            images[i] = zero_filled(s, mask, crop);
        } else if (o.method == "cs") {
            const auto maps = coil_sensitivities(static_cast<int>(s.num_coils()), s.height(), s.width());
            const auto r = cs_recon(s, mask, maps, cc);
            images[i] = crop_to(r.magnitude, crop);
            restarts[i] = r.restarts;
        } else {
            images[i] = minivarnet_forward(net, s, mask, crop);
        }
        m[i] = evaluate_metrics(images[i], target_image(s, crop));
    });
    fs::create_directories(o.out);
    json per = json::array();
    for (std::size_t i = 0; i < slices.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "slice_%04zu.pgm", i);
        write_pgm(fs::path(o.out) / name, images[i], target_image(slices[i], crop).maxCoeff());
        auto j = to_json(m[i]);
        j["volume_id"] = slices[i].meta.volume_id;
        j["slice_index"] = slices[i].meta.slice_index;
        j["image"] = name;
        if (o.method == "cs") j["restarts"] = restarts[i];
        per.push_back(j);
    }
    const auto mean = mean_metrics(m);
    const fs::path metrics = o.metrics.empty() ? fs::path(o.out) / "metrics.json" : fs::path(o.metrics);
    write_json(metrics, {{"method", o.method}, {"mean", to_json(mean)}, {"per_slice", per}});
    char line[160];
    std::snprintf(line, sizeof line, "%s: SSIM %.4f NMSE %.5f PSNR %.2f over %zu slices", o.method.c_str(), mean.ssim,
                  mean.nmse, mean.psnr, slices.size());
    run.note(line);
    std::cout << line << "\n";
    return kOk;
}

VarNetArch arch_from(const Options& o, const CLI::App* sub, const json& prof) {
    VarNetArch a;
    a.cascades = pick<int>(sub, "--cascades", o.cascades, prof, "cascades");
    a.channels = pick<Index>(sub, "--channels", o.channels, prof, "channels");
    a.kernel = pick<Index>(sub, "--kernel", o.kernel, prof, "kernel");
    a.validate();
    return a;
}

MaskPolicy policy_from(const Options& o, const CLI::App* sub, const json& prof, Index width) {
    MaskPolicy p;
    if (o.policy == "variable") {
        p = scaled_variable_policy(width, prof.at("min_lines").get<Index>(), prof.at("min_lines_reference_width").get<Index>());
        if (sub->count("--min-lines")) p.min_lines = o.min_lines;
    } else {
        p.kind = "fixed";
        p.accelerations = o.accels.empty() ? prof.at("fixed_accelerations").get<std::vector<double>>()
                                           : parse_list<double>(o.accels, "acceleration");
    }
    p.validate();
    return p;
}

json to_json(const MaskPolicy& p) {
    return {{"kind", p.kind}, {"min_lines", p.min_lines}, {"acs_fraction", p.acs_fraction}, {"accelerations", p.accelerations}};
}

int cmd_train_recon(const Options& o, const CLI::App* sub, const json& prof) {
    const auto train = read_dataset(o.data);
    if (train.empty()) throw DataError("no slices in " + o.data);
    const MaskPolicy policy = policy_from(o, sub, prof, train.front().width());
    ReconHyper h;
    h.epochs = pick<int>(sub, "--epochs", o.epochs, prof, "recon_epochs");
    h.batch = pick<Index>(sub, "--batch", o.batch, prof, "recon_batch");
    h.lr = pick<double>(sub, "--lr", o.lr, prof, "recon_lr");
    h.decay_every = prof.at("lr_decay_every").get<int>();
    h.decay = prof.at("lr_decay").get<double>();
    h.seed = split_seed(o.seed, 1);
    h.crop = {o.crop, o.crop};
    const MiniVarNet init = o.init.empty() ? make_varnet(arch_from(o, sub, prof), split_seed(o.seed, 0)) : load_varnet(o.init);

    Run run("train-recon", run_dir(o, dir_of(o.out)));
    run.echo({{"profile", o.profile}, {"seed", o.seed}, {"data", o.data}, {"init", o.init}, {"out", o.out},
              {"arch", to_json(init.arch)}, {"policy", to_json(policy)},
              {"hyper", {{"epochs", h.epochs}, {"batch", h.batch}, {"lr", h.lr}, {"decay_every", h.decay_every},
                         {"decay", h.decay}, {"crop", o.crop}}}});
    std::vector<ReconEpoch> hist;
    const auto net = train_recon(init, train, policy, h, nullptr, &hist);
    for (const auto& e : hist)
        run.note("epoch " + std::to_string(e.epoch) + " lr " + std::to_string(e.lr) + " loss " + std::to_string(e.train_loss));
    save_varnet(o.out, net);
    std::cout << "MiniVarNet (" << net.arch.param_count() << " parameters, " << policy.kind << " masks) saved to " << o.out << "\n";
    return kOk;
}

int cmd_transfer(const Options& o, const CLI::App* sub, const json& prof) {
    TransferConfig c;
    c.arch = arch_from(o, sub, prof);
    c.accelerations = o.accels.empty() ? prof.at("fixed_accelerations").get<std::vector<double>>()
                                       : parse_list<double>(o.accels, "acceleration");
    c.pretrain_epochs = pick<int>(sub, "--pretrain-epochs", o.pretrain_epochs, prof, "transfer_pretrain_epochs");
    c.finetune_epochs = pick<int>(sub, "--finetune-epochs", o.finetune_epochs, prof, "transfer_finetune_epochs");
    c.batch = pick<Index>(sub, "--batch", o.batch, prof, "recon_batch");
    c.lr = pick<double>(sub, "--lr", o.lr, prof, "recon_lr");
    c.seed = o.seed;
    c.crop = {o.crop, o.crop};
    const auto phantom = read_dataset(o.pretrain), finetune = read_dataset(o.finetune), test = read_dataset(o.test);
    const auto large = o.large.empty() ? std::vector<KSpaceSlice>{} : read_dataset(o.large);

    Run run("transfer", run_dir(o, dir_of(o.report)));
    run.echo({{"profile", o.profile}, {"seed", o.seed}, {"pretrain", o.pretrain}, {"finetune", o.finetune}, {"test", o.test},
              {"large", o.large}, {"report", o.report}, {"arch", to_json(c.arch)}, {"accelerations", c.accelerations},
              {"pretrain_epochs", c.pretrain_epochs}, {"finetune_epochs", c.finetune_epochs}, {"batch", c.batch},
              {"lr", c.lr}, {"crop", o.crop}});
    const auto rep = transfer_pipeline(phantom, finetune, test, large, c);
    write_json(o.report, to_json(rep));
    for (const auto& a : rep.arms) {
        char line[160];
        if (a.available)
            std::snprintf(line, sizeof line, "pretraining %-8s SSIM %.4f NMSE %.5f PSNR %.2f", a.pretraining.c_str(),
                          a.mean.ssim, a.mean.nmse, a.mean.psnr);
        else
            std::snprintf(line, sizeof line, "pretraining %-8s unavailable", a.pretraining.c_str());
        run.note(line);
        std::cout << line << "\n";
    }
    return kOk;
}

/// Holds out the trailing fifth of the volumes (at least one).
std::pair<std::vector<KSpaceSlice>, std::vector<KSpaceSlice>> split_volumes(const std::vector<KSpaceSlice>& all) {
    std::vector<std::uint64_t> ids;
    for (const auto& s : all)
        if (std::find(ids.begin(), ids.end(), s.meta.volume_id) == ids.end()) ids.push_back(s.meta.volume_id);
    if (ids.size() < 2) throw DataError("need at least two volumes to hold out a test split");
    const std::size_t held = std::max<std::size_t>(1, ids.size() / 5);
    const std::vector<std::uint64_t> test_ids(ids.end() - static_cast<std::ptrdiff_t>(held), ids.end());
    std::pair<std::vector<KSpaceSlice>, std::vector<KSpaceSlice>> out;
    for (const auto& s : all)
        (std::find(test_ids.begin(), test_ids.end(), s.meta.volume_id) == test_ids.end() ? out.first : out.second).push_back(s);
    return out;
}

int cmd_ewc(const Options& o, const CLI::App* sub, const json& prof) {
    const auto lambdas = parse_lambda_list(o.lambdas.empty() ? prof.at("lambdas").get<std::string>() : o.lambdas);
    auto load = [](const std::string& train, const std::string& test) {
        auto all = read_dataset(train);
        if (!test.empty()) return std::pair{all, read_dataset(test)};
        return split_volumes(all);
    };
    const auto [train_a, test_a] = load(o.task_a, o.test_a);
    const auto [train_b, test_b] = load(o.task_b, o.test_b);

    SequentialConfig c;
    c.arch = arch_from(o, sub, prof);
    c.policy = policy_from(o, sub, prof, train_a.front().width());
    c.fixed_acceleration = prof.at("ewc_fixed_acceleration").get<double>();
    c.epochs_a = pick<int>(sub, "--epochs-a", o.epochs_a, prof, "ewc_epochs_a");
    c.epochs_b = pick<int>(sub, "--epochs-b", o.epochs_b, prof, "ewc_epochs_b");
    c.batch = pick<Index>(sub, "--batch", o.batch, prof, "recon_batch");
    c.lr = pick<double>(sub, "--lr", o.lr, prof, "recon_lr");
    c.fisher_samples = pick<std::size_t>(sub, "--fisher-samples", o.samples, prof, "fisher_samples");
    c.overlap_samples = prof.at("overlap_samples").get<std::size_t>();
    c.seed = o.seed;
    c.crop = {o.crop, o.crop};

    Run run("ewc", run_dir(o, dir_of(o.report)));
    json lam = json::array();
    for (double l : lambdas) lam.push_back(std::isinf(l) ? json("inf") : json(l));
    run.echo({{"profile", o.profile}, {"seed", o.seed}, {"taskA", o.task_a}, {"taskB", o.task_b}, {"testA", o.test_a},
              {"testB", o.test_b}, {"lambdas", lam}, {"report", o.report}, {"curves", o.curves},
              {"arch", to_json(c.arch)}, {"policy", to_json(c.policy)}, {"fixed_acceleration", c.fixed_acceleration},
              {"epochs_a", c.epochs_a}, {"epochs_b", c.epochs_b}, {"batch", c.batch}, {"lr", c.lr},
              {"fisher_samples", c.fisher_samples}, {"overlap_samples", c.overlap_samples}, {"crop", o.crop}});
    const auto rep = sequential_experiment(train_a, train_b, test_a, test_b, lambdas, c);
    write_json(o.report, to_json(rep));
    std::vector<Series> curves;
    for (const auto& a : rep.arms) {
        char line[200];
        std::snprintf(line, sizeof line, "lambda %-8s task A SSIM %.4f task B SSIM %.4f omega %.4f",
                      std::isinf(a.lambda) ? "inf" : std::to_string(a.lambda).c_str(), a.task_a.fixed.ssim,
                      a.task_b.fixed.ssim, a.omega);
        run.note(line);
        std::cout << line << "\n";
        Series s{std::isinf(a.lambda) ? "lambda inf" : "lambda " + std::to_string(a.lambda), {}, a.task_a_curve};
        for (std::size_t i = 0; i < s.y.size(); ++i) s.x.push_back(static_cast<double>(i));
        curves.push_back(s);
    }
    if (!o.curves.empty()) {
        if (dir_of(o.curves) != ".") fs::create_directories(dir_of(o.curves));
        std::ofstream(o.curves, std::ios::binary) << svg_lines("Task-A SSIM during task-B training", "epoch", "SSIM", curves);
    }
    return kOk;
}

int cmd_fisher_overlap(const Options& o, const CLI::App* sub, const json& prof) {
    const auto net_a = load_varnet(o.net_a);
    const auto net_b = o.net_b.empty() ? net_a : load_varnet(o.net_b);
    if (net_a.params.size() != net_b.params.size()) throw DataError("networks have different parameter counts");
    auto take = [&](const std::string& dir) {
        auto all = read_dataset(dir);
        const std::size_t n = pick<std::size_t>(sub, "--samples", o.samples, prof, "overlap_samples");
        if (all.size() > n) all.resize(n);
        return all;
    };
    const auto da = take(o.data_a), db = take(o.data_b);
    if (da.empty() || db.empty()) throw DataError("empty task dataset");
    const Partition part = o.partition.empty() ? varnet_partition(net_a.arch) : parse_file(o.partition, partition_from_json);
    part.validate(net_a.params.size());
    const CropSize crop{o.crop, o.crop};
    const MaskPolicy pa = policy_from(o, sub, prof, da.front().width());
    const MaskPolicy pb = policy_from(o, sub, prof, db.front().width());

    Run run("fisher-overlap", run_dir(o, dir_of(o.report)));
    run.echo({{"profile", o.profile}, {"seed", o.seed}, {"netA", o.net_a}, {"netB", o.net_b}, {"dataA", o.data_a},
              {"dataB", o.data_b}, {"partition", o.partition}, {"policy", to_json(pa)}, {"samples", da.size()},
              {"crop", o.crop}, {"report", o.report}});
    const auto fa = varnet_fisher(net_a, da, pa, split_seed(o.seed, 1), crop, "A");
    const auto fb = varnet_fisher(net_b, db, pb, split_seed(o.seed, 2), crop, "B");
    const double omega = fisher_overlap(fa, fb);
    json comps = json::object();
    for (const auto& c : fisher_overlap_by_component(fa, fb, part)) comps[c.name] = c.omega;
    write_json(o.report, {{"kind", "fisher_overlap"}, {"omega", omega}, {"components", comps},
                          {"param_count", net_a.params.size()}, {"partition", to_json(part)}});
    char line[64];
    std::snprintf(line, sizeof line, "omega %.6f", omega);
    run.note(line);
    std::cout << line << "\n";
    return kOk;
}

int cmd_autocorr(const Options& o, const CLI::App* sub, const json& prof) {
    const auto slices = read_dataset(o.in);
    if (slices.empty()) throw DataError("no slices in " + o.in);
    const Index fit = std::min(slices.front().height(), slices.front().width());
    const Index crop = sub->count("--crop") ? o.crop : std::min(prof.at("autocorr_crop").get<Index>(), fit);
    std::vector<Index> anchors;
    if (!o.anchors.empty()) {
        anchors = parse_list<Index>(o.anchors, "anchor");
    } else {
        for (Index a : {0, 21, 64, 97}) anchors.push_back(std::min(crop - 1, a * crop / 128));
    }
    for (Index a : anchors)
        if (a < 0 || a >= crop) throw std::invalid_argument("anchor " + std::to_string(a) + " outside the cropped width");

    Run run("autocorr", run_dir(o, o.out));
    run.echo({{"profile", o.profile}, {"in", o.in}, {"crop", crop}, {"anchors", anchors}, {"out", o.out}});
    const auto map = autocorr(slices, crop);
    const auto s = summarize(map);
    const auto j = to_json(map, anchors, s);
    write_json(fs::path(o.out) / "autocorr.json", j);
    emit_report(j, o.out);
    char line[160];
    std::snprintf(line, sizeof line, "strongest partner in ACS for %.1f%% of lines; off-ACS phase circular variance %.3f",
                  100.0 * s.argmax_in_acs_fraction, s.phase_circular_variance);
    run.note(line);
    std::cout << line << "\n";
    return kOk;
}

int cmd_report(const Options& o, const CLI::App*, const json&) {
    json results = json::array();
    for (const auto& path : o.inputs) {
        const json j = read_json(path);
        if (j.is_object() && j.contains("results")) {
            for (const auto& r : j.at("results")) results.push_back(r);
        } else {
            results.push_back(j);
        }
    }
    Run run("report", run_dir(o, o.out));
    run.echo({{"profile", o.profile}, {"inputs", o.inputs}, {"out", o.out}});
    const auto files = emit_report({{"results", results}}, o.out);
    for (const auto& f : files) run.note("wrote " + f.string());
    std::cout << files.size() << " report files written to " << o.out << "\n";
    return kOk;
}

std::string one_line(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
}

int fail(const char* kind, const std::string& msg, int code) {
    std::cerr << "error: " << kind << ": " << one_line(msg) << std::endl;
    return code;
}

int resolve_threads(int flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv("KSCOPE_THREADS"); env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v < 1) throw std::invalid_argument(std::string("KSCOPE_THREADS must be a positive integer, got '") + env + "'");
        return static_cast<int>(v);
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

}  // namespace

int run(int argc, const char* const* argv) {
    Options o;
    CLI::App app{"k-space corruption detection, undersampled reconstruction and continual-learning experiments", "kscope"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    app.add_option("--threads", o.threads, "worker threads (default: KSCOPE_THREADS or all cores)")->check(CLI::PositiveNumber);
    app.add_option("--profile", o.profile, "defaults profile")->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--run-dir", o.run_dir, "directory for the config echo and log (default: next to the outputs)");

    using Handler = int (*)(const Options&, const CLI::App*, const json&);
    std::vector<std::pair<CLI::App*, Handler>> subs;
    auto add = [&](const char* name, const char* desc, Handler h) {
        auto* s = app.add_subcommand(name, desc);
        subs.emplace_back(s, h);
        return s;
    };
    auto seed = [&](CLI::App* s) { s->add_option("--seed", o.seed, "master seed"); };
    auto arch = [&](CLI::App* s) {
        s->add_option("--cascades", o.cascades, "MiniVarNet cascades")->check(CLI::PositiveNumber);
        s->add_option("--channels", o.channels, "refinement CNN channels")->check(CLI::PositiveNumber);
        s->add_option("--kernel", o.kernel, "refinement CNN kernel size (odd)")->check(CLI::PositiveNumber);
    };
    auto training = [&](CLI::App* s) {
        s->add_option("--batch", o.batch, "mini-batch size")->check(CLI::PositiveNumber);
        s->add_option("--lr", o.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    };

    auto* s = add("phantom-gen", "generate a multi-coil phantom k-space dataset", cmd_phantom_gen);
    s->add_option("--config", o.config, "PhantomConfig JSON file");
    s->add_option("--preset", o.preset, "phantom family when no config is given")->check(CLI::IsMember({"shepp-logan", "knee"}));
    s->add_option("--volumes", o.volumes, "number of volumes")->check(CLI::PositiveNumber);
    s->add_option("--slices", o.slices, "slices per volume")->check(CLI::PositiveNumber);
    s->add_option("--grid", o.grid, "image height and width")->check(CLI::PositiveNumber);
    s->add_option("--coils", o.coils, "receiver coils")->check(CLI::PositiveNumber);
    s->add_option("--first-volume-id", o.first_volume_id, "volume id of the first volume");
    s->add_option("--out", o.out, "output dataset directory")->required();
    seed(s);

    s = add("mask", "write a sampling mask", cmd_mask);
    s->add_option("--mode", o.mode, "mask kind")->required()->check(CLI::IsMember({"variable", "fixed"}));
    s->add_option("--width", o.width, "number of k-space columns")->required()->check(CLI::PositiveNumber);
    s->add_option("--accel", o.accel, "acceleration (fixed mode)")->check(CLI::Range(1.0, 1e9));
    s->add_option("--min-lines", o.min_lines, "minimum acquired lines (variable mode)")->check(CLI::PositiveNumber);
    s->add_option("--acs-fraction", o.acs_fraction, "center fraction")->check(CLI::Range(1e-9, 1.0));
    s->add_option("--out", o.out, "mask JSON path")->required();
    seed(s);

    s = add("corrupt", "mask, single-coil combine and corrupt a dataset", cmd_corrupt);
    s->add_option("--in", o.in, "input dataset")->required();
    s->add_option("--out", o.out, "output directory")->required();
    s->add_option("--config", o.config, "corruption config JSON");
    seed(s);

    s = add("train-detector", "train the corrupted-line detector", cmd_train_detector);
    s->add_option("--data", o.data, "corruption dataset directory")->required();
    s->add_option("--val", o.val, "validation corruption dataset");
    s->add_option("--epochs", o.epochs, "epochs")->check(CLI::NonNegativeNumber);
    s->add_option("--input-length", o.input_length, "detector readout length")->check(CLI::PositiveNumber);
    s->add_option("--out", o.out, "weight file")->required();
    training(s);
    seed(s);

    s = add("eval-detector", "score held-out lines with the detector and the baseline", cmd_eval_detector);
    s->add_option("--net", o.net, "detector weight file")->required();
    s->add_option("--data", o.data, "corruption dataset directory")->required();
    s->add_option("--threshold", o.threshold, "decision threshold on the detector output");
    s->add_option("--report", o.report, "report JSON path");
    s->add_option("--roc", o.roc, "ROC SVG path");

    s = add("recon", "reconstruct undersampled slices", cmd_recon);
    s->add_option("--method", o.method, "reconstructor")->required()->check(CLI::IsMember({"zf", "cs", "varnet"}));
    s->add_option("--net", o.net, "MiniVarNet weight file (varnet)");
    s->add_option("--in", o.in, "input dataset")->required();
    s->add_option("--mask", o.mask, "mask JSON")->required();
    s->add_option("--config", o.config, "CS config JSON (cs)");
    s->add_option("--crop", o.crop, "square center crop of images and targets (0 = none)")->check(CLI::NonNegativeNumber);
    s->add_option("--out", o.out, "image directory")->required();
    s->add_option("--metrics", o.metrics, "metrics JSON path (default: <out>/metrics.json)");

    s = add("train-recon", "train a MiniVarNet", cmd_train_recon);
    s->add_option("--data", o.data, "training dataset")->required();
    s->add_option("--policy", o.policy, "training mask policy")->check(CLI::IsMember({"variable", "fixed"}));
    s->add_option("--accels", o.accels, "fixed-policy accelerations, comma separated");
    s->add_option("--min-lines", o.min_lines, "variable-policy minimum lines")->check(CLI::PositiveNumber);
    s->add_option("--epochs", o.epochs, "epochs")->check(CLI::NonNegativeNumber);
    s->add_option("--crop", o.crop, "square crop of the SSIM loss (0 = none)")->check(CLI::NonNegativeNumber);
    s->add_option("--init", o.init, "start from this weight file");
    s->add_option("--out", o.out, "weight file")->required();
    arch(s);
    training(s);
    seed(s);

    s = add("transfer", "pre-training / fine-tuning comparison", cmd_transfer);
    s->add_option("--pretrain", o.pretrain, "phantom pre-training dataset")->required();
    s->add_option("--finetune", o.finetune, "fine-tuning dataset")->required();
    s->add_option("--test", o.test, "held-out test dataset")->required();
    s->add_option("--large", o.large, "optional large pre-training dataset");
    s->add_option("--accels", o.accels, "accelerations, comma separated");
    s->add_option("--pretrain-epochs", o.pretrain_epochs, "pre-training epochs")->check(CLI::NonNegativeNumber);
    s->add_option("--finetune-epochs", o.finetune_epochs, "fine-tuning epochs")->check(CLI::NonNegativeNumber);
    s->add_option("--crop", o.crop, "square crop (0 = none)")->check(CLI::NonNegativeNumber);
    s->add_option("--report", o.report, "report JSON path")->required();
    arch(s);
    training(s);
    seed(s);

    s = add("ewc", "sequential two-task training with elastic weight consolidation", cmd_ewc);
    s->add_option("--taskA", o.task_a, "task A training dataset")->required();
    s->add_option("--taskB", o.task_b, "task B training dataset")->required();
    s->add_option("--testA", o.test_a, "task A test dataset (default: hold out the last fifth of volumes)");
    s->add_option("--testB", o.test_b, "task B test dataset (default: hold out the last fifth of volumes)");
    s->add_option("--lambdas", o.lambdas, "comma-separated lambda grid, 'inf' skips phase 2");
    s->add_option("--epochs-a", o.epochs_a, "phase-1 epochs")->check(CLI::NonNegativeNumber);
    s->add_option("--epochs-b", o.epochs_b, "phase-2 epochs")->check(CLI::NonNegativeNumber);
    s->add_option("--fisher-samples", o.samples, "task-A slices used for the anchor Fisher")->check(CLI::PositiveNumber);
    s->add_option("--min-lines", o.min_lines, "variable-policy minimum lines")->check(CLI::PositiveNumber);
    s->add_option("--crop", o.crop, "square crop (0 = none)")->check(CLI::NonNegativeNumber);
    s->add_option("--report", o.report, "report JSON path")->required();
    s->add_option("--curves", o.curves, "task-A curve SVG path");
    arch(s);
    training(s);
    seed(s);

    s = add("fisher-overlap", "Fisher overlap between two tasks", cmd_fisher_overlap);
    s->add_option("--netA", o.net_a, "network evaluated on task A")->required();
    s->add_option("--netB", o.net_b, "network evaluated on task B (default: netA)");
    s->add_option("--dataA", o.data_a, "task A dataset")->required();
    s->add_option("--dataB", o.data_b, "task B dataset")->required();
    s->add_option("--partition", o.partition, "component partition JSON (default: data consistency vs refinement)");
    s->add_option("--samples", o.samples, "slices per task")->check(CLI::PositiveNumber);
    s->add_option("--min-lines", o.min_lines, "variable-policy minimum lines")->check(CLI::PositiveNumber);
    s->add_option("--crop", o.crop, "square crop (0 = none)")->check(CLI::NonNegativeNumber);
    s->add_option("--report", o.report, "report JSON path")->required();
    seed(s);

    s = add("autocorr", "k-space line correlation maps", cmd_autocorr);
    s->add_option("--in", o.in, "input dataset")->required();
    s->add_option("--crop", o.crop, "square image crop before the transform")->check(CLI::PositiveNumber);
    s->add_option("--anchors", o.anchors, "anchor columns, comma separated");
    s->add_option("--out", o.out, "output directory")->required();

    s = add("report", "render result JSON files into tables and SVG plots", cmd_report);
    s->add_option("--in", o.inputs, "result JSON files")->required()->expected(1, -1);
    s->add_option("--out", o.out, "report directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        if (argc <= 1) std::cout << app.help();
        return fail("usage", e.what(), kUsage);
    }

    try {
        set_thread_count(resolve_threads(o.threads));
        const json prof = profile_defaults(o.profile);
        for (const auto& [sub, handler] : subs)
            if (sub->parsed()) return handler(o, sub, prof);
        return fail("usage", "no subcommand", kUsage);
    } catch (const DataError& e) {
        return fail("data", e.what(), kData);
    } catch (const NumericalError& e) {
        return fail("numerical", e.what(), kNumerical);
    } catch (const std::invalid_argument& e) {
        return fail("usage", e.what(), kUsage);
    } catch (const std::out_of_range& e) {
        return fail("usage", e.what(), kUsage);
    } catch (const fs::filesystem_error& e) {
        return fail("data", e.what(), kData);
    } catch (const json::exception& e) {
        return fail("data", e.what(), kData);
    } catch (const std::exception& e) {
        return fail("data", e.what(), kData);
    }
}

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace kscope::cli
