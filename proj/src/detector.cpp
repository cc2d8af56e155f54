#include "kscope/detector.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "kscope/parallel.hpp"

namespace kscope {
using nn::Mat;
using nn::Vec;

namespace {

struct Offsets {
    Index w1, b1, w2, b2, w3, b3, w4, b4, total;
};

Offsets offsets(const DetectorArch& a) {
    Offsets o{};
    Index at = 0;
    auto take = [&](Index n) {
        const Index r = at;
        at += n;
        return r;
    };
    o.w1 = take(a.conv1_channels * 2 * a.kernel);
    o.b1 = take(a.conv1_channels);
    o.w2 = take(a.conv2_channels * a.conv1_channels * a.kernel);
    o.b2 = take(a.conv2_channels);
    o.w3 = take(a.hidden * a.flat_size());
    o.b3 = take(a.hidden);
    o.w4 = take(a.hidden);
    o.b4 = take(1);
    o.total = at;
    return o;
}

struct Tape {
    Mat x0, z1, a1, z2, a2;
    nn::Pooled p1, p2;
    Vec flat, h, ha;
    double logit = 0.0;
};

void forward(const DetectorNet& net, const Mat& x0, Tape& t) {
    const auto& a = net.arch;
    const auto o = offsets(a);
    const double* p = net.params.data();
    if (x0.rows() != 2 || x0.cols() != a.input_length)
        throw std::invalid_argument("detector: input must be 2 x " + std::to_string(a.input_length));
    t.x0 = x0;
    t.z1 = nn::conv1d_forward(x0, p + o.w1, p + o.b1, a.conv1_channels, a.kernel);
    t.a1 = t.z1;
    nn::leaky_relu_inplace(t.a1);
    t.p1 = nn::maxpool1d_forward(t.a1, a.pool);
    t.z2 = nn::conv1d_forward(t.p1.out, p + o.w2, p + o.b2, a.conv2_channels, a.kernel);
    t.a2 = t.z2;
    nn::leaky_relu_inplace(t.a2);
    t.p2 = nn::maxpool1d_forward(t.a2, a.pool);
    t.flat = Eigen::Map<const Vec>(t.p2.out.data(), t.p2.out.size());
    t.h = nn::dense_forward(t.flat, p + o.w3, p + o.b3, a.hidden);
    t.ha = t.h.unaryExpr([](double v) { return v > 0.0 ? v : nn::kLeakySlope * v; });
    t.logit = nn::dense_forward(t.ha, p + o.w4, p + o.b4, 1)[0];
}

void backward(const DetectorNet& net, const Tape& t, double glogit, Vec& grad) {
    const auto& a = net.arch;
    const auto o = offsets(a);
    const double* p = net.params.data();
    double* g = grad.data();
    Vec gha;
    nn::dense_backward(t.ha, p + o.w4, 1, Vec::Constant(1, glogit), g + o.w4, g + o.b4, &gha);
    Vec gh = gha.binaryExpr(t.h, [](double gv, double pre) { return pre > 0.0 ? gv : nn::kLeakySlope * gv; });
    Vec gflat;
    nn::dense_backward(t.flat, p + o.w3, a.hidden, gh, g + o.w3, g + o.b3, &gflat);
    const Mat gp2 = Eigen::Map<const Mat>(gflat.data(), t.p2.out.rows(), t.p2.out.cols());
    Mat ga2 = nn::maxpool1d_backward(gp2, t.p2.argmax, t.a2.rows(), t.a2.cols());
    nn::leaky_relu_backward(t.z2, ga2);
    Mat gp1;
    nn::conv1d_backward(t.p1.out, p + o.w2, a.conv2_channels, a.kernel, ga2, g + o.w2, g + o.b2, &gp1);
    Mat ga1 = nn::maxpool1d_backward(gp1, t.p1.argmax, t.a1.rows(), t.a1.cols());
    nn::leaky_relu_backward(t.z1, ga1);
    nn::conv1d_backward(t.x0, p + o.w1, a.conv1_channels, a.kernel, ga1, g + o.w1, g + o.b1, nullptr);
}

}  // namespace

Index DetectorArch::param_count() const { return offsets(*this).total; }

void DetectorArch::validate() const {
    if (kernel < 1 || pool < 1 || conv1_channels < 1 || conv2_channels < 1 || hidden < 1)
        throw std::invalid_argument("detector: layer sizes must be positive");
    if (conv1_length() < pool || conv2_length() < pool || pool2_length() < 1)
        throw std::invalid_argument("detector: input length too short for the layer stack");
}

nlohmann::json to_json(const DetectorArch& a) {
    return {{"model", "detector"},
            {"input_length", a.input_length},
            {"conv1_channels", a.conv1_channels},
            {"conv2_channels", a.conv2_channels},
            {"kernel", a.kernel},
            {"pool", a.pool},
            {"hidden", a.hidden}};
}

DetectorArch detector_arch_from_json(const nlohmann::json& j) {
    if (j.value("model", std::string{}) != "detector") throw DataError("weight file does not hold a detector");
    DetectorArch a;
    a.input_length = j.at("input_length").get<Index>();
    a.conv1_channels = j.at("conv1_channels").get<Index>();
    a.conv2_channels = j.at("conv2_channels").get<Index>();
    a.kernel = j.at("kernel").get<Index>();
    a.pool = j.at("pool").get<Index>();
    a.hidden = j.at("hidden").get<Index>();
    a.validate();
    return a;
}

DetectorNet make_detector(const DetectorArch& arch, std::uint64_t seed) {
    arch.validate();
    const auto o = offsets(arch);
    DetectorNet net{arch, Vec::Zero(o.total)};
    double* p = net.params.data();
    nn::he_uniform(p + o.w1, o.b1 - o.w1, 2 * arch.kernel, split_seed(seed, 1));
    nn::he_uniform(p + o.w2, o.b2 - o.w2, arch.conv1_channels * arch.kernel, split_seed(seed, 2));
    nn::he_uniform(p + o.w3, o.b3 - o.w3, arch.flat_size(), split_seed(seed, 3));
    nn::he_uniform(p + o.w4, o.b4 - o.w4, arch.hidden, split_seed(seed, 4));
    return net;
}

std::vector<double> fit_readout(std::span<const float> line, Index length) {
    const auto n = static_cast<Index>(line.size());
    std::vector<double> out(static_cast<std::size_t>(length), 0.0);
    if (n <= length) {
        const Index off = (length - n) / 2;
        for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(off + i)] = line[static_cast<std::size_t>(i)];
    } else {
        const Index off = (n - length) / 2;
        for (Index i = 0; i < length; ++i) out[static_cast<std::size_t>(i)] = line[static_cast<std::size_t>(off + i)];
    }
    return out;
}

Mat detector_features(std::span<const float> high, std::span<const float> low, Index length) {
    if (high.size() != low.size()) throw std::invalid_argument("detector: line pair length mismatch");
    const auto h = fit_readout(high, length), l = fit_readout(low, length);
    const double peak = *std::max_element(l.begin(), l.end());
    const double s = peak > 0.0 ? 1e-3 * peak : 1.0;
    Mat x(2, length);
    for (Index i = 0; i < length; ++i) {
        x(0, i) = std::log1p(std::abs(h[static_cast<std::size_t>(i)]) / s);
        x(1, i) = std::log1p(std::abs(l[static_cast<std::size_t>(i)]) / s);
    }
    return x;
}

double detector_logit(const DetectorNet& net, const Mat& features) {
    Tape t;
    forward(net, features, t);
    return t.logit;
}

double detector_pair_score(const DetectorNet& net, std::span<const float> high, std::span<const float> low) {
    return nn::sigmoid(detector_logit(net, detector_features(high, low, net.arch.input_length)));
}

double detector_forward(const DetectorNet& net, std::span<const float> high, std::span<const std::vector<float>> acs) {
    if (acs.empty()) throw std::invalid_argument("detector: empty ACS");
    double sum = 0.0;
    for (const auto& low : acs) sum += detector_pair_score(net, high, low);
    return sum / static_cast<double>(acs.size());
}

double detector_loss_grad(const DetectorNet& net, const Mat& features, double label, double weight, Vec& grad) {
    if (grad.size() != net.params.size()) throw std::invalid_argument("detector: gradient size mismatch");
    Tape t;
    forward(net, features, t);
    backward(net, t, weight * nn::bce_logit_grad(t.logit, label), grad);
    return weight * nn::bce_with_logits(t.logit, label);
}

double detector_mean_loss(const DetectorNet& net, const std::vector<LinePair>& pairs) {
    if (pairs.empty()) return 0.0;
    std::vector<double> loss(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t i) {
        const auto x = detector_features(pairs[i].high, pairs[i].low, net.arch.input_length);
        loss[i] = nn::bce_with_logits(detector_logit(net, x), pairs[i].label);
    });
    return std::accumulate(loss.begin(), loss.end(), 0.0) / static_cast<double>(pairs.size());
}

DetectorNet detector_train(const std::vector<LinePair>& train, const std::vector<LinePair>& val,
                           const DetectorHyper& hyper, const DetectorArch& arch, std::vector<DetectorEpoch>* log) {
    if (train.empty()) throw DataError("detector_train: empty training set");
    if (hyper.batch < 1 || hyper.epochs < 0) throw std::invalid_argument("detector_train: bad batch size or epoch count");
    DetectorNet net = make_detector(arch, split_seed(hyper.seed, 0));
    nn::Adam adam;
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    constexpr std::size_t kChunk = 8;

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        Rng rng(split_seed(hyper.seed, 1000 + static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = nn::step_decay_lr(hyper.lr, epoch, hyper.decay_every, hyper.decay);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.batch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch));
            const auto n = static_cast<double>(end - start);
            double npos = 0.0;
            for (std::size_t i = start; i < end; ++i) npos += train[order[i]].label;
            double wpos = 1.0, wneg = 1.0;
            if (hyper.class_weighting && npos > 0.0 && npos < n) {
                wpos = n / (2.0 * npos);
                wneg = n / (2.0 * (n - npos));
            }
            const std::size_t chunks = (end - start + kChunk - 1) / kChunk;
            std::vector<Vec> grads(chunks, Vec::Zero(net.params.size()));
            std::vector<double> losses(chunks, 0.0);
            parallel_for(chunks, [&](std::size_t c) {
                for (std::size_t i = start + c * kChunk; i < std::min(end, start + (c + 1) * kChunk); ++i) {
                    const auto& ex = train[order[i]];
                    const auto x = detector_features(ex.high, ex.low, net.arch.input_length);
                    losses[c] += detector_loss_grad(net, x, ex.label, (ex.label ? wpos : wneg) / n, grads[c]);
                }
            });
            Vec grad = Vec::Zero(net.params.size());
            double loss = 0.0;
            for (std::size_t c = 0; c < chunks; ++c) {
                grad += grads[c];
                loss += losses[c];
            }
            if (!std::isfinite(loss) || !grad.allFinite())
                throw NumericalError("detector_train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(start / static_cast<std::size_t>(hyper.batch)));
            adam.step(net.params, grad, lr);
            epoch_loss += loss * n;
        }
        if (log) {
            log->push_back({epoch, lr, epoch_loss / static_cast<double>(train.size()),
                            val.empty() ? 0.0 : detector_mean_loss(net, val)});
        }
    }
    return net;
}

void save_detector(const std::filesystem::path& path, const DetectorNet& net) {
    nn::write_weights(path, to_json(net.arch), net.params);
}

DetectorNet load_detector(const std::filesystem::path& path) {
    auto wf = nn::read_weights(path);
    DetectorNet net{detector_arch_from_json(wf.arch), std::move(wf.params)};
    if (net.params.size() != net.arch.param_count()) throw DataError("detector weight count does not match architecture");
    return net;
}

double cross_correlation_sum(std::span<const cdouble> a, std::span<const cdouble> b) {
    const auto na = static_cast<Index>(a.size()), nb = static_cast<Index>(b.size());
    double total = 0.0;
    for (Index m = -(na - 1); m < nb; ++m) {
        cdouble acc{};
        const Index n0 = std::max<Index>(0, -m), n1 = std::min(na, nb - m);
        for (Index n = n0; n < n1; ++n) acc += std::conj(a[static_cast<std::size_t>(n)]) * b[static_cast<std::size_t>(n + m)];
        total += std::abs(acc);
    }
    return total;
}

double baseline_score(std::span<const cdouble> observed, std::span<const std::vector<cdouble>> acs,
                      std::span<const cdouble> ground_truth) {
    if (acs.empty()) throw std::invalid_argument("baseline_score: empty ACS");
    if (observed.size() != ground_truth.size()) throw std::invalid_argument("baseline_score: line length mismatch");
    double sum = 0.0;
    for (const auto& low : acs) {
        const double den = cross_correlation_sum(ground_truth, low);
        if (!(den > 0.0)) throw NumericalError("baseline_score: ground-truth cross-correlation is zero");
        sum += cross_correlation_sum(observed, low) / den;
    }
    return sum / static_cast<double>(acs.size());
}

namespace {

struct LineRef {
    std::size_t slice;
    Index column;
};

std::vector<LineRef> scored_lines(const std::vector<CorruptedSlice>& slices) {
    std::vector<LineRef> out;
    for (std::size_t s = 0; s < slices.size(); ++s)
        for (Index c : slices[s].mask.acquired_indices())
            if (!slices[s].mask.is_acs(c)) out.push_back({s, c});
    return out;
}

std::vector<cdouble> column(const KSpaceSlice& ks, Index c) {
    std::vector<cdouble> out(static_cast<std::size_t>(ks.height()));
    for (Index y = 0; y < ks.height(); ++y) out[static_cast<std::size_t>(y)] = ks.coil(0)(y, c);
    return out;
}

std::vector<float> magnitudes(const KSpaceSlice& ks, Index c) {
    std::vector<float> out(static_cast<std::size_t>(ks.height()));
    for (Index y = 0; y < ks.height(); ++y) out[static_cast<std::size_t>(y)] = std::abs(ks.coil(0)(y, c));
    return out;
}

}  // namespace

std::vector<LineScore> detector_line_scores(const DetectorNet& net, const std::vector<CorruptedSlice>& slices) {
    const auto lines = scored_lines(slices);
    std::vector<std::vector<std::vector<float>>> acs(slices.size());
    for (std::size_t s = 0; s < slices.size(); ++s)
        for (Index a : slices[s].mask.acs_indices()) acs[s].push_back(magnitudes(slices[s].corrupted, a));
    std::vector<LineScore> out(lines.size());
    parallel_for(lines.size(), [&](std::size_t i) {
        const auto& [s, c] = lines[i];
        out[i] = {s, c, slices[s].record.corrupted(c) ? 1 : 0,
                  detector_forward(net, magnitudes(slices[s].corrupted, c), acs[s])};
    });
    return out;
}

std::vector<LineScore> baseline_line_scores(const std::vector<CorruptedSlice>& slices) {
    const auto lines = scored_lines(slices);
    std::vector<std::vector<std::vector<cdouble>>> acs(slices.size());
    for (std::size_t s = 0; s < slices.size(); ++s)
        for (Index a : slices[s].mask.acs_indices()) acs[s].push_back(column(slices[s].corrupted, a));
    std::vector<LineScore> out(lines.size());
    parallel_for(lines.size(), [&](std::size_t i) {
        const auto& [s, c] = lines[i];
        out[i] = {s, c, slices[s].record.corrupted(c) ? 1 : 0,
                  baseline_score(column(slices[s].corrupted, c), acs[s], column(slices[s].clean, c))};
    });
    return out;
}

}  // namespace kscope
