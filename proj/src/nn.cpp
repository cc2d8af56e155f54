#include "kscope/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace kscope::nn {

void leaky_relu_inplace(Mat& x) {
    x = x.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
}

void leaky_relu_backward(const Mat& pre, Mat& g) {
    g = g.binaryExpr(pre, [](double gv, double p) { return p > 0.0 ? gv : kLeakySlope * gv; });
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double bce_with_logits(double z, double y) {
    // log(1 + exp(-|z|)) + max(z, 0) - y z
    return std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - y * z;
}

namespace {

Mat im2col1d(const Mat& x, Index k) {
    const Index cin = x.rows(), lout = x.cols() - k + 1;
    Mat cols(cin * k, lout);
    for (Index c = 0; c < cin; ++c)
        for (Index j = 0; j < k; ++j) cols.row(c * k + j) = x.row(c).segment(j, lout);
    return cols;
}

Mat im2col2d(const Mat& x, Index h, Index w, Index k) {
    const Index cin = x.rows(), r = k / 2;
    Mat cols = Mat::Zero(cin * k * k, h * w);
    for (Index c = 0; c < cin; ++c)
        for (Index dy = 0; dy < k; ++dy)
            for (Index dx = 0; dx < k; ++dx) {
                auto row = cols.row((c * k + dy) * k + dx);
                const Index oy = dy - r, ox = dx - r;
                for (Index y = std::max<Index>(0, -oy); y < std::min(h, h - oy); ++y) {
                    const Index x0 = std::max<Index>(0, -ox), x1 = std::min(w, w - ox);
                    if (x1 > x0) row.segment(y * w + x0, x1 - x0) = x.row(c).segment((y + oy) * w + x0 + ox, x1 - x0);
                }
            }
    return cols;
}

void col2im2d(const Mat& cols, Index cin, Index h, Index w, Index k, Mat& gin) {
    const Index r = k / 2;
    gin.setZero(cin, h * w);
    for (Index c = 0; c < cin; ++c)
        for (Index dy = 0; dy < k; ++dy)
            for (Index dx = 0; dx < k; ++dx) {
                auto row = cols.row((c * k + dy) * k + dx);
                const Index oy = dy - r, ox = dx - r;
                for (Index y = std::max<Index>(0, -oy); y < std::min(h, h - oy); ++y) {
                    const Index x0 = std::max<Index>(0, -ox), x1 = std::min(w, w - ox);
                    if (x1 > x0) gin.row(c).segment((y + oy) * w + x0 + ox, x1 - x0) += row.segment(y * w + x0, x1 - x0);
                }
            }
}

}  // namespace

Mat conv1d_forward(const Mat& x, const double* w, const double* b, Index out_ch, Index k) {
    if (x.cols() < k) throw std::invalid_argument("conv1d: input shorter than kernel");
    const ConstMatMap W(w, out_ch, x.rows() * k);
    Mat out = W * im2col1d(x, k);
    for (Index o = 0; o < out_ch; ++o) out.row(o).array() += b[o];
    return out;
}

void conv1d_backward(const Mat& x, const double* w, Index out_ch, Index k, const Mat& gout, double* gw, double* gb,
                     Mat* gin) {
    const Index cin = x.rows();
    const Mat cols = im2col1d(x, k);
    MatMap(gw, out_ch, cin * k) += gout * cols.transpose();
    for (Index o = 0; o < out_ch; ++o) gb[o] += gout.row(o).sum();
    if (gin) {
        const ConstMatMap W(w, out_ch, cin * k);
        const Mat gcols = W.transpose() * gout;
        gin->setZero(cin, x.cols());
        const Index lout = gout.cols();
        for (Index c = 0; c < cin; ++c)
            for (Index j = 0; j < k; ++j) gin->row(c).segment(j, lout) += gcols.row(c * k + j);
    }
}

Pooled maxpool1d_forward(const Mat& x, Index p) {
    const Index n = x.cols() / p;
    Pooled r{Mat(x.rows(), n), std::vector<Index>(static_cast<std::size_t>(x.rows() * n))};
    for (Index c = 0; c < x.rows(); ++c)
        for (Index i = 0; i < n; ++i) {
            Index best = i * p;
            for (Index j = i * p + 1; j < (i + 1) * p; ++j)
                if (x(c, j) > x(c, best)) best = j;
            r.out(c, i) = x(c, best);
            r.argmax[static_cast<std::size_t>(c * n + i)] = c * x.cols() + best;
        }
    return r;
}

Mat maxpool1d_backward(const Mat& gout, const std::vector<Index>& argmax, Index rows, Index cols) {
    Mat g = Mat::Zero(rows, cols);
    for (Index i = 0; i < gout.size(); ++i) g.data()[argmax[static_cast<std::size_t>(i)]] += gout.data()[i];
    return g;
}

Mat conv2d_forward(const Mat& x, Index h, Index w, const double* wt, const double* b, Index out_ch, Index k) {
    if (k % 2 == 0) throw std::invalid_argument("conv2d: kernel must be odd");
    const ConstMatMap W(wt, out_ch, x.rows() * k * k);
    Mat out = W * im2col2d(x, h, w, k);
    for (Index o = 0; o < out_ch; ++o) out.row(o).array() += b[o];
    return out;
}

void conv2d_backward(const Mat& x, Index h, Index w, const double* wt, Index out_ch, Index k, const Mat& gout,
                     double* gw, double* gb, Mat* gin) {
    const Index cin = x.rows();
    const Mat cols = im2col2d(x, h, w, k);
    MatMap(gw, out_ch, cin * k * k) += gout * cols.transpose();
    for (Index o = 0; o < out_ch; ++o) gb[o] += gout.row(o).sum();
    if (gin) {
        const ConstMatMap W(wt, out_ch, cin * k * k);
        col2im2d(W.transpose() * gout, cin, h, w, k, *gin);
    }
}

Vec dense_forward(const Vec& x, const double* w, const double* b, Index out) {
    const ConstMatMap W(w, out, x.size());
    return W * x + Eigen::Map<const Vec>(b, out);
}

void dense_backward(const Vec& x, const double* w, Index out, const Vec& gout, double* gw, double* gb, Vec* gin) {
    MatMap(gw, out, x.size()) += gout * x.transpose();
    Eigen::Map<Vec>(gb, out) += gout;
    if (gin) *gin = ConstMatMap(w, out, x.size()).transpose() * gout;
}

void Adam::step(Vec& params, const Vec& grad, double lr) {
    if (m.size() != params.size()) {
        m = Vec::Zero(params.size());
        v = Vec::Zero(params.size());
        t = 0;
    }
    ++t;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

double step_decay_lr(double base, int epoch, int every, double factor) {
    return base * std::pow(factor, static_cast<double>(epoch / every));
}

void he_uniform(double* w, Index count, Index fan_in, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index i = 0; i < count; ++i) w[i] = u(rng);
}

namespace {

constexpr char kMagic[8] = {'K', 'S', 'C', 'O', 'P', 'E', 'W', 'T'};

template <class T>
T swap_if_big(T v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    T r = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) r = static_cast<T>((r << 8) | ((v >> (8 * i)) & 0xff));
    return r;
}

template <class T>
void put_le(std::ostream& os, T v) {
    v = swap_if_big(v);
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get_le(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("weight file truncated");
    return swap_if_big(v);
}

}  // namespace

void write_weights(const std::filesystem::path& path, const nlohmann::json& arch, const Vec& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    const std::string a = arch.dump();
    os.write(kMagic, sizeof kMagic);
    put_le<std::uint32_t>(os, kWeightFormatVersion);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(a.size()));
    os.write(a.data(), static_cast<std::streamsize>(a.size()));
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(params.size()));
    for (Index i = 0; i < params.size(); ++i) put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(static_cast<float>(params[i])));
    if (!os) throw DataError("failed writing " + path.string());
}

WeightFile read_weights(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open weight file " + path.string());
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw DataError("not a weight file: " + path.string());
    const auto version = get_le<std::uint32_t>(is);
    if (version != kWeightFormatVersion)
        throw DataError("weight file version " + std::to_string(version) + " unsupported");
    const auto alen = get_le<std::uint32_t>(is);
    std::string a(alen, '\0');
    if (!is.read(a.data(), alen)) throw DataError("weight file truncated");
    WeightFile wf;
    try {
        wf.arch = nlohmann::json::parse(a);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("weight file architecture header: ") + e.what());
    }
    const auto n = get_le<std::uint64_t>(is);
    wf.params.resize(static_cast<Index>(n));
    for (Index i = 0; i < wf.params.size(); ++i)
        wf.params[i] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(is)));
    if (is.peek() != std::char_traits<char>::eof()) throw DataError("weight file has trailing bytes");
    return wf;
}

Vec quantize_f32(const Vec& params) {
    return params.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

}  // namespace kscope::nn
