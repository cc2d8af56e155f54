#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "kscope/core.hpp"

namespace kscope::nn {

using Vec = Eigen::VectorXd;
/// Channel-major activations: one row per channel.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

inline constexpr double kLeakySlope = 0.01;

void leaky_relu_inplace(Mat& x);
/// g *= d leaky(pre) / d pre, elementwise.
void leaky_relu_backward(const Mat& pre, Mat& g);

double sigmoid(double z);
/// Binary cross entropy of sigmoid(z) against y, computed stably from the logit.
double bce_with_logits(double z, double y);
/// d bce / d z.
inline double bce_logit_grad(double z, double y) { return sigmoid(z) - y; }

/// Valid 1D convolution (cross-correlation). x: in_ch x L, w: [out][in][k]
/// row-major, b: out_ch. Returns out_ch x (L - k + 1).
Mat conv1d_forward(const Mat& x, const double* w, const double* b, Index out_ch, Index k);
/// Accumulates into gw/gb; writes gin when non-null.
void conv1d_backward(const Mat& x, const double* w, Index out_ch, Index k, const Mat& gout, double* gw, double* gb,
                     Mat* gin);

struct Pooled {
    Mat out;
    std::vector<Index> argmax;  // flat index into the input per output element
};
/// Non-overlapping max pool of width p along each row; a ragged tail is dropped.
Pooled maxpool1d_forward(const Mat& x, Index p);
Mat maxpool1d_backward(const Mat& gout, const std::vector<Index>& argmax, Index rows, Index cols);

/// "Same" zero-padded 2D convolution with an odd square kernel. x: in_ch x (h*w),
/// w: [out][in][ky][kx] row-major.
Mat conv2d_forward(const Mat& x, Index h, Index w, const double* wt, const double* b, Index out_ch, Index k);
void conv2d_backward(const Mat& x, Index h, Index w, const double* wt, Index out_ch, Index k, const Mat& gout,
                     double* gw, double* gb, Mat* gin);

/// Dense layer y = W x + b with W out x in row-major.
Vec dense_forward(const Vec& x, const double* w, const double* b, Index out);
void dense_backward(const Vec& x, const double* w, Index out, const Vec& gout, double* gw, double* gb, Vec* gin);

/// Adam with bias correction.
struct Adam {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    Vec m;
    Vec v;
    std::int64_t t = 0;

    void step(Vec& params, const Vec& grad, double lr);
};

/// base * factor^floor(epoch / every).
double step_decay_lr(double base, int epoch, int every = 40, double factor = 0.1);

/// Uniform(-bound, bound) with bound = sqrt(6 / fan_in).
void he_uniform(double* w, Index count, Index fan_in, std::uint64_t seed);

/// Weight file: magic, format version, architecture JSON, float32 parameters.
inline constexpr std::uint32_t kWeightFormatVersion = 1;
void write_weights(const std::filesystem::path& path, const nlohmann::json& arch, const Vec& params);
struct WeightFile {
    nlohmann::json arch;
    Vec params;
};
WeightFile read_weights(const std::filesystem::path& path);

/// Rounds every entry to the nearest float32, as stored on disk.
Vec quantize_f32(const Vec& params);

}  // namespace kscope::nn
