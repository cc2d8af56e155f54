#pragma once

#include <vector>

#include <json.hpp>

#include "kscope/core.hpp"
#include "kscope/sampling.hpp"

namespace kscope {

/// max(|v| - t, 0) * sign(v).
double soft_threshold(double v, double t);
/// Shrinks the modulus, keeps the phase.
cdouble soft_threshold(cdouble v, double t);

/// Number of orthonormal Haar levels applied to an h x w image (halving while
/// both dimensions are even and at least 2).
int haar_levels(Index h, Index w);
ComplexImage haar_forward(const ComplexImage& img);
ComplexImage haar_inverse(const ComplexImage& coeffs);

struct CsConfig {
    double lambda_rel = 1e-2;  // lambda = lambda_rel * max |A^H y|
    int iters = 200;
    double slack = 1e-10;      // relative objective increase tolerated before aborting

    void validate() const;
};

CsConfig cs_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CsConfig& c);

struct CsResult {
    ComplexImage x;                  // complex sensitivity-combined image
    RealImage magnitude;             // |x|
    std::vector<double> objective;   // value after each iteration, index 0 = start
    double lambda = 0.0;
    int restarts = 0;
};

/// SENSE forward model A x = M F (s_c x) for every coil.
std::vector<ComplexImage> sense_forward(const ComplexImage& x, const std::vector<ComplexImage>& maps,
                                        const SamplingMask& mask);
ComplexImage sense_adjoint(const std::vector<ComplexImage>& k, const std::vector<ComplexImage>& maps,
                           const SamplingMask& mask);

/// FISTA on ||A x - y||^2 + lambda ||Haar x||_1 with step 1/2 (||A|| <= 1 for
/// maps with sum |s_c|^2 <= 1). Momentum restarts whenever a step would raise
/// the objective, which keeps the objective sequence nonincreasing. Throws
/// NumericalError if even a plain proximal step increases it beyond slack.
CsResult cs_recon(const KSpaceSlice& ks, const SamplingMask& mask, const std::vector<ComplexImage>& maps,
                  const CsConfig& cfg = {});
/// Absolute lambda variant.
CsResult cs_recon_lambda(const KSpaceSlice& ks, const SamplingMask& mask, const std::vector<ComplexImage>& maps,
                         double lambda, int iters, double slack = 1e-10);

double cs_objective(const ComplexImage& x, const std::vector<ComplexImage>& y, const std::vector<ComplexImage>& maps,
                    const SamplingMask& mask, double lambda);

}  // namespace kscope
