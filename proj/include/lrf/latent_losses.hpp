// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lrf/geometry.hpp"
#include "lrf/image.hpp"

#include <array>
#include <map>
#include <string>
#include <vector>

namespace lrf {

/// Diagonal Gaussian posterior over a latent map.
struct PosteriorParams {
    LatentImage mean;
    LatentImage logvar;

    /// Throws unless the maps share a shape and every log-variance is finite.
    void validate() const;
};

struct WeightedPair {
    CorrespondencePair pair;
    double weight = 0.0;
};

struct CorrespondenceBatch {
    std::vector<WeightedPair> pairs;
    int downsample = 8; // full-resolution pixels per latent pixel
};

/// Bilinear sample of `z` at full-resolution pixel `pixel`, i.e. at latent
/// coordinate pixel / f - 0.5, clamped to the edges. Throws when the pixel
/// lies outside the full-resolution image (f * W, f * H).
std::vector<double> sample_latent(const LatentImage& z, const Vec2& pixel, int f);

struct BilinearTap {
    std::size_t offset; // pixel offset y * W + x
    double weight;
};

/// The four (possibly repeated) taps sample_latent blends.
std::array<BilinearTap, 4> bilinear_taps(const LatentImage& z, const Vec2& pixel, int f);

using LatentMaps = std::map<std::string, LatentImage>;

struct CorresLoss {
    double value = 0.0;
    std::vector<double> pair_residuals; // unweighted L1 per pair
    LatentMaps grads;                   // one entry per referenced view
};

/// Sum over pairs of weight * |sample(Z_i, x_i) - sample(Z_j, x_j)|_1, with
/// gradients scattered through the bilinear weights.
CorresLoss corres_loss(const LatentMaps& latents, const CorrespondenceBatch& batch);

/// Mean over pixels of the channel-summed KL(q || q_original) between
/// diagonal Gaussians.
double kl_regularizer(const PosteriorParams& q, const PosteriorParams& q_original);

struct VaeTerms {
    double recon = 0.0;    // mean |recon - target|
    double kl_prior = 0.0; // mean per-entry KL(q || N(0, I))
};

VaeTerms vae_terms(const LatentImage& recon, const LatentImage& target, const PosteriorParams& q);

inline constexpr double kKlWeight = 1e-6;
inline constexpr double kDefaultLambdaCorres = 0.5;
inline constexpr double kDefaultLambdaReg = 1e-6;

struct Stage1Terms {
    VaeTerms vae;
    double corres = 0.0;
    double reg = 0.0;
};

/// recon + kKlWeight * kl_prior + lambda_corres * corres + lambda_reg * reg.
double stage1_objective(const Stage1Terms& terms, double lambda_corres = kDefaultLambdaCorres,
                        double lambda_reg = kDefaultLambdaReg);

} // namespace lrf
