// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

// Reference implementations used to verify the library. They favour
// directness over speed and use no lrf_core internals.

#pragma once

#include "lrf/gaussian_scene.hpp"
#include "lrf/geometry.hpp"
#include "lrf/image.hpp"
#include "lrf/latent_losses.hpp"

#include <functional>
#include <random>
#include <vector>

namespace lrf::oracle {

/// Per-pixel render: project every gaussian (public project/splat_alpha),
/// sort the full list by depth and composite, with no tiling or bounding
/// boxes.
LatentImage render_bruteforce(const Scene& scene, const Camera& cam, ImageSize size);

enum class SsimPadding { valid, zero_same };

/// SSIM evaluated window by window with an explicit 2D Gaussian kernel.
double ssim_direct(const LatentImage& a, const LatentImage& b, double peak,
                   SsimPadding padding = SsimPadding::valid);

/// Real spherical harmonic Y_lm (Condon-Shortley phase) from associated
/// Legendre polynomials.
double sh_legendre(int l, int m, const Vec3& unit_dir);

/// sum_k coeffs[k] Y_k(dir) with k = l^2 + l + m, per channel.
std::vector<double> sh_eval_legendre(const std::vector<double>& coeffs, const Vec3& unit_dir, int degree);

/// Monte-Carlo KL(q || p) between diagonal Gaussians, summed over entries
/// and divided by `divisor`.
double kl_monte_carlo(const PosteriorParams& q, const PosteriorParams& p, std::size_t samples, std::uint64_t seed,
                      double divisor);

/// Monte-Carlo KL(q || N(0, I)), averaged over entries.
double kl_prior_monte_carlo(const PosteriorParams& q, std::size_t samples, std::uint64_t seed);

/// Central-difference gradient of f at x.
std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x, double h);

/// Empirical 2D covariance of pinhole projections of samples of a 3D gaussian.
Mat2 projected_covariance_monte_carlo(const LatentGaussian& g, const Camera& cam, std::size_t samples,
                                      std::uint64_t seed);

/// Random scene for rasterizer checks: a mix of on-screen, partly
/// off-screen and behind-camera gaussians, some opaque enough to hit the
/// alpha clamp and early termination. Camera is the identity pose.
struct RandomScene {
    Scene scene;
    Camera camera;
};
RandomScene random_render_scene(std::uint64_t seed, int gaussians, ImageSize size, int channels);

/// Relative error |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-12);

} // namespace lrf::oracle
