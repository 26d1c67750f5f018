// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lrf/geometry.hpp"
#include "lrf/sh.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lrf {

/// One latent Gaussian, stored pre-activation:
///   scale   = exp(log_scale)
///   R       = rotation of normalize(rotation), quaternion order (w, x, y, z)
///   opacity = sigmoid(opacity_logit)
/// `sh` holds C x 16 coefficients, channel-major (sh[c * 16 + k]).
struct LatentGaussian {
    Vec3 position = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    double opacity_logit = 0.0;
    std::vector<double> sh;

    int channels() const { return static_cast<int>(sh.size()) / kShCoeffs; }
    double opacity() const;
    Vec3 scale() const { return log_scale.array().exp(); }
};

/// Per-channel affine map between raw latents and the normalized values the
/// field is trained on: normalized = (raw - mean) / scale.
struct NormRecord {
    std::vector<double> mean;
    std::vector<double> scale;

    bool empty() const { return mean.empty(); }
    double normalize(int channel, double raw) const;
    double denormalize(int channel, double normalized) const;
};

struct Scene {
    std::vector<LatentGaussian> gaussians;
    int channels = 4;
    int sh_degree = kMaxShDegree;
    NormRecord norm;

    std::size_t size() const { return gaussians.size(); }

    /// Throws if any gaussian has the wrong coefficient count, sh_degree is
    /// out of range, or a parameter is non-finite.
    void validate() const;
};

/// Number of scalar parameters per gaussian for C channels: 3+3+4+1+16C.
constexpr std::size_t params_per_gaussian(int channels) {
    return 11 + static_cast<std::size_t>(kShCoeffs) * channels;
}

/// Flat access to the k-th scalar of a gaussian in the order
/// position(3), log_scale(3), rotation(4), opacity_logit(1), sh(16C).
double& gaussian_param(LatentGaussian& g, std::size_t k);
double gaussian_param(const LatentGaussian& g, std::size_t k);
std::string gaussian_param_name(std::size_t k);

double sigmoid(double x);
double logit(double p);

Mat3 quaternion_to_rotation(const Vec4& unit_q);

/// Sigma = R S S^T R^T with S = diag(exp(log_scale)); `rotation` is
/// normalized first. Throws "invalid rotation" for a zero quaternion.
Mat3 covariance3d(const Vec3& log_scale, const Vec4& rotation);

/// One isotropic gaussian per point, sized by the mean distance to its three
/// nearest neighbours (0.01 when a point has none).
Scene init_scene(std::span<const Vec3> points, int channels, std::uint64_t seed,
                 int sh_degree = kMaxShDegree);

/// Binary little-endian PLY holding the raw pre-activation parameters.
void save_scene(const Scene& scene, const std::filesystem::path& path);
Scene load_scene(const std::filesystem::path& path);

} // namespace lrf
