// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lrf/gaussian_scene.hpp"
#include "lrf/geometry.hpp"
#include "lrf/image.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace lrf {

inline constexpr double kCovarianceDilation = 0.3;
inline constexpr double kAlphaClamp = 0.99;
inline constexpr double kTransmittanceStop = 1e-4;
inline constexpr double kCutoffMahalanobisSq = 9.0; // 3 sigma
inline constexpr int kTileSize = 16;

/// Screen-space footprint of one gaussian for a fixed camera.
struct ProjectedGaussian {
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();     // dilated
    Mat2 inv_cov2d = Mat2::Identity();
    double depth = 0.0;
    std::vector<double> latent;        // view-dependent latent, C entries
    double opacity = 0.0;              // activated
    std::size_t source = 0;            // index into Scene::gaussians

    // Forward intermediates reused by the backward pass.
    Vec3 p_cam = Vec3::Zero();
    Mat3 cov3d = Mat3::Zero();
    Vec3 view_offset = Vec3::Zero();   // mean - camera centre, unnormalized
};

/// Projects one gaussian. Returns nullopt when it is culled: depth <= near
/// plane or its 3-sigma box lies entirely outside the sensor given by
/// cam.intrinsics.
std::optional<ProjectedGaussian> project(const LatentGaussian& g, const Camera& cam, int sh_degree,
                                         std::size_t source = 0);

/// Opacity of `pg` at a pixel-space point (pixel centres sit at i + 0.5).
/// Zero outside the 3-sigma ellipse, clamped to 0.99 inside.
double splat_alpha(const ProjectedGaussian& pg, const Vec2& pixel);

struct Contributor {
    double alpha = 0.0;
    std::span<const double> latent;
};

struct CompositeResult {
    std::vector<double> value;
    double transmittance = 1.0;
    std::size_t consumed = 0; // contributors visited before termination
};

/// Front-to-back alpha blending of depth-ordered contributors. Stops after
/// the contributor that drops transmittance below 1e-4.
CompositeResult composite_pixel(std::span<const Contributor> contributors, int channels);

struct RenderOptions {
    int sh_degree = -1; // < 0: use scene.sh_degree
    int threads = 1;
};

/// Forward render plus everything the backward pass needs.
struct RenderResult {
    LatentImage image;                         // with alpha map (1 - T)
    Camera camera;                             // intrinsics rescaled to the output size
    int sh_degree = 0;
    std::vector<ProjectedGaussian> projected;  // depth-sorted survivors
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::vector<std::uint32_t>> tile_lists; // indices into `projected`
    std::vector<std::uint32_t> pixel_consumed;          // tile-list entries visited per pixel
    std::vector<double> final_transmittance;
    /// Hash of every pixel's ordered active contributors and clamp states.
    /// Equal signatures mean the render is one smooth function of the
    /// parameters between the two evaluations.
    std::uint64_t structure_signature = 0;
};

/// Camera with intrinsics rescaled so its sensor matches `size`.
Camera camera_for_size(const Camera& cam, ImageSize size);

RenderResult render_forward(const Scene& scene, const Camera& cam, ImageSize size,
                            const RenderOptions& options = {});

LatentImage render(const Scene& scene, const Camera& cam, ImageSize size, const RenderOptions& options = {});

} // namespace lrf
