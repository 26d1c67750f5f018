// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "lrf/rasterizer.hpp"
#include "lrf/error.hpp"

#include "blend.hpp"
#include "parallel.hpp"

#include <Eigen/LU>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lrf {

void require_same_shape(const LatentImage& a, const LatentImage& b, const char* what) {
    if (!a.same_shape(b)) {
        throw Error(fmt::format("{}: shape mismatch {}x{}x{} vs {}x{}x{}", what, a.height, a.width, a.channels,
                                b.height, b.width, b.channels));
    }
}

bool all_finite(const LatentImage& img) {
    const auto finite = [](double v) { return std::isfinite(v); };
    return std::all_of(img.data.begin(), img.data.end(), finite) &&
           std::all_of(img.alpha.begin(), img.alpha.end(), finite);
}

std::optional<ProjectedGaussian> project(const LatentGaussian& g, const Camera& cam, int sh_degree,
                                         std::size_t source) {
    const Mat3 w = cam.pose.rotation();
    const Vec3 p = w * g.position + cam.pose.translation();
    if (p.z() <= kNearPlane) {
        return std::nullopt;
    }
    const auto& k = cam.intrinsics;
    const double inv_z = 1.0 / p.z();
    const Vec2 mean(k.fx * p.x() * inv_z + k.cx, k.fy * p.y() * inv_z + k.cy);

    Eigen::Matrix<double, 2, 3> j;
    j << k.fx * inv_z, 0.0, -k.fx * p.x() * inv_z * inv_z,
         0.0, k.fy * inv_z, -k.fy * p.y() * inv_z * inv_z;
    const Mat3 cov3d = covariance3d(g.log_scale, g.rotation);
    const Eigen::Matrix<double, 2, 3> t = j * w;
    Mat2 cov2d = t * cov3d * t.transpose();
    cov2d(0, 1) = cov2d(1, 0) = 0.5 * (cov2d(0, 1) + cov2d(1, 0));
    cov2d(0, 0) += kCovarianceDilation;
    cov2d(1, 1) += kCovarianceDilation;

    const double rx = 3.0 * std::sqrt(cov2d(0, 0));
    const double ry = 3.0 * std::sqrt(cov2d(1, 1));
    if (mean.x() + rx < 0.0 || mean.x() - rx > k.width || mean.y() + ry < 0.0 || mean.y() - ry > k.height) {
        return std::nullopt;
    }

    ProjectedGaussian pg;
    pg.mean2d = mean;
    pg.cov2d = cov2d;
    pg.inv_cov2d = cov2d.inverse();
    pg.depth = p.z();
    pg.opacity = g.opacity();
    pg.source = source;
    pg.p_cam = p;
    pg.cov3d = cov3d;
    pg.view_offset = g.position - cam.pose.camera_center();
    const double dist = pg.view_offset.norm();
    const Vec3 dir = dist > 0.0 ? Vec3(pg.view_offset / dist) : Vec3(0.0, 0.0, 1.0);
    pg.latent = sh_eval(g.sh, dir, sh_degree);
    return pg;
}

double splat_alpha(const ProjectedGaussian& pg, const Vec2& pixel) {
    return detail::evaluate_splat(pg, pixel).alpha;
}

CompositeResult composite_pixel(std::span<const Contributor> contributors, int channels) {
    CompositeResult out;
    out.value.assign(static_cast<std::size_t>(channels), 0.0);
    for (const auto& c : contributors) {
        ++out.consumed;
        const double alpha = std::min(c.alpha, kAlphaClamp);
        if (alpha <= 0.0) {
            continue;
        }
        if (detail::blend_step(alpha, c.latent.data(), channels, out.value.data(), out.transmittance)) {
            break;
        }
    }
    return out;
}

Camera camera_for_size(const Camera& cam, ImageSize size) {
    Camera scaled = cam;
    if (cam.intrinsics.width != size.width || cam.intrinsics.height != size.height) {
        scaled.intrinsics = cam.intrinsics.rescaled(size.width, size.height);
    }
    return scaled;
}

namespace {

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    // FNV-1a over the 8 bytes of v.
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= 0x100000001b3ull;
    }
    return h;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;

} // namespace

RenderResult render_forward(const Scene& scene, const Camera& cam, ImageSize size, const RenderOptions& options) {
    if (size.height <= 0 || size.width <= 0) {
        throw Error(fmt::format("render size must be positive, got {}x{}", size.height, size.width), ErrorKind::usage);
    }
    const int channels = scene.channels;
    RenderResult result;
    result.camera = camera_for_size(cam, size);
    result.sh_degree = options.sh_degree < 0 ? scene.sh_degree : options.sh_degree;
    result.image = LatentImage(size.height, size.width, channels);
    result.image.alpha.assign(result.image.pixel_count(), 0.0);
    result.pixel_consumed.assign(result.image.pixel_count(), 0);
    result.final_transmittance.assign(result.image.pixel_count(), 1.0);

    // Project in parallel into per-source slots, then compact in source order.
    std::vector<std::optional<ProjectedGaussian>> slots(scene.size());
    detail::parallel_for(scene.size(), options.threads, [&](std::size_t i) {
        slots[i] = project(scene.gaussians[i], result.camera, result.sh_degree, i);
    });
    for (auto& s : slots) {
        if (s) {
            result.projected.push_back(std::move(*s));
        }
    }
    std::stable_sort(result.projected.begin(), result.projected.end(),
                     [](const ProjectedGaussian& a, const ProjectedGaussian& b) { return a.depth < b.depth; });

    result.tiles_x = (size.width + kTileSize - 1) / kTileSize;
    result.tiles_y = (size.height + kTileSize - 1) / kTileSize;
    result.tile_lists.assign(static_cast<std::size_t>(result.tiles_x) * result.tiles_y, {});
    for (std::size_t i = 0; i < result.projected.size(); ++i) {
        const auto& pg = result.projected[i];
        const double rx = 3.0 * std::sqrt(pg.cov2d(0, 0));
        const double ry = 3.0 * std::sqrt(pg.cov2d(1, 1));
        // Pixel centres are at index + 0.5; pad one pixel against rounding.
        const int x0 = std::max(0, static_cast<int>(std::floor(pg.mean2d.x() - rx - 0.5)) - 1);
        const int x1 = std::min(size.width - 1, static_cast<int>(std::ceil(pg.mean2d.x() + rx - 0.5)) + 1);
        const int y0 = std::max(0, static_cast<int>(std::floor(pg.mean2d.y() - ry - 0.5)) - 1);
        const int y1 = std::min(size.height - 1, static_cast<int>(std::ceil(pg.mean2d.y() + ry - 0.5)) + 1);
        if (x0 > x1 || y0 > y1) {
            continue;
        }
        for (int ty = y0 / kTileSize; ty <= y1 / kTileSize; ++ty) {
            for (int tx = x0 / kTileSize; tx <= x1 / kTileSize; ++tx) {
                result.tile_lists[static_cast<std::size_t>(ty) * result.tiles_x + tx].push_back(
                    static_cast<std::uint32_t>(i));
            }
        }
    }

    std::vector<std::uint64_t> pixel_hash(result.image.pixel_count(), kFnvOffset);
    detail::parallel_for(result.tile_lists.size(), options.threads, [&](std::size_t tile) {
        const auto& list = result.tile_lists[tile];
        const int tx = static_cast<int>(tile) % result.tiles_x;
        const int ty = static_cast<int>(tile) / result.tiles_x;
        const int x_end = std::min(size.width, (tx + 1) * kTileSize);
        const int y_end = std::min(size.height, (ty + 1) * kTileSize);
        for (int y = ty * kTileSize; y < y_end; ++y) {
            for (int x = tx * kTileSize; x < x_end; ++x) {
                const std::size_t pix = static_cast<std::size_t>(y) * size.width + x;
                const Vec2 center(x + 0.5, y + 0.5);
                double* value = result.image.data.data() + pix * channels;
                double transmittance = 1.0;
                std::uint64_t h = kFnvOffset;
                std::uint32_t consumed = 0;
                for (const std::uint32_t idx : list) {
                    ++consumed;
                    const auto& pg = result.projected[idx];
                    const auto splat = detail::evaluate_splat(pg, center);
                    if (splat.alpha <= 0.0) {
                        continue;
                    }
                    h = mix(h, (static_cast<std::uint64_t>(pg.source) << 1) | (splat.clamped ? 1u : 0u));
                    if (detail::blend_step(splat.alpha, pg.latent.data(), channels, value, transmittance)) {
                        break;
                    }
                }
                result.pixel_consumed[pix] = consumed;
                result.final_transmittance[pix] = transmittance;
                result.image.alpha[pix] = 1.0 - transmittance;
                pixel_hash[pix] = h;
            }
        }
    });

    std::uint64_t signature = kFnvOffset;
    for (const auto h : pixel_hash) {
        signature = mix(signature, h);
    }
    result.structure_signature = signature;
    return result;
}

LatentImage render(const Scene& scene, const Camera& cam, ImageSize size, const RenderOptions& options) {
    return render_forward(scene, cam, size, options).image;
}

} // namespace lrf
