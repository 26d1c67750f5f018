// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "lrf/gradients.hpp"
#include "lrf/error.hpp"

#include "blend.hpp"
#include "parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace lrf {

GaussianGrad zero_grad(int channels) {
    GaussianGrad g;
    g.rotation.setZero();
    g.sh.assign(static_cast<std::size_t>(channels) * kShCoeffs, 0.0);
    return g;
}

ParamGrads ParamGrads::zeros(const Scene& scene) {
    ParamGrads out;
    out.gaussians.assign(scene.size(), zero_grad(scene.channels));
    out.mean2d.assign(scene.size(), Vec2::Zero());
    out.visible.assign(scene.size(), 0);
    return out;
}

ParamGrads& ParamGrads::operator+=(const ParamGrads& other) {
    if (other.gaussians.size() != gaussians.size()) {
        throw Error("cannot add gradients of differently sized scenes");
    }
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        auto& a = gaussians[i];
        const auto& b = other.gaussians[i];
        a.position += b.position;
        a.log_scale += b.log_scale;
        a.rotation += b.rotation;
        a.opacity_logit += b.opacity_logit;
        for (std::size_t k = 0; k < a.sh.size(); ++k) {
            a.sh[k] += b.sh[k];
        }
        mean2d[i] += other.mean2d[i];
        visible[i] = static_cast<std::uint8_t>(visible[i] | other.visible[i]);
    }
    return *this;
}

bool ParamGrads::all_finite() const {
    for (const auto& g : gaussians) {
        if (!g.position.allFinite() || !g.log_scale.allFinite() || !g.rotation.allFinite() ||
            !std::isfinite(g.opacity_logit)) {
            return false;
        }
        if (!std::all_of(g.sh.begin(), g.sh.end(), [](double v) { return std::isfinite(v); })) {
            return false;
        }
    }
    return true;
}

namespace {

// Screen-space gradient slots per projected gaussian:
// [mean.x, mean.y, dA00, dA01, dA11, opacity, latent_0 .. latent_{C-1}]
constexpr int kScreenSlots = 6;

// d(R)/d(q_k) for a unit quaternion (w, x, y, z), contracted with dL/dR.
Vec4 rotation_grad_to_quaternion(const Mat3& g, const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 out;
    out[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    out[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                    w * g(2, 1) - 2.0 * x * g(2, 2));
    out[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                    z * g(2, 1) - 2.0 * y * g(2, 2));
    out[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) +
                    y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    return out;
}

struct PixelRecord {
    std::uint32_t entry = 0;
    detail::SplatEval splat;
    double transmittance = 1.0; // before this contributor
};

} // namespace

ParamGrads render_backward(const Scene& scene, const RenderResult& fwd, const LatentImage& dL_dZ, int threads) {
    require_same_shape(fwd.image, dL_dZ, "render_backward upstream gradient");
    const int channels = scene.channels;
    const int width = fwd.image.width;
    const int height = fwd.image.height;
    const std::size_t slots = kScreenSlots + static_cast<std::size_t>(channels);

    // Per-tile accumulation, reduced afterwards in tile order so the result
    // does not depend on the thread count.
    std::vector<std::vector<double>> tile_acc(fwd.tile_lists.size());
    detail::parallel_for(fwd.tile_lists.size(), threads, [&](std::size_t tile) {
        const auto& list = fwd.tile_lists[tile];
        auto& acc = tile_acc[tile];
        acc.assign(list.size() * slots, 0.0);
        if (list.empty()) {
            return;
        }
        const int tx = static_cast<int>(tile) % fwd.tiles_x;
        const int ty = static_cast<int>(tile) / fwd.tiles_x;
        const int x_end = std::min(width, (tx + 1) * kTileSize);
        const int y_end = std::min(height, (ty + 1) * kTileSize);
        std::vector<PixelRecord> records;
        std::vector<double> suffix(static_cast<std::size_t>(channels));
        for (int y = ty * kTileSize; y < y_end; ++y) {
            for (int x = tx * kTileSize; x < x_end; ++x) {
                const std::size_t pix = static_cast<std::size_t>(y) * width + x;
                const double* upstream = dL_dZ.data.data() + pix * channels;
                const Vec2 center(x + 0.5, y + 0.5);
                records.clear();
                double transmittance = 1.0;
                const std::uint32_t consumed = fwd.pixel_consumed[pix];
                for (std::uint32_t e = 0; e < consumed; ++e) {
                    const auto& pg = fwd.projected[list[e]];
                    const auto splat = detail::evaluate_splat(pg, center);
                    if (splat.alpha <= 0.0) {
                        continue;
                    }
                    records.push_back({e, splat, transmittance});
                    transmittance *= 1.0 - splat.alpha;
                }
                std::fill(suffix.begin(), suffix.end(), 0.0);
                for (auto r = records.rbegin(); r != records.rend(); ++r) {
                    const auto& pg = fwd.projected[list[r->entry]];
                    const double alpha = r->splat.alpha;
                    const double weight = alpha * r->transmittance;
                    double* slot = acc.data() + r->entry * slots;
                    double d_alpha = 0.0;
                    for (int c = 0; c < channels; ++c) {
                        d_alpha += upstream[c] * (pg.latent[c] - suffix[c]);
                        slot[kScreenSlots + c] += upstream[c] * weight;
                        suffix[c] = alpha * pg.latent[c] + (1.0 - alpha) * suffix[c];
                    }
                    d_alpha *= r->transmittance;
                    if (r->splat.clamped) {
                        continue;
                    }
                    slot[5] += d_alpha * r->splat.falloff;
                    const double d_q = -0.5 * alpha * d_alpha;
                    const Vec2& d = r->splat.offset;
                    const Vec2 d_mean = -2.0 * d_q * (pg.inv_cov2d * d);
                    slot[0] += d_mean.x();
                    slot[1] += d_mean.y();
                    slot[2] += d_q * d.x() * d.x();
                    slot[3] += d_q * d.x() * d.y();
                    slot[4] += d_q * d.y() * d.y();
                }
            }
        }
    });

    std::vector<double> screen(fwd.projected.size() * slots, 0.0);
    for (std::size_t tile = 0; tile < fwd.tile_lists.size(); ++tile) {
        const auto& list = fwd.tile_lists[tile];
        const auto& acc = tile_acc[tile];
        for (std::size_t e = 0; e < list.size(); ++e) {
            double* dst = screen.data() + static_cast<std::size_t>(list[e]) * slots;
            const double* src = acc.data() + e * slots;
            for (std::size_t s = 0; s < slots; ++s) {
                dst[s] += src[s];
            }
        }
    }

    ParamGrads grads = ParamGrads::zeros(scene);
    const auto& k = fwd.camera.intrinsics;
    const Mat3 w = fwd.camera.pose.rotation();
    const int used_coeffs = sh_coeff_count(fwd.sh_degree);
    detail::parallel_for(fwd.projected.size(), threads, [&](std::size_t i) {
        const auto& pg = fwd.projected[i];
        const auto& g = scene.gaussians[pg.source];
        const double* s = screen.data() + i * slots;
        GaussianGrad& out = grads.gaussians[pg.source];
        grads.visible[pg.source] = 1;
        grads.mean2d[pg.source] = Vec2(s[0], s[1]);

        // Conic -> 2D covariance: dL/dCov = -A G A.
        Mat2 g_conic;
        g_conic << s[2], s[3], s[3], s[4];
        const Mat2 g_cov2d = -pg.inv_cov2d * g_conic * pg.inv_cov2d;

        const double x = pg.p_cam.x();
        const double y = pg.p_cam.y();
        const double inv_z = 1.0 / pg.p_cam.z();
        const double inv_z2 = inv_z * inv_z;
        const double inv_z3 = inv_z2 * inv_z;
        Eigen::Matrix<double, 2, 3> j;
        j << k.fx * inv_z, 0.0, -k.fx * x * inv_z2,
             0.0, k.fy * inv_z, -k.fy * y * inv_z2;
        const Eigen::Matrix<double, 2, 3> t = j * w;

        // Cov2d = T Sigma T^T (+ dilation).
        const Mat3 g_cov3d = t.transpose() * g_cov2d * t;
        const Eigen::Matrix<double, 2, 3> g_t = 2.0 * g_cov2d * t * pg.cov3d;
        const Eigen::Matrix<double, 2, 3> g_j = g_t * w.transpose();

        Vec3 g_p = Vec3::Zero();
        g_p.x() += s[0] * k.fx * inv_z;
        g_p.y() += s[1] * k.fy * inv_z;
        g_p.z() += -s[0] * k.fx * x * inv_z2 - s[1] * k.fy * y * inv_z2;
        g_p.x() += -g_j(0, 2) * k.fx * inv_z2;
        g_p.y() += -g_j(1, 2) * k.fy * inv_z2;
        g_p.z() += -g_j(0, 0) * k.fx * inv_z2 + 2.0 * g_j(0, 2) * k.fx * x * inv_z3 - g_j(1, 1) * k.fy * inv_z2 +
                   2.0 * g_j(1, 2) * k.fy * y * inv_z3;
        out.position = w.transpose() * g_p;

        // Spherical harmonics and the view direction they depend on.
        const double dist = pg.view_offset.norm();
        if (dist > 0.0) {
            const Vec3 dir = pg.view_offset / dist;
            std::array<Vec3, kShCoeffs> basis_jac;
            const ShBasis basis = sh_basis_jacobian(dir, fwd.sh_degree, basis_jac);
            Vec3 g_dir = Vec3::Zero();
            for (int c = 0; c < channels; ++c) {
                const double g_latent = s[kScreenSlots + c];
                for (int n = 0; n < used_coeffs; ++n) {
                    const std::size_t idx = static_cast<std::size_t>(c) * kShCoeffs + n;
                    out.sh[idx] = g_latent * basis[n];
                    g_dir += g_latent * g.sh[idx] * basis_jac[n];
                }
            }
            out.position += (g_dir - dir * dir.dot(g_dir)) / dist;
        }

        const double opacity = pg.opacity;
        out.opacity_logit = s[5] * opacity * (1.0 - opacity);

        // Sigma = M M^T with M = R(q) diag(exp(log_scale)).
        const double q_norm = g.rotation.norm();
        const Vec4 q = g.rotation / q_norm;
        const Mat3 r = quaternion_to_rotation(q);
        const Vec3 scale = g.log_scale.array().exp();
        const Mat3 m = r * scale.asDiagonal();
        const Mat3 g_m = 2.0 * g_cov3d * m;
        Mat3 g_r;
        for (int col = 0; col < 3; ++col) {
            out.log_scale[col] = g_m.col(col).dot(r.col(col)) * scale[col];
            g_r.col(col) = g_m.col(col) * scale[col];
        }
        const Vec4 g_q = rotation_grad_to_quaternion(g_r, q);
        out.rotation = (g_q - q * q.dot(g_q)) / q_norm;
    });
    return grads;
}

ParamGrads render_backward(const Scene& scene, const Camera& cam, ImageSize size, const LatentImage& dL_dZ,
                           const RenderOptions& options) {
    const auto fwd = render_forward(scene, cam, size, options);
    return render_backward(scene, fwd, dL_dZ, options.threads);
}

ParamGrads finite_diff_grad(const SceneLoss& loss, const Scene& scene, double h) {
    ParamGrads grads = ParamGrads::zeros(scene);
    Scene probe = scene;
    const std::size_t n_params = params_per_gaussian(scene.channels);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        for (std::size_t k = 0; k < n_params; ++k) {
            double& v = gaussian_param(probe.gaussians[i], k);
            const double original = v;
            v = original + h;
            const double f_plus = loss(probe);
            v = original - h;
            const double f_minus = loss(probe);
            v = original;
            gaussian_param(grads.gaussians[i], k) = (f_plus - f_minus) / (2.0 * h);
        }
    }
    return grads;
}

namespace {

double weighted_sum(const LatentImage& img, const LatentImage& weights) {
    double acc = 0.0;
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        acc += img.data[i] * weights.data[i];
    }
    return acc;
}

} // namespace

GradCheckReport check_render_gradients(const Scene& scene, const Camera& cam, ImageSize size,
                                       const LatentImage& dL_dZ, const GradCheckOptions& options) {
    RenderOptions ropt;
    ropt.threads = options.threads;
    const auto base = render_forward(scene, cam, size, ropt);
    const ParamGrads analytic = render_backward(scene, base, dL_dZ, options.threads);

    GradCheckReport report;
    Scene probe = scene;
    const std::size_t n_params = params_per_gaussian(scene.channels);
    const double h = options.step;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        for (std::size_t k = 0; k < n_params; ++k) {
            double& v = gaussian_param(probe.gaussians[i], k);
            const double original = v;
            v = original + h;
            const auto plus = render_forward(probe, cam, size, ropt);
            v = original - h;
            const auto minus = render_forward(probe, cam, size, ropt);
            v = original;
            if (plus.structure_signature != base.structure_signature ||
                minus.structure_signature != base.structure_signature) {
                ++report.nonsmooth;
                continue;
            }
            const double numeric = (weighted_sum(plus.image, dL_dZ) - weighted_sum(minus.image, dL_dZ)) / (2.0 * h);
            const double a = gaussian_param(analytic.gaussians[i], k);
            const double err = std::abs(a - numeric);
            const double allowed = std::max(options.rel_tol * std::max(std::abs(a), std::abs(numeric)), options.abs_tol);
            const double excess = err / allowed;
            ++report.checked;
            if (excess > 1.0) {
                ++report.failures;
            }
            if (excess > report.worst_excess || report.checked == 1) {
                report.worst_excess = excess;
                report.worst_rel_error = err / std::max({std::abs(a), std::abs(numeric), 1e-300});
                report.worst_gaussian = i;
                report.worst_param = gaussian_param_name(k);
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    report.passed = report.failures == 0 && report.checked > 0;
    return report;
}

GradCheckProblem make_gradcheck_problem(std::uint64_t seed, int gaussians, ImageSize size, int channels) {
    if (gaussians <= 0 || channels <= 0 || size.width <= 0 || size.height <= 0) {
        throw Error("gradient check needs positive gaussian count, channels and size", ErrorKind::usage);
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    GradCheckProblem p;
    p.size = size;
    p.camera.id = "gradcheck";
    p.camera.intrinsics = {1.1 * size.width, 1.1 * size.width, 0.5 * size.width, 0.5 * size.height,
                           size.width, size.height};
    p.camera.pose = Pose();

    p.scene.channels = channels;
    p.scene.sh_degree = kMaxShDegree;
    for (int n = 0; n < gaussians; ++n) {
        LatentGaussian g;
        const double depth = uniform(2.0, 4.0);
        const double half_w = 0.45 * size.width / p.camera.intrinsics.fx * depth;
        const double half_h = 0.45 * size.height / p.camera.intrinsics.fy * depth;
        g.position = Vec3(uniform(-half_w, half_w), uniform(-half_h, half_h), depth);
        g.log_scale = Vec3(std::log(uniform(0.15, 0.8)), std::log(uniform(0.15, 0.8)), std::log(uniform(0.15, 0.8)));
        g.rotation = Vec4(normal(rng), normal(rng), normal(rng), normal(rng));
        g.opacity_logit = uniform(-2.0, 1.0);
        g.sh.resize(static_cast<std::size_t>(channels) * kShCoeffs);
        for (auto& c : g.sh) {
            c = 0.5 * normal(rng);
        }
        p.scene.gaussians.push_back(std::move(g));
    }
    p.dL_dZ = LatentImage(size.height, size.width, channels);
    for (auto& v : p.dL_dZ.data) {
        v = normal(rng);
    }
    return p;
}

} // namespace lrf
