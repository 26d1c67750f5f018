// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lrf/gaussian_scene.hpp"
#include "lrf/rasterizer.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace lrf {

/// Gradient with the same shape as a LatentGaussian (all fields are
/// derivatives with respect to the pre-activation parameter of that name).
using GaussianGrad = LatentGaussian;

GaussianGrad zero_grad(int channels);

struct ParamGrads {
    std::vector<GaussianGrad> gaussians;
    /// dL/d(projected mean) in pixels; zero for culled gaussians.
    std::vector<Vec2> mean2d;
    std::vector<std::uint8_t> visible;

    static ParamGrads zeros(const Scene& scene);

    ParamGrads& operator+=(const ParamGrads& other);
    bool all_finite() const;
};

/// Exact gradient of sum(dL_dZ * render) with respect to every parameter,
/// replaying the contributor order saved by `forward`.
ParamGrads render_backward(const Scene& scene, const RenderResult& forward, const LatentImage& dL_dZ,
                           int threads = 1);

/// Convenience overload that runs the forward pass itself.
ParamGrads render_backward(const Scene& scene, const Camera& cam, ImageSize size, const LatentImage& dL_dZ,
                           const RenderOptions& options = {});

using SceneLoss = std::function<double(const Scene&)>;

/// Central differences (f(x + h) - f(x - h)) / 2h for every scalar parameter.
ParamGrads finite_diff_grad(const SceneLoss& loss, const Scene& scene, double h);

struct GradCheckOptions {
    double step = 1e-4;
    double rel_tol = 1e-4;
    double abs_tol = 1e-7;
    int threads = 1;
};

struct GradCheckReport {
    bool passed = false;
    std::size_t checked = 0;
    /// Parameters whose +-h probe changed the render's contributor structure
    /// (3-sigma cutoff, alpha clamp, early stop, depth order); central
    /// differences are not meaningful there and they are not compared.
    std::size_t nonsmooth = 0;
    std::size_t failures = 0;
    double worst_excess = 0.0; // |a - n| / max(rel * max(|a|, |n|), abs)
    double worst_rel_error = 0.0;
    std::size_t worst_gaussian = 0;
    std::string worst_param;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Checks render_backward against central differences of sum(dL_dZ * render).
GradCheckReport check_render_gradients(const Scene& scene, const Camera& cam, ImageSize size,
                                       const LatentImage& dL_dZ, const GradCheckOptions& options = {});

struct GradCheckProblem {
    Scene scene;
    Camera camera;
    ImageSize size;
    LatentImage dL_dZ;
};

/// Seeded random scene of `gaussians` primitives in front of an identity
/// camera, plus a random upstream gradient image.
GradCheckProblem make_gradcheck_problem(std::uint64_t seed, int gaussians, ImageSize size, int channels);

} // namespace lrf
