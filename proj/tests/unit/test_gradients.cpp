// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "lrf/gradients.hpp"
#include "lrf_oracles/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lrf;

namespace {

void expect_grads_near(const ParamGrads& a, const ParamGrads& b, double tol) {
    ASSERT_EQ(a.gaussians.size(), b.gaussians.size());
    for (std::size_t i = 0; i < a.gaussians.size(); ++i) {
        const int c = a.gaussians[i].channels();
        for (std::size_t k = 0; k < params_per_gaussian(c); ++k) {
            EXPECT_NEAR(gaussian_param(a.gaussians[i], k), gaussian_param(b.gaussians[i], k), tol)
                << "gaussian " << i << " " << gaussian_param_name(k);
        }
    }
}

} // namespace

TEST(RenderBackward, ZeroUpstreamGivesZeroGradients) {
    const auto p = make_gradcheck_problem(1, 8, {16, 16}, 3);
    const LatentImage zero(16, 16, 3);
    const auto g = render_backward(p.scene, p.camera, p.size, zero);
    for (const auto& gg : g.gaussians) {
        for (std::size_t k = 0; k < params_per_gaussian(3); ++k) {
            EXPECT_EQ(gaussian_param(gg, k), 0.0);
        }
    }
}

TEST(RenderBackward, DcGradientOfSingleGaussianIsY00TimesAlphaSum) {
    auto p = make_gradcheck_problem(2, 1, {16, 16}, 4);
    const auto fwd = render_forward(p.scene, p.camera, p.size);
    const LatentImage ones(16, 16, 4, 1.0);
    const auto g = render_backward(p.scene, fwd, ones);
    const double alpha_sum = std::accumulate(fwd.image.alpha.begin(), fwd.image.alpha.end(), 0.0);
    ASSERT_GT(alpha_sum, 0.0);
    for (int c = 0; c < 4; ++c) {
        EXPECT_NEAR(g.gaussians[0].sh[c * kShCoeffs], kShC0 * alpha_sum, 1e-12 * alpha_sum);
    }
}

TEST(RenderBackward, MatchesFiniteDifferencesOnRandomScenes) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto p = make_gradcheck_problem(100 + seed, 10, {16, 16}, 4);
        const auto r = check_render_gradients(p.scene, p.camera, p.size, p.dL_dZ);
        EXPECT_TRUE(r.passed) << "seed " << seed << ": " << r.worst_param << " rel " << r.worst_rel_error;
        EXPECT_GT(r.checked, 400u);
    }
}

TEST(RenderBackward, CulledGaussianHasZeroGradient) {
    auto p = make_gradcheck_problem(3, 4, {16, 16}, 2);
    p.scene.gaussians[1].position = Vec3(0, 0, -2); // behind the camera
    const auto g = render_backward(p.scene, p.camera, p.size, p.dL_dZ);
    EXPECT_FALSE(g.visible[1]);
    for (std::size_t k = 0; k < params_per_gaussian(2); ++k) {
        EXPECT_EQ(gaussian_param(g.gaussians[1], k), 0.0);
    }
}

TEST(RenderBackward, GaussianHiddenBehindOpaqueLayerHasZeroGradient) {
    auto p = make_gradcheck_problem(4, 1, {16, 16}, 1);
    // A huge, fully opaque wall in front saturates every pixel.
    LatentGaussian wall;
    wall.position = Vec3(0, 0, 1.0);
    wall.log_scale = Vec3(std::log(5.0), std::log(5.0), std::log(0.01));
    wall.opacity_logit = 20.0;
    wall.sh.assign(kShCoeffs, 0.0);
    LatentGaussian wall2 = wall;
    wall2.position.z() = 1.1;
    p.scene.gaussians.insert(p.scene.gaussians.begin(), {wall, wall2});
    const auto fwd = render_forward(p.scene, p.camera, p.size);
    for (double t : fwd.final_transmittance) {
        ASSERT_LT(t, 1e-3);
    }
    // 0.01 * 0.01 = 1e-4 transmittance is not below the threshold; add a
    // third layer so termination happens before the original gaussian.
    LatentGaussian wall3 = wall;
    wall3.position.z() = 1.2;
    p.scene.gaussians.insert(p.scene.gaussians.begin() + 2, wall3);
    const auto g = render_backward(p.scene, p.camera, p.size, p.dL_dZ);
    for (std::size_t k = 0; k < params_per_gaussian(1); ++k) {
        EXPECT_EQ(gaussian_param(g.gaussians[3], k), 0.0) << gaussian_param_name(k);
    }
}

TEST(RenderBackward, LinearInUpstreamGradient) {
    const auto p = make_gradcheck_problem(5, 10, {16, 16}, 3);
    LatentImage other(16, 16, 3);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : other.data) {
        v = n(rng);
    }
    LatentImage sum = p.dL_dZ;
    for (std::size_t i = 0; i < sum.data.size(); ++i) {
        sum.data[i] += other.data[i];
    }
    auto split = render_backward(p.scene, p.camera, p.size, p.dL_dZ);
    split += render_backward(p.scene, p.camera, p.size, other);
    expect_grads_near(render_backward(p.scene, p.camera, p.size, sum), split, 1e-10);
}

TEST(RenderBackward, IdenticalAcrossThreadCounts) {
    const auto rs = oracle::random_render_scene(6, 40, {40, 40}, 4);
    LatentImage up(40, 40, 4, 0.25);
    RenderOptions one;
    RenderOptions four;
    four.threads = 4;
    const auto a = render_backward(rs.scene, rs.camera, {40, 40}, up, one);
    const auto b = render_backward(rs.scene, rs.camera, {40, 40}, up, four);
    for (std::size_t i = 0; i < a.gaussians.size(); ++i) {
        for (std::size_t k = 0; k < params_per_gaussian(4); ++k) {
            EXPECT_EQ(gaussian_param(a.gaussians[i], k), gaussian_param(b.gaussians[i], k));
        }
    }
}

TEST(RenderBackward, ShapeMismatchThrows) {
    const auto p = make_gradcheck_problem(7, 2, {16, 16}, 2);
    EXPECT_THROW(render_backward(p.scene, p.camera, p.size, LatentImage(16, 16, 3)), std::exception);
}

static Scene single_gaussian_scene() {
    Scene s;
    s.channels = 1;
    LatentGaussian g;
    g.position = Vec3(0.3, -1.2, 2.0);
    g.log_scale = Vec3(0.1, 0.2, -0.3);
    g.rotation = Vec4(0.9, 0.1, -0.2, 0.3);
    g.opacity_logit = 0.7;
    g.sh.assign(kShCoeffs, 0.25);
    s.gaussians.push_back(g);
    return s;
}

TEST(FiniteDiffGrad, QuadraticLoss) {
    const Scene s = single_gaussian_scene();
    const LatentGaussian& g = s.gaussians[0];
    const auto loss = [](const Scene& sc) {
        double acc = 0.0;
        for (std::size_t k = 0; k < params_per_gaussian(1); ++k) {
            const double v = gaussian_param(sc.gaussians[0], k);
            acc += 0.5 * v * v;
        }
        return acc;
    };
    const auto fd = finite_diff_grad(loss, s, 1e-4);
    for (std::size_t k = 0; k < params_per_gaussian(1); ++k) {
        EXPECT_NEAR(gaussian_param(fd.gaussians[0], k), gaussian_param(g, k), 1e-9);
    }
}

TEST(FiniteDiffGrad, ErrorShrinksQuadraticallyWithStep) {
    // Central differences of exp() have truncation error h^2/6 * exp(x).
    Scene s = single_gaussian_scene();
    const auto loss = [](const Scene& sc) {
        double acc = 0.0;
        for (std::size_t k = 0; k < params_per_gaussian(1); ++k) {
            acc += std::exp(gaussian_param(sc.gaussians[0], k));
        }
        return acc;
    };
    const double x = gaussian_param(s.gaussians[0], 0);
    const double e1 = std::abs(gaussian_param(finite_diff_grad(loss, s, 2e-2).gaussians[0], 0) - std::exp(x));
    const double e2 = std::abs(gaussian_param(finite_diff_grad(loss, s, 1e-2).gaussians[0], 0) - std::exp(x));
    ASSERT_GT(e2, 1e-9);
    EXPECT_NEAR(e1 / e2, 4.0, 0.05);
}

TEST(FiniteDiffGrad, AgreesWithAnalyticForPixelLoss) {
    const auto p = make_gradcheck_problem(9, 3, {16, 16}, 2);
    LatentImage pick(16, 16, 2);
    pick.at(8, 8, 0) = 1.0;
    const auto analytic = render_backward(p.scene, p.camera, p.size, pick);
    const auto fd = finite_diff_grad([&](const Scene& sc) { return render(sc, p.camera, p.size).at(8, 8, 0); },
                                     p.scene, 1e-5);
    for (std::size_t i = 0; i < 3; ++i) {
        for (int k = 0; k < 3; ++k) {
            const double x = analytic.gaussians[i].position[k];
            const double y = fd.gaussians[i].position[k];
            EXPECT_LE(std::abs(x - y), std::max(1e-4 * std::max(std::abs(x), std::abs(y)), 1e-7));
        }
    }
}
