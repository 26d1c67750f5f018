// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "lrf/error.hpp"
#include "lrf/metrics.hpp"
#include "lrf/synthetic.hpp"
#include "lrf/training.hpp"
#include "lrf_oracles/oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

using namespace lrf;
using lrf::testing::random_image;

namespace {

LatentDataset dataset_from(std::vector<LatentImage> images) {
    LatentDataset d;
    for (std::size_t i = 0; i < images.size(); ++i) {
        LatentView v;
        v.camera.id = "v" + std::to_string(i);
        v.camera.intrinsics = {10, 10, 4, 4, 8, 8};
        v.latent = std::move(images[i]);
        d.views.push_back(std::move(v));
    }
    return d;
}

Scene one_gaussian_scene(const Vec3& pos, double scale, double opacity_logit = 0.0) {
    Scene s;
    s.channels = 2;
    LatentGaussian g;
    g.position = pos;
    g.log_scale = Vec3::Constant(std::log(scale));
    g.opacity_logit = opacity_logit;
    g.sh.assign(2 * kShCoeffs, 0.1);
    s.gaussians.push_back(g);
    return s;
}

bool bit_equal(const Scene& a, const Scene& b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t k = 0; k < params_per_gaussian(a.channels); ++k) {
            const double x = gaussian_param(a.gaussians[i], k);
            const double y = gaussian_param(b.gaussians[i], k);
            if (std::memcmp(&x, &y, sizeof x) != 0) {
                return false;
            }
        }
    }
    return true;
}

SyntheticOptions small_synthetic() {
    SyntheticOptions o;
    o.gaussians = 40;
    o.train_views = 4;
    o.test_views = 1;
    o.size = {16, 16};
    o.channels = 3;
    return o;
}

TrainConfig short_config(int iterations) {
    TrainConfig c;
    c.iterations = iterations;
    c.densify_from = 20;
    c.densify_interval = 20;
    c.densify_grad_threshold = 2e-3;
    c.opacity_reset_interval = 60;
    c.sh_degree_interval = 30;
    c.init_points = 100;
    c.seed = 3;
    return c;
}

} // namespace

TEST(TrainConfig, JsonRoundTripAndErrors) {
    TrainConfig c;
    c.iterations = 123;
    c.lambda_dssim = 0.3;
    c.seed = 99;
    const TrainConfig back = train_config_from_json(train_config_to_json(c));
    EXPECT_EQ(back.iterations, 123);
    EXPECT_EQ(back.lambda_dssim, 0.3);
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(train_config_to_json(back), train_config_to_json(c));

    const auto kind = [](const std::string& text) {
        try {
            train_config_from_json(text);
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::data;
    };
    EXPECT_EQ(kind(R"({"iterations": 10, "bogus": 1})"), ErrorKind::usage);
    EXPECT_EQ(kind(R"({"sh_lr": -1})"), ErrorKind::usage);
    EXPECT_EQ(kind(R"({"densify_interval": 0})"), ErrorKind::usage);
    EXPECT_EQ(kind(R"({"iterations": "many"})"), ErrorKind::usage);
    EXPECT_EQ(kind("not json"), ErrorKind::usage);
    EXPECT_EQ(train_config_from_json(R"({"iterations": 10})").iterations, 10);
}

TEST(LatentNormalize, ConstantChannelsAndRange) {
    LatentImage a(4, 4, 2);
    LatentImage b(4, 4, 2);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            a.at(y, x, 0) = 7.0;
            b.at(y, x, 0) = 7.0;
            a.at(y, x, 1) = -3.0 + 0.5 * (y * 4 + x); // -3 .. 4.5
            b.at(y, x, 1) = 5.0 - 0.5 * (y * 4 + x);  // 5 .. -2.5
        }
    }
    const auto [norm_ds, norm] = latent_normalize(dataset_from({a, b}));
    EXPECT_EQ(norm.scale[0], 1e-6);
    for (const auto& v : norm_ds.views) {
        for (int y = 0; y < 4; ++y) {
            for (int x = 0; x < 4; ++x) {
                EXPECT_EQ(v.latent.at(y, x, 0), 0.0);
                EXPECT_LE(std::abs(v.latent.at(y, x, 1)), 1.0 + 1e-15);
            }
        }
    }
    EXPECT_NEAR(norm.mean[1], 1.0, 1e-12);
    EXPECT_EQ(norm_ds.norm.mean, norm.mean);
    EXPECT_THROW(latent_normalize(LatentDataset{}), Error);
}

TEST(LatentNormalize, RoundTrip) {
    std::mt19937_64 rng(1);
    const auto ds = dataset_from({random_image(rng, 5, 6, 4, 3.0), random_image(rng, 5, 6, 4, 3.0)});
    const auto [norm_ds, norm] = latent_normalize(ds);
    for (std::size_t v = 0; v < ds.views.size(); ++v) {
        const auto back = denormalize_latent(norm_ds.views[v].latent, norm);
        for (std::size_t i = 0; i < back.data.size(); ++i) {
            EXPECT_NEAR(back.data[i], ds.views[v].latent.data[i], 1e-12);
        }
    }
}

TEST(PhotometricLoss, IdentityAndOffset) {
    std::mt19937_64 rng(2);
    const auto t = random_image(rng, 12, 12, 3);
    const auto same = photometric_loss(t, t);
    EXPECT_NEAR(same.loss, 0.0, 1e-9);
    EXPECT_EQ(same.l1, 0.0);

    auto shifted = t;
    for (auto& v : shifted.data) {
        v += 0.1;
    }
    const auto r = photometric_loss(shifted, t);
    EXPECT_NEAR(r.l1, 0.1, 1e-12);
    const double ssim_ref = oracle::ssim_direct(shifted, t, kLatentPeak, oracle::SsimPadding::zero_same);
    EXPECT_NEAR(r.dssim, (1.0 - ssim_ref) / 2.0, 1e-12);
    EXPECT_NEAR(r.loss, 0.8 * 0.1 + 0.2 * (1.0 - ssim_ref) / 2.0, 1e-12);
    EXPECT_THROW(photometric_loss(t, LatentImage(12, 12, 2)), Error);
}

TEST(PhotometricLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 3; ++trial) {
        const auto r = random_image(rng, 8, 8, 2);
        const auto t = random_image(rng, 8, 8, 2);
        const auto analytic = photometric_loss(r, t).grad.data;
        const auto numeric = oracle::numeric_gradient(
            [&](const std::vector<double>& x) {
                LatentImage img = r;
                img.data = x;
                return photometric_loss(img, t).loss;
            },
            r.data, 1e-6);
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            EXPECT_LE(std::abs(analytic[i] - numeric[i]), 1e-5 * std::max(std::abs(numeric[i]), 1e-3)) << i;
        }
    }
}

TEST(PhotometricLoss, L1ComponentSymmetric) {
    std::mt19937_64 rng(4);
    const auto a = random_image(rng, 6, 6, 2);
    const auto b = random_image(rng, 6, 6, 2);
    EXPECT_EQ(photometric_loss(a, b).l1, photometric_loss(b, a).l1);
    EXPECT_GT(photometric_loss(a, b).loss, 0.0);
}

TEST(PositionLr, LogLinearDecay) {
    EXPECT_DOUBLE_EQ(position_lr(1.6e-4, 1.6e-6, 0, 100), 1.6e-4);
    EXPECT_DOUBLE_EQ(position_lr(1.6e-4, 1.6e-6, 100, 100), 1.6e-6);
    EXPECT_NEAR(position_lr(1.6e-4, 1.6e-6, 50, 100), 1.6e-5, 1e-18);
}

TEST(AdamStep, ZeroGradientIsFixedPoint) {
    Scene s = one_gaussian_scene(Vec3(1, 2, 3), 0.5);
    const Scene before = s;
    AdamState st = AdamState::zeros(s);
    LearningRates lr{0.1, 0.1, 0.1, 0.1, 0.1, 0.1};
    for (int it = 1; it <= 5; ++it) {
        adam_step(s, ParamGrads::zeros(s), st, it, lr);
    }
    EXPECT_TRUE(bit_equal(s, before));
}

TEST(AdamStep, ConstantGradientStepApproachesLearningRate) {
    Scene s = one_gaussian_scene(Vec3::Zero(), 0.5);
    AdamState st = AdamState::zeros(s);
    ParamGrads g = ParamGrads::zeros(s);
    g.gaussians[0].position = Vec3(0.3, -2.0, 1e-3);
    LearningRates lr{0.01, 0, 0, 0, 0, 0};
    lr.sh_dc = lr.sh_rest = lr.opacity = lr.scale = lr.rotation = 1e-9;
    Vec3 prev = s.gaussians[0].position;
    for (int it = 1; it <= 200; ++it) {
        adam_step(s, g, st, it, lr);
        const Vec3 step = s.gaussians[0].position - prev;
        prev = s.gaussians[0].position;
        if (it > 100) {
            EXPECT_NEAR(step.x(), -0.01, 1e-9);
            EXPECT_NEAR(step.y(), 0.01, 1e-9);
            EXPECT_NEAR(step.z(), -0.01, 1e-9);
        }
    }
}

TEST(AdamStep, ScalarQuadraticConverges) {
    Scene s = one_gaussian_scene(Vec3::Zero(), 0.5);
    AdamState st = AdamState::zeros(s);
    LearningRates lr{0.1, 1e-9, 1e-9, 1e-9, 1e-9, 1e-9};
    for (int it = 1; it <= 500; ++it) {
        ParamGrads g = ParamGrads::zeros(s);
        g.gaussians[0].position.x() = s.gaussians[0].position.x() - 3.0; // d/dx (x - 3)^2 / 2
        adam_step(s, g, st, it, lr);
    }
    EXPECT_NEAR(s.gaussians[0].position.x(), 3.0, 1e-6);
}

TEST(DensifyAndPrune, NoGradientOnlyPrunes) {
    Scene s = one_gaussian_scene(Vec3(0, 0, 3), 0.1, 1.0);
    s.gaussians.push_back(one_gaussian_scene(Vec3(1, 0, 3), 0.1, logit(0.001)).gaussians[0]);
    const auto stats = DensifyStats::zeros(s.size());
    std::mt19937_64 rng(0);
    AdamState adam = AdamState::zeros(s);
    const Scene out = densify_and_prune(s, stats, TrainConfig{}, 1.0, rng, &adam);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out.gaussians[0].position, s.gaussians[0].position);
    EXPECT_EQ(adam.m.size(), 1u);
}

TEST(DensifyAndPrune, SplitLargeAndCloneSmall) {
    TrainConfig cfg;
    const double extent = 2.0; // size limit 0.02
    Scene s = one_gaussian_scene(Vec3(0, 0, 3), 0.5, 1.0);                      // large
    s.gaussians.push_back(one_gaussian_scene(Vec3(1, 0, 3), 0.01, 1.0).gaussians[0]); // small
    DensifyStats stats = DensifyStats::zeros(2);
    for (int i = 0; i < 2; ++i) {
        stats.grad_norm_sum[i] = 1.0;
        stats.visible_count[i] = 1;
        stats.position_grad_sum[i] = Vec3(0, 2, 0);
    }
    std::mt19937_64 rng(1);
    AdamState adam = AdamState::zeros(s);
    adam.m[1].position = Vec3(5, 5, 5); // carried with the kept clone source
    const Scene out = densify_and_prune(s, stats, cfg, extent, rng, &adam);
    // Kept gaussians first, then new ones in source order: 2 split children, 1 clone.
    ASSERT_EQ(out.size(), 4u);
    EXPECT_EQ(adam.m.size(), 4u);
    EXPECT_EQ(out.gaussians[0].position, s.gaussians[1].position);
    EXPECT_EQ(adam.m[0].position, Vec3(5, 5, 5));
    // Clone moves against the accumulated gradient by half its largest scale.
    EXPECT_NEAR((out.gaussians[3].position - Vec3(1, -0.005, 3)).norm(), 0.0, 1e-12);
    EXPECT_EQ(adam.m[3].position, Vec3::Zero());
    for (int child = 1; child < 3; ++child) {
        EXPECT_EQ(adam.m[child].position, Vec3::Zero());
        for (int k = 0; k < 3; ++k) {
            EXPECT_NEAR(out.gaussians[child].scale()[k], 0.5 / 1.6, 1e-12);
        }
        EXPECT_NE(out.gaussians[child].position, s.gaussians[0].position);
        EXPECT_LT((out.gaussians[child].position - s.gaussians[0].position).norm(), 5 * 0.5);
    }
}

TEST(DensifyAndPrune, InvariantsOverRandomCyclesAndDeterminism) {
    const auto run = [](std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1e-3);
        std::vector<Vec3> pts;
        for (int i = 0; i < 30; ++i) {
            pts.emplace_back(u(rng) * 1000 - 0.5, u(rng) * 1000 - 0.5, 3 + u(rng) * 1000);
        }
        Scene s = init_scene(pts, 2, seed);
        AdamState adam = AdamState::zeros(s);
        TrainConfig cfg;
        for (int cycle = 0; cycle < 10; ++cycle) {
            DensifyStats stats = DensifyStats::zeros(s.size());
            for (std::size_t i = 0; i < s.size(); ++i) {
                stats.grad_norm_sum[i] = u(rng);
                stats.visible_count[i] = 1;
                stats.position_grad_sum[i] = Vec3(u(rng), -u(rng), u(rng));
                s.gaussians[i].opacity_logit += u(rng) * 1000 - 0.6; // drift so some get pruned
            }
            s = densify_and_prune(s, stats, cfg, 1.0, rng, &adam);
            EXPECT_NO_THROW(s.validate());
            EXPECT_EQ(adam.m.size(), s.size());
            EXPECT_EQ(adam.v.size(), s.size());
            for (const auto& g : s.gaussians) {
                EXPECT_GE(g.opacity(), cfg.prune_opacity);
            }
        }
        return s;
    };
    EXPECT_TRUE(bit_equal(run(5), run(5)));
}

TEST(CameraExtent, BoundingSphereTimesOnePointOne) {
    std::vector<Camera> cams(2);
    cams[0].pose = Pose::from_rotation_translation(Mat3::Identity(), Vec3(-1, 0, 0));
    cams[1].pose = Pose::from_rotation_translation(Mat3::Identity(), Vec3(1, 0, 0));
    EXPECT_NEAR(camera_extent(cams), 1.1, 1e-15);
}

TEST(TrainLrf, ZeroIterationsReturnsInitialScene) {
    auto syn = make_synthetic_scene(1, small_synthetic());
    auto [ds, norm] = latent_normalize(syn.dataset);
    TrainConfig cfg = short_config(0);
    const auto pts = random_init_points(ds, cfg);
    const Scene expected = init_scene(pts, 3, cfg.seed, cfg.max_sh_degree);
    const auto r = train_lrf(ds, cfg);
    EXPECT_TRUE(bit_equal(r.scene, expected));
    EXPECT_TRUE(r.metrics.empty());
    EXPECT_EQ(r.scene.norm.mean, norm.mean);

    const auto given = train_lrf(ds, cfg, syn.truth);
    EXPECT_TRUE(bit_equal(given.scene, syn.truth));
}

TEST(TrainLrf, DeterministicAndImproves) {
    auto syn = make_synthetic_scene(2, small_synthetic());
    auto [ds, norm] = latent_normalize(syn.dataset);
    const TrainConfig cfg = short_config(150);
    std::vector<TrainMetrics> rows;
    const auto a = train_lrf(ds, cfg, std::nullopt, [&](const TrainMetrics& m) { rows.push_back(m); });
    const auto b = train_lrf(ds, cfg);
    EXPECT_TRUE(bit_equal(a.scene, b.scene));
    ASSERT_EQ(rows.size(), 150u);
    EXPECT_NO_THROW(a.scene.validate());
    for (const auto& m : rows) {
        EXPECT_TRUE(std::isfinite(m.loss));
    }
    // The densification window (until 90) must have changed the count.
    EXPECT_NE(rows[10].gaussians, rows[100].gaussians);

    const auto init = train_lrf(ds, short_config(0));
    for (const auto& v : ds.views) {
        if (!v.train) {
            continue;
        }
        const double before = photometric_loss(render(init.scene, v.camera, v.latent.size()), v.latent).loss;
        const double after = photometric_loss(render(a.scene, v.camera, v.latent.size()), v.latent).loss;
        EXPECT_LT(after, before) << v.camera.id;
        EXPECT_GT(psnr(render(a.scene, v.camera, v.latent.size()), v.latent, 2.0),
                  psnr(render(init.scene, v.camera, v.latent.size()), v.latent, 2.0));
    }
}

TEST(TrainLrf, ThreadCountDoesNotChangeResult) {
    auto syn = make_synthetic_scene(3, small_synthetic());
    auto [ds, norm] = latent_normalize(syn.dataset);
    TrainConfig one = short_config(60);
    TrainConfig four = one;
    four.threads = 4;
    EXPECT_TRUE(bit_equal(train_lrf(ds, one).scene, train_lrf(ds, four).scene));
}

TEST(TrainLrf, RequiresTrainingViews) {
    auto syn = make_synthetic_scene(4, small_synthetic());
    for (auto& v : syn.dataset.views) {
        v.train = false;
    }
    EXPECT_THROW(train_lrf(syn.dataset, short_config(5)), Error);
}
