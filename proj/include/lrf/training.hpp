// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lrf/gaussian_scene.hpp"
#include "lrf/gradients.hpp"
#include "lrf/image.hpp"
#include "lrf/rasterizer.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace lrf {

/// Optimization schedule. Defaults follow the usual 3D Gaussian splatting
/// recipe; every field can be overridden from JSON by name.
struct TrainConfig {
    int iterations = 3000;

    double position_lr_init = 1.6e-4;
    double position_lr_final = 1.6e-6;
    /// Position rates are multiplied by the camera extent when true.
    bool position_lr_scale_by_extent = true;
    double sh_lr = 2.5e-3;      // degree-0 coefficients
    double sh_rest_lr = 1.25e-4; // higher degrees (sh_lr / 20)
    double opacity_lr = 5e-2;
    double scale_lr = 5e-3;
    double rotation_lr = 1e-3;

    double lambda_dssim = 0.2;

    int densify_interval = 100;
    int densify_from = 500;
    double densify_until_fraction = 0.6;
    double densify_grad_threshold = 2e-4;
    double percent_dense = 0.01;
    double prune_opacity = 0.005;
    int opacity_reset_interval = 3000;
    /// Hard cap on the number of gaussians densification may create (0: none).
    int max_gaussians = 0;

    int sh_degree_interval = 1000;
    int max_sh_degree = 3;

    /// Random initialization when no points are supplied: init_points
    /// samples along training-camera rays at depths within
    /// [init_depth_min, init_depth_max] x camera extent.
    int init_points = 1000;
    double init_depth_min = 0.3;
    double init_depth_max = 1.5;

    std::uint64_t seed = 0;
    int threads = 1;

    /// Throws lrf::Error (usage) on non-positive rates or intervals.
    void validate() const;
};

TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& config);

struct LatentView {
    Camera camera;
    LatentImage latent;
    bool train = true;
};

struct LatentDataset {
    std::vector<LatentView> views;
    NormRecord norm;

    std::size_t train_count() const;
    /// Throws unless views share one shape, ids are unique and at least one
    /// view exists.
    void validate() const;
};

/// Per-channel z' = (z - mean_c) / scale_c over all views, with scale_c the
/// maximum absolute deviation (floored at 1e-6).
std::pair<LatentDataset, NormRecord> latent_normalize(const LatentDataset& dataset);

LatentImage denormalize_latent(const LatentImage& normalized, const NormRecord& norm);

struct PhotometricLoss {
    double loss = 0.0;
    double l1 = 0.0;
    double dssim = 0.0;
    LatentImage grad; // d(loss)/d(rendered)
};

/// (1 - lambda) * mean |r - t| + lambda * (1 - SSIM) / 2, SSIM on the
/// normalized latent range 2.0.
PhotometricLoss photometric_loss(const LatentImage& rendered, const LatentImage& target, double lambda_dssim = 0.2);

struct LearningRates {
    double position = 0.0;
    double sh_dc = 0.0;
    double sh_rest = 0.0;
    double opacity = 0.0;
    double scale = 0.0;
    double rotation = 0.0;
};

/// Position rate decays log-linearly from `init` to `final` over `max_steps`.
double position_lr(double init, double final_lr, int step, int max_steps);

struct AdamState {
    std::vector<GaussianGrad> m;
    std::vector<GaussianGrad> v;

    static AdamState zeros(const Scene& scene);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-15;

/// One Adam update of every parameter group. `step` is 1-based.
void adam_step(Scene& scene, const ParamGrads& grads, AdamState& state, int step, const LearningRates& lrs);

/// Screen-space gradient statistics gathered between densification steps.
struct DensifyStats {
    std::vector<double> grad_norm_sum;
    std::vector<int> visible_count;
    std::vector<Vec3> position_grad_sum;

    static DensifyStats zeros(std::size_t n);
    void accumulate(const ParamGrads& grads, ImageSize size);
};

/// Clone small / split large high-gradient gaussians, then prune
/// near-transparent ones. Optimizer rows follow their gaussians; new rows
/// start at zero.
Scene densify_and_prune(const Scene& scene, const DensifyStats& stats, const TrainConfig& config,
                        double scene_extent, std::mt19937_64& rng, AdamState* adam = nullptr);

/// Radius of the bounding sphere of the camera centres (x1.1).
double camera_extent(const std::vector<Camera>& cameras);

struct TrainMetrics {
    int iteration = 0;
    double loss = 0.0;
    double l1 = 0.0;
    double dssim = 0.0;
    std::size_t gaussians = 0;
};

struct TrainResult {
    Scene scene;
    std::vector<TrainMetrics> metrics;
};

/// Optimizes a latent Gaussian field against the (normalized) training
/// views. Starts from `initial` when given, else from random points.
TrainResult train_lrf(const LatentDataset& dataset, const TrainConfig& config,
                      const std::optional<Scene>& initial = std::nullopt,
                      const std::function<void(const TrainMetrics&)>& on_iteration = {});

/// Random initial points along training-camera rays.
std::vector<Vec3> random_init_points(const LatentDataset& dataset, const TrainConfig& config);

} // namespace lrf
