// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "lrf/training.hpp"
#include "lrf/error.hpp"
#include "lrf/metrics.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace lrf {

// ---------------------------------------------------------------- config

#define LRF_CONFIG_FIELDS(X)                                                                         \
    X(iterations) X(position_lr_init) X(position_lr_final) X(position_lr_scale_by_extent) X(sh_lr)   \
    X(sh_rest_lr) X(opacity_lr) X(scale_lr) X(rotation_lr) X(lambda_dssim) X(densify_interval)       \
    X(densify_from) X(densify_until_fraction) X(densify_grad_threshold) X(percent_dense)             \
    X(prune_opacity) X(opacity_reset_interval) X(max_gaussians) X(sh_degree_interval)                \
    X(max_sh_degree) X(init_points) X(init_depth_min) X(init_depth_max) X(seed) X(threads)

void TrainConfig::validate() const {
    const auto require = [](bool ok, const char* what) {
        if (!ok) {
            throw Error(fmt::format("invalid train config: {}", what), ErrorKind::usage);
        }
    };
    require(iterations >= 0, "iterations must be >= 0");
    require(position_lr_init > 0 && position_lr_final > 0 && sh_lr > 0 && sh_rest_lr > 0 && opacity_lr > 0 &&
                scale_lr > 0 && rotation_lr > 0,
            "learning rates must be positive");
    require(lambda_dssim >= 0 && lambda_dssim <= 1, "lambda_dssim must be in [0, 1]");
    require(densify_interval > 0 && opacity_reset_interval > 0 && sh_degree_interval > 0,
            "intervals must be positive");
    require(densify_from >= 0, "densify_from must be >= 0");
    require(densify_grad_threshold > 0 && percent_dense > 0, "densification thresholds must be positive");
    require(prune_opacity >= 0 && prune_opacity < 1, "prune_opacity must be in [0, 1)");
    require(max_sh_degree >= 0 && max_sh_degree <= kMaxShDegree, "max_sh_degree must be in 0..3");
    require(init_points > 0, "init_points must be positive");
    require(init_depth_min > 0 && init_depth_max >= init_depth_min, "init depth range is invalid");
    require(threads >= 1, "threads must be >= 1");
    require(max_gaussians >= 0, "max_gaussians must be >= 0");
}

TrainConfig train_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(fmt::format("train config is not valid JSON: {}", e.what()), ErrorKind::usage);
    }
    if (!j.is_object()) {
        throw Error("train config must be a JSON object", ErrorKind::usage);
    }
    TrainConfig cfg;
    std::set<std::string> known;
#define LRF_READ_FIELD(name)                                                                             \
    known.insert(#name);                                                                                 \
    if (j.contains(#name)) {                                                                             \
        try {                                                                                            \
            j.at(#name).get_to(cfg.name);                                                                \
        } catch (const nlohmann::json::exception& e) {                                                   \
            throw Error(fmt::format("train config field '{}': {}", #name, e.what()), ErrorKind::usage); \
        }                                                                                                \
    }
    LRF_CONFIG_FIELDS(LRF_READ_FIELD)
#undef LRF_READ_FIELD
    for (const auto& item : j.items()) {
        if (!known.count(item.key())) {
            throw Error(fmt::format("unknown train config field '{}'", item.key()), ErrorKind::usage);
        }
    }
    cfg.validate();
    return cfg;
}

std::string train_config_to_json(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
#define LRF_WRITE_FIELD(name) j[#name] = cfg.name;
    LRF_CONFIG_FIELDS(LRF_WRITE_FIELD)
#undef LRF_WRITE_FIELD
    return j.dump(2);
}

// --------------------------------------------------------------- dataset

std::size_t LatentDataset::train_count() const {
    return static_cast<std::size_t>(std::count_if(views.begin(), views.end(), [](const auto& v) { return v.train; }));
}

void LatentDataset::validate() const {
    if (views.empty()) {
        throw Error("empty dataset");
    }
    std::set<std::string> ids;
    for (const auto& v : views) {
        if (!v.latent.same_shape(views.front().latent)) {
            throw Error(fmt::format("view '{}' latent shape differs from view '{}'", v.camera.id,
                                    views.front().camera.id));
        }
        if (!ids.insert(v.camera.id).second) {
            throw Error(fmt::format("duplicate view id '{}'", v.camera.id));
        }
        v.camera.intrinsics.validate();
    }
}

std::pair<LatentDataset, NormRecord> latent_normalize(const LatentDataset& dataset) {
    if (dataset.views.empty()) {
        throw Error("cannot normalize an empty dataset");
    }
    const int channels = dataset.views.front().latent.channels;
    NormRecord norm;
    norm.mean.assign(static_cast<std::size_t>(channels), 0.0);
    norm.scale.assign(static_cast<std::size_t>(channels), 0.0);
    std::vector<double> count(static_cast<std::size_t>(channels), 0.0);
    for (const auto& v : dataset.views) {
        if (v.latent.channels != channels) {
            throw Error("latent channel counts differ across views");
        }
        for (std::size_t i = 0; i < v.latent.data.size(); ++i) {
            norm.mean[i % channels] += v.latent.data[i];
            count[i % channels] += 1.0;
        }
    }
    for (int c = 0; c < channels; ++c) {
        norm.mean[c] /= count[c];
    }
    for (const auto& v : dataset.views) {
        for (std::size_t i = 0; i < v.latent.data.size(); ++i) {
            const int c = static_cast<int>(i % channels);
            norm.scale[c] = std::max(norm.scale[c], std::abs(v.latent.data[i] - norm.mean[c]));
        }
    }
    for (double& s : norm.scale) {
        s = std::max(s, 1e-6);
    }
    LatentDataset out = dataset;
    for (auto& v : out.views) {
        for (std::size_t i = 0; i < v.latent.data.size(); ++i) {
            const int c = static_cast<int>(i % channels);
            v.latent.data[i] = norm.normalize(c, v.latent.data[i]);
        }
    }
    out.norm = norm;
    return {std::move(out), norm};
}

LatentImage denormalize_latent(const LatentImage& normalized, const NormRecord& norm) {
    LatentImage out = normalized;
    if (norm.empty()) {
        return out;
    }
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = norm.denormalize(static_cast<int>(i % out.channels), out.data[i]);
    }
    return out;
}

// ------------------------------------------------------------------ loss

PhotometricLoss photometric_loss(const LatentImage& rendered, const LatentImage& target, double lambda_dssim) {
    require_same_shape(rendered, target, "photometric_loss");
    const double n = static_cast<double>(rendered.data.size());
    PhotometricLoss out;
    out.grad = LatentImage(rendered.height, rendered.width, rendered.channels);
    double l1 = 0.0;
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
        const double d = rendered.data[i] - target.data[i];
        l1 += std::abs(d);
        out.grad.data[i] = (1.0 - lambda_dssim) * static_cast<double>((d > 0.0) - (d < 0.0)) / n;
    }
    out.l1 = l1 / n;
    if (lambda_dssim > 0.0) {
        const auto s = ssim_same_with_grad(rendered, target, kLatentPeak);
        out.dssim = 0.5 * (1.0 - s.value);
        for (std::size_t i = 0; i < out.grad.data.size(); ++i) {
            out.grad.data[i] -= 0.5 * lambda_dssim * s.grad.data[i];
        }
    } else {
        out.dssim = 0.5 * (1.0 - ssim_same_with_grad(rendered, target, kLatentPeak).value);
    }
    out.loss = (1.0 - lambda_dssim) * out.l1 + lambda_dssim * out.dssim;
    return out;
}

// ------------------------------------------------------------- optimizer

double position_lr(double init, double final_lr, int step, int max_steps) {
    if (max_steps <= 0) {
        return final_lr;
    }
    const double t = std::clamp(static_cast<double>(step) / max_steps, 0.0, 1.0);
    return std::exp(std::log(init) * (1.0 - t) + std::log(final_lr) * t);
}

AdamState AdamState::zeros(const Scene& scene) {
    AdamState s;
    s.m.assign(scene.size(), zero_grad(scene.channels));
    s.v.assign(scene.size(), zero_grad(scene.channels));
    return s;
}

namespace {

struct AdamCoeffs {
    double bias1;
    double bias2;
};

inline void adam_update(double& param, double grad, double& m, double& v, double lr, const AdamCoeffs& c) {
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * grad * grad;
    const double m_hat = m / c.bias1;
    const double v_hat = v / c.bias2;
    param -= lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
}

} // namespace

void adam_step(Scene& scene, const ParamGrads& grads, AdamState& state, int step, const LearningRates& lrs) {
    if (grads.gaussians.size() != scene.size() || state.m.size() != scene.size() || state.v.size() != scene.size()) {
        throw Error("adam_step: scene, gradient and optimizer state sizes differ");
    }
    if (step < 1) {
        throw Error("adam_step: step is 1-based", ErrorKind::usage);
    }
    const AdamCoeffs c{1.0 - std::pow(kAdamBeta1, step), 1.0 - std::pow(kAdamBeta2, step)};
    for (std::size_t i = 0; i < scene.size(); ++i) {
        auto& g = scene.gaussians[i];
        const auto& d = grads.gaussians[i];
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (int k = 0; k < 3; ++k) {
            adam_update(g.position[k], d.position[k], m.position[k], v.position[k], lrs.position, c);
            adam_update(g.log_scale[k], d.log_scale[k], m.log_scale[k], v.log_scale[k], lrs.scale, c);
        }
        for (int k = 0; k < 4; ++k) {
            adam_update(g.rotation[k], d.rotation[k], m.rotation[k], v.rotation[k], lrs.rotation, c);
        }
        adam_update(g.opacity_logit, d.opacity_logit, m.opacity_logit, v.opacity_logit, lrs.opacity, c);
        for (std::size_t k = 0; k < g.sh.size(); ++k) {
            const double lr = k % kShCoeffs == 0 ? lrs.sh_dc : lrs.sh_rest;
            adam_update(g.sh[k], d.sh[k], m.sh[k], v.sh[k], lr, c);
        }
    }
}

// --------------------------------------------------------- densification

DensifyStats DensifyStats::zeros(std::size_t n) {
    return {std::vector<double>(n, 0.0), std::vector<int>(n, 0), std::vector<Vec3>(n, Vec3::Zero())};
}

void DensifyStats::accumulate(const ParamGrads& grads, ImageSize size) {
    for (std::size_t i = 0; i < grads.gaussians.size(); ++i) {
        if (!grads.visible[i]) {
            continue;
        }
        // Gradient with respect to normalized device coordinates.
        const Vec2 ndc(grads.mean2d[i].x() * 0.5 * size.width, grads.mean2d[i].y() * 0.5 * size.height);
        grad_norm_sum[i] += ndc.norm();
        visible_count[i] += 1;
        position_grad_sum[i] += grads.gaussians[i].position;
    }
}

Scene densify_and_prune(const Scene& scene, const DensifyStats& stats, const TrainConfig& config,
                        double scene_extent, std::mt19937_64& rng, AdamState* adam) {
    if (stats.grad_norm_sum.size() != scene.size()) {
        throw Error("densify_and_prune: statistics are not aligned with the scene");
    }
    Scene out = scene;
    out.gaussians.clear();
    AdamState next_adam;
    const auto keep = [&](const LatentGaussian& g, std::size_t source) {
        out.gaussians.push_back(g);
        if (adam) {
            next_adam.m.push_back(adam->m[source]);
            next_adam.v.push_back(adam->v[source]);
        }
    };
    const auto fresh = [&](const LatentGaussian& g) {
        out.gaussians.push_back(g);
        if (adam) {
            next_adam.m.push_back(zero_grad(scene.channels));
            next_adam.v.push_back(zero_grad(scene.channels));
        }
    };

    std::normal_distribution<double> normal(0.0, 1.0);
    const double size_limit = config.percent_dense * scene_extent;
    std::size_t budget = config.max_gaussians > 0 ? static_cast<std::size_t>(config.max_gaussians) : SIZE_MAX;
    std::size_t total = scene.size();

    std::vector<LatentGaussian> added;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto& g = scene.gaussians[i];
        const int seen = stats.visible_count[i];
        const double mean_grad = seen > 0 ? stats.grad_norm_sum[i] / seen : 0.0;
        const bool selected = mean_grad >= config.densify_grad_threshold && total < budget;
        if (!selected) {
            keep(g, i);
            continue;
        }
        const Vec3 scale = g.scale();
        if (scale.maxCoeff() <= size_limit) {
            // Clone, nudging the copy along the descent direction.
            keep(g, i);
            LatentGaussian copy = g;
            const double gnorm = stats.position_grad_sum[i].norm();
            if (gnorm > 0.0) {
                copy.position -= 0.5 * scale.maxCoeff() * stats.position_grad_sum[i] / gnorm;
            }
            added.push_back(std::move(copy));
            total += 1;
        } else {
            // Split into two children sampled inside the parent.
            const Mat3 r = quaternion_to_rotation(g.rotation / g.rotation.norm());
            for (int child = 0; child < 2; ++child) {
                LatentGaussian c = g;
                const Vec3 sample(normal(rng) * scale.x(), normal(rng) * scale.y(), normal(rng) * scale.z());
                c.position = g.position + r * sample;
                c.log_scale = (scale / 1.6).array().log();
                added.push_back(std::move(c));
            }
            total += 1;
        }
    }
    for (auto& g : added) {
        fresh(g);
    }

    // Prune near-transparent gaussians.
    Scene pruned = out;
    pruned.gaussians.clear();
    AdamState pruned_adam;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.gaussians[i].opacity() < config.prune_opacity) {
            continue;
        }
        pruned.gaussians.push_back(std::move(out.gaussians[i]));
        if (adam) {
            pruned_adam.m.push_back(std::move(next_adam.m[i]));
            pruned_adam.v.push_back(std::move(next_adam.v[i]));
        }
    }
    if (adam) {
        *adam = std::move(pruned_adam);
    }
    return pruned;
}

double camera_extent(const std::vector<Camera>& cameras) {
    if (cameras.empty()) {
        return 1.0;
    }
    Vec3 center = Vec3::Zero();
    for (const auto& c : cameras) {
        center += c.pose.camera_center();
    }
    center /= static_cast<double>(cameras.size());
    double radius = 0.0;
    for (const auto& c : cameras) {
        radius = std::max(radius, (c.pose.camera_center() - center).norm());
    }
    return radius > 0.0 ? 1.1 * radius : 1.0;
}

// ------------------------------------------------------------------ loop

std::vector<Vec3> random_init_points(const LatentDataset& dataset, const TrainConfig& config) {
    std::vector<const LatentView*> train;
    std::vector<Camera> cams;
    for (const auto& v : dataset.views) {
        if (v.train) {
            train.push_back(&v);
            cams.push_back(v.camera);
        }
    }
    if (train.empty()) {
        throw Error("dataset has no training views");
    }
    const double extent = camera_extent(cams);
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Vec3> points;
    points.reserve(static_cast<std::size_t>(config.init_points));
    for (int n = 0; n < config.init_points; ++n) {
        const auto& cam = train[static_cast<std::size_t>(n) % train.size()]->camera;
        const Vec2 pixel(unit(rng) * cam.intrinsics.width, unit(rng) * cam.intrinsics.height);
        const double depth = extent * (config.init_depth_min + (config.init_depth_max - config.init_depth_min) * unit(rng));
        points.push_back(unproject_point(cam, pixel, depth));
    }
    return points;
}

TrainResult train_lrf(const LatentDataset& dataset, const TrainConfig& config, const std::optional<Scene>& initial,
                      const std::function<void(const TrainMetrics&)>& on_iteration) {
    config.validate();
    dataset.validate();
    std::vector<std::size_t> train_views;
    std::vector<Camera> train_cams;
    for (std::size_t i = 0; i < dataset.views.size(); ++i) {
        if (dataset.views[i].train) {
            train_views.push_back(i);
            train_cams.push_back(dataset.views[i].camera);
        }
    }
    if (train_views.empty()) {
        throw Error("dataset has no training views");
    }
    const int channels = dataset.views.front().latent.channels;
    const ImageSize size = dataset.views.front().latent.size();

    TrainResult result;
    if (initial) {
        result.scene = *initial;
        if (result.scene.channels != channels) {
            throw Error(fmt::format("initial scene has {} channels, dataset has {}", result.scene.channels, channels));
        }
    } else {
        const auto points = random_init_points(dataset, config);
        result.scene = init_scene(points, channels, config.seed, config.max_sh_degree);
    }
    result.scene.sh_degree = config.max_sh_degree;
    result.scene.norm = dataset.norm;
    Scene& scene = result.scene;
    if (config.iterations == 0) {
        return result;
    }

    const double extent = camera_extent(train_cams);
    const double pos_scale = config.position_lr_scale_by_extent ? extent : 1.0;
    const int densify_until = static_cast<int>(config.densify_until_fraction * config.iterations);

    std::mt19937_64 rng(config.seed);
    AdamState adam = AdamState::zeros(scene);
    DensifyStats stats = DensifyStats::zeros(scene.size());
    std::vector<std::size_t> order;
    std::size_t cursor = 0;

    RenderOptions ropt;
    ropt.threads = config.threads;
    for (int it = 1; it <= config.iterations; ++it) {
        if (cursor == order.size()) {
            order = train_views;
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        const auto& view = dataset.views[order[cursor++]];
        ropt.sh_degree = std::min(config.max_sh_degree, it / config.sh_degree_interval);

        const auto fwd = render_forward(scene, view.camera, size, ropt);
        const auto loss = photometric_loss(fwd.image, view.latent, config.lambda_dssim);
        if (!std::isfinite(loss.loss)) {
            throw Error(fmt::format("non-finite loss at iteration {}", it), ErrorKind::numerical);
        }
        const ParamGrads grads = render_backward(scene, fwd, loss.grad, config.threads);
        if (it < densify_until) {
            stats.accumulate(grads, size);
        }

        LearningRates lrs;
        lrs.position = pos_scale * position_lr(config.position_lr_init, config.position_lr_final, it, config.iterations);
        lrs.sh_dc = config.sh_lr;
        lrs.sh_rest = config.sh_rest_lr;
        lrs.opacity = config.opacity_lr;
        lrs.scale = config.scale_lr;
        lrs.rotation = config.rotation_lr;
        adam_step(scene, grads, adam, it, lrs);

        if (it < densify_until) {
            if (it > config.densify_from && it % config.densify_interval == 0) {
                scene = densify_and_prune(scene, stats, config, extent, rng, &adam);
                stats = DensifyStats::zeros(scene.size());
            }
            if (it % config.opacity_reset_interval == 0) {
                const double cap = logit(0.01);
                for (std::size_t i = 0; i < scene.size(); ++i) {
                    scene.gaussians[i].opacity_logit = std::min(scene.gaussians[i].opacity_logit, cap);
                    adam.m[i].opacity_logit = 0.0;
                    adam.v[i].opacity_logit = 0.0;
                }
            }
        }

        TrainMetrics row{it, loss.loss, loss.l1, loss.dssim, scene.size()};
        result.metrics.push_back(row);
        if (on_iteration) {
            on_iteration(row);
        }
    }
    scene.validate();
    return result;
}

} // namespace lrf
