// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "lrf/gaussian_scene.hpp"
#include "lrf/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace lrf {

double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

double logit(double p) {
    return std::log(p / (1.0 - p));
}

double LatentGaussian::opacity() const {
    return sigmoid(opacity_logit);
}

double NormRecord::normalize(int channel, double raw) const {
    if (empty()) {
        return raw;
    }
    return (raw - mean[channel]) / scale[channel];
}

double NormRecord::denormalize(int channel, double normalized) const {
    if (empty()) {
        return normalized;
    }
    return normalized * scale[channel] + mean[channel];
}

void Scene::validate() const {
    if (channels <= 0) {
        throw Error(fmt::format("scene channel count must be positive, got {}", channels));
    }
    if (sh_degree < 0 || sh_degree > kMaxShDegree) {
        throw Error(fmt::format("scene sh_degree {} outside 0..{}", sh_degree, kMaxShDegree));
    }
    if (!norm.empty() && (norm.mean.size() != static_cast<std::size_t>(channels) ||
                          norm.scale.size() != static_cast<std::size_t>(channels))) {
        throw Error("scene normalization record does not match channel count");
    }
    const std::size_t expected = static_cast<std::size_t>(channels) * kShCoeffs;
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const auto& g = gaussians[i];
        if (g.sh.size() != expected) {
            throw Error(fmt::format("gaussian {} has {} sh coefficients, expected {}", i, g.sh.size(), expected));
        }
        const bool finite = g.position.allFinite() && g.log_scale.allFinite() && g.rotation.allFinite() &&
                            std::isfinite(g.opacity_logit) &&
                            std::all_of(g.sh.begin(), g.sh.end(), [](double v) { return std::isfinite(v); });
        if (!finite) {
            throw Error(fmt::format("gaussian {} has non-finite parameters", i), ErrorKind::numerical);
        }
    }
}

double& gaussian_param(LatentGaussian& g, std::size_t k) {
    if (k < 3) return g.position[static_cast<Eigen::Index>(k)];
    if (k < 6) return g.log_scale[static_cast<Eigen::Index>(k - 3)];
    if (k < 10) return g.rotation[static_cast<Eigen::Index>(k - 6)];
    if (k == 10) return g.opacity_logit;
    return g.sh.at(k - 11);
}

double gaussian_param(const LatentGaussian& g, std::size_t k) {
    return gaussian_param(const_cast<LatentGaussian&>(g), k);
}

std::string gaussian_param_name(std::size_t k) {
    if (k < 3) return fmt::format("position[{}]", k);
    if (k < 6) return fmt::format("log_scale[{}]", k - 3);
    if (k < 10) return fmt::format("rotation[{}]", k - 6);
    if (k == 10) return "opacity_logit";
    const std::size_t i = k - 11;
    return fmt::format("sh[c={},k={}]", i / kShCoeffs, i % kShCoeffs);
}

Mat3 quaternion_to_rotation(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
         2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
         2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Mat3 covariance3d(const Vec3& log_scale, const Vec4& rotation) {
    const double n = rotation.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw Error("invalid rotation: zero or non-finite quaternion", ErrorKind::numerical);
    }
    const Mat3 r = quaternion_to_rotation(rotation / n);
    const Mat3 m = r * log_scale.array().exp().matrix().asDiagonal();
    return m * m.transpose();
}

namespace {

std::vector<double> mean_neighbor_distances(std::span<const Vec3> points) {
    constexpr std::size_t kNeighbors = 3;
    std::vector<double> result(points.size(), 0.01);
    std::vector<double> dists;
    for (std::size_t i = 0; i < points.size(); ++i) {
        dists.clear();
        for (std::size_t j = 0; j < points.size(); ++j) {
            const double d = (points[i] - points[j]).norm();
            if (j != i && d > 1e-12) {
                dists.push_back(d);
            }
        }
        if (dists.empty()) {
            continue;
        }
        const std::size_t k = std::min(kNeighbors, dists.size());
        std::partial_sort(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k), dists.end());
        double sum = 0.0;
        for (std::size_t n = 0; n < k; ++n) {
            sum += dists[n];
        }
        result[i] = sum / static_cast<double>(k);
    }
    return result;
}

} // namespace

Scene init_scene(std::span<const Vec3> points, int channels, std::uint64_t seed, int sh_degree) {
    if (points.empty()) {
        throw Error("empty initialization", ErrorKind::usage);
    }
    if (channels <= 0) {
        throw Error(fmt::format("channel count must be positive, got {}", channels), ErrorKind::usage);
    }
    Scene scene;
    scene.channels = channels;
    scene.sh_degree = sh_degree;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dc(0.0, 0.5 / kShC0);
    const auto scales = mean_neighbor_distances(points);
    const double opacity_logit = logit(0.1);

    scene.gaussians.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        LatentGaussian g;
        g.position = points[i];
        g.log_scale = Vec3::Constant(std::log(scales[i]));
        g.opacity_logit = opacity_logit;
        g.sh.assign(static_cast<std::size_t>(channels) * kShCoeffs, 0.0);
        for (int c = 0; c < channels; ++c) {
            g.sh[static_cast<std::size_t>(c) * kShCoeffs] = dc(rng);
        }
        scene.gaussians.push_back(std::move(g));
    }
    scene.validate();
    return scene;
}

} // namespace lrf
