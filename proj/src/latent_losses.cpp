// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "lrf/latent_losses.hpp"
#include "lrf/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace lrf {

void PosteriorParams::validate() const {
    require_same_shape(mean, logvar, "posterior mean/logvar");
    for (double v : logvar.data) {
        if (!std::isfinite(v)) {
            throw Error("posterior log-variance is not finite", ErrorKind::numerical);
        }
    }
}

namespace {

struct AxisTaps {
    int lo;
    int hi;
    double t; // weight of hi
};

AxisTaps axis_taps(double full_res, int f, int extent) {
    const double u = std::clamp(full_res / f - 0.5, 0.0, static_cast<double>(extent - 1));
    const int lo = std::min(static_cast<int>(std::floor(u)), extent - 1);
    return {lo, std::min(lo + 1, extent - 1), u - lo};
}

double sign(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }

} // namespace

std::array<BilinearTap, 4> bilinear_taps(const LatentImage& z, const Vec2& pixel, int f) {
    if (f < 1) {
        throw Error(fmt::format("downsample factor must be >= 1, got {}", f), ErrorKind::usage);
    }
    if (z.width <= 0 || z.height <= 0) {
        throw Error("cannot sample an empty latent map");
    }
    const double full_w = static_cast<double>(f) * z.width;
    const double full_h = static_cast<double>(f) * z.height;
    if (!(pixel.x() >= 0.0 && pixel.x() <= full_w && pixel.y() >= 0.0 && pixel.y() <= full_h)) {
        throw Error(fmt::format("pixel ({}, {}) outside the {}x{} full-resolution image", pixel.x(), pixel.y(),
                                full_w, full_h));
    }
    const AxisTaps ax = axis_taps(pixel.x(), f, z.width);
    const AxisTaps ay = axis_taps(pixel.y(), f, z.height);
    const auto at = [&](int y, int x) { return static_cast<std::size_t>(y) * z.width + x; };
    return {{{at(ay.lo, ax.lo), (1.0 - ay.t) * (1.0 - ax.t)},
             {at(ay.lo, ax.hi), (1.0 - ay.t) * ax.t},
             {at(ay.hi, ax.lo), ay.t * (1.0 - ax.t)},
             {at(ay.hi, ax.hi), ay.t * ax.t}}};
}

std::vector<double> sample_latent(const LatentImage& z, const Vec2& pixel, int f) {
    std::vector<double> out(static_cast<std::size_t>(z.channels), 0.0);
    for (const auto& tap : bilinear_taps(z, pixel, f)) {
        for (int c = 0; c < z.channels; ++c) {
            out[c] += tap.weight * z.data[tap.offset * z.channels + c];
        }
    }
    return out;
}

CorresLoss corres_loss(const LatentMaps& latents, const CorrespondenceBatch& batch) {
    const auto find = [&](const std::string& id) -> const LatentImage& {
        const auto it = latents.find(id);
        if (it == latents.end()) {
            throw Error(fmt::format("correspondence references missing view '{}'", id));
        }
        return it->second;
    };
    CorresLoss out;
    for (const auto& wp : batch.pairs) {
        const LatentImage& zi = find(wp.pair.view_i);
        const LatentImage& zj = find(wp.pair.view_j);
        if (zi.channels != zj.channels) {
            throw Error(fmt::format("views '{}' and '{}' have different channel counts", wp.pair.view_i,
                                    wp.pair.view_j));
        }
        for (const auto* id : {&wp.pair.view_i, &wp.pair.view_j}) {
            if (!out.grads.count(*id)) {
                const LatentImage& z = find(*id);
                out.grads.emplace(*id, LatentImage(z.height, z.width, z.channels));
            }
        }
        const auto si = sample_latent(zi, wp.pair.x_i, batch.downsample);
        const auto sj = sample_latent(zj, wp.pair.x_j, batch.downsample);
        double residual = 0.0;
        std::vector<double> g(si.size());
        for (std::size_t c = 0; c < si.size(); ++c) {
            residual += std::abs(si[c] - sj[c]);
            g[c] = wp.weight * sign(si[c] - sj[c]);
        }
        out.pair_residuals.push_back(residual);
        out.value += wp.weight * residual;

        const auto scatter = [&](const std::string& id, const LatentImage& z, const Vec2& x, double s) {
            LatentImage& grad = out.grads.at(id);
            for (const auto& tap : bilinear_taps(z, x, batch.downsample)) {
                for (int c = 0; c < z.channels; ++c) {
                    grad.data[tap.offset * z.channels + c] += s * tap.weight * g[c];
                }
            }
        };
        scatter(wp.pair.view_i, zi, wp.pair.x_i, 1.0);
        scatter(wp.pair.view_j, zj, wp.pair.x_j, -1.0);
    }
    return out;
}

double kl_regularizer(const PosteriorParams& q, const PosteriorParams& q_original) {
    q.validate();
    q_original.validate();
    require_same_shape(q.mean, q_original.mean, "kl_regularizer");
    double sum = 0.0;
    for (std::size_t i = 0; i < q.mean.data.size(); ++i) {
        const double lv = q.logvar.data[i];
        const double lv0 = q_original.logvar.data[i];
        const double d = q.mean.data[i] - q_original.mean.data[i];
        sum += 0.5 * (lv0 - lv + (std::exp(lv) + d * d) / std::exp(lv0) - 1.0);
    }
    return sum / static_cast<double>(q.mean.pixel_count());
}

VaeTerms vae_terms(const LatentImage& recon, const LatentImage& target, const PosteriorParams& q) {
    require_same_shape(recon, target, "vae_terms");
    q.validate();
    VaeTerms out;
    for (std::size_t i = 0; i < recon.data.size(); ++i) {
        out.recon += std::abs(recon.data[i] - target.data[i]);
    }
    out.recon /= static_cast<double>(recon.data.size());
    for (std::size_t i = 0; i < q.mean.data.size(); ++i) {
        const double m = q.mean.data[i];
        const double lv = q.logvar.data[i];
        out.kl_prior += 0.5 * (m * m + std::exp(lv) - 1.0 - lv);
    }
    out.kl_prior /= static_cast<double>(q.mean.data.size());
    return out;
}

double stage1_objective(const Stage1Terms& terms, double lambda_corres, double lambda_reg) {
    if (lambda_corres < 0.0 || lambda_reg < 0.0) {
        throw Error("stage-1 loss weights must be non-negative", ErrorKind::usage);
    }
    const double vae = terms.vae.recon + kKlWeight * terms.vae.kl_prior;
    return vae + lambda_corres * terms.corres + lambda_reg * terms.reg;
}

} // namespace lrf
