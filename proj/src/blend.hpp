// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lrf/rasterizer.hpp"

#include <cmath>

namespace lrf::detail {

struct SplatEval {
    double alpha = 0.0;   // after cutoff and clamp
    double falloff = 0.0; // exp(-q / 2)
    Vec2 offset = Vec2::Zero();
    bool clamped = false;
};

inline SplatEval evaluate_splat(const ProjectedGaussian& pg, const Vec2& pixel) {
    SplatEval out;
    out.offset = pixel - pg.mean2d;
    const Vec2& d = out.offset;
    const Mat2& a = pg.inv_cov2d;
    const double q = a(0, 0) * d.x() * d.x() + 2.0 * a(0, 1) * d.x() * d.y() + a(1, 1) * d.y() * d.y();
    if (!(q <= kCutoffMahalanobisSq)) {
        return out;
    }
    out.falloff = std::exp(-0.5 * q);
    out.alpha = pg.opacity * out.falloff;
    if (out.alpha > kAlphaClamp) {
        out.alpha = kAlphaClamp;
        out.clamped = true;
    }
    return out;
}

/// One front-to-back blending step; returns true when transmittance has
/// dropped below the early-termination threshold.
inline bool blend_step(double alpha, const double* latent, int channels, double* value, double& transmittance) {
    const double weight = alpha * transmittance;
    for (int c = 0; c < channels; ++c) {
        value[c] += latent[c] * weight;
    }
    transmittance *= 1.0 - alpha;
    return transmittance < kTransmittanceStop;
}

} // namespace lrf::detail
