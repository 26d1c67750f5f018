// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lrf/image.hpp"

#include <limits>
#include <string>
#include <vector>

namespace lrf {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Peak used for latent-space metrics: normalized latents span [-1, 1].
inline constexpr double kLatentPeak = 2.0;

/// Returned by psnr() when the inputs are identical.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(peak^2 / MSE) in dB, or kPsnrIdentical when MSE is zero.
double psnr(const LatentImage& a, const LatentImage& b, double peak);

/// Mean SSIM over the valid (unpadded) window positions, per channel, then
/// averaged over channels. Needs images of at least 11 x 11.
double ssim(const LatentImage& a, const LatentImage& b, double peak);

/// Normalized 1D Gaussian taps of the SSIM window.
std::vector<double> ssim_window_taps();

struct SsimWithGrad {
    double value = 0.0;
    LatentImage grad; // d(value)/d(a)
};

/// SSIM with zero-padded "same" windowing (the map has one entry per
/// pixel), usable on images smaller than the window; also returns the
/// gradient with respect to `a`.
SsimWithGrad ssim_same_with_grad(const LatentImage& a, const LatentImage& b, double peak);

/// Formats a PSNR value, printing "identical" for kPsnrIdentical.
std::string format_psnr(double db);

} // namespace lrf
