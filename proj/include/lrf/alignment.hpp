// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lrf/image.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace lrf {

inline constexpr int kPatch = 8;                          // latent-to-image upsampling factor
inline constexpr int kPatchOutputs = kPatch * kPatch * 3; // 192 values per latent pixel

enum class SampleSplit { train, novel };

struct PairedSample {
    LatentImage latent; // H x W x C
    LatentImage image;  // 8H x 8W x 3, values in [0, 1]
    SampleSplit split = SampleSplit::train;
};

/// Maps each latent pixel to its own 8x8x3 patch: patch = W z + b. Row r of
/// W holds patch entry r = (py * 8 + px) * 3 + color.
struct PatchLinearDecoder {
    int channels = 0;
    std::vector<double> weight; // kPatchOutputs x channels, row-major
    std::vector<double> bias;   // kPatchOutputs

    PatchLinearDecoder() = default;
    explicit PatchLinearDecoder(int c)
        : channels(c), weight(static_cast<std::size_t>(kPatchOutputs) * c, 0.0), bias(kPatchOutputs, 0.0) {}

    double& w(int row, int c) { return weight[static_cast<std::size_t>(row) * channels + c]; }
    double w(int row, int c) const { return weight[static_cast<std::size_t>(row) * channels + c]; }
};

/// Unclamped decode to an 8H x 8W x 3 image.
LatentImage decode(const PatchLinearDecoder& d, const LatentImage& z);

/// Copy of `image` with every value clamped to [0, 1].
LatentImage clamp_unit(const LatentImage& image);

struct AlignmentLoss {
    double value = 0.0;
    double train_l1 = 0.0; // 0 when the split has no samples
    double novel_l1 = 0.0;
    PatchLinearDecoder grad; // d(value) / d(weight, bias)
};

/// lambda_train * mean L1 over train samples + lambda_novel * mean L1 over
/// novel samples. A split's L1 is the mean of its samples' per-entry mean
/// absolute errors.
AlignmentLoss alignment_loss(const PatchLinearDecoder& d, const std::vector<PairedSample>& samples,
                             double lambda_train = 0.5, double lambda_novel = 0.5);

struct AlignConfig {
    double lambda_train = 0.5;
    double lambda_novel = 0.5;
    double lr = 1e-2;
    /// Learning rate decays log-linearly to lr * lr_final_ratio.
    double lr_final_ratio = 1e-2;
    int iterations = 2000;
    /// Recorded for reproducibility; full-batch Adam from zero draws no
    /// random numbers.
    std::uint64_t seed = 0;
};

struct AlignResult {
    PatchLinearDecoder decoder;
    std::vector<double> losses; // loss before each step, then the final loss
};

/// Full-batch Adam on alignment_loss from a zero decoder.
AlignResult fit_decoder(const std::vector<PairedSample>& samples, const AlignConfig& config = {});

/// "LRFD" magic, u32 C, 192 x C weights, 192 biases, little-endian f32.
void save_decoder(const PatchLinearDecoder& d, const std::filesystem::path& path);
PatchLinearDecoder load_decoder(const std::filesystem::path& path);

} // namespace lrf
