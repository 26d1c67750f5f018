// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

namespace lrf {

struct ImageSize {
    int height = 0;
    int width = 0;

    bool operator==(const ImageSize&) const = default;
};

/// H x W x C row-major feature map (latents, RGB images, or gradients of
/// either). Element (y, x, c) lives at data[(y * W + x) * C + c]. The
/// optional alpha map holds accumulated opacity 1 - T per pixel.
struct LatentImage {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;
    std::vector<double> alpha;

    LatentImage() = default;
    LatentImage(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * w * c, fill) {}

    ImageSize size() const { return {height, width}; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
    bool has_alpha() const { return !alpha.empty(); }

    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int y, int x, int c) { return data[index(y, x, c)]; }
    double at(int y, int x, int c) const { return data[index(y, x, c)]; }

    bool same_shape(const LatentImage& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

/// Throws lrf::Error naming `what` unless a and b have equal shapes.
void require_same_shape(const LatentImage& a, const LatentImage& b, const char* what);

/// True when every data (and alpha) entry is finite.
bool all_finite(const LatentImage& img);

} // namespace lrf
