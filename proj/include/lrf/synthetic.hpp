// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lrf/gaussian_scene.hpp"
#include "lrf/geometry.hpp"
#include "lrf/training.hpp"

#include <cstdint>

namespace lrf {

/// World-to-camera pose of a camera at `eye` looking at `target`, with +y
/// pointing down in the image (OpenCV convention).
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3(0.0, -1.0, 0.0));

struct SyntheticOptions {
    int gaussians = 200;
    int train_views = 12;
    int test_views = 1;
    ImageSize size{32, 32};
    int channels = 4;
    /// Cameras sit on a sphere of this radius around the origin.
    double camera_distance = 4.0;
    /// Angular half-spread of the camera arc, radians.
    double arc = 0.5;
};

struct SyntheticScene {
    Scene truth;
    LatentDataset dataset; // rendered latents, raw (not normalized)
};

/// Random ground-truth scene inside the unit ball plus views rendered from
/// it. Test views interleave with the training arc.
SyntheticScene make_synthetic_scene(std::uint64_t seed, const SyntheticOptions& options = {});

} // namespace lrf
