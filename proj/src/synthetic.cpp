// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "lrf/synthetic.hpp"
#include "lrf/error.hpp"
#include "lrf/rasterizer.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <fmt/format.h>

#include <cmath>
#include <random>

namespace lrf {

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
    const Vec3 z = (target - eye).normalized();
    const Vec3 x = up.cross(z).normalized();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.row(0) = x.transpose();
    r.row(1) = y.transpose();
    r.row(2) = z.transpose();
    // Re-orthonormalize so the pose check passes at 1e-9.
    Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    r = svd.matrixU() * svd.matrixV().transpose();
    return Pose::from_rotation_translation(r, -r * eye);
}

SyntheticScene make_synthetic_scene(std::uint64_t seed, const SyntheticOptions& o) {
    if (o.gaussians <= 0 || o.train_views <= 0 || o.test_views < 0 || o.channels <= 0 || o.size.width <= 0 ||
        o.size.height <= 0) {
        throw Error("synthetic scene needs positive counts and size", ErrorKind::usage);
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    SyntheticScene out;
    Scene& truth = out.truth;
    truth.channels = o.channels;
    truth.sh_degree = kMaxShDegree;
    for (int n = 0; n < o.gaussians; ++n) {
        LatentGaussian g;
        Vec3 p;
        do {
            p = Vec3(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
        } while (p.squaredNorm() > 1.0);
        g.position = p;
        for (int k = 0; k < 3; ++k) {
            g.log_scale[k] = std::log(uniform(0.06, 0.18));
        }
        g.rotation = Vec4(normal(rng), normal(rng), normal(rng), normal(rng)).normalized();
        g.opacity_logit = uniform(0.0, 2.5);
        g.sh.assign(static_cast<std::size_t>(o.channels) * kShCoeffs, 0.0);
        for (int c = 0; c < o.channels; ++c) {
            g.sh[c * kShCoeffs] = normal(rng) / kShC0 * 0.5;
            for (int k = 1; k < 4; ++k) {
                g.sh[c * kShCoeffs + k] = 0.1 * normal(rng);
            }
        }
        truth.gaussians.push_back(std::move(g));
    }

    const int total = o.train_views + o.test_views;
    const CameraIntrinsics k{1.2 * o.size.width, 1.2 * o.size.width, 0.5 * o.size.width, 0.5 * o.size.height,
                             o.size.width, o.size.height};
    // Training views on a 2-row arc; test views placed between neighbours.
    const int cols = (o.train_views + 1) / 2;
    int test_placed = 0;
    for (int v = 0; v < total; ++v) {
        double az = 0.0;
        double el = 0.0;
        bool train = v < o.train_views;
        if (train) {
            const int row = v / cols;
            const int col = v % cols;
            az = cols > 1 ? -o.arc + 2.0 * o.arc * col / (cols - 1) : 0.0;
            el = row == 0 ? -0.3 * o.arc : 0.3 * o.arc;
        } else {
            const double t = (test_placed + 0.5) / std::max(1, o.test_views);
            az = -o.arc + 2.0 * o.arc * t;
            el = 0.0;
            ++test_placed;
        }
        const Vec3 eye(o.camera_distance * std::sin(az) * std::cos(el), o.camera_distance * std::sin(el),
                       -o.camera_distance * std::cos(az) * std::cos(el));
        LatentView view;
        view.camera.id = fmt::format("{}{:03d}", train ? "train" : "test", train ? v : v - o.train_views);
        view.camera.intrinsics = k;
        view.camera.pose = look_at(eye, Vec3::Zero());
        view.train = train;
        view.latent = render(truth, view.camera, o.size);
        view.latent.alpha.clear();
        out.dataset.views.push_back(std::move(view));
    }
    return out;
}

} // namespace lrf
