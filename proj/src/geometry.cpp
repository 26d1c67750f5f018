// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "lrf/geometry.hpp"
#include "lrf/error.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <fmt/format.h>

#include <cmath>
#include <numeric>

namespace lrf {

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw Error(fmt::format("invalid intrinsics: focal lengths must be positive (fx={}, fy={})", fx, fy));
    }
    if (width <= 0 || height <= 0) {
        throw Error(fmt::format("invalid intrinsics: sensor size {}x{}", width, height));
    }
    if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
        throw Error(fmt::format("invalid intrinsics: principal point ({}, {}) outside {}x{} sensor",
                                cx, cy, width, height));
    }
}

CameraIntrinsics CameraIntrinsics::rescaled(int new_width, int new_height) const {
    const double sx = static_cast<double>(new_width) / width;
    const double sy = static_cast<double>(new_height) / height;
    return {fx * sx, fy * sy, cx * sx, cy * sy, new_width, new_height};
}

Mat3 CameraIntrinsics::matrix() const {
    Mat3 k;
    k << fx, 0.0, cx,
         0.0, fy, cy,
         0.0, 0.0, 1.0;
    return k;
}

Pose::Pose(const Mat4& m) : m_(m) {
    const Mat3 r = m.topLeftCorner<3, 3>();
    if (!m.allFinite()) {
        throw Error("invalid pose: non-finite entries");
    }
    if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        std::abs(r.determinant() - 1.0) > 1e-9) {
        throw Error("invalid pose: rotation block is not a proper rotation");
    }
    if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) {
        throw Error("invalid pose: bottom row must be [0 0 0 1]");
    }
}

Pose Pose::from_rotation_translation(const Mat3& r, const Vec3& t) {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = r;
    m.topRightCorner<3, 1>() = t;
    return Pose(m);
}

Mat4 Pose::inverse() const {
    const Mat3 rt = rotation().transpose();
    Mat4 inv = Mat4::Identity();
    inv.topLeftCorner<3, 3>() = rt;
    inv.topRightCorner<3, 1>() = -rt * translation();
    return inv;
}

Vec3 Pose::camera_center() const {
    return -rotation().transpose() * translation();
}

FundamentalMatrix::FundamentalMatrix(const Mat3& f) {
    const double norm = f.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw Error("invalid fundamental matrix: zero or non-finite");
    }
    f_ = f / norm;
}

Mat4 pose_relative(const Pose& p_i, const Pose& p_j) {
    return p_i.inverse() * p_j.matrix();
}

double ape(const Mat4& e) {
    return (e - Mat4::Identity()).norm();
}

std::vector<double> ape_weights(std::span<const std::pair<Pose, Pose>> pairs) {
    if (pairs.empty()) {
        throw Error("empty pair batch", ErrorKind::usage);
    }
    std::vector<double> errors;
    errors.reserve(pairs.size());
    for (const auto& [p_i, p_j] : pairs) {
        errors.push_back(ape(pose_relative(p_i, p_j)));
    }
    const double total = std::accumulate(errors.begin(), errors.end(), 0.0);
    if (total < 1e-12) {
        return std::vector<double>(pairs.size(), 1.0 / static_cast<double>(pairs.size()));
    }
    for (double& e : errors) {
        e /= total;
    }
    return errors;
}

Mat3 skew(const Vec3& v) {
    Mat3 s;
    s << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
         -v.y(), v.x(), 0.0;
    return s;
}

FundamentalMatrix fundamental_from_cameras(const Camera& cam_i, const Camera& cam_j) {
    if ((cam_i.pose.camera_center() - cam_j.pose.camera_center()).norm() <= 1e-9) {
        throw Error(fmt::format("degenerate baseline between views '{}' and '{}'", cam_i.id, cam_j.id));
    }
    // Relative motion camera i -> camera j, i.e. P_j P_i^-1, obtained as the
    // relative pose of the camera-to-world transforms.
    const Pose c_i(cam_i.pose.inverse());
    const Pose c_j(cam_j.pose.inverse());
    const Mat4 rel = pose_relative(c_j, c_i);
    const Mat3 r = rel.topLeftCorner<3, 3>();
    const Vec3 t = rel.topRightCorner<3, 1>();

    const Mat3 k_i_inv = cam_i.intrinsics.matrix().inverse();
    const Mat3 k_j_inv = cam_j.intrinsics.matrix().inverse();
    return FundamentalMatrix(k_j_inv.transpose() * skew(t) * r * k_i_inv);
}

double epipolar_residual(const FundamentalMatrix& f, const Vec2& x_i, const Vec2& x_j) {
    return x_j.homogeneous().dot(f.matrix() * x_i.homogeneous());
}

PointProjection project_point(const Camera& cam, const Vec3& x_world) {
    const Vec3 p = cam.pose.world_to_camera(x_world);
    if (p.z() <= kNearPlane) {
        throw Error(fmt::format("point behind camera '{}' (depth {})", cam.id, p.z()));
    }
    const auto& k = cam.intrinsics;
    return {Vec2(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy), p.z()};
}

Vec3 unproject_point(const Camera& cam, const Vec2& pixel, double depth) {
    const auto& k = cam.intrinsics;
    const Vec3 p((pixel.x() - k.cx) / k.fx * depth, (pixel.y() - k.cy) / k.fy * depth, depth);
    const Mat3 rt = cam.pose.rotation().transpose();
    return rt * (p - cam.pose.translation());
}

} // namespace lrf
