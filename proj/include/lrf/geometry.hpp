// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lrf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Points at or closer than this camera-space depth are never projected.
inline constexpr double kNearPlane = 0.01;

/// Pinhole calibration. Pixel coordinates are continuous with pixel (i, j)
/// covering [i, i+1) x [j, j+1), so the centre of the top-left pixel is
/// (0.5, 0.5).
struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.5;
    double cy = 0.5;
    int width = 1;
    int height = 1;

    /// Throws lrf::Error unless fx, fy > 0 and the principal point lies
    /// strictly inside the sensor.
    void validate() const;

    /// Intrinsics for the same field of view sampled at a different resolution.
    CameraIntrinsics rescaled(int new_width, int new_height) const;

    Mat3 matrix() const;
};

/// Rigid world-to-camera transform stored as a 4x4 homogeneous matrix.
class Pose {
public:
    Pose() : m_(Mat4::Identity()) {}

    /// Throws unless the rotation block is orthonormal with det +1 (1e-9)
    /// and the bottom row is exactly [0 0 0 1].
    explicit Pose(const Mat4& m);

    static Pose from_rotation_translation(const Mat3& r, const Vec3& t);

    const Mat4& matrix() const { return m_; }
    Mat3 rotation() const { return m_.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return m_.topRightCorner<3, 1>(); }

    /// Exact rigid inverse (camera-to-world).
    Mat4 inverse() const;

    Vec3 camera_center() const;

    Vec3 world_to_camera(const Vec3& x) const { return rotation() * x + translation(); }

private:
    Mat4 m_;
};

struct Camera {
    std::string id;
    CameraIntrinsics intrinsics;
    Pose pose;
};

struct CorrespondencePair {
    std::string view_i;
    std::string view_j;
    Vec2 x_i = Vec2::Zero();
    Vec2 x_j = Vec2::Zero();
};

/// Rank-2 fundamental matrix, normalized to unit Frobenius norm.
class FundamentalMatrix {
public:
    /// Normalizes `f`; throws if it is zero.
    explicit FundamentalMatrix(const Mat3& f);

    const Mat3& matrix() const { return f_; }

private:
    Mat3 f_;
};

/// E = P_i^-1 P_j.
Mat4 pose_relative(const Pose& p_i, const Pose& p_j);

/// Absolute pose error ||E - I||_F.
double ape(const Mat4& e);

/// APE of every pose pair normalized to sum to one. When the total error
/// is below 1e-12 the weights are uniform.
std::vector<double> ape_weights(std::span<const std::pair<Pose, Pose>> pairs);

/// F = K_j^-T [t]x R K_i^-1, where (R, t) maps camera-i coordinates to
/// camera-j coordinates, so that x_j^T F x_i = 0 for true correspondences.
FundamentalMatrix fundamental_from_cameras(const Camera& cam_i, const Camera& cam_j);

double epipolar_residual(const FundamentalMatrix& f, const Vec2& x_i, const Vec2& x_j);

struct PointProjection {
    Vec2 pixel;
    double depth = 0.0;
};

/// Pinhole projection; throws "behind camera" at depth <= kNearPlane.
PointProjection project_point(const Camera& cam, const Vec3& x_world);

/// World-space point seen at `pixel` with camera-space depth `depth`.
Vec3 unproject_point(const Camera& cam, const Vec2& pixel, double depth);

Mat3 skew(const Vec3& v);

} // namespace lrf
