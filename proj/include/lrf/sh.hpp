// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lrf/geometry.hpp"

#include <array>
#include <span>
#include <vector>

namespace lrf {

inline constexpr int kMaxShDegree = 3;
inline constexpr int kShCoeffs = 16; // (kMaxShDegree + 1)^2

inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kShC2 = {
    1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
    -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> kShC3 = {
    -0.5900435899266435, 2.890611442640554, -0.4570457994644658,
    0.3731763325901154, -0.4570457994644658, 1.445305721320277,
    -0.5900435899266435};

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

using ShBasis = std::array<double, kShCoeffs>;

/// Real SH basis (Condon-Shortley phase, m = -l..l ordering) at a unit
/// direction. Entries above `degree` are zero.
ShBasis sh_basis(const Vec3& dir, int degree = kMaxShDegree);

/// Basis plus d(basis)/d(dir), treating dir components as free variables.
/// Row k of the jacobian is the gradient of basis entry k.
ShBasis sh_basis_jacobian(const Vec3& dir, int degree, std::array<Vec3, kShCoeffs>& jacobian);

/// Evaluates C channels of view-dependent latents. `coeffs` is channel-major,
/// C x 16. Throws "unnormalized direction" unless |dir| = 1 within 1e-6.
std::vector<double> sh_eval(std::span<const double> coeffs, const Vec3& view_dir, int degree);

} // namespace lrf
