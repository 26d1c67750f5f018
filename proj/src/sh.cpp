// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "lrf/sh.hpp"
#include "lrf/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace lrf {

namespace {

void check_degree(int degree) {
    if (degree < 0 || degree > kMaxShDegree) {
        throw Error(fmt::format("sh degree {} outside 0..{}", degree, kMaxShDegree), ErrorKind::usage);
    }
}

} // namespace

ShBasis sh_basis(const Vec3& dir, int degree) {
    check_degree(degree);
    ShBasis out{};
    const double x = dir.x();
    const double y = dir.y();
    const double z = dir.z();
    out[0] = kShC0;
    if (degree < 1) {
        return out;
    }
    out[1] = -kShC1 * y;
    out[2] = kShC1 * z;
    out[3] = -kShC1 * x;
    if (degree < 2) {
        return out;
    }
    const double xx = x * x;
    const double yy = y * y;
    const double zz = z * z;
    out[4] = kShC2[0] * x * y;
    out[5] = kShC2[1] * y * z;
    out[6] = kShC2[2] * (2.0 * zz - xx - yy);
    out[7] = kShC2[3] * x * z;
    out[8] = kShC2[4] * (xx - yy);
    if (degree < 3) {
        return out;
    }
    out[9] = kShC3[0] * y * (3.0 * xx - yy);
    out[10] = kShC3[1] * x * y * z;
    out[11] = kShC3[2] * y * (4.0 * zz - xx - yy);
    out[12] = kShC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = kShC3[4] * x * (4.0 * zz - xx - yy);
    out[14] = kShC3[5] * z * (xx - yy);
    out[15] = kShC3[6] * x * (xx - 3.0 * yy);
    return out;
}

ShBasis sh_basis_jacobian(const Vec3& dir, int degree, std::array<Vec3, kShCoeffs>& jac) {
    const ShBasis basis = sh_basis(dir, degree);
    for (auto& row : jac) {
        row.setZero();
    }
    if (degree < 1) {
        return basis;
    }
    const double x = dir.x();
    const double y = dir.y();
    const double z = dir.z();
    jac[1] = Vec3(0.0, -kShC1, 0.0);
    jac[2] = Vec3(0.0, 0.0, kShC1);
    jac[3] = Vec3(-kShC1, 0.0, 0.0);
    if (degree < 2) {
        return basis;
    }
    const double xx = x * x;
    const double yy = y * y;
    const double zz = z * z;
    jac[4] = kShC2[0] * Vec3(y, x, 0.0);
    jac[5] = kShC2[1] * Vec3(0.0, z, y);
    jac[6] = kShC2[2] * Vec3(-2.0 * x, -2.0 * y, 4.0 * z);
    jac[7] = kShC2[3] * Vec3(z, 0.0, x);
    jac[8] = kShC2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
    if (degree < 3) {
        return basis;
    }
    jac[9] = kShC3[0] * Vec3(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
    jac[10] = kShC3[1] * Vec3(y * z, x * z, x * y);
    jac[11] = kShC3[2] * Vec3(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
    jac[12] = kShC3[3] * Vec3(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
    jac[13] = kShC3[4] * Vec3(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
    jac[14] = kShC3[5] * Vec3(2.0 * x * z, -2.0 * y * z, xx - yy);
    jac[15] = kShC3[6] * Vec3(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
    return basis;
}

std::vector<double> sh_eval(std::span<const double> coeffs, const Vec3& view_dir, int degree) {
    if (std::abs(view_dir.norm() - 1.0) > 1e-6) {
        throw Error(fmt::format("unnormalized direction (norm {})", view_dir.norm()), ErrorKind::usage);
    }
    if (coeffs.size() % kShCoeffs != 0) {
        throw Error(fmt::format("sh coefficient count {} is not a multiple of {}", coeffs.size(), kShCoeffs));
    }
    const ShBasis basis = sh_basis(view_dir, degree);
    const std::size_t channels = coeffs.size() / kShCoeffs;
    const int used = sh_coeff_count(degree);
    std::vector<double> out(channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        const double* row = coeffs.data() + c * kShCoeffs;
        double acc = 0.0;
        for (int k = 0; k < used; ++k) {
            acc += row[k] * basis[k];
        }
        out[c] = acc;
    }
    return out;
}

} // namespace lrf
