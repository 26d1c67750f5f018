// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "lrf/metrics.hpp"
#include "lrf/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace lrf {

double psnr(const LatentImage& a, const LatentImage& b, double peak) {
    require_same_shape(a, b, "psnr");
    if (!(peak > 0.0)) {
        throw Error("psnr peak must be positive", ErrorKind::usage);
    }
    if (a.data.empty()) {
        throw Error("psnr of empty images");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(a.data.size());
    if (mse == 0.0) {
        return kPsnrIdentical;
    }
    return 10.0 * std::log10(peak * peak / mse);
}

std::string format_psnr(double db) {
    return std::isinf(db) && db > 0 ? std::string("identical") : fmt::format("{:.4f}", db);
}

std::vector<double> ssim_window_taps() {
    std::vector<double> taps(kSsimWindow);
    const int half = kSsimWindow / 2;
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double x = i - half;
        taps[i] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
        sum += taps[i];
    }
    for (double& t : taps) {
        t /= sum;
    }
    return taps;
}

namespace {

enum class Padding { valid, zero_same };

struct Plane {
    int height = 0;
    int width = 0;
    std::vector<double> v;
};

// Separable Gaussian filter of one plane.
Plane filter(const Plane& in, const std::vector<double>& taps, Padding mode) {
    const int half = kSsimWindow / 2;
    const int out_w = mode == Padding::valid ? in.width - 2 * half : in.width;
    const int out_h = mode == Padding::valid ? in.height - 2 * half : in.height;
    const int shift = mode == Padding::valid ? half : 0;

    // Horizontal pass: in.height x out_w.
    std::vector<double> tmp(static_cast<std::size_t>(in.height) * out_w, 0.0);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kSsimWindow; ++k) {
                const int sx = x + shift + k - half;
                if (sx >= 0 && sx < in.width) {
                    acc += taps[k] * in.v[static_cast<std::size_t>(y) * in.width + sx];
                }
            }
            tmp[static_cast<std::size_t>(y) * out_w + x] = acc;
        }
    }
    Plane out{out_h, out_w, std::vector<double>(static_cast<std::size_t>(out_h) * out_w, 0.0)};
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kSsimWindow; ++k) {
                const int sy = y + shift + k - half;
                if (sy >= 0 && sy < in.height) {
                    acc += taps[k] * tmp[static_cast<std::size_t>(sy) * out_w + x];
                }
            }
            out.v[static_cast<std::size_t>(y) * out_w + x] = acc;
        }
    }
    return out;
}

Plane channel_plane(const LatentImage& img, int c) {
    Plane p{img.height, img.width, std::vector<double>(img.pixel_count())};
    for (std::size_t i = 0; i < p.v.size(); ++i) {
        p.v[i] = img.data[i * img.channels + c];
    }
    return p;
}

Plane product(const Plane& a, const Plane& b) {
    Plane out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        out.v[i] *= b.v[i];
    }
    return out;
}

struct Moments {
    Plane mu_a, mu_b, s_aa, s_bb, s_ab;
};

Moments moments(const Plane& a, const Plane& b, const std::vector<double>& taps, Padding mode) {
    return {filter(a, taps, mode), filter(b, taps, mode), filter(product(a, a), taps, mode),
            filter(product(b, b), taps, mode), filter(product(a, b), taps, mode)};
}

} // namespace

double ssim(const LatentImage& a, const LatentImage& b, double peak) {
    require_same_shape(a, b, "ssim");
    if (a.height < kSsimWindow || a.width < kSsimWindow) {
        throw Error(fmt::format("ssim needs images of at least {0}x{0}, got {1}x{2}", kSsimWindow, a.height, a.width));
    }
    const double c1 = (kSsimK1 * peak) * (kSsimK1 * peak);
    const double c2 = (kSsimK2 * peak) * (kSsimK2 * peak);
    const auto taps = ssim_window_taps();
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        const auto m = moments(channel_plane(a, c), channel_plane(b, c), taps, Padding::valid);
        double sum = 0.0;
        for (std::size_t i = 0; i < m.mu_a.v.size(); ++i) {
            const double ma = m.mu_a.v[i];
            const double mb = m.mu_b.v[i];
            const double va = m.s_aa.v[i] - ma * ma;
            const double vb = m.s_bb.v[i] - mb * mb;
            const double cab = m.s_ab.v[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cab + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += sum / static_cast<double>(m.mu_a.v.size());
    }
    return total / a.channels;
}

SsimWithGrad ssim_same_with_grad(const LatentImage& a, const LatentImage& b, double peak) {
    require_same_shape(a, b, "ssim");
    const double c1 = (kSsimK1 * peak) * (kSsimK1 * peak);
    const double c2 = (kSsimK2 * peak) * (kSsimK2 * peak);
    const auto taps = ssim_window_taps();
    const double n = static_cast<double>(a.pixel_count()) * a.channels;

    SsimWithGrad out;
    out.grad = LatentImage(a.height, a.width, a.channels);
    for (int c = 0; c < a.channels; ++c) {
        const Plane pa = channel_plane(a, c);
        const Plane pb = channel_plane(b, c);
        const auto m = moments(pa, pb, taps, Padding::zero_same);
        Plane g_mu = pa;
        Plane g_saa = pa;
        Plane g_sab = pa;
        double sum = 0.0;
        for (std::size_t i = 0; i < pa.v.size(); ++i) {
            const double ma = m.mu_a.v[i];
            const double mb = m.mu_b.v[i];
            const double va = m.s_aa.v[i] - ma * ma;
            const double vb = m.s_bb.v[i] - mb * mb;
            const double cab = m.s_ab.v[i] - ma * mb;
            const double n1 = 2.0 * ma * mb + c1;
            const double n2 = 2.0 * cab + c2;
            const double d1 = ma * ma + mb * mb + c1;
            const double d2 = va + vb + c2;
            const double f = (n1 * n2) / (d1 * d2);
            sum += f;
            // Partials of f in terms of (mu_a, var_a, cov_ab), then mapped to
            // the filtered moments (mu_a, E[a^2], E[ab]).
            const double f_mu = 2.0 * mb * n2 / (d1 * d2) - 2.0 * ma * f / d1;
            const double f_var = -f / d2;
            const double f_cov = 2.0 * n1 / (d1 * d2);
            g_mu.v[i] = (f_mu - 2.0 * ma * f_var - mb * f_cov) / n;
            g_saa.v[i] = f_var / n;
            g_sab.v[i] = f_cov / n;
        }
        out.value += sum / n;
        // The zero-padded symmetric filter is self-adjoint.
        const Plane t_mu = filter(g_mu, taps, Padding::zero_same);
        const Plane t_saa = filter(g_saa, taps, Padding::zero_same);
        const Plane t_sab = filter(g_sab, taps, Padding::zero_same);
        for (std::size_t i = 0; i < pa.v.size(); ++i) {
            out.grad.data[i * a.channels + c] = t_mu.v[i] + 2.0 * pa.v[i] * t_saa.v[i] + pb.v[i] * t_sab.v[i];
        }
    }
    return out;
}

} // namespace lrf
