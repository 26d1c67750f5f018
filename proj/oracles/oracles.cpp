// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "lrf_oracles/oracles.hpp"
#include "lrf/rasterizer.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lrf::oracle {

LatentImage render_bruteforce(const Scene& scene, const Camera& cam, ImageSize size) {
    const Camera scaled = camera_for_size(cam, size);
    std::vector<ProjectedGaussian> all;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (auto pg = project(scene.gaussians[i], scaled, scene.sh_degree, i)) {
            all.push_back(std::move(*pg));
        }
    }
    const int c = scene.channels;
    LatentImage img(size.height, size.width, c);
    img.alpha.assign(img.pixel_count(), 0.0);
    for (int y = 0; y < size.height; ++y) {
        for (int x = 0; x < size.width; ++x) {
            std::vector<const ProjectedGaussian*> list;
            for (const auto& pg : all) {
                list.push_back(&pg);
            }
            std::sort(list.begin(), list.end(), [](const auto* a, const auto* b) {
                return a->depth < b->depth || (a->depth == b->depth && a->source < b->source);
            });
            const Vec2 pixel(x + 0.5, y + 0.5);
            double t = 1.0;
            for (const auto* pg : list) {
                const double alpha = splat_alpha(*pg, pixel);
                if (alpha <= 0.0) {
                    continue;
                }
                const double w = alpha * t;
                for (int k = 0; k < c; ++k) {
                    img.at(y, x, k) += pg->latent[k] * w;
                }
                t *= 1.0 - alpha;
                if (t < 1e-4) {
                    break;
                }
            }
            img.alpha[static_cast<std::size_t>(y) * size.width + x] = 1.0 - t;
        }
    }
    return img;
}

double ssim_direct(const LatentImage& a, const LatentImage& b, double peak, SsimPadding padding) {
    constexpr int win = 11;
    constexpr int half = win / 2;
    constexpr double sigma = 1.5;
    double kernel[win][win];
    double ksum = 0.0;
    for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
            const double dy = i - half;
            const double dx = j - half;
            kernel[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            ksum += kernel[i][j];
        }
    }
    const double c1 = std::pow(0.01 * peak, 2);
    const double c2 = std::pow(0.03 * peak, 2);
    const bool valid = padding == SsimPadding::valid;
    const int y0 = valid ? half : 0;
    const int x0 = valid ? half : 0;
    const int y1 = valid ? a.height - half : a.height;
    const int x1 = valid ? a.width - half : a.width;
    double total = 0.0;
    for (int ch = 0; ch < a.channels; ++ch) {
        double sum = 0.0;
        int count = 0;
        for (int cy = y0; cy < y1; ++cy) {
            for (int cx = x0; cx < x1; ++cx) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = 0; i < win; ++i) {
                    for (int j = 0; j < win; ++j) {
                        const int y = cy + i - half;
                        const int x = cx + j - half;
                        if (y < 0 || y >= a.height || x < 0 || x >= a.width) {
                            continue; // zero padding
                        }
                        const double w = kernel[i][j] / ksum;
                        const double va = a.at(y, x, ch);
                        const double vb = b.at(y, x, ch);
                        ma += w * va;
                        mb += w * vb;
                        saa += w * va * va;
                        sbb += w * vb * vb;
                        sab += w * va * vb;
                    }
                }
                const double var_a = saa - ma * ma;
                const double var_b = sbb - mb * mb;
                const double cov = sab - ma * mb;
                sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
                ++count;
            }
        }
        total += sum / count;
    }
    return total / a.channels;
}

namespace {

double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) {
        f *= i;
    }
    return f;
}

} // namespace

double sh_legendre(int l, int m, const Vec3& d) {
    const double theta = std::acos(std::clamp(d.z(), -1.0, 1.0));
    const double phi = std::atan2(d.y(), d.x());
    const int am = std::abs(m);
    const double k = std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi) * factorial(l - am) / factorial(l + am));
    // std::assoc_legendre omits the Condon-Shortley phase.
    const double p = (am % 2 ? -1.0 : 1.0) * std::assoc_legendre(l, am, std::cos(theta));
    if (m == 0) {
        return k * p;
    }
    if (m > 0) {
        return std::sqrt(2.0) * k * p * std::cos(m * phi);
    }
    return std::sqrt(2.0) * k * p * std::sin(am * phi);
}

std::vector<double> sh_eval_legendre(const std::vector<double>& coeffs, const Vec3& d, int degree) {
    const std::size_t channels = coeffs.size() / 16;
    std::vector<double> out(channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        for (int l = 0; l <= degree; ++l) {
            for (int m = -l; m <= l; ++m) {
                out[c] += coeffs[c * 16 + static_cast<std::size_t>(l * l + l + m)] * sh_legendre(l, m, d);
            }
        }
    }
    return out;
}

namespace {

double log_normal_pdf(double x, double mean, double logvar) {
    const double d = x - mean;
    return -0.5 * (std::log(2.0 * std::numbers::pi) + logvar + d * d / std::exp(logvar));
}

} // namespace

double kl_monte_carlo(const PosteriorParams& q, const PosteriorParams& p, std::size_t samples, std::uint64_t seed,
                      double divisor) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double acc = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        for (std::size_t i = 0; i < q.mean.data.size(); ++i) {
            const double x = q.mean.data[i] + std::exp(0.5 * q.logvar.data[i]) * normal(rng);
            acc += log_normal_pdf(x, q.mean.data[i], q.logvar.data[i]) -
                   log_normal_pdf(x, p.mean.data[i], p.logvar.data[i]);
        }
    }
    return acc / static_cast<double>(samples) / divisor;
}

double kl_prior_monte_carlo(const PosteriorParams& q, std::size_t samples, std::uint64_t seed) {
    PosteriorParams prior{LatentImage(q.mean.height, q.mean.width, q.mean.channels),
                          LatentImage(q.mean.height, q.mean.width, q.mean.channels)};
    return kl_monte_carlo(q, prior, samples, seed, static_cast<double>(q.mean.data.size()));
}

std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x, double h) {
    std::vector<double> g(x.size());
    std::vector<double> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = f(probe);
        probe[i] = x[i] - h;
        const double down = f(probe);
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

Mat2 projected_covariance_monte_carlo(const LatentGaussian& g, const Camera& cam, std::size_t samples,
                                      std::uint64_t seed) {
    const Mat3 sigma = covariance3d(g.log_scale, g.rotation);
    const Eigen::LLT<Mat3> llt(sigma);
    const Mat3 l = llt.matrixL();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vec2> pts;
    pts.reserve(samples);
    Vec2 mean = Vec2::Zero();
    const auto& k = cam.intrinsics;
    for (std::size_t s = 0; s < samples; ++s) {
        const Vec3 x = g.position + l * Vec3(normal(rng), normal(rng), normal(rng));
        const Vec3 p = cam.pose.world_to_camera(x);
        const Vec2 uv(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
        pts.push_back(uv);
        mean += uv;
    }
    mean /= static_cast<double>(samples);
    Mat2 cov = Mat2::Zero();
    for (const auto& p : pts) {
        cov += (p - mean) * (p - mean).transpose();
    }
    return cov / static_cast<double>(samples - 1);
}

RandomScene random_render_scene(std::uint64_t seed, int gaussians, ImageSize size, int channels) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    RandomScene out;
    out.camera.id = "oracle";
    out.camera.intrinsics = {1.1 * size.width, 1.1 * size.width, 0.5 * size.width, 0.5 * size.height, size.width,
                             size.height};
    out.scene.channels = channels;
    out.scene.sh_degree = 3;
    for (int n = 0; n < gaussians; ++n) {
        LatentGaussian g;
        const double depth = unit(rng) < 0.1 ? uniform(-2.0, 0.005) : uniform(0.5, 6.0);
        const double spread = 0.8 * std::abs(depth) * size.width / out.camera.intrinsics.fx;
        g.position = Vec3(uniform(-spread, spread), uniform(-spread, spread), depth);
        for (int k = 0; k < 3; ++k) {
            g.log_scale[k] = std::log(uniform(0.02, 0.6));
        }
        g.rotation = Vec4(normal(rng), normal(rng), normal(rng), normal(rng));
        g.opacity_logit = uniform(-3.0, 6.0);
        g.sh.resize(static_cast<std::size_t>(channels) * 16);
        for (auto& c : g.sh) {
            c = 0.5 * normal(rng);
        }
        out.scene.gaussians.push_back(std::move(g));
    }
    return out;
}

double relative_error(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

} // namespace lrf::oracle
