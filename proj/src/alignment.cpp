// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "lrf/alignment.hpp"
#include "lrf/error.hpp"

#include "binary_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace lrf {

LatentImage decode(const PatchLinearDecoder& d, const LatentImage& z) {
    if (z.channels != d.channels) {
        throw Error(fmt::format("decoder expects {} channels, latent has {}", d.channels, z.channels));
    }
    LatentImage img(z.height * kPatch, z.width * kPatch, 3);
    for (int y = 0; y < z.height; ++y) {
        for (int x = 0; x < z.width; ++x) {
            const double* zp = &z.data[z.index(y, x, 0)];
            for (int py = 0; py < kPatch; ++py) {
                for (int px = 0; px < kPatch; ++px) {
                    for (int col = 0; col < 3; ++col) {
                        const int r = (py * kPatch + px) * 3 + col;
                        double v = d.bias[r];
                        for (int c = 0; c < d.channels; ++c) {
                            v += d.w(r, c) * zp[c];
                        }
                        img.at(y * kPatch + py, x * kPatch + px, col) = v;
                    }
                }
            }
        }
    }
    return img;
}

LatentImage clamp_unit(const LatentImage& image) {
    LatentImage out = image;
    for (double& v : out.data) {
        v = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

namespace {

void check_sample(const PatchLinearDecoder& d, const PairedSample& s) {
    if (s.latent.channels != d.channels) {
        throw Error(fmt::format("decoder expects {} channels, sample latent has {}", d.channels, s.latent.channels));
    }
    if (s.image.channels != 3 || s.image.height != kPatch * s.latent.height ||
        s.image.width != kPatch * s.latent.width) {
        throw Error(fmt::format("sample image {}x{}x{} is not 8x the {}x{} latent with 3 colors", s.image.height,
                                s.image.width, s.image.channels, s.latent.height, s.latent.width));
    }
}

} // namespace

AlignmentLoss alignment_loss(const PatchLinearDecoder& d, const std::vector<PairedSample>& samples,
                             double lambda_train, double lambda_novel) {
    if (samples.empty()) {
        throw Error("alignment loss needs at least one sample", ErrorKind::usage);
    }
    if (lambda_train < 0.0 || lambda_novel < 0.0) {
        throw Error("alignment weights must be non-negative", ErrorKind::usage);
    }
    std::size_t n_train = 0;
    std::size_t n_novel = 0;
    for (const auto& s : samples) {
        check_sample(d, s);
        (s.split == SampleSplit::train ? n_train : n_novel) += 1;
    }

    AlignmentLoss out;
    out.grad = PatchLinearDecoder(d.channels);
    for (const auto& s : samples) {
        const bool train = s.split == SampleSplit::train;
        const double lambda = train ? lambda_train : lambda_novel;
        if (lambda == 0.0) {
            continue; // the sample cannot affect the loss
        }
        const double split_count = static_cast<double>(train ? n_train : n_novel);
        const double entries = static_cast<double>(s.image.data.size());
        const double scale = lambda / (split_count * entries);
        const LatentImage pred = decode(d, s.latent);
        double l1 = 0.0;
        for (int y = 0; y < s.latent.height; ++y) {
            for (int x = 0; x < s.latent.width; ++x) {
                const double* zp = &s.latent.data[s.latent.index(y, x, 0)];
                for (int py = 0; py < kPatch; ++py) {
                    for (int px = 0; px < kPatch; ++px) {
                        for (int col = 0; col < 3; ++col) {
                            const std::size_t i = pred.index(y * kPatch + py, x * kPatch + px, col);
                            const double diff = pred.data[i] - s.image.data[i];
                            l1 += std::abs(diff);
                            const double g = scale * static_cast<double>((diff > 0.0) - (diff < 0.0));
                            if (g == 0.0) {
                                continue;
                            }
                            const int r = (py * kPatch + px) * 3 + col;
                            out.grad.bias[r] += g;
                            for (int c = 0; c < d.channels; ++c) {
                                out.grad.w(r, c) += g * zp[c];
                            }
                        }
                    }
                }
            }
        }
        (train ? out.train_l1 : out.novel_l1) += l1 / (entries * split_count);
    }
    out.value = lambda_train * out.train_l1 + lambda_novel * out.novel_l1;
    return out;
}

AlignResult fit_decoder(const std::vector<PairedSample>& samples, const AlignConfig& config) {
    if (samples.empty()) {
        throw Error("fit_decoder needs at least one sample", ErrorKind::usage);
    }
    if (!(config.lr > 0.0) || !(config.lr_final_ratio > 0.0) || config.iterations < 0) {
        throw Error("fit_decoder: learning rate must be positive and iterations >= 0", ErrorKind::usage);
    }
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-12;

    AlignResult result;
    result.decoder = PatchLinearDecoder(samples.front().latent.channels);
    PatchLinearDecoder& d = result.decoder;
    std::vector<double> m_w(d.weight.size(), 0.0), v_w(d.weight.size(), 0.0);
    std::vector<double> m_b(d.bias.size(), 0.0), v_b(d.bias.size(), 0.0);

    const auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                            std::vector<double>& v, double lr, double bias1, double bias2) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            p[i] -= lr * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + eps);
        }
    };

    for (int it = 1; it <= config.iterations; ++it) {
        const auto loss = alignment_loss(d, samples, config.lambda_train, config.lambda_novel);
        if (!std::isfinite(loss.value)) {
            throw Error(fmt::format("non-finite alignment loss at iteration {}", it), ErrorKind::numerical);
        }
        result.losses.push_back(loss.value);
        const double t = config.iterations > 1 ? static_cast<double>(it - 1) / (config.iterations - 1) : 0.0;
        const double lr = config.lr * std::pow(config.lr_final_ratio, t);
        const double bias1 = 1.0 - std::pow(beta1, it);
        const double bias2 = 1.0 - std::pow(beta2, it);
        update(d.weight, loss.grad.weight, m_w, v_w, lr, bias1, bias2);
        update(d.bias, loss.grad.bias, m_b, v_b, lr, bias1, bias2);
    }
    result.losses.push_back(alignment_loss(d, samples, config.lambda_train, config.lambda_novel).value);
    return result;
}

void save_decoder(const PatchLinearDecoder& d, const std::filesystem::path& path) {
    if (d.channels <= 0 || d.weight.size() != static_cast<std::size_t>(kPatchOutputs) * d.channels ||
        d.bias.size() != static_cast<std::size_t>(kPatchOutputs)) {
        throw Error("decoder has inconsistent shape");
    }
    auto out = detail::open_output(path);
    out.write("LRFD", 4);
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d.channels));
    detail::write_f32(out, d.weight);
    detail::write_f32(out, d.bias);
    if (!out) {
        throw Error(fmt::format("failed writing '{}'", path.string()));
    }
}

PatchLinearDecoder load_decoder(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    detail::expect_magic(in, "LRFD", path);
    const auto channels = detail::read_pod<std::uint32_t>(in, path);
    if (channels == 0 || channels > 4096) {
        throw Error(fmt::format("'{}' declares an invalid channel count {}", path.string(), channels));
    }
    PatchLinearDecoder d(static_cast<int>(channels));
    d.weight = detail::read_f32(in, d.weight.size(), path);
    d.bias = detail::read_f32(in, d.bias.size(), path);
    detail::expect_end(in, path);
    for (double v : d.weight) {
        if (!std::isfinite(v)) {
            throw Error(fmt::format("'{}' holds non-finite weights", path.string()), ErrorKind::numerical);
        }
    }
    return d;
}

} // namespace lrf
