// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "selftest.hpp"

#include "lrf/alignment.hpp"
#include "lrf/gradients.hpp"
#include "lrf/latent_losses.hpp"
#include "lrf/metrics.hpp"
#include "lrf/rasterizer.hpp"
#include "lrf/training.hpp"
#include "lrf_oracles/oracles.hpp"

#include <fmt/format.h>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace lrf {

namespace {

struct Check {
    bool passed;
    std::string detail;
};

LatentImage random_image(std::mt19937_64& rng, int h, int w, int c) {
    std::normal_distribution<double> normal(0.0, 0.5);
    LatentImage img(h, w, c);
    for (auto& v : img.data) {
        v = normal(rng);
    }
    return img;
}

Check rasterizer_vs_bruteforce(std::uint64_t seed) {
    for (int s = 0; s < 10; ++s) {
        const auto rs = oracle::random_render_scene(seed + s, 20, {16, 16}, 4);
        const auto tiled = render(rs.scene, rs.camera, {16, 16});
        const auto brute = oracle::render_bruteforce(rs.scene, rs.camera, {16, 16});
        if (tiled.data != brute.data || tiled.alpha != brute.alpha) {
            return {false, fmt::format("scene {} differs from the brute-force render", seed + s)};
        }
    }
    return {true, "10 scenes bit-identical"};
}

Check gradients_vs_finite_differences(std::uint64_t seed) {
    std::size_t checked = 0;
    for (int s = 0; s < 3; ++s) {
        const auto p = make_gradcheck_problem(seed + s, 6, {16, 16}, 4);
        const auto r = check_render_gradients(p.scene, p.camera, p.size, p.dL_dZ);
        checked += r.checked;
        if (!r.passed) {
            return {false, fmt::format("seed {}: {} at gaussian {}, rel error {:.2e}", seed + s, r.worst_param,
                                       r.worst_gaussian, r.worst_rel_error)};
        }
    }
    return {true, fmt::format("{} parameters within tolerance", checked)};
}

Check sh_vs_legendre(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0.0;
    for (int n = 0; n < 50; ++n) {
        const Vec3 dir = Vec3(normal(rng), normal(rng), normal(rng)).normalized();
        std::vector<double> coeffs(32);
        for (auto& c : coeffs) {
            c = normal(rng);
        }
        const auto a = sh_eval(coeffs, dir, 3);
        const auto b = oracle::sh_eval_legendre(coeffs, dir, 3);
        for (std::size_t c = 0; c < a.size(); ++c) {
            worst = std::max(worst, std::abs(a[c] - b[c]));
        }
    }
    return {worst <= 1e-12, fmt::format("max abs difference {:.2e}", worst)};
}

Check ssim_vs_direct(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (int n = 0; n < 3; ++n) {
        const auto a = random_image(rng, 16, 16, 2);
        auto b = a;
        const auto noise = random_image(rng, 16, 16, 2);
        for (std::size_t i = 0; i < b.data.size(); ++i) {
            b.data[i] += 0.3 * noise.data[i];
        }
        worst = std::max(worst, std::abs(ssim(a, b, 2.0) - oracle::ssim_direct(a, b, 2.0)));
        worst = std::max(worst, std::abs(ssim_same_with_grad(a, b, 2.0).value -
                                         oracle::ssim_direct(a, b, 2.0, oracle::SsimPadding::zero_same)));
    }
    return {worst <= 1e-9, fmt::format("max abs difference {:.2e}", worst)};
}

Check kl_vs_monte_carlo(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0.0;
    for (int n = 0; n < 2; ++n) {
        PosteriorParams q{LatentImage(2, 2, 4), LatentImage(2, 2, 4)};
        PosteriorParams p = q;
        for (std::size_t i = 0; i < q.mean.data.size(); ++i) {
            q.mean.data[i] = normal(rng);
            q.logvar.data[i] = 0.5 * normal(rng);
            p.mean.data[i] = normal(rng);
            p.logvar.data[i] = 0.5 * normal(rng);
        }
        const double closed = kl_regularizer(q, p);
        const double mc = oracle::kl_monte_carlo(q, p, 100000, seed + n, static_cast<double>(q.mean.pixel_count()));
        worst = std::max(worst, oracle::relative_error(closed, mc));
        const double prior = vae_terms(q.mean, q.mean, q).kl_prior;
        worst = std::max(worst, oracle::relative_error(prior, oracle::kl_prior_monte_carlo(q, 100000, seed + 7 + n)));
    }
    return {worst <= 0.02, fmt::format("max relative error {:.2e} (1e5 samples)", worst)};
}

// Compares an analytic gradient with central differences.
Check gradient_agreement(const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& x,
                         const std::vector<double>& analytic, double tol) {
    const auto numeric = oracle::numeric_gradient(f, x, 1e-6);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / std::max(std::abs(numeric[i]), 1e-3));
    }
    return {worst <= tol, fmt::format("{} entries, max relative error {:.2e}", x.size(), worst)};
}

Check corres_gradient(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 64.0);
    LatentMaps maps{{"a", random_image(rng, 8, 8, 4)}, {"b", random_image(rng, 8, 8, 4)}};
    CorrespondenceBatch batch;
    for (int k = 0; k < 5; ++k) {
        batch.pairs.push_back({{"a", "b", Vec2(unit(rng), unit(rng)), Vec2(unit(rng), unit(rng))}, 0.2});
    }
    const auto loss = corres_loss(maps, batch);
    const auto f = [&](const std::vector<double>& x) {
        LatentMaps m = maps;
        m["a"].data = x;
        return corres_loss(m, batch).value;
    };
    return gradient_agreement(f, maps["a"].data, loss.grads.at("a").data, 1e-6);
}

Check photometric_gradient(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto r = random_image(rng, 8, 8, 2);
    const auto t = random_image(rng, 8, 8, 2);
    const auto f = [&](const std::vector<double>& x) {
        LatentImage img = r;
        img.data = x;
        return photometric_loss(img, t).loss;
    };
    return gradient_agreement(f, r.data, photometric_loss(r, t).grad.data, 1e-5);
}

Check alignment_gradient(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.3);
    PairedSample s;
    s.latent = random_image(rng, 4, 4, 2);
    s.image = LatentImage(32, 32, 3);
    for (auto& v : s.image.data) {
        v = 0.5 + normal(rng);
    }
    PatchLinearDecoder d(2);
    for (auto& w : d.weight) {
        w = normal(rng);
    }
    std::vector<double> x = d.weight;
    x.insert(x.end(), d.bias.begin(), d.bias.end());
    const auto f = [&](const std::vector<double>& p) {
        PatchLinearDecoder dd(2);
        std::copy(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(dd.weight.size()), dd.weight.begin());
        std::copy(p.begin() + static_cast<std::ptrdiff_t>(dd.weight.size()), p.end(), dd.bias.begin());
        return alignment_loss(dd, {s}).value;
    };
    const auto loss = alignment_loss(d, {s});
    std::vector<double> g = loss.grad.weight;
    g.insert(g.end(), loss.grad.bias.begin(), loss.grad.bias.end());
    return gradient_agreement(f, x, g, 1e-6);
}

} // namespace

int run_selftest(std::ostream& out, std::uint64_t seed) {
    const std::vector<std::pair<std::string, std::function<Check(std::uint64_t)>>> checks = {
        {"rasterizer matches brute-force oracle", rasterizer_vs_bruteforce},
        {"render gradients match finite differences", gradients_vs_finite_differences},
        {"spherical harmonics match Legendre oracle", sh_vs_legendre},
        {"SSIM matches direct windowed oracle", ssim_vs_direct},
        {"KL terms match Monte-Carlo estimates", kl_vs_monte_carlo},
        {"correspondence loss gradient", corres_gradient},
        {"photometric loss gradient", photometric_gradient},
        {"alignment loss gradient", alignment_gradient},
    };
    int failed = 0;
    for (const auto& [name, fn] : checks) {
        Check c{false, ""};
        try {
            c = fn(seed);
        } catch (const std::exception& e) {
            c = {false, fmt::format("threw: {}", e.what())};
        }
        failed += c.passed ? 0 : 1;
        out << fmt::format("{} {}: {}\n", c.passed ? "PASS" : "FAIL", name, c.detail);
    }
    out << fmt::format("{} of {} checks passed\n", checks.size() - failed, checks.size());
    return failed;
}

} // namespace lrf
