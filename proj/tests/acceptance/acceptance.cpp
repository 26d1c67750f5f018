// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include "lrf/alignment.hpp"
#include "lrf/geometry.hpp"
#include "lrf/gradients.hpp"
#include "lrf/io.hpp"
#include "lrf/latent_losses.hpp"
#include "lrf/metrics.hpp"
#include "lrf/rasterizer.hpp"
#include "lrf/synthetic.hpp"
#include "lrf/training.hpp"
#include "lrf_oracles/oracles.hpp"

#include <Eigen/Geometry>
#include <fmt/format.h>
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace lrf;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

LatentImage random_image(std::mt19937_64& rng, int h, int w, int c, double sigma = 0.5) {
    std::normal_distribution<double> n(0.0, sigma);
    LatentImage img(h, w, c);
    for (auto& v : img.data) {
        v = n(rng);
    }
    return img;
}

Mat3 random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    return q.toRotationMatrix();
}

// 1. Analytic render gradients against central differences.
Outcome gradient_correctness() {
    const auto start = Clock::now();
    std::size_t checked = 0;
    int redraws = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        for (std::uint64_t attempt = 0;; ++attempt) {
            const int gaussians = 1 + static_cast<int>((seed * 7 + attempt) % 10);
            const auto p = make_gradcheck_problem(seed * 1000 + attempt, gaussians, {16, 16}, 4);
            const auto r = check_render_gradients(p.scene, p.camera, p.size, p.dL_dZ);
            if (r.nonsmooth > 0) {
                ++redraws;
                if (attempt > 50) {
                    return {false, fmt::format("seed {}: no smooth scene within 50 redraws", seed)};
                }
                continue;
            }
            if (!r.passed) {
                return {false, fmt::format("seed {}: {} of gaussian {} analytic {:.9g} numeric {:.9g}", seed,
                                           r.worst_param, r.worst_gaussian, r.worst_analytic, r.worst_numeric)};
            }
            checked += r.checked;
            worst = std::max(worst, r.worst_excess);
            break;
        }
    }
    const double t = seconds_since(start);
    return {t < 60.0, fmt::format("20 scenes, {} parameters, worst error/tolerance {:.3f}, {} redraws for "
                                  "non-smooth probes, {:.1f} s",
                                  checked, worst, redraws, t)};
}

// 2. Tiled rasterizer against the brute-force per-pixel oracle.
Outcome rasterizer_oracle() {
    const auto start = Clock::now();
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto rs = oracle::random_render_scene(seed, 40, {24, 40}, 4);
        const auto tiled = render(rs.scene, rs.camera, {24, 40});
        const auto brute = oracle::render_bruteforce(rs.scene, rs.camera, {24, 40});
        if (tiled.data != brute.data || tiled.alpha != brute.alpha) {
            return {false, fmt::format("scene {} differs", seed)};
        }
    }
    const double t = seconds_since(start);
    return {t < 30.0, fmt::format("50 scenes bit-identical, {:.1f} s", t)};
}

// 3. Compositing identities and linearity in SH coefficients.
Outcome compositing_identities() {
    const std::vector<double> a = {1.0};
    const std::vector<double> b = {1.0};
    const std::vector<Contributor> two = {{0.5, a}, {0.5, b}};
    const auto r = composite_pixel(two, 1);
    const std::vector<double> ea = {1.0, 0.0};
    const std::vector<double> eb = {0.0, 1.0};
    const std::vector<Contributor> split = {{0.5, ea}, {0.5, eb}};
    const auto w = composite_pixel(split, 2);
    const bool example = w.value[0] == 0.5 && w.value[1] == 0.25 && w.transmittance == 0.25 && r.value[0] == 0.75;
    if (!example) {
        return {false, fmt::format("weights ({}, {}), T {}", w.value[0], w.value[1], w.transmittance)};
    }
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto rs = oracle::random_render_scene(100 + seed, 20, {16, 16}, 4);
        const auto base = render(rs.scene, rs.camera, {16, 16});
        for (const double k : {2.0, 0.5, -4.0}) {
            Scene scaled = rs.scene;
            for (auto& g : scaled.gaussians) {
                for (auto& c : g.sh) {
                    c *= k;
                }
            }
            const auto out = render(scaled, rs.camera, {16, 16});
            for (std::size_t i = 0; i < base.data.size(); ++i) {
                if (out.data[i] != k * base.data[i]) {
                    return {false, fmt::format("scene {}: scaling SH by {} is not exact", seed, k)};
                }
            }
        }
    }
    return {true, "weights (0.5, 0.25), T = 0.25; render scales exactly with SH on 10 scenes"};
}

// 4. Train from scratch on a known synthetic scene.
Outcome overfit_generalization() {
    const auto start = Clock::now();
    const auto syn = make_synthetic_scene(1);
    const auto [dataset, norm] = latent_normalize(syn.dataset);
    TrainConfig cfg;
    cfg.iterations = 3000;
    cfg.densify_grad_threshold = 2e-3;
    cfg.seed = 1;
    const auto result = train_lrf(dataset, cfg);
    double train_psnr = 0.0;
    double test_psnr = 0.0;
    int train_n = 0;
    int test_n = 0;
    for (const auto& v : dataset.views) {
        const double p = psnr(render(result.scene, v.camera, v.latent.size()), v.latent, kLatentPeak);
        (v.train ? train_psnr : test_psnr) += p;
        (v.train ? train_n : test_n) += 1;
    }
    train_psnr /= train_n;
    test_psnr /= test_n;
    const double t = seconds_since(start);
    return {test_psnr >= 28.0 && train_psnr >= 35.0 && t < 600.0,
            fmt::format("held-out {:.2f} dB (>= 28), training {:.2f} dB (>= 35), {} gaussians, {:.0f} s", test_psnr,
                        train_psnr, result.scene.size(), t)};
}

// 5. Epipolar constraint and APE identities.
Outcome epipolar_ape() {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int n = 0; n < 50; ++n) {
        Camera ci;
        Camera cj;
        ci.intrinsics = {500 + 100 * u(rng), 500 + 100 * u(rng), 320, 240, 640, 480};
        cj.intrinsics = {600 + 100 * u(rng), 600 + 100 * u(rng), 330, 250, 640, 480};
        ci.pose = Pose::from_rotation_translation(Mat3::Identity(), Vec3::Zero());
        const Mat3 r = Eigen::AngleAxisd(0.3 * u(rng), Vec3(u(rng), u(rng), u(rng)).normalized()).toRotationMatrix();
        cj.pose = Pose::from_rotation_translation(r, Vec3(u(rng), 0.3 * u(rng), 0.2 * u(rng)));
        const auto f = fundamental_from_cameras(ci, cj);
        for (int k = 0; k < 20; ++k) {
            const Vec3 x(u(rng), u(rng), 4.0 + u(rng));
            const auto pi = project_point(ci, x);
            const auto pj = project_point(cj, x);
            worst = std::max(worst, std::abs(epipolar_residual(f, pi.pixel, pj.pixel)));
        }
    }
    const double ape_identity = ape(Mat4::Identity());
    Mat4 shifted = Mat4::Identity();
    shifted.topRightCorner<3, 1>() = Vec3(3, 4, 0);
    const double ape_five = ape(shifted);
    double worst_sum = 0.0;
    for (int batch = 0; batch < 100; ++batch) {
        std::vector<std::pair<Pose, Pose>> pairs;
        for (int k = 0; k < 1 + batch % 9; ++k) {
            pairs.emplace_back(Pose::from_rotation_translation(random_rotation(rng), Vec3(u(rng), u(rng), u(rng))),
                               Pose::from_rotation_translation(random_rotation(rng), Vec3(u(rng), u(rng), u(rng))));
        }
        const auto w = ape_weights(pairs);
        double sum = 0.0;
        for (const double x : w) {
            sum += x;
        }
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    }
    return {worst <= 1e-9 && ape_identity == 0.0 && ape_five == 5.0 && worst_sum <= 1e-12,
            fmt::format("max |x_j^T F x_i| {:.2e}, ape(I) = {}, ape(t=(3,4,0)) = {}, max |sum w - 1| {:.1e}", worst,
                        ape_identity, ape_five, worst_sum)};
}

// 6. Correspondence loss properties.
Outcome corres_properties() {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 64.0);
    const auto z = random_image(rng, 8, 8, 4);
    CorrespondenceBatch same;
    for (int k = 0; k < 5; ++k) {
        const Vec2 p(u(rng), u(rng));
        same.pairs.push_back({{"a", "b", p, p}, 0.2});
    }
    const double zero = corres_loss({{"a", z}, {"b", z}}, same).value;

    LatentImage one_a(1, 1, 4);
    LatentImage one_b(1, 1, 4);
    one_a.data = {0.5, -0.5, 0.0, 0.0};
    CorrespondenceBatch single;
    single.pairs.push_back({{"a", "b", Vec2(4, 4), Vec2(4, 4)}, 1.0});
    const double hand = corres_loss({{"a", one_a}, {"b", one_b}}, single).value;

    const LatentMaps maps{{"a", random_image(rng, 8, 8, 4)}, {"b", random_image(rng, 8, 8, 4)}};
    CorrespondenceBatch batch;
    for (int k = 0; k < 5; ++k) {
        batch.pairs.push_back({{"a", "b", Vec2(u(rng), u(rng)), Vec2(u(rng), u(rng))}, 0.2});
    }
    const auto loss = corres_loss(maps, batch);
    double worst = 0.0;
    for (const char* view : {"a", "b"}) {
        const auto numeric = oracle::numeric_gradient(
            [&](const std::vector<double>& x) {
                LatentMaps m = maps;
                m[view].data = x;
                return corres_loss(m, batch).value;
            },
            maps.at(view).data, 1e-6);
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            worst = std::max(worst, std::abs(loss.grads.at(view).data[i] - numeric[i]) /
                                        std::max(std::abs(numeric[i]), 1e-3));
        }
    }
    return {zero == 0.0 && hand == 1.0 && worst <= 1e-6,
            fmt::format("identical maps {}, hand example {}, gradient max rel error {:.2e}", zero, hand, worst)};
}

// 7. Closed-form KL terms against Monte-Carlo estimates.
Outcome kl_oracles() {
    const auto start = Clock::now();
    std::mt19937_64 rng(7);
    double worst_reg = 0.0;
    double worst_prior = 0.0;
    for (int n = 0; n < 10; ++n) {
        PosteriorParams q{random_image(rng, 2, 2, 4, 1.0), random_image(rng, 2, 2, 4, 0.5)};
        PosteriorParams p{random_image(rng, 2, 2, 4, 1.0), random_image(rng, 2, 2, 4, 0.5)};
        const double closed = kl_regularizer(q, p);
        const double mc = oracle::kl_monte_carlo(q, p, 1000000, 700 + n, static_cast<double>(q.mean.pixel_count()));
        worst_reg = std::max(worst_reg, oracle::relative_error(closed, mc));
        const double prior = vae_terms(q.mean, q.mean, q).kl_prior;
        worst_prior = std::max(worst_prior, oracle::relative_error(prior, oracle::kl_prior_monte_carlo(q, 1000000, 800 + n)));
    }
    return {worst_reg <= 0.01 && worst_prior <= 0.01,
            fmt::format("10 posteriors, 1e6 samples: regularizer max rel error {:.2e}, prior {:.2e}, {:.1f} s",
                        worst_reg, worst_prior, seconds_since(start))};
}

// 8. Recover a planted patch-linear decoder.
Outcome alignment_recovery() {
    const auto start = Clock::now();
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    PatchLinearDecoder truth(4);
    for (auto& w : truth.weight) {
        w = 0.1 * n(rng);
    }
    for (auto& b : truth.bias) {
        b = 0.5 + 0.05 * n(rng);
    }
    std::vector<PairedSample> train;
    std::vector<PairedSample> held_out;
    for (int k = 0; k < 10; ++k) {
        PairedSample s;
        s.latent = random_image(rng, 8, 8, 4, 1.0);
        s.image = decode(truth, s.latent);
        for (auto& v : s.image.data) {
            v += 0.01 * n(rng);
        }
        s.split = k < 6 ? SampleSplit::train : SampleSplit::novel;
        (k < 8 ? train : held_out).push_back(std::move(s));
    }
    AlignConfig cfg;
    cfg.iterations = 2000;
    const auto fit = fit_decoder(train, cfg);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < truth.weight.size(); ++i) {
        num += std::pow(fit.decoder.weight[i] - truth.weight[i], 2);
        den += std::pow(truth.weight[i], 2);
    }
    const double rel = std::sqrt(num / den);
    double held_l1 = 0.0;
    for (const auto& s : held_out) {
        const auto out = decode(fit.decoder, s.latent);
        double sum = 0.0;
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            sum += std::abs(out.data[i] - s.image.data[i]);
        }
        held_l1 += sum / static_cast<double>(out.data.size()) / static_cast<double>(held_out.size());
    }
    const double t = seconds_since(start);
    return {rel <= 0.05 && held_l1 <= 0.02 && t < 120.0,
            fmt::format("relative weight error {:.4f} (<= 0.05), held-out L1 {:.4f} (<= 0.02), {:.1f} s", rel,
                        held_l1, t)};
}

// 9. PSNR closed forms and SSIM against an independent implementation.
Outcome metric_conformance() {
    const LatentImage zeros(16, 16, 3);
    const double p20 = psnr(zeros, LatentImage(16, 16, 3, 0.1), 1.0);
    const double p6 = psnr(zeros, LatentImage(16, 16, 3, 0.5), 1.0);
    std::mt19937_64 rng(9);
    double worst = 0.0;
    for (int n = 0; n < 10; ++n) {
        const auto a = random_image(rng, 20 + n, 24, 3);
        auto b = a;
        const auto noise = random_image(rng, 20 + n, 24, 3);
        for (std::size_t i = 0; i < b.data.size(); ++i) {
            b.data[i] += 0.1 * (n + 1) * noise.data[i];
        }
        worst = std::max(worst, std::abs(ssim(a, b, 2.0) - oracle::ssim_direct(a, b, 2.0)));
    }
    const auto a = random_image(rng, 16, 16, 4);
    const double self = ssim(a, a, 2.0);
    const bool ok = std::abs(p20 - 20.0) <= 1e-9 && std::abs(p6 - 10.0 * std::log10(4.0)) <= 1e-9 &&
                    worst <= 1e-6 && std::abs(self - 1.0) <= 1e-12;
    return {ok, fmt::format("PSNR {:.12f} and {:.12f} dB, SSIM max |diff| {:.1e} on 10 pairs, SSIM(a,a) = {:.15f}",
                            p20, p6, worst, self)};
}

// 10. CLI train/render output is bit-identical across runs and threads.
std::string file_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

int run(const std::string& args) {
    const std::string cmd = std::string("\"") + LRF_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_determinism() {
    const fs::path root = fs::temp_directory_path() / fmt::format("lrf_acceptance_{}", std::random_device{}());
    fs::remove_all(root);
    SyntheticOptions o;
    o.gaussians = 60;
    o.train_views = 6;
    o.size = {24, 24};
    save_dataset(make_synthetic_scene(10, o).dataset, root / "data");
    write_text_file(root / "train.json",
                    R"({"iterations": 400, "densify_from": 50, "densify_interval": 50, "densify_grad_threshold": 2e-3,)"
                    R"( "opacity_reset_interval": 200, "sh_degree_interval": 100, "init_points": 300})");
    const std::vector<std::pair<std::string, int>> runs = {{"a", 1}, {"b", 1}, {"c", 4}};
    for (const auto& [name, threads] : runs) {
        const fs::path out = root / name;
        const std::string common = fmt::format("--deterministic --seed 7 --threads {}", threads);
        if (run(fmt::format("{} train --data \"{}\" --out \"{}\" --config \"{}\"", common, (root / "data").string(),
                            (out / "scene.ply").string(), (root / "train.json").string())) != 0) {
            return {false, fmt::format("train run {} failed", name)};
        }
        if (run(fmt::format("{} render --scene \"{}\" --cameras \"{}\" --out \"{}\" --pfm", common,
                            (out / "scene.ply").string(), (root / "data" / "cameras.txt").string(),
                            (out / "render").string())) != 0) {
            return {false, fmt::format("render run {} failed", name)};
        }
    }
    std::size_t compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
        if (!entry.is_regular_file()) {
            continue;
        }
        const auto rel = fs::relative(entry.path(), root / "a");
        const std::string ref = file_bytes(entry.path());
        for (const char* other : {"b", "c"}) {
            if (!fs::exists(root / other / rel) || file_bytes(root / other / rel) != ref) {
                return {false, fmt::format("{} differs between run a and run {}", rel.string(), other)};
            }
        }
        ++compared;
    }
    fs::remove_all(root);
    return {compared > 2, fmt::format("{} artifacts (scene, metrics, latents, PFMs) identical across 2 runs at 1 "
                                      "thread and 1 run at 4 threads",
                                      compared)};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"1 gradient correctness", gradient_correctness},
        {"2 rasterizer oracle equivalence", rasterizer_oracle},
        {"3 compositing identities", compositing_identities},
        {"4 overfit/generalization on synthetic scene", overfit_generalization},
        {"5 epipolar and APE correctness", epipolar_ape},
        {"6 correspondence loss properties", corres_properties},
        {"7 KL oracles", kl_oracles},
        {"8 alignment recovery", alignment_recovery},
        {"9 metric conformance", metric_conformance},
        {"10 CLI determinism", cli_determinism},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, fmt::format("threw: {}", e.what())};
        }
        failed += o.passed ? 0 : 1;
        std::cout << fmt::format("{} [{}] {}", o.passed ? "PASS" : "FAIL", name, o.detail) << std::endl;
    }
    std::cout << fmt::format("{} of {} criteria passed", criteria.size() - failed, criteria.size()) << std::endl;
    return failed == 0 ? 0 : 1;
}
