// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "selftest.hpp"

#include "lrf/error.hpp"
#include "lrf/workflows.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

int exit_code(lrf::ErrorKind kind) {
    switch (kind) {
    case lrf::ErrorKind::usage:
        return kExitUsage;
    case lrf::ErrorKind::numerical:
        return kExitNumerical;
    case lrf::ErrorKind::data:
        break;
    }
    return kExitData;
}

std::optional<lrf::fs::path> opt_path(const std::string& s) {
    return s.empty() ? std::nullopt : std::optional<lrf::fs::path>(s);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent radiance field toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "lrf 0.1.0");

    lrf::RunOptions run;
    std::uint64_t seed = 0;
    app.add_flag("--deterministic", run.deterministic,
                 "Require bit-reproducible output (every code path already reduces in a fixed order)");
    auto* seed_opt = app.add_option("--seed", seed, "Seed overriding the config file");
    app.add_option("--threads", run.threads, "Worker threads")->check(CLI::Range(1, 1024));

    // train
    lrf::TrainJob train;
    std::string train_config, train_metrics;
    auto* train_cmd = app.add_subcommand("train", "Optimize a latent Gaussian field from a dataset directory");
    train_cmd->add_option("--data", train.data_dir, "Directory with cameras.txt, latents/, split.txt")->required();
    train_cmd->add_option("--out", train.out_scene, "Output scene (.ply)")->required();
    train_cmd->add_option("--config", train_config, "train.json with TrainConfig fields");
    train_cmd->add_option("--metrics", train_metrics, "Metrics CSV (default: metrics.csv next to --out)");
    train_cmd->add_option("--log-every", train.log_every, "Print progress every N iterations (0: silent)");

    // render
    lrf::RenderJob render;
    std::string render_size, render_decoder;
    auto* render_cmd = app.add_subcommand("render", "Render latents (and optionally decoded PNGs)");
    render_cmd->add_option("--scene", render.scene, "Scene .ply")->required();
    render_cmd->add_option("--cameras", render.cameras, "cameras.txt")->required();
    render_cmd->add_option("--views", render.view_ids, "View ids to render (default: all)");
    render_cmd->add_option("--out", render.out_dir, "Output directory")->required();
    render_cmd->add_option("--size", render_size, "Latent size HxW (default: camera sensor size)");
    render_cmd->add_option("--decoder", render_decoder, "decoder.bin for PNG output");
    render_cmd->add_flag("--pfm", render.pfm, "Also write one PFM per channel");

    // eval
    lrf::EvalJob eval;
    std::string eval_mode = "latent", eval_scene, eval_csv;
    auto* eval_cmd = app.add_subcommand("eval", "Compare rendered outputs against references");
    eval_cmd->add_option("--rendered", eval.rendered_dir, "Rendered directory")->required();
    eval_cmd->add_option("--reference", eval.reference_dir, "Reference directory")->required();
    eval_cmd->add_option("--mode", eval_mode, "latent (.lrf) or image (.png)")
        ->check(CLI::IsMember({"latent", "image"}));
    eval_cmd->add_option("--scene", eval_scene, "Scene whose normalization record applies (latent mode)");
    eval_cmd->add_option("--csv", eval_csv, "Report CSV path");

    // losses
    lrf::LossesJob losses;
    std::string losses_out;
    auto* losses_cmd = app.add_subcommand("losses", "Correspondence loss report with APE weights");
    losses_cmd->add_option("--latents", losses.latents_dir, "Directory of {id}.lrf latents")->required();
    losses_cmd->add_option("--cameras", losses.cameras, "cameras.txt")->required();
    losses_cmd->add_option("--matches", losses.matches, "matches.txt")->required();
    losses_cmd->add_option("--f", losses.downsample, "Image-to-latent downsample factor")->check(CLI::PositiveNumber);
    losses_cmd->add_option("--out", losses_out, "CSV path (default: stdout)");

    // weights
    std::string weights_cameras, weights_matches, weights_out;
    auto* weights_cmd = app.add_subcommand("weights", "APE weights for camera pairs");
    weights_cmd->add_option("--cameras", weights_cameras, "cameras.txt")->required();
    weights_cmd->add_option("--matches", weights_matches, "Restrict to view pairs appearing in matches.txt");
    weights_cmd->add_option("--out", weights_out, "CSV path (default: stdout)");

    // align
    lrf::AlignJob align;
    std::string align_config;
    auto* align_cmd = app.add_subcommand("align", "Fit the patch-linear decoder on rendered/image pairs");
    align_cmd->add_option("--pairs", align.pairs_dir, "Directory of {id}.lrf, {id}.png and split.txt")->required();
    align_cmd->add_option("--out", align.out, "Output decoder.bin")->required();
    align_cmd->add_option("--config", align_config, "JSON with lambda_train, lambda_novel, lr, iterations, seed");

    // check-grad
    lrf::CheckGradJob grad;
    std::string grad_size = "16x16";
    auto* grad_cmd = app.add_subcommand("check-grad", "Compare analytic render gradients with finite differences");
    grad_cmd->add_option("--gaussians", grad.gaussians, "Gaussian count")->check(CLI::PositiveNumber);
    grad_cmd->add_option("--size", grad_size, "Image size HxW");
    grad_cmd->add_option("--channels", grad.channels, "Latent channels")->check(CLI::PositiveNumber);
    grad_cmd->add_option("--step", grad.options.step, "Finite-difference step");

    auto* selftest_cmd = app.add_subcommand("selftest", "Run the built-in oracle checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }
    if (seed_opt->count() > 0) {
        run.seed = seed;
    }

    try {
        if (train_cmd->parsed()) {
            train.config_path = opt_path(train_config);
            train.metrics_path = opt_path(train_metrics);
            const auto s = lrf::run_train(train, run, &std::cerr);
            std::cout << fmt::format("wrote {} ({} gaussians, final loss {:.6f}) and {}\n", train.out_scene.string(),
                                     s.gaussians, s.final_loss, s.metrics_path.string());
        } else if (render_cmd->parsed()) {
            if (!render_size.empty()) {
                render.size = lrf::parse_size(render_size);
            }
            render.decoder = opt_path(render_decoder);
            const auto files = lrf::run_render(render, run);
            std::cout << fmt::format("wrote {} file(s) to {}\n", files.size(), render.out_dir.string());
        } else if (eval_cmd->parsed()) {
            eval.mode = eval_mode == "image" ? lrf::EvalMode::image : lrf::EvalMode::latent;
            eval.scene = opt_path(eval_scene);
            eval.csv_path = opt_path(eval_csv);
            std::cout << lrf::format_eval_summary(lrf::run_eval(eval, run));
        } else if (losses_cmd->parsed()) {
            const auto csv = lrf::format_losses_csv(lrf::run_losses(losses));
            losses_out.empty() ? void(std::cout << csv) : lrf::write_text_file(losses_out, csv);
        } else if (weights_cmd->parsed()) {
            const auto cameras = lrf::load_cameras(weights_cameras);
            std::vector<std::pair<std::string, std::string>> pairs;
            if (!weights_matches.empty()) {
                for (const auto& m : lrf::load_matches(weights_matches)) {
                    const std::pair<std::string, std::string> key{m.view_i, m.view_j};
                    if (std::find(pairs.begin(), pairs.end(), key) == pairs.end()) {
                        pairs.push_back(key);
                    }
                }
            }
            const auto csv = lrf::format_weights_csv(lrf::run_weights(cameras, pairs));
            weights_out.empty() ? void(std::cout << csv) : lrf::write_text_file(weights_out, csv);
        } else if (align_cmd->parsed()) {
            align.config_path = opt_path(align_config);
            const auto s = lrf::run_align(align, run);
            std::cout << fmt::format("fitted on {} train + {} novel samples, loss {:.6f} -> {:.6f}; wrote {}\n",
                                     s.train_samples, s.novel_samples, s.initial_loss, s.final_loss,
                                     align.out.string());
        } else if (grad_cmd->parsed()) {
            grad.seed = run.seed.value_or(0);
            grad.size = lrf::parse_size(grad_size);
            grad.options.threads = run.threads;
            const auto report = lrf::run_check_grad(grad);
            std::cout << lrf::format_grad_report(report);
            return report.passed ? kExitOk : kExitNumerical;
        } else if (selftest_cmd->parsed()) {
            return lrf::run_selftest(std::cout, run.seed.value_or(0)) == 0 ? kExitOk : kExitNumerical;
        }
    } catch (const lrf::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}
