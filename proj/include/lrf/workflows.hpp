// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lrf/alignment.hpp"
#include "lrf/gradients.hpp"
#include "lrf/io.hpp"
#include "lrf/training.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace lrf {

/// Options shared by every command.
struct RunOptions {
    bool deterministic = false;
    std::optional<std::uint64_t> seed;
    int threads = 1;
};

// ----------------------------------------------------------------- train

struct TrainJob {
    fs::path data_dir;
    fs::path out_scene;
    std::optional<fs::path> config_path;
    /// Defaults to metrics.csv next to the output scene.
    std::optional<fs::path> metrics_path;
    int log_every = 0; // 0: silent
};

struct TrainSummary {
    std::size_t gaussians = 0;
    double final_loss = 0.0;
    fs::path metrics_path;
};

std::string format_train_metrics_csv(const std::vector<TrainMetrics>& rows);
TrainSummary run_train(const TrainJob& job, const RunOptions& run, std::ostream* log = nullptr);

// ---------------------------------------------------------------- render

struct RenderJob {
    fs::path scene;
    fs::path cameras;
    std::vector<std::string> view_ids; // empty: every camera
    fs::path out_dir;
    /// Output latent size; defaults to each camera's sensor size.
    std::optional<ImageSize> size;
    std::optional<fs::path> decoder;
    bool pfm = false;
};

/// Renders, denormalizes and writes `{id}.lrf` (plus `{id}.png` with a
/// decoder and `{id}_c{k}.pfm` when requested). Returns the files written.
std::vector<fs::path> run_render(const RenderJob& job, const RunOptions& run);

// ------------------------------------------------------------------ eval

enum class EvalMode { latent, image };

struct ViewMetrics {
    std::string id;
    double psnr = 0.0; // kPsnrIdentical when equal
    double ssim = 0.0;
};

struct EvalReport {
    EvalMode mode = EvalMode::latent;
    double peak = 0.0;
    std::vector<ViewMetrics> views;
    double mean_psnr = 0.0; // +inf when every view is identical
    double mean_ssim = 0.0;
    std::string rendered_dir;
    std::string reference_dir;
};

struct EvalJob {
    fs::path rendered_dir;
    fs::path reference_dir;
    EvalMode mode = EvalMode::latent;
    /// Latent mode: normalization record source. Without it the record is
    /// derived from the reference latents.
    std::optional<fs::path> scene;
    std::optional<fs::path> csv_path;
};

EvalReport run_eval(const EvalJob& job, const RunOptions& run);
std::string format_eval_csv(const EvalReport& report);
EvalReport parse_eval_csv(const std::string& text);
std::string format_eval_summary(const EvalReport& report);

// ---------------------------------------------------------------- losses

struct LossesJob {
    fs::path latents_dir;
    fs::path cameras;
    fs::path matches;
    int downsample = 8;
};

struct PairReport {
    std::string view_i;
    std::string view_j;
    double ape = 0.0;
    double weight = 0.0;
    double residual = 0.0;
};

struct LossesReport {
    double corres = 0.0;
    std::vector<PairReport> pairs;
};

/// APE weights are normalized over every pair in the matches file.
LossesReport run_losses(const LossesJob& job);
std::string format_losses_csv(const LossesReport& report);

/// APE weight per view pair. With no pairs given, every unordered camera
/// pair is reported.
std::vector<PairReport> run_weights(const std::vector<Camera>& cameras,
                                    const std::vector<std::pair<std::string, std::string>>& pairs = {});
std::string format_weights_csv(const std::vector<PairReport>& rows);

// ----------------------------------------------------------------- align

struct AlignJob {
    fs::path pairs_dir;
    fs::path out;
    std::optional<fs::path> config_path;
};

struct AlignSummary {
    std::size_t train_samples = 0;
    std::size_t novel_samples = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

AlignConfig align_config_from_json(const std::string& text);
/// Loads `{id}.lrf` + `{id}.png` listed in split.txt (test maps to novel).
std::vector<PairedSample> load_paired_samples(const fs::path& dir);
AlignSummary run_align(const AlignJob& job, const RunOptions& run);

// ------------------------------------------------------------ check-grad

struct CheckGradJob {
    std::uint64_t seed = 0;
    int gaussians = 10;
    ImageSize size{16, 16};
    int channels = 4;
    GradCheckOptions options;
};

GradCheckReport run_check_grad(const CheckGradJob& job);
std::string format_grad_report(const GradCheckReport& report);

/// Parses "HxW".
ImageSize parse_size(const std::string& text);

} // namespace lrf
