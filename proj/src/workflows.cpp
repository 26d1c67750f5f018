// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "lrf/workflows.hpp"
#include "lrf/error.hpp"
#include "lrf/latent_losses.hpp"
#include "lrf/metrics.hpp"
#include "lrf/rasterizer.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace lrf {

ImageSize parse_size(const std::string& text) {
    const auto x = text.find_first_of("xX");
    try {
        if (x == std::string::npos) {
            throw std::invalid_argument("missing x");
        }
        std::size_t used_h = 0;
        std::size_t used_w = 0;
        const int h = std::stoi(text.substr(0, x), &used_h);
        const int w = std::stoi(text.substr(x + 1), &used_w);
        if (used_h != x || used_w != text.size() - x - 1 || h <= 0 || w <= 0) {
            throw std::invalid_argument("bad size");
        }
        return {h, w};
    } catch (const std::exception&) {
        throw Error(fmt::format("invalid size '{}' (expected HxW, e.g. 32x32)", text), ErrorKind::usage);
    }
}

// ----------------------------------------------------------------- train

std::string format_train_metrics_csv(const std::vector<TrainMetrics>& rows) {
    std::string out = "iteration,loss,l1,dssim,gaussians\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{},{}\n", r.iteration, format_double(r.loss), format_double(r.l1),
                           format_double(r.dssim), r.gaussians);
    }
    return out;
}

TrainSummary run_train(const TrainJob& job, const RunOptions& run, std::ostream* log) {
    TrainConfig config;
    if (job.config_path) {
        config = train_config_from_json(read_text_file(*job.config_path));
    }
    if (run.seed) {
        config.seed = *run.seed;
    }
    config.threads = run.threads;
    config.validate();

    const LatentDataset raw = load_dataset(job.data_dir);
    const auto [dataset, norm] = latent_normalize(raw);
    const auto result = train_lrf(dataset, config, std::nullopt, [&](const TrainMetrics& m) {
        if (log && job.log_every > 0 && m.iteration % job.log_every == 0) {
            *log << fmt::format("iter {:>6}  loss {:.6f}  l1 {:.6f}  dssim {:.6f}  gaussians {}\n", m.iteration,
                                m.loss, m.l1, m.dssim, m.gaussians);
        }
    });
    Scene scene = result.scene;
    scene.norm = norm;
    if (job.out_scene.has_parent_path()) {
        fs::create_directories(job.out_scene.parent_path());
    }
    save_scene(scene, job.out_scene);

    TrainSummary summary;
    summary.gaussians = scene.size();
    summary.final_loss = result.metrics.empty() ? 0.0 : result.metrics.back().loss;
    summary.metrics_path = job.metrics_path ? *job.metrics_path : job.out_scene.parent_path() / "metrics.csv";
    write_text_file(summary.metrics_path, format_train_metrics_csv(result.metrics));
    return summary;
}

// ---------------------------------------------------------------- render

std::vector<fs::path> run_render(const RenderJob& job, const RunOptions& run) {
    const Scene scene = load_scene(job.scene);
    const auto cameras = load_cameras(job.cameras);
    std::optional<PatchLinearDecoder> decoder;
    if (job.decoder) {
        decoder = load_decoder(*job.decoder);
        if (decoder->channels != scene.channels) {
            throw Error(fmt::format("decoder has {} channels, scene has {}", decoder->channels, scene.channels));
        }
    }
    std::vector<std::string> ids = job.view_ids;
    if (ids.empty()) {
        for (const auto& c : cameras) {
            ids.push_back(c.id);
        }
    }
    fs::create_directories(job.out_dir);
    RenderOptions opts;
    opts.threads = run.threads;
    std::vector<fs::path> written;
    for (const auto& id : ids) {
        const Camera& cam = find_camera(cameras, id);
        const ImageSize size = job.size ? *job.size : ImageSize{cam.intrinsics.height, cam.intrinsics.width};
        LatentImage latent = denormalize_latent(render(scene, cam, size, opts), scene.norm);
        if (!all_finite(latent)) {
            throw Error(fmt::format("render of view '{}' produced non-finite values", id), ErrorKind::numerical);
        }
        const fs::path lrf_path = job.out_dir / (id + ".lrf");
        write_lrf(latent, lrf_path);
        written.push_back(lrf_path);
        if (job.pfm) {
            for (auto& p : write_pfm_channels(latent, job.out_dir / id)) {
                written.push_back(std::move(p));
            }
        }
        if (decoder) {
            const fs::path png_path = job.out_dir / (id + ".png");
            write_png(clamp_unit(decode(*decoder, latent)), png_path);
            written.push_back(png_path);
        }
    }
    return written;
}

// ------------------------------------------------------------------ eval

namespace {

std::vector<std::string> list_ids(const fs::path& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) {
        throw Error(fmt::format("'{}' is not a directory", dir.string()));
    }
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ext) {
            ids.push_back(entry.path().stem().string());
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) {
        out += (out.empty() ? "" : ", ") + s;
    }
    return out;
}

LatentImage apply_norm(const LatentImage& img, const NormRecord& norm) {
    LatentImage out = img;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = norm.normalize(static_cast<int>(i % out.channels), out.data[i]);
    }
    return out;
}

std::string psnr_field(double v) { return std::isinf(v) && v > 0 ? "identical" : format_double(v); }

double parse_psnr_field(const std::string& s) {
    return s == "identical" ? kPsnrIdentical : std::stod(s);
}

} // namespace

EvalReport run_eval(const EvalJob& job, const RunOptions&) {
    const std::string ext = job.mode == EvalMode::latent ? ".lrf" : ".png";
    const auto rendered_ids = list_ids(job.rendered_dir, ext);
    const auto reference_ids = list_ids(job.reference_dir, ext);
    if (rendered_ids != reference_ids) {
        std::vector<std::string> only_r;
        std::vector<std::string> only_ref;
        std::set_difference(rendered_ids.begin(), rendered_ids.end(), reference_ids.begin(), reference_ids.end(),
                            std::back_inserter(only_r));
        std::set_difference(reference_ids.begin(), reference_ids.end(), rendered_ids.begin(), rendered_ids.end(),
                            std::back_inserter(only_ref));
        throw Error(fmt::format("unmatched {} files: only in rendered [{}], only in reference [{}]", ext,
                                join(only_r), join(only_ref)));
    }
    if (rendered_ids.empty()) {
        throw Error(fmt::format("no {} files in '{}'", ext, job.rendered_dir.string()));
    }

    EvalReport report;
    report.mode = job.mode;
    report.peak = job.mode == EvalMode::latent ? kLatentPeak : 1.0;
    report.rendered_dir = job.rendered_dir.string();
    report.reference_dir = job.reference_dir.string();

    std::vector<LatentImage> rendered;
    std::vector<LatentImage> reference;
    for (const auto& id : rendered_ids) {
        if (job.mode == EvalMode::latent) {
            rendered.push_back(read_lrf(job.rendered_dir / (id + ext)));
            reference.push_back(read_lrf(job.reference_dir / (id + ext)));
            rendered.back().alpha.clear();
            reference.back().alpha.clear();
        } else {
            rendered.push_back(read_png(job.rendered_dir / (id + ext)));
            reference.push_back(read_png(job.reference_dir / (id + ext)));
        }
    }
    if (job.mode == EvalMode::latent) {
        NormRecord norm;
        if (job.scene) {
            norm = load_scene(*job.scene).norm;
        } else {
            LatentDataset refs;
            for (std::size_t i = 0; i < reference.size(); ++i) {
                LatentView v;
                v.latent = reference[i];
                refs.views.push_back(std::move(v));
            }
            norm = latent_normalize(refs).second;
        }
        if (!norm.empty()) {
            for (std::size_t i = 0; i < rendered.size(); ++i) {
                if (static_cast<int>(norm.mean.size()) != rendered[i].channels) {
                    throw Error("normalization record channel count does not match the latents");
                }
                rendered[i] = apply_norm(rendered[i], norm);
                reference[i] = apply_norm(reference[i], norm);
            }
        }
    }

    double psnr_sum = 0.0;
    double ssim_sum = 0.0;
    for (std::size_t i = 0; i < rendered_ids.size(); ++i) {
        try {
            require_same_shape(rendered[i], reference[i], "eval");
        } catch (const Error& e) {
            throw Error(fmt::format("view '{}': {}", rendered_ids[i], e.what()));
        }
        ViewMetrics m{rendered_ids[i], psnr(rendered[i], reference[i], report.peak),
                      ssim(rendered[i], reference[i], report.peak)};
        psnr_sum += m.psnr;
        ssim_sum += m.ssim;
        report.views.push_back(m);
    }
    report.mean_psnr = psnr_sum / static_cast<double>(report.views.size());
    report.mean_ssim = ssim_sum / static_cast<double>(report.views.size());
    if (job.csv_path) {
        write_text_file(*job.csv_path, format_eval_csv(report));
    }
    return report;
}

std::string format_eval_csv(const EvalReport& report) {
    std::string out = fmt::format("# mode={} peak={}\n", report.mode == EvalMode::latent ? "latent" : "image",
                                  format_double(report.peak));
    out += "view,psnr,ssim\n";
    for (const auto& v : report.views) {
        out += fmt::format("{},{},{}\n", v.id, psnr_field(v.psnr), format_double(v.ssim));
    }
    out += fmt::format("mean,{},{}\n", psnr_field(report.mean_psnr), format_double(report.mean_ssim));
    return out;
}

EvalReport parse_eval_csv(const std::string& text) {
    EvalReport report;
    std::istringstream in(text);
    std::string line;
    bool header = false;
    bool mean = false;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        if (line[0] == '#') {
            char mode[16] = {};
            double peak = 0.0;
            if (std::sscanf(line.c_str(), "# mode=%15s peak=%lf", mode, &peak) == 2) {
                report.mode = std::string(mode) == "image" ? EvalMode::image : EvalMode::latent;
                report.peak = peak;
            }
            continue;
        }
        if (!header) {
            if (line != "view,psnr,ssim") {
                throw Error("eval CSV: unexpected header '" + line + "'");
            }
            header = true;
            continue;
        }
        std::vector<std::string> f;
        std::istringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) {
            f.push_back(cell);
        }
        if (f.size() != 3) {
            throw Error("eval CSV: expected 3 columns in '" + line + "'");
        }
        try {
            if (f[0] == "mean") {
                report.mean_psnr = parse_psnr_field(f[1]);
                report.mean_ssim = std::stod(f[2]);
                mean = true;
            } else {
                report.views.push_back({f[0], parse_psnr_field(f[1]), std::stod(f[2])});
            }
        } catch (const std::logic_error&) {
            throw Error("eval CSV: non-numeric value in '" + line + "'");
        }
    }
    if (!header || !mean) {
        throw Error("eval CSV: missing header or mean row");
    }
    return report;
}

std::string format_eval_summary(const EvalReport& report) {
    std::string out = fmt::format("{} evaluation, peak {}, {} view(s)\n",
                                  report.mode == EvalMode::latent ? "latent" : "image", format_double(report.peak),
                                  report.views.size());
    for (const auto& v : report.views) {
        out += fmt::format("  {:<24} PSNR {:>12}  SSIM {:.6f}\n", v.id, format_psnr(v.psnr), v.ssim);
    }
    out += fmt::format("  {:<24} PSNR {:>12}  SSIM {:.6f}\n", "mean", format_psnr(report.mean_psnr), report.mean_ssim);
    return out;
}

// ---------------------------------------------------------------- losses

LossesReport run_losses(const LossesJob& job) {
    const auto cameras = load_cameras(job.cameras);
    const auto matches = load_matches(job.matches);
    if (matches.empty()) {
        throw Error(fmt::format("'{}' holds no correspondences", job.matches.string()));
    }
    std::vector<std::pair<Pose, Pose>> poses;
    CorrespondenceBatch batch;
    batch.downsample = job.downsample;
    LatentMaps latents;
    for (const auto& m : matches) {
        poses.emplace_back(find_camera(cameras, m.view_i).pose, find_camera(cameras, m.view_j).pose);
        for (const auto* id : {&m.view_i, &m.view_j}) {
            if (!latents.count(*id)) {
                LatentImage z = read_lrf(job.latents_dir / (*id + ".lrf"));
                z.alpha.clear();
                latents.emplace(*id, std::move(z));
            }
        }
    }
    const auto weights = ape_weights(poses);
    for (std::size_t k = 0; k < matches.size(); ++k) {
        batch.pairs.push_back({matches[k], weights[k]});
    }
    const auto loss = corres_loss(latents, batch);
    LossesReport report;
    report.corres = loss.value;
    for (std::size_t k = 0; k < matches.size(); ++k) {
        report.pairs.push_back({matches[k].view_i, matches[k].view_j, ape(pose_relative(poses[k].first, poses[k].second)),
                                weights[k], loss.pair_residuals[k]});
    }
    return report;
}

std::string format_losses_csv(const LossesReport& report) {
    std::string out = "pair,view_i,view_j,ape,weight,residual,weighted\n";
    for (std::size_t k = 0; k < report.pairs.size(); ++k) {
        const auto& p = report.pairs[k];
        out += fmt::format("{},{},{},{},{},{},{}\n", k, p.view_i, p.view_j, format_double(p.ape),
                           format_double(p.weight), format_double(p.residual), format_double(p.weight * p.residual));
    }
    out += fmt::format("total,,,,,,{}\n", format_double(report.corres));
    return out;
}

std::vector<PairReport> run_weights(const std::vector<Camera>& cameras,
                                    const std::vector<std::pair<std::string, std::string>>& pairs) {
    std::vector<std::pair<std::string, std::string>> ids = pairs;
    if (ids.empty()) {
        for (std::size_t i = 0; i < cameras.size(); ++i) {
            for (std::size_t j = i + 1; j < cameras.size(); ++j) {
                ids.emplace_back(cameras[i].id, cameras[j].id);
            }
        }
    }
    std::vector<std::pair<Pose, Pose>> poses;
    for (const auto& [a, b] : ids) {
        poses.emplace_back(find_camera(cameras, a).pose, find_camera(cameras, b).pose);
    }
    const auto weights = ape_weights(poses);
    std::vector<PairReport> rows;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        rows.push_back({ids[k].first, ids[k].second, ape(pose_relative(poses[k].first, poses[k].second)), weights[k],
                        0.0});
    }
    return rows;
}

std::string format_weights_csv(const std::vector<PairReport>& rows) {
    std::string out = "view_i,view_j,ape,weight\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{}\n", r.view_i, r.view_j, format_double(r.ape), format_double(r.weight));
    }
    return out;
}

// ----------------------------------------------------------------- align

AlignConfig align_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(fmt::format("align config is not valid JSON: {}", e.what()), ErrorKind::usage);
    }
    if (!j.is_object()) {
        throw Error("align config must be a JSON object", ErrorKind::usage);
    }
    AlignConfig cfg;
    for (const auto& item : j.items()) {
        const auto& k = item.key();
        try {
            if (k == "lambda_train") {
                item.value().get_to(cfg.lambda_train);
            } else if (k == "lambda_novel") {
                item.value().get_to(cfg.lambda_novel);
            } else if (k == "lr") {
                item.value().get_to(cfg.lr);
            } else if (k == "lr_final_ratio") {
                item.value().get_to(cfg.lr_final_ratio);
            } else if (k == "iterations") {
                item.value().get_to(cfg.iterations);
            } else if (k == "seed") {
                item.value().get_to(cfg.seed);
            } else {
                throw Error(fmt::format("unknown align config field '{}'", k), ErrorKind::usage);
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(fmt::format("align config field '{}': {}", k, e.what()), ErrorKind::usage);
        }
    }
    if (cfg.lambda_train < 0 || cfg.lambda_novel < 0 || !(cfg.lr > 0) || !(cfg.lr_final_ratio > 0) ||
        cfg.iterations < 0) {
        throw Error("align config: weights must be >= 0, rates > 0, iterations >= 0", ErrorKind::usage);
    }
    return cfg;
}

std::vector<PairedSample> load_paired_samples(const fs::path& dir) {
    const auto split = load_split(dir / "split.txt");
    if (split.empty()) {
        throw Error(fmt::format("'{}' lists no samples", (dir / "split.txt").string()));
    }
    std::vector<PairedSample> samples;
    for (const auto& [id, train] : split) {
        PairedSample s;
        s.latent = read_lrf(dir / (id + ".lrf"));
        s.latent.alpha.clear();
        s.image = read_png(dir / (id + ".png"));
        s.split = train ? SampleSplit::train : SampleSplit::novel;
        samples.push_back(std::move(s));
    }
    return samples;
}

AlignSummary run_align(const AlignJob& job, const RunOptions& run) {
    AlignConfig cfg;
    if (job.config_path) {
        cfg = align_config_from_json(read_text_file(*job.config_path));
    }
    if (run.seed) {
        cfg.seed = *run.seed;
    }
    const auto samples = load_paired_samples(job.pairs_dir);
    const auto result = fit_decoder(samples, cfg);
    if (job.out.has_parent_path()) {
        fs::create_directories(job.out.parent_path());
    }
    save_decoder(result.decoder, job.out);
    AlignSummary s;
    for (const auto& smp : samples) {
        (smp.split == SampleSplit::train ? s.train_samples : s.novel_samples) += 1;
    }
    s.initial_loss = result.losses.front();
    s.final_loss = result.losses.back();
    return s;
}

// ------------------------------------------------------------ check-grad

GradCheckReport run_check_grad(const CheckGradJob& job) {
    const auto p = make_gradcheck_problem(job.seed, job.gaussians, job.size, job.channels);
    return check_render_gradients(p.scene, p.camera, p.size, p.dL_dZ, job.options);
}

std::string format_grad_report(const GradCheckReport& r) {
    std::string out = fmt::format("{}: {} parameters checked, {} failed, {} skipped as non-smooth\n",
                                  r.passed ? "PASS" : "FAIL", r.checked, r.failures, r.nonsmooth);
    if (!r.worst_param.empty()) {
        out += fmt::format("worst: gaussian {} {} analytic {:.9g} numeric {:.9g} rel error {:.3e}\n",
                           r.worst_gaussian, r.worst_param, r.worst_analytic, r.worst_numeric, r.worst_rel_error);
    }
    return out;
}

} // namespace lrf
