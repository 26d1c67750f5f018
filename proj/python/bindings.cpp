// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "lrf/alignment.hpp"
#include "lrf/error.hpp"
#include "lrf/geometry.hpp"
#include "lrf/gradients.hpp"
#include "lrf/io.hpp"
#include "lrf/latent_losses.hpp"
#include "lrf/metrics.hpp"
#include "lrf/rasterizer.hpp"
#include "lrf/synthetic.hpp"
#include "lrf/training.hpp"
#include "lrf/workflows.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <optional>
#include <string>

namespace py = pybind11;
using namespace lrf;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W, C) or (H, W) array to a latent image.
LatentImage to_image(const Array& a) {
    if (a.ndim() != 2 && a.ndim() != 3) {
        throw Error("expected an array of shape (H, W) or (H, W, C)");
    }
    const int h = static_cast<int>(a.shape(0));
    const int w = static_cast<int>(a.shape(1));
    const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
    LatentImage img(h, w, c);
    std::copy(a.data(), a.data() + img.data.size(), img.data.begin());
    return img;
}

Array to_array(const LatentImage& img) {
    Array a({img.height, img.width, img.channels});
    std::copy(img.data.begin(), img.data.end(), a.mutable_data());
    return a;
}

LatentMaps to_maps(const std::map<std::string, Array>& maps) {
    LatentMaps out;
    for (const auto& [id, a] : maps) {
        out.emplace(id, to_image(a));
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Latent radiance field core: rasterizer, losses, training and metrics";

    py::register_exception<Error>(m, "LrfError", PyExc_ValueError);

    // ------------------------------------------------------------ geometry
    py::class_<CameraIntrinsics>(m, "Intrinsics")
        .def(py::init([](double fx, double fy, double cx, double cy, int width, int height) {
                 CameraIntrinsics k{fx, fy, cx, cy, width, height};
                 k.validate();
                 return k;
             }),
             py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"), py::arg("height"))
        .def_readwrite("fx", &CameraIntrinsics::fx)
        .def_readwrite("fy", &CameraIntrinsics::fy)
        .def_readwrite("cx", &CameraIntrinsics::cx)
        .def_readwrite("cy", &CameraIntrinsics::cy)
        .def_readwrite("width", &CameraIntrinsics::width)
        .def_readwrite("height", &CameraIntrinsics::height)
        .def("matrix", &CameraIntrinsics::matrix);

    py::class_<Camera>(m, "Camera")
        .def(py::init([](std::string id, const CameraIntrinsics& k, const Mat4& world_to_camera) {
                 return Camera{std::move(id), k, Pose(world_to_camera)};
             }),
             py::arg("id"), py::arg("intrinsics"), py::arg("world_to_camera"))
        .def_readwrite("id", &Camera::id)
        .def_readwrite("intrinsics", &Camera::intrinsics)
        .def_property(
            "world_to_camera", [](const Camera& c) { return c.pose.matrix(); },
            [](Camera& c, const Mat4& p) { c.pose = Pose(p); })
        .def_property_readonly("center", [](const Camera& c) { return c.pose.camera_center(); })
        .def("__repr__", [](const Camera& c) { return "<lrf.Camera '" + c.id + "'>"; });

    m.def("pose_relative", [](const Mat4& a, const Mat4& b) { return pose_relative(Pose(a), Pose(b)); },
          py::arg("pose_i"), py::arg("pose_j"), "E = P_i^-1 P_j for world-to-camera poses");
    m.def("ape", &ape, py::arg("relative_pose"), "Frobenius norm of E - I");
    m.def(
        "ape_weights",
        [](const std::vector<std::pair<Mat4, Mat4>>& pairs) {
            std::vector<std::pair<Pose, Pose>> poses;
            for (const auto& [a, b] : pairs) {
                poses.emplace_back(Pose(a), Pose(b));
            }
            return ape_weights(poses);
        },
        py::arg("pose_pairs"));
    m.def(
        "fundamental_matrix",
        [](const Camera& ci, const Camera& cj) { return fundamental_from_cameras(ci, cj).matrix(); },
        py::arg("camera_i"), py::arg("camera_j"));
    m.def(
        "epipolar_residual",
        [](const Mat3& f, const Vec2& xi, const Vec2& xj) { return epipolar_residual(FundamentalMatrix(f), xi, xj); },
        py::arg("F"), py::arg("x_i"), py::arg("x_j"));
    m.def(
        "project_point", [](const Camera& c, const Vec3& x) { return project_point(c, x).pixel; }, py::arg("camera"),
        py::arg("point"));

    // --------------------------------------------------------------- scene
    py::class_<Scene>(m, "Scene")
        .def_property_readonly("channels", [](const Scene& s) { return s.channels; })
        .def_property_readonly("sh_degree", [](const Scene& s) { return s.sh_degree; })
        .def("__len__", &Scene::size)
        .def_property_readonly("positions",
                               [](const Scene& s) {
                                   Eigen::MatrixX3d p(s.size(), 3);
                                   for (std::size_t i = 0; i < s.size(); ++i) {
                                       p.row(static_cast<Eigen::Index>(i)) = s.gaussians[i].position.transpose();
                                   }
                                   return p;
                               })
        .def_property_readonly("opacities",
                               [](const Scene& s) {
                                   std::vector<double> o;
                                   for (const auto& g : s.gaussians) {
                                       o.push_back(g.opacity());
                                   }
                                   return o;
                               })
        .def_property_readonly("norm_mean", [](const Scene& s) { return s.norm.mean; })
        .def_property_readonly("norm_scale", [](const Scene& s) { return s.norm.scale; })
        .def("validate", &Scene::validate);
    m.def("load_scene", &load_scene, py::arg("path"));
    m.def("save_scene", &save_scene, py::arg("scene"), py::arg("path"));

    // ----------------------------------------------------------- rendering
    m.def(
        "render",
        [](const Scene& s, const Camera& c, int height, int width, int threads) {
            RenderOptions opts;
            opts.threads = threads;
            LatentImage img;
            {
                py::gil_scoped_release release;
                img = render(s, c, {height, width}, opts);
            }
            return to_array(img);
        },
        py::arg("scene"), py::arg("camera"), py::arg("height"), py::arg("width"), py::arg("threads") = 1,
        "Normalized latent render of shape (H, W, C)");
    m.def(
        "check_gradients",
        [](std::uint64_t seed, int gaussians, int height, int width, int channels) {
            const auto p = make_gradcheck_problem(seed, gaussians, {height, width}, channels);
            const auto r = check_render_gradients(p.scene, p.camera, p.size, p.dL_dZ);
            py::dict d;
            d["passed"] = r.passed;
            d["checked"] = r.checked;
            d["nonsmooth"] = r.nonsmooth;
            d["failures"] = r.failures;
            d["worst_rel_error"] = r.worst_rel_error;
            return d;
        },
        py::arg("seed"), py::arg("gaussians") = 10, py::arg("height") = 16, py::arg("width") = 16,
        py::arg("channels") = 4, "Compares analytic render gradients with central differences");

    // -------------------------------------------------------------- losses
    m.def(
        "sample_latent", [](const Array& z, const Vec2& px, int f) { return sample_latent(to_image(z), px, f); },
        py::arg("latent"), py::arg("pixel"), py::arg("downsample") = 8);
    m.def(
        "corres_loss",
        [](const std::map<std::string, Array>& latents,
           const std::vector<std::tuple<std::string, std::string, Vec2, Vec2, double>>& pairs, int downsample) {
            CorrespondenceBatch batch;
            batch.downsample = downsample;
            for (const auto& [vi, vj, xi, xj, w] : pairs) {
                batch.pairs.push_back({{vi, vj, xi, xj}, w});
            }
            const auto r = corres_loss(to_maps(latents), batch);
            std::map<std::string, Array> grads;
            for (const auto& [id, g] : r.grads) {
                grads.emplace(id, to_array(g));
            }
            return py::make_tuple(r.value, grads);
        },
        py::arg("latents"), py::arg("pairs"), py::arg("downsample") = 8,
        "pairs: (view_i, view_j, x_i, x_j, weight). Returns (loss, gradient maps)");
    m.def(
        "kl_regularizer",
        [](const Array& qm, const Array& qlv, const Array& pm, const Array& plv) {
            return kl_regularizer({to_image(qm), to_image(qlv)}, {to_image(pm), to_image(plv)});
        },
        py::arg("q_mean"), py::arg("q_logvar"), py::arg("p_mean"), py::arg("p_logvar"));
    m.def(
        "vae_terms",
        [](const Array& recon, const Array& target, const Array& mean, const Array& logvar) {
            const auto t = vae_terms(to_image(recon), to_image(target), {to_image(mean), to_image(logvar)});
            return py::make_tuple(t.recon, t.kl_prior);
        },
        py::arg("recon"), py::arg("target"), py::arg("q_mean"), py::arg("q_logvar"));
    m.def(
        "stage1_objective",
        [](double recon, double kl_prior, double corres, double reg, double l1, double l2) {
            return stage1_objective({{recon, kl_prior}, corres, reg}, l1, l2);
        },
        py::arg("recon"), py::arg("kl_prior"), py::arg("corres"), py::arg("reg"),
        py::arg("lambda_corres") = kDefaultLambdaCorres, py::arg("lambda_reg") = kDefaultLambdaReg);
    m.def(
        "photometric_loss",
        [](const Array& r, const Array& t, double lambda) {
            const auto l = photometric_loss(to_image(r), to_image(t), lambda);
            return py::make_tuple(l.loss, to_array(l.grad));
        },
        py::arg("rendered"), py::arg("target"), py::arg("lambda_dssim") = 0.2);

    // ------------------------------------------------------------- metrics
    m.def(
        "psnr", [](const Array& a, const Array& b, double peak) { return psnr(to_image(a), to_image(b), peak); },
        py::arg("a"), py::arg("b"), py::arg("peak"));
    m.def(
        "ssim", [](const Array& a, const Array& b, double peak) { return ssim(to_image(a), to_image(b), peak); },
        py::arg("a"), py::arg("b"), py::arg("peak"), "11x11 Gaussian-window SSIM over valid positions");

    // ----------------------------------------------------------- alignment
    py::class_<PatchLinearDecoder>(m, "PatchLinearDecoder")
        .def(py::init<int>(), py::arg("channels"))
        .def_readonly("channels", &PatchLinearDecoder::channels)
        .def_property(
            "weight",
            [](const PatchLinearDecoder& d) {
                return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                           d.weight.data(), kPatchOutputs, d.channels)
                    .eval();
            },
            [](PatchLinearDecoder& d, const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& w) {
                if (w.rows() != kPatchOutputs || w.cols() != d.channels) {
                    throw Error("weight must have shape (192, channels)");
                }
                std::copy(w.data(), w.data() + w.size(), d.weight.begin());
            })
        .def_property(
            "bias", [](const PatchLinearDecoder& d) { return d.bias; },
            [](PatchLinearDecoder& d, const std::vector<double>& b) {
                if (b.size() != static_cast<std::size_t>(kPatchOutputs)) {
                    throw Error("bias must have 192 entries");
                }
                d.bias = b;
            });
    m.def(
        "decode", [](const PatchLinearDecoder& d, const Array& z) { return to_array(decode(d, to_image(z))); },
        py::arg("decoder"), py::arg("latent"));
    m.def(
        "fit_decoder",
        [](const std::vector<std::tuple<Array, Array, bool>>& samples, int iterations, double lr,
           double lambda_train, double lambda_novel) {
            std::vector<PairedSample> s;
            for (const auto& [z, img, train] : samples) {
                s.push_back({to_image(z), to_image(img), train ? SampleSplit::train : SampleSplit::novel});
            }
            AlignConfig cfg;
            cfg.iterations = iterations;
            cfg.lr = lr;
            cfg.lambda_train = lambda_train;
            cfg.lambda_novel = lambda_novel;
            AlignResult r;
            {
                py::gil_scoped_release release;
                r = fit_decoder(s, cfg);
            }
            return py::make_tuple(r.decoder, r.losses);
        },
        py::arg("samples"), py::arg("iterations") = 2000, py::arg("lr") = 1e-2, py::arg("lambda_train") = 0.5,
        py::arg("lambda_novel") = 0.5, "samples: (latent, image, is_train). Returns (decoder, losses)");
    m.def("save_decoder", &save_decoder, py::arg("decoder"), py::arg("path"));
    m.def("load_decoder", &load_decoder, py::arg("path"));

    // ---------------------------------------------------------- files, data
    m.def(
        "read_lrf", [](const fs::path& p) { return to_array(read_lrf(p)); }, py::arg("path"));
    m.def(
        "write_lrf", [](const Array& a, const fs::path& p) { write_lrf(to_image(a), p); }, py::arg("latent"),
        py::arg("path"));
    m.def("load_cameras", &load_cameras, py::arg("path"));
    m.def(
        "make_synthetic_dataset",
        [](const fs::path& dir, std::uint64_t seed, int gaussians, int train_views, int height, int width,
           int channels) {
            SyntheticOptions o;
            o.gaussians = gaussians;
            o.train_views = train_views;
            o.size = {height, width};
            o.channels = channels;
            auto syn = make_synthetic_scene(seed, o);
            save_dataset(syn.dataset, dir);
            return syn.truth;
        },
        py::arg("directory"), py::arg("seed") = 0, py::arg("gaussians") = 200, py::arg("train_views") = 12,
        py::arg("height") = 32, py::arg("width") = 32, py::arg("channels") = 4,
        "Writes cameras.txt, split.txt and latents/ for a random scene; returns the ground-truth scene");
    m.def(
        "train",
        [](const fs::path& data_dir, const fs::path& out_scene, std::optional<fs::path> config,
           std::optional<std::uint64_t> seed, int threads) {
            TrainJob job;
            job.data_dir = data_dir;
            job.out_scene = out_scene;
            job.config_path = std::move(config);
            RunOptions run;
            run.seed = seed;
            run.threads = threads;
            TrainSummary s;
            {
                py::gil_scoped_release release;
                s = run_train(job, run);
            }
            return py::make_tuple(s.gaussians, s.final_loss);
        },
        py::arg("data_dir"), py::arg("out_scene"), py::arg("config") = py::none(), py::arg("seed") = py::none(),
        py::arg("threads") = 1,
        "Trains on a dataset directory and writes the scene plus metrics.csv. Returns (gaussians, final loss)");
}
