// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#include "lrf/io.hpp"
#include "lrf/error.hpp"

#include "binary_io.hpp"

#include <fmt/format.h>
#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace lrf {

namespace {

constexpr std::uint32_t kLrfAlphaFlag = 1u;

void require_finite(const LatentImage& image, const fs::path& path) {
    if (!all_finite(image)) {
        throw Error(fmt::format("refusing to write non-finite values to '{}'", path.string()), ErrorKind::numerical);
    }
}

// Splits text into lines of whitespace-separated tokens, dropping comments
// and blank lines. Each entry carries its 1-based line number.
std::vector<std::pair<int, std::vector<std::string>>> tokenize(const std::string& text) {
    std::vector<std::pair<int, std::vector<std::string>>> rows;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.resize(hash);
        }
        std::istringstream ls(line);
        std::vector<std::string> tokens;
        for (std::string t; ls >> t;) {
            tokens.push_back(std::move(t));
        }
        if (!tokens.empty()) {
            rows.emplace_back(number, std::move(tokens));
        }
    }
    return rows;
}

double parse_number(const std::string& token, const std::string& source, int line) {
    double value = 0.0;
    const char* end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(token.data(), end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
        throw Error(fmt::format("{}:{}: '{}' is not a finite number", source, line, token));
    }
    return value;
}

int parse_int(const std::string& token, const std::string& source, int line) {
    int value = 0;
    const char* end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(token.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw Error(fmt::format("{}:{}: '{}' is not an integer", source, line, token));
    }
    return value;
}

} // namespace

std::string format_double(double v) { return fmt::format("{}", v); }

// ------------------------------------------------------------------- lrf

void write_lrf(const LatentImage& image, const fs::path& path) {
    if (image.data.size() != image.pixel_count() * static_cast<std::size_t>(image.channels)) {
        throw Error("latent image data length does not match its shape");
    }
    require_finite(image, path);
    auto out = detail::open_output(path);
    out.write("LRF1", 4);
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(image.height));
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(image.width));
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(image.channels));
    detail::write_pod<std::uint32_t>(out, image.has_alpha() ? kLrfAlphaFlag : 0u);
    detail::write_f32(out, image.data);
    if (image.has_alpha()) {
        detail::write_f32(out, image.alpha);
    }
    if (!out) {
        throw Error(fmt::format("failed writing '{}'", path.string()));
    }
}

LatentImage read_lrf(const fs::path& path) {
    auto in = detail::open_input(path);
    detail::expect_magic(in, "LRF1", path);
    const auto h = detail::read_pod<std::uint32_t>(in, path);
    const auto w = detail::read_pod<std::uint32_t>(in, path);
    const auto c = detail::read_pod<std::uint32_t>(in, path);
    const auto flags = detail::read_pod<std::uint32_t>(in, path);
    constexpr std::uint32_t limit = 1u << 16;
    if (h == 0 || w == 0 || c == 0 || h > limit || w > limit || c > 4096) {
        throw Error(fmt::format("'{}' declares an invalid shape {}x{}x{}", path.string(), h, w, c));
    }
    if (flags & ~kLrfAlphaFlag) {
        throw Error(fmt::format("'{}' has unknown flag bits 0x{:x}", path.string(), flags));
    }
    LatentImage image(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    image.data = detail::read_f32(in, image.data.size(), path);
    if (flags & kLrfAlphaFlag) {
        image.alpha = detail::read_f32(in, image.pixel_count(), path);
    }
    detail::expect_end(in, path);
    if (!all_finite(image)) {
        throw Error(fmt::format("'{}' contains non-finite values", path.string()), ErrorKind::numerical);
    }
    return image;
}

// ------------------------------------------------------------------- pfm

std::vector<fs::path> write_pfm_channels(const LatentImage& image, const fs::path& stem) {
    require_finite(image, stem);
    std::vector<fs::path> written;
    for (int c = 0; c < image.channels; ++c) {
        fs::path path = stem;
        path += fmt::format("_c{}.pfm", c);
        auto out = detail::open_output(path);
        const std::string header = fmt::format("Pf\n{} {}\n-1.0\n", image.width, image.height);
        out.write(header.data(), static_cast<std::streamsize>(header.size()));
        std::vector<double> row(static_cast<std::size_t>(image.width));
        // PFM stores rows bottom to top.
        for (int y = image.height - 1; y >= 0; --y) {
            for (int x = 0; x < image.width; ++x) {
                row[x] = image.at(y, x, c);
            }
            detail::write_f32(out, row);
        }
        if (!out) {
            throw Error(fmt::format("failed writing '{}'", path.string()));
        }
        written.push_back(std::move(path));
    }
    return written;
}

LatentImage read_pfm(const fs::path& path) {
    auto in = detail::open_input(path);
    std::string magic;
    int w = 0;
    int h = 0;
    double scale = 0.0;
    if (!(in >> magic >> w >> h >> scale) || magic != "Pf" || w <= 0 || h <= 0) {
        throw Error(fmt::format("'{}' is not a single-channel PFM", path.string()));
    }
    if (scale >= 0.0) {
        throw Error(fmt::format("'{}' is big-endian; only little-endian PFM is supported", path.string()));
    }
    in.get(); // the single whitespace byte after the header
    LatentImage image(h, w, 1);
    for (int y = h - 1; y >= 0; --y) {
        const auto row = detail::read_f32(in, static_cast<std::size_t>(w), path);
        std::copy(row.begin(), row.end(), image.data.begin() + static_cast<std::ptrdiff_t>(y) * w);
    }
    return image;
}

// ------------------------------------------------------------------- png

void write_png(const LatentImage& rgb, const fs::path& path) {
    if (rgb.channels != 3) {
        throw Error(fmt::format("PNG export needs 3 channels, got {}", rgb.channels));
    }
    require_finite(rgb, path);
    std::vector<png_byte> bytes(rgb.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        bytes[i] = static_cast<png_byte>(std::lround(std::clamp(rgb.data[i], 0.0, 1.0) * 255.0));
    }
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(rgb.width);
    img.height = static_cast<png_uint_32>(rgb.height);
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw Error(fmt::format("failed writing PNG '{}': {}", path.string(), msg));
    }
}

LatentImage read_png(const fs::path& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw Error(fmt::format("cannot read PNG '{}': {}", path.string(), img.message));
    }
    img.format = PNG_FORMAT_RGB;
    std::vector<png_byte> bytes(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw Error(fmt::format("cannot decode PNG '{}': {}", path.string(), msg));
    }
    LatentImage out(static_cast<int>(img.height), static_cast<int>(img.width), 3);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = bytes[i] / 255.0;
    }
    return out;
}

// ------------------------------------------------------------------ text

std::string read_text_file(const fs::path& path) {
    auto in = detail::open_input(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    auto out = detail::open_output(path);
    out << text;
    if (!out) {
        throw Error(fmt::format("failed writing '{}'", path.string()));
    }
}

std::vector<Camera> parse_cameras(const std::string& text, const std::string& source) {
    std::vector<Camera> cameras;
    std::set<std::string> ids;
    for (const auto& [line, t] : tokenize(text)) {
        if (t.size() != 19) {
            throw Error(fmt::format("{}:{}: expected 19 fields (id, 4 intrinsics, size, 3x4 pose), got {}", source,
                                    line, t.size()));
        }
        Camera cam;
        cam.id = t[0];
        if (!ids.insert(cam.id).second) {
            throw Error(fmt::format("{}:{}: duplicate view id '{}'", source, line, cam.id));
        }
        cam.intrinsics = {parse_number(t[1], source, line), parse_number(t[2], source, line),
                          parse_number(t[3], source, line), parse_number(t[4], source, line),
                          parse_int(t[5], source, line),    parse_int(t[6], source, line)};
        Mat4 m = Mat4::Identity();
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 4; ++c) {
                m(r, c) = parse_number(t[7 + r * 4 + c], source, line);
            }
        }
        try {
            cam.intrinsics.validate();
            cam.pose = Pose(m);
        } catch (const Error& e) {
            throw Error(fmt::format("{}:{}: view '{}': {}", source, line, cam.id, e.what()));
        }
        cameras.push_back(std::move(cam));
    }
    if (cameras.empty()) {
        throw Error(fmt::format("{}: no cameras", source));
    }
    return cameras;
}

std::vector<Camera> load_cameras(const fs::path& path) { return parse_cameras(read_text_file(path), path.string()); }

std::string format_cameras(const std::vector<Camera>& cameras) {
    std::string out = "# id fx fy cx cy width height r11 r12 r13 tx r21 r22 r23 ty r31 r32 r33 tz (world-to-camera)\n";
    for (const auto& cam : cameras) {
        const auto& k = cam.intrinsics;
        out += fmt::format("{} {} {} {} {} {} {}", cam.id, format_double(k.fx), format_double(k.fy),
                           format_double(k.cx), format_double(k.cy), k.width, k.height);
        const Mat4 m = cam.pose.matrix();
        for (int r = 0; r < 3; ++r) {
            out += " ";
            for (int c = 0; c < 4; ++c) {
                out += " " + format_double(m(r, c));
            }
        }
        out += "\n";
    }
    return out;
}

std::vector<CorrespondencePair> parse_matches(const std::string& text, const std::string& source) {
    std::vector<CorrespondencePair> pairs;
    for (const auto& [line, t] : tokenize(text)) {
        if (t.size() != 6) {
            throw Error(fmt::format("{}:{}: expected 'view_i view_j u_i v_i u_j v_j', got {} fields", source, line,
                                    t.size()));
        }
        if (t[0] == t[1]) {
            throw Error(fmt::format("{}:{}: a correspondence must join two different views", source, line));
        }
        pairs.push_back({t[0], t[1], Vec2(parse_number(t[2], source, line), parse_number(t[3], source, line)),
                         Vec2(parse_number(t[4], source, line), parse_number(t[5], source, line))});
    }
    return pairs;
}

std::vector<CorrespondencePair> load_matches(const fs::path& path) {
    return parse_matches(read_text_file(path), path.string());
}

std::string format_matches(const std::vector<CorrespondencePair>& pairs) {
    std::string out = "# view_i view_j u_i v_i u_j v_j\n";
    for (const auto& p : pairs) {
        out += fmt::format("{} {} {} {} {} {}\n", p.view_i, p.view_j, format_double(p.x_i.x()),
                           format_double(p.x_i.y()), format_double(p.x_j.x()), format_double(p.x_j.y()));
    }
    return out;
}

std::map<std::string, bool> parse_split(const std::string& text, const std::string& source) {
    std::map<std::string, bool> split;
    for (const auto& [line, t] : tokenize(text)) {
        if (t.size() != 2 || (t[1] != "train" && t[1] != "test")) {
            throw Error(fmt::format("{}:{}: expected 'view_id train|test'", source, line));
        }
        if (!split.emplace(t[0], t[1] == "train").second) {
            throw Error(fmt::format("{}:{}: view '{}' listed twice", source, line, t[0]));
        }
    }
    return split;
}

std::map<std::string, bool> load_split(const fs::path& path) { return parse_split(read_text_file(path), path.string()); }

const Camera& find_camera(const std::vector<Camera>& cameras, const std::string& id) {
    for (const auto& c : cameras) {
        if (c.id == id) {
            return c;
        }
    }
    std::string known;
    for (const auto& c : cameras) {
        known += (known.empty() ? "" : ", ") + c.id;
    }
    throw Error(fmt::format("unknown view id '{}' (available: {})", id, known));
}

// --------------------------------------------------------------- dataset

LatentDataset load_dataset(const fs::path& dir) {
    const auto cameras = load_cameras(dir / "cameras.txt");
    std::map<std::string, bool> split;
    const bool has_split = fs::exists(dir / "split.txt");
    if (has_split) {
        split = load_split(dir / "split.txt");
        for (const auto& [id, train] : split) {
            find_camera(cameras, id);
        }
    }
    LatentDataset dataset;
    for (const auto& cam : cameras) {
        LatentView view;
        view.camera = cam;
        if (has_split) {
            const auto it = split.find(cam.id);
            if (it == split.end()) {
                throw Error(fmt::format("view '{}' is missing from split.txt", cam.id));
            }
            view.train = it->second;
        }
        view.latent = read_lrf(dir / "latents" / (cam.id + ".lrf"));
        view.latent.alpha.clear();
        dataset.views.push_back(std::move(view));
    }
    dataset.validate();
    return dataset;
}

void save_dataset(const LatentDataset& dataset, const fs::path& dir) {
    fs::create_directories(dir / "latents");
    std::vector<Camera> cameras;
    std::string split = "# view_id train|test\n";
    for (const auto& v : dataset.views) {
        cameras.push_back(v.camera);
        split += fmt::format("{} {}\n", v.camera.id, v.train ? "train" : "test");
        write_lrf(v.latent, dir / "latents" / (v.camera.id + ".lrf"));
    }
    write_text_file(dir / "cameras.txt", format_cameras(cameras));
    write_text_file(dir / "split.txt", split);
}

} // namespace lrf
