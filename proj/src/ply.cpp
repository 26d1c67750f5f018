// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

// Scene persistence in the splat-PLY layout, extended to C latent channels.
// Values are written as doubles so a save/load round trip is bit-exact;
// float properties are accepted on load for interoperability.

#include "lrf/error.hpp"
#include "lrf/gaussian_scene.hpp"

#include <fmt/format.h>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <unordered_map>

namespace lrf {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

namespace {

std::vector<std::string> property_names(int channels) {
    std::vector<std::string> names = {"x", "y", "z"};
    for (int c = 0; c < channels; ++c) {
        names.push_back(fmt::format("f_dc_{}", c));
    }
    for (int i = 0; i < (kShCoeffs - 1) * channels; ++i) {
        names.push_back(fmt::format("f_rest_{}", i));
    }
    names.emplace_back("opacity");
    for (int i = 0; i < 3; ++i) {
        names.push_back(fmt::format("scale_{}", i));
    }
    for (int i = 0; i < 4; ++i) {
        names.push_back(fmt::format("rot_{}", i));
    }
    return names;
}

// Values in property order for one gaussian.
void flatten(const LatentGaussian& g, int channels, std::vector<double>& out) {
    out.clear();
    out.insert(out.end(), {g.position.x(), g.position.y(), g.position.z()});
    for (int c = 0; c < channels; ++c) {
        out.push_back(g.sh[static_cast<std::size_t>(c) * kShCoeffs]);
    }
    // f_rest is channel-major: f_rest_{c * 15 + (k - 1)}.
    for (int c = 0; c < channels; ++c) {
        for (int k = 1; k < kShCoeffs; ++k) {
            out.push_back(g.sh[static_cast<std::size_t>(c) * kShCoeffs + k]);
        }
    }
    out.push_back(g.opacity_logit);
    out.insert(out.end(), {g.log_scale.x(), g.log_scale.y(), g.log_scale.z()});
    out.insert(out.end(), {g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3]});
}

LatentGaussian unflatten(const std::vector<double>& v, int channels) {
    LatentGaussian g;
    std::size_t i = 0;
    g.position = Vec3(v[0], v[1], v[2]);
    i = 3;
    g.sh.assign(static_cast<std::size_t>(channels) * kShCoeffs, 0.0);
    for (int c = 0; c < channels; ++c) {
        g.sh[static_cast<std::size_t>(c) * kShCoeffs] = v[i++];
    }
    for (int c = 0; c < channels; ++c) {
        for (int k = 1; k < kShCoeffs; ++k) {
            g.sh[static_cast<std::size_t>(c) * kShCoeffs + k] = v[i++];
        }
    }
    g.opacity_logit = v[i++];
    g.log_scale = Vec3(v[i], v[i + 1], v[i + 2]);
    i += 3;
    g.rotation = Vec4(v[i], v[i + 1], v[i + 2], v[i + 3]);
    return g;
}

std::string join_doubles(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += fmt::format("{}", values[i]);
    }
    return out;
}

std::vector<double> parse_doubles(const std::string& text, const std::string& what) {
    std::vector<double> values;
    std::istringstream in(text);
    std::string token;
    while (in >> token) {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
        if (ec != std::errc() || ptr != token.data() + token.size()) {
            throw Error(fmt::format("malformed PLY header: bad number '{}' in {}", token, what));
        }
        values.push_back(v);
    }
    return values;
}

std::optional<std::size_t> scalar_type_size(const std::string& type) {
    static const std::unordered_map<std::string, std::size_t> sizes = {
        {"char", 1}, {"uchar", 1}, {"int8", 1}, {"uint8", 1},
        {"short", 2}, {"ushort", 2}, {"int16", 2}, {"uint16", 2},
        {"int", 4}, {"uint", 4}, {"int32", 4}, {"uint32", 4},
        {"float", 4}, {"float32", 4}, {"double", 8}, {"float64", 8}};
    const auto it = sizes.find(type);
    if (it == sizes.end()) {
        return std::nullopt;
    }
    return it->second;
}

struct PlyProperty {
    std::string name;
    std::string type;
    std::size_t offset = 0;
    std::size_t size = 0;
};

double read_scalar(const char* ptr, const PlyProperty& p) {
    if (p.size == 8) {
        double v;
        std::memcpy(&v, ptr, 8);
        return v;
    }
    if (p.type == "float" || p.type == "float32") {
        float v;
        std::memcpy(&v, ptr, 4);
        return v;
    }
    throw Error(fmt::format("unsupported PLY type '{}' for property '{}'", p.type, p.name));
}

} // namespace

void save_scene(const Scene& scene, const std::filesystem::path& path) {
    scene.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(fmt::format("cannot open '{}' for writing", path.string()));
    }
    const auto names = property_names(scene.channels);
    std::string header = "ply\nformat binary_little_endian 1.0\n";
    header += fmt::format("comment lrf_channels={}\n", scene.channels);
    header += fmt::format("comment lrf_sh_degree={}\n", scene.sh_degree);
    if (!scene.norm.empty()) {
        header += fmt::format("comment lrf_norm_mean={}\n", join_doubles(scene.norm.mean));
        header += fmt::format("comment lrf_norm_scale={}\n", join_doubles(scene.norm.scale));
    }
    header += fmt::format("element vertex {}\n", scene.size());
    for (const auto& name : names) {
        header += fmt::format("property double {}\n", name);
    }
    header += "end_header\n";
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    std::vector<double> row;
    for (const auto& g : scene.gaussians) {
        flatten(g, scene.channels, row);
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    if (!out) {
        throw Error(fmt::format("failed writing '{}'", path.string()));
    }
}

Scene load_scene(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(fmt::format("cannot open '{}'", path.string()));
    }
    std::string line;
    if (!std::getline(in, line) || line != "ply") {
        throw Error(fmt::format("malformed PLY header in '{}': missing 'ply' magic", path.string()));
    }

    std::optional<int> channels;
    int sh_degree = kMaxShDegree;
    NormRecord norm;
    std::size_t vertex_count = 0;
    bool have_vertex = false;
    bool in_vertex = false;
    bool format_ok = false;
    std::vector<PlyProperty> props;
    std::size_t stride = 0;

    while (true) {
        if (!std::getline(in, line)) {
            throw Error(fmt::format("malformed PLY header in '{}': missing end_header", path.string()));
        }
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line == "end_header") {
            break;
        }
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword == "format") {
            std::string fmt_name;
            ls >> fmt_name;
            if (fmt_name != "binary_little_endian") {
                throw Error(fmt::format("unsupported PLY format '{}' (need binary_little_endian)", fmt_name));
            }
            format_ok = true;
        } else if (keyword == "comment") {
            const std::string rest = line.size() > 8 ? line.substr(8) : "";
            const auto eq = rest.find('=');
            if (eq == std::string::npos) {
                continue;
            }
            const std::string key = rest.substr(0, eq);
            const std::string value = rest.substr(eq + 1);
            if (key == "lrf_channels") {
                channels = std::stoi(value);
            } else if (key == "lrf_sh_degree") {
                sh_degree = std::stoi(value);
            } else if (key == "lrf_norm_mean") {
                norm.mean = parse_doubles(value, key);
            } else if (key == "lrf_norm_scale") {
                norm.scale = parse_doubles(value, key);
            }
        } else if (keyword == "element") {
            std::string name;
            ls >> name;
            in_vertex = name == "vertex";
            if (in_vertex) {
                if (!(ls >> vertex_count)) {
                    throw Error("malformed PLY header: bad vertex count");
                }
                have_vertex = true;
            } else {
                std::size_t count = 0;
                ls >> count;
                if (count != 0) {
                    throw Error(fmt::format("unsupported PLY element '{}'", name));
                }
            }
        } else if (keyword == "property") {
            if (!in_vertex) {
                continue;
            }
            std::string type, name;
            ls >> type >> name;
            if (type == "list") {
                throw Error("unsupported list property in PLY vertex element");
            }
            const auto size = scalar_type_size(type);
            if (!size) {
                throw Error(fmt::format("malformed PLY header: unknown property type '{}'", type));
            }
            props.push_back({name, type, stride, *size});
            stride += *size;
        }
    }
    if (!format_ok || !have_vertex) {
        throw Error("malformed PLY header: missing format or vertex element");
    }

    std::unordered_map<std::string, const PlyProperty*> by_name;
    int dc_count = 0;
    for (const auto& p : props) {
        by_name[p.name] = &p;
        if (p.name.rfind("f_dc_", 0) == 0) {
            ++dc_count;
        }
    }
    if (!channels) {
        channels = dc_count;
    }
    if (*channels <= 0) {
        throw Error("PLY has no latent channels (no f_dc_* properties)");
    }
    if (dc_count != *channels) {
        throw Error(fmt::format("channel mismatch: header declares {} channels but found {} f_dc properties",
                                *channels, dc_count));
    }

    const auto names = property_names(*channels);
    std::vector<const PlyProperty*> layout;
    for (const auto& name : names) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw Error(fmt::format("PLY is missing property '{}'", name));
        }
        layout.push_back(it->second);
    }

    Scene scene;
    scene.channels = *channels;
    scene.sh_degree = sh_degree;
    scene.norm = std::move(norm);
    scene.gaussians.reserve(vertex_count);
    std::vector<char> buffer(stride);
    std::vector<double> row(names.size());
    for (std::size_t v = 0; v < vertex_count; ++v) {
        if (!in.read(buffer.data(), static_cast<std::streamsize>(stride))) {
            throw Error(fmt::format("PLY truncated: expected {} vertices, read {}", vertex_count, v));
        }
        for (std::size_t k = 0; k < layout.size(); ++k) {
            row[k] = read_scalar(buffer.data() + layout[k]->offset, *layout[k]);
        }
        scene.gaussians.push_back(unflatten(row, *channels));
    }
    scene.validate();
    return scene;
}

} // namespace lrf
