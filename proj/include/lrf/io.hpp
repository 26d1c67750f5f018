// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lrf/geometry.hpp"
#include "lrf/image.hpp"
#include "lrf/training.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace lrf {

namespace fs = std::filesystem;

/// `.lrf` latent file: "LRF1", u32 H, W, C, flags (bit 0: alpha present),
/// H*W*C little-endian f32 row-major, then H*W f32 alpha when flagged.
void write_lrf(const LatentImage& image, const fs::path& path);
LatentImage read_lrf(const fs::path& path);

/// Writes one grayscale PFM per channel at `{stem}_c{k}.pfm` and returns the
/// paths written.
std::vector<fs::path> write_pfm_channels(const LatentImage& image, const fs::path& stem);
/// Reads a single-channel ("Pf") PFM.
LatentImage read_pfm(const fs::path& path);

/// 8-bit RGB PNG. Values are clamped to [0, 1] and rounded on write; read
/// returns an H x W x 3 image in [0, 1].
void write_png(const LatentImage& rgb, const fs::path& path);
LatentImage read_png(const fs::path& path);

/// `id fx fy cx cy width height r11 r12 r13 tx r21 r22 r23 ty r31 r32 r33 tz`
/// per line (world-to-camera), `#` comments.
std::vector<Camera> parse_cameras(const std::string& text, const std::string& source = "cameras.txt");
std::vector<Camera> load_cameras(const fs::path& path);
std::string format_cameras(const std::vector<Camera>& cameras);

/// `view_i view_j u_i v_i u_j v_j` per line, `#` comments.
std::vector<CorrespondencePair> parse_matches(const std::string& text, const std::string& source = "matches.txt");
std::vector<CorrespondencePair> load_matches(const fs::path& path);
std::string format_matches(const std::vector<CorrespondencePair>& pairs);

/// `view_id train|test` per line, `#` comments. Maps id -> is-train.
std::map<std::string, bool> parse_split(const std::string& text, const std::string& source = "split.txt");
std::map<std::string, bool> load_split(const fs::path& path);

std::string read_text_file(const fs::path& path);
void write_text_file(const fs::path& path, const std::string& text);

/// Loads `cameras.txt`, `latents/{id}.lrf` and `split.txt` (every view is a
/// training view when split.txt is absent). Latents are returned raw.
LatentDataset load_dataset(const fs::path& dir);
/// Inverse of load_dataset.
void save_dataset(const LatentDataset& dataset, const fs::path& dir);

/// Returns the camera with the given id or throws listing the known ids.
const Camera& find_camera(const std::vector<Camera>& cameras, const std::string& id);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

} // namespace lrf
