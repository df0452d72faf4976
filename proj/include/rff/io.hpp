/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: include/rff/io.hpp
 *
 * Copyright 2026 The rff Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#ifndef RFF_IO_HPP
#define RFF_IO_HPP

#include "rff/geometry.hpp"
#include "rff/image.hpp"
#include "rff/shape_model.hpp"

#include "Eigen/Core"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rff {

/**
 * Landmark text file:
 *
 *     # rff landmarks
 *     version 1
 *     count J
 *     x y z [confidence]     (J lines)
 *
 * Blank lines and lines starting with '#' are ignored. Either every record has
 * a confidence or none has.
 */
struct LandmarkFile
{
    PointSet3d points;
    std::optional<Eigen::VectorXd> confidence;
};

inline constexpr int kLandmarkFormatVersion = 1;

LandmarkFile parse_landmarks(const std::string& text);
std::string format_landmarks(const LandmarkFile& file);

LandmarkFile load_landmarks(const std::filesystem::path& path);
void save_landmarks(const std::filesystem::path& path, const LandmarkFile& file);
void save_landmarks(const std::filesystem::path& path, const PointSet3d& points);

/**
 * Binary model container, little endian:
 *
 *     "RFFMODEL", u32 version, u32 N, u32 K, u32 J, u32 T, u32 K_expr,
 *     u8 z_convention (0 = smaller z nearer), u8[3] reserved,
 *     f64 mean[3N], f64 modes[3N*K] (column major), f64 eigvals[K],
 *     i32 triangles[3T], i32 landmarks[J],
 *     if K_expr > 0: f64 offset[3N], f64 modes[3N*K_expr], f64 eigvals[K_expr],
 *     u32 CRC-32 of all preceding bytes.
 *
 * Units are those of the training shapes.
 */
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> encode_model(const ShapeModel& model);

/// Throws FormatError on malformed or corrupted data and InvalidInput on model invariant violations.
ShapeModel decode_model(const std::vector<std::uint8_t>& bytes);

ShapeModel load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const ShapeModel& model);

/// Binary PGM (P5) or PPM (P6) with maxval 255.
std::vector<std::uint8_t> encode_pnm(const Image& image);

/// Decodes P5/P6 data; all pixels are marked valid.
Image decode_pnm(const std::vector<std::uint8_t>& bytes);

/// Mask sidecar path: "face.pgm" -> "face.mask.pgm".
std::filesystem::path mask_path(const std::filesystem::path& image_path);

/**
 * Writes the image and, if any pixel is invalid, a PGM mask sidecar
 * (255 = valid, 0 = masked). A stale sidecar is removed otherwise.
 */
void save_image(const std::filesystem::path& path, const Image& image);

/// Reads an image and applies its mask sidecar when present.
Image load_image(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

} // namespace rff

#endif // RFF_IO_HPP
