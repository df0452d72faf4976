/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: include/rff/synth.hpp
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

#ifndef RFF_SYNTH_HPP
#define RFF_SYNTH_HPP

#include "rff/geometry.hpp"
#include "rff/image.hpp"
#include "rff/shape_model.hpp"

#include "Eigen/Core"

#include <cstdint>
#include <vector>

namespace rff {

struct SynthConfig
{
    std::uint64_t seed = 7;
    /// Approximate vertex count of the face mesh (a grid, so rounded).
    int vertices = 2000;
    /// Number of training shapes.
    int shapes = 30;
    /// Number of independent deformation fields, hence model modes.
    int modes = 10;
    double yaw_degrees = 0.0;
    /// Standard deviation of the landmark noise, in pixels.
    double noise_sigma = 0.0;
    /// Fraction of landmarks replaced by gross outliers.
    double outlier_fraction = 0.0;
    int image_width = 192;
    int image_height = 224;
};

/// Training set of a synthetic face family, before model building.
struct SynthFamily
{
    std::vector<ShapeVector> shapes;
    std::vector<Triangle> triangles;
    std::vector<int> landmark_indices;
    /// Texture coordinates of every vertex (its rest-shape x, y).
    PointSet3d texture_coords;
};

struct SynthScene
{
    ShapeModel model;
    /// Input view.
    Image image;
    /// Same face rendered frontally, the frontalization target.
    Image frontal;
    /// Observed 3D landmarks in the input view, with noise and outliers.
    PointSet3d landmarks;
    /// Noise-free landmarks in the frontal render.
    PointSet3d frontal_landmarks;
    /// Model frame to input view.
    SimilarityTransformd pose;
    Embedding embedding;
    std::vector<bool> outliers;
    PointSet3d texture_coords;
};

/// Deterministic family of smooth face-like height-field meshes with 68 landmarks.
SynthFamily synth_family(std::uint64_t seed, int vertices, int shapes, int modes);

/// Procedural gray texture at texture coordinate (u, v).
double synth_texture(double u, double v);

/**
 * Orthographic z-buffer render of a textured mesh (smaller z nearer).
 * Pixels not covered by the mesh are masked.
 */
Image render_mesh(const PointSet3d& vertices, const PointSet3d& texture_coords, const std::vector<Triangle>& triangles,
                  int width, int height);

/// Builds the model, samples a shape inside its ellipsoid, poses and renders it.
SynthScene synth_scene(const SynthConfig& config);

} // namespace rff

#endif // RFF_SYNTH_HPP
