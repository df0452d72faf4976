/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: include/rff/frontalize.hpp
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

#ifndef RFF_FRONTALIZE_HPP
#define RFF_FRONTALIZE_HPP

#include "rff/deform_fit.hpp"
#include "rff/geometry.hpp"
#include "rff/image.hpp"
#include "rff/robust_align.hpp"
#include "rff/shape_model.hpp"

#include "Eigen/Core"

#include <cstdint>
#include <vector>

namespace rff {

struct Barycentric
{
    double a1 = 0.0;
    double a2 = 0.0;
    double a3 = 0.0;

    bool inside(double tolerance = 1e-12) const
    {
        return a1 >= -tolerance && a2 >= -tolerance && a3 >= -tolerance;
    }
};

/**
 * Barycentric coordinates of p in the triangle (v1, v2, v3), so that
 * p = a1 v1 + a2 v2 + a3 v3 with a1 + a2 + a3 = 1.
 *
 * Throws DegenerateConfiguration when |det| <= 1e-12.
 */
Barycentric barycentric_coords(const Eigen::Vector2d& p, const Eigen::Vector2d& v1, const Eigen::Vector2d& v2,
                               const Eigen::Vector2d& v3);

/// Extent and resolution of a depth grid, in frontal-image pixels.
struct GridSpec
{
    /// Depth samples per pixel along each axis.
    int supersample = 1;
    /// When width is 0 the grid is the integer bounding box of the projected vertices.
    int x0 = 0;
    int y0 = 0;
    int width = 0;
    int height = 0;
};

/**
 * Depth of the frontal surface on a regular grid.
 *
 * Covers pixels [x0, x0 + width) x [y0, y0 + height). Sample (u, v) lies at
 * (x0 + (u + 1/2) / f, y0 + (v + 1/2) / f) with f = supersample. Smaller
 * depth is nearer to the camera.
 */
struct DepthMap
{
    int x0 = 0;
    int y0 = 0;
    int width = 0;
    int height = 0;
    int supersample = 1;
    std::vector<double> depth;
    std::vector<std::uint8_t> occupied;

    int samples_x() const { return width * supersample; }
    int samples_y() const { return height * supersample; }

    std::size_t index(int u, int v) const
    {
        return static_cast<std::size_t>(v) * static_cast<std::size_t>(samples_x()) + static_cast<std::size_t>(u);
    }

    Eigen::Vector2d sample_position(int u, int v) const
    {
        return {x0 + (u + 0.5) / supersample, y0 + (v + 0.5) / supersample};
    }
};

/**
 * Rasterizes the triangles of \p vertices (projected on x, y) and interpolates
 * their z at every covered sample; overlaps keep the nearest (smallest) depth.
 *
 * Degenerate triangles are skipped. Throws DegenerateConfiguration when every
 * triangle is degenerate.
 */
DepthMap rasterize_depth(const PointSet3d& vertices, const std::vector<Triangle>& triangles,
                         const GridSpec& grid = {});

/// Y_j = scale R X_j + t.
PointSet3d frontalize_landmarks(const PointSet3d& X, const SimilarityTransformd& pose);

struct WarpOptions
{
    /// Bilinear instead of integer-part sampling.
    bool bilinear = false;
    /// Mask frontal samples hidden behind nearer surface in the input view.
    bool occlusion = true;
    /// Depth, in input pixels, by which a sample may lie behind the input-view
    /// depth buffer of the frontal surface and still count as visible.
    double occlusion_tolerance = 2.0;
    /// Output size; 0 uses the input image size.
    int output_width = 0;
    int output_height = 0;
};

/**
 * Fills the frontal image by inverse mapping: every occupied depth sample
 * (A1, A2, A3) is sent to B = T_inv(A) and the input pixel ([B1], [B2]) is
 * copied. Samples landing outside the input, on invalid input pixels, or
 * behind nearer surface are dropped; pixels without samples are masked.
 */
Image warp(const Image& input, const DepthMap& depth, const SimilarityTransformd& inverse_pose,
           const WarpOptions& options = {});

/**
 * Replaces every masked pixel whose mirror image across the vertical line
 * x = axis_x is valid by that mirror pixel. The axis is snapped to the nearest
 * half pixel.
 */
Image soft_symmetry_fill(const Image& image, double axis_x);

/// Translation placing the centre of the mean shape's (x, y) extent at the canvas centre.
Eigen::Vector3d canvas_offset(const ShapeModel& model, int width, int height);

/// All N vertices of mean + modes * s in the fitting basis, one column each.
PointSet3d model_vertices(const ShapeModel& model, const Embedding& s);

struct PipelineConfig
{
    AlignConfig align;
    FitConfig fit;
    WarpOptions warp;
    int supersample = 1;
    bool soft_symmetry = false;
};

struct PipelineResult
{
    Image frontal;
    /// Input-view to frontal-view transform.
    SimilarityTransformd pose;
    /// Its inverse, the head pose in the input view.
    SimilarityTransformd head_pose;
    /// Yaw of the fitted model in the input view.
    double yaw_degrees = 0.0;
    Eigen::Vector3d canvas_offset = Eigen::Vector3d::Zero();
    PointSet3d frontal_landmarks;
    AlignResult alignment;
    FitResult fit;
    DepthMap depth;
};

/**
 * Full frontalization of \p input given its 3D landmarks \p X:
 * align X to the mean-shape landmarks, frontalize the landmarks, fit the shape
 * model, rasterize the fitted frontal surface and warp the input onto it.
 */
PipelineResult run_pipeline(const Image& input, const PointSet3d& X, const ShapeModel& model,
                            const PipelineConfig& config = {});

} // namespace rff

#endif // RFF_FRONTALIZE_HPP
