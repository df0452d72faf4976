/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: include/rff/zncc.hpp
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

#ifndef RFF_ZNCC_HPP
#define RFF_ZNCC_HPP

#include "rff/geometry.hpp"
#include "rff/image.hpp"

#include "Eigen/Core"

namespace rff {

/// Pixels [cx - half_w, cx + half_w] x [cy - half_h, cy + half_h].
struct Region
{
    int cx = 0;
    int cy = 0;
    int half_w = 1;
    int half_h = 1;

    int width() const { return 2 * half_w + 1; }
    int height() const { return 2 * half_h + 1; }
};

struct ZnccResult
{
    double coefficient = 0.0;
    int shift_x = 0;
    int shift_y = 0;
    /// Centre of the matched region in the second image.
    int matched_x = 0;
    int matched_y = 0;
};

inline constexpr int kDefaultMaxShift = 10;
inline constexpr int kDefaultMouthMargin = 5;

/**
 * Zero-mean normalized cross-correlation of two equally sized blocks.
 *
 * Throws UndefinedCorrelation if either block has zero variance.
 */
double zncc(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Luma block of \p region shifted by (dx, dy); rows are image rows.
Eigen::MatrixXd extract_block(const Image& image, const Region& region, int dx = 0, int dy = 0);

/**
 * max over |dx|, |dy| <= max_shift of zncc(R_f, R_t shifted by (dx, dy)).
 *
 * A shift is admissible when the shifted region lies inside the second image
 * and every pixel of both regions is valid. Ties go to the smaller
 * |dx| + |dy|, then to the smaller (dx, dy) in lexicographic order.
 * Throws UndefinedCorrelation when no shift is admissible.
 */
ZnccResult zncc_search(const Image& frontal, const Image& truth, const Region& region,
                       int max_shift = kDefaultMaxShift);

/// Ratio of the mean pairwise (x, y) landmark distances of \p to over \p from.
double landmark_scale(const PointSet3d& from, const PointSet3d& to);

/**
 * Resamples \p image by landmark_scale(lm_image, lm_target) with nearest-pixel
 * lookup about the origin. The result has the rescaled size.
 */
Image scale_normalize(const Image& image, const PointSet3d& lm_image, const PointSet3d& lm_target);

/**
 * Bounding box of landmarks 48 to 67 expanded by \p margin and clamped to a
 * width x height image. Requires at least 68 landmarks.
 */
Region mouth_region(const PointSet3d& landmarks, int margin, int width, int height);

} // namespace rff

#endif // RFF_ZNCC_HPP
