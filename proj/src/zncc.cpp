/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: src/zncc.cpp
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
#include "rff/zncc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <tuple>

namespace rff {

namespace {

bool region_valid(const Image& image, const Region& r, int dx, int dy)
{
    const int x0 = r.cx - r.half_w + dx;
    const int y0 = r.cy - r.half_h + dy;
    const int x1 = r.cx + r.half_w + dx;
    const int y1 = r.cy + r.half_h + dy;
    if (!image.contains(x0, y0) || !image.contains(x1, y1))
    {
        return false;
    }
    for (int y = y0; y <= y1; ++y)
    {
        for (int x = x0; x <= x1; ++x)
        {
            if (!image.valid(x, y))
            {
                return false;
            }
        }
    }
    return true;
}

} // namespace

double zncc(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.size() == 0)
    {
        throw InvalidInput("zncc: blocks must be non-empty and of equal size");
    }
    const Eigen::ArrayXXd ca = a.array() - a.mean();
    const Eigen::ArrayXXd cb = b.array() - b.mean();
    const double saa = ca.square().sum();
    const double sbb = cb.square().sum();
    if (!(saa > 0.0) || !(sbb > 0.0))
    {
        throw UndefinedCorrelation("zncc: block has zero variance");
    }
    const double r = (ca * cb).sum() / std::sqrt(saa * sbb);
    return std::clamp(r, -1.0, 1.0);
}

Eigen::MatrixXd extract_block(const Image& image, const Region& region, int dx, int dy)
{
    if (region.half_w < 1 || region.half_h < 1)
    {
        throw InvalidInput("extract_block: region half extents must be at least 1");
    }
    Eigen::MatrixXd block(region.height(), region.width());
    for (int r = 0; r < region.height(); ++r)
    {
        for (int c = 0; c < region.width(); ++c)
        {
            const int x = region.cx - region.half_w + c + dx;
            const int y = region.cy - region.half_h + r + dy;
            if (!image.contains(x, y))
            {
                throw InvalidInput("extract_block: region leaves the image");
            }
            block(r, c) = luma(image, x, y);
        }
    }
    return block;
}

ZnccResult zncc_search(const Image& frontal, const Image& truth, const Region& region, int max_shift)
{
    if (max_shift < 0)
    {
        throw InvalidInput("zncc_search: max_shift must be nonnegative");
    }
    if (!region_valid(frontal, region, 0, 0))
    {
        throw UndefinedCorrelation("zncc_search: region is not fully valid in the first image");
    }
    const Eigen::MatrixXd ref = extract_block(frontal, region);

    bool found = false;
    ZnccResult best;
    for (int dx = -max_shift; dx <= max_shift; ++dx)
    {
        for (int dy = -max_shift; dy <= max_shift; ++dy)
        {
            if (!region_valid(truth, region, dx, dy))
            {
                continue;
            }
            double r = 0.0;
            try
            {
                r = zncc(ref, extract_block(truth, region, dx, dy));
            } catch (const UndefinedCorrelation&)
            {
                if (ref.maxCoeff() == ref.minCoeff())
                {
                    throw;
                }
                continue;
            }
            const auto key = [](double coeff, int x, int y) {
                return std::make_tuple(-coeff, std::abs(x) + std::abs(y), x, y);
            };
            if (!found || key(r, dx, dy) < key(best.coefficient, best.shift_x, best.shift_y))
            {
                best.coefficient = r;
                best.shift_x = dx;
                best.shift_y = dy;
                found = true;
            }
        }
    }
    if (!found)
    {
        throw UndefinedCorrelation("zncc_search: no admissible shift");
    }
    best.matched_x = region.cx + best.shift_x;
    best.matched_y = region.cy + best.shift_y;
    return best;
}

double landmark_scale(const PointSet3d& from, const PointSet3d& to)
{
    if (from.cols() != to.cols() || from.cols() < 2)
    {
        throw DegenerateConfiguration("landmark_scale: need at least 2 corresponding landmarks");
    }
    const auto mean_pairwise = [](const PointSet3d& P) {
        double sum = 0.0;
        long pairs = 0;
        for (Eigen::Index i = 0; i < P.cols(); ++i)
        {
            for (Eigen::Index j = i + 1; j < P.cols(); ++j)
            {
                sum += (P.col(i).head<2>() - P.col(j).head<2>()).norm();
                ++pairs;
            }
        }
        return sum / static_cast<double>(pairs);
    };
    const double d_from = mean_pairwise(from);
    const double d_to = mean_pairwise(to);
    if (!(d_from > 0.0) || !(d_to > 0.0))
    {
        throw DegenerateConfiguration("landmark_scale: landmarks are coincident");
    }
    return d_to / d_from;
}

Image scale_normalize(const Image& image, const PointSet3d& lm_image, const PointSet3d& lm_target)
{
    const double s = landmark_scale(lm_image, lm_target);
    if (s == 1.0)
    {
        return image;
    }
    const int w = std::max(1, static_cast<int>(std::lround(image.width * s)));
    const int h = std::max(1, static_cast<int>(std::lround(image.height * s)));
    Image out(w, h, image.channels);
    for (int y = 0; y < h; ++y)
    {
        for (int x = 0; x < w; ++x)
        {
            const int sx = std::min(image.width - 1, static_cast<int>(std::floor((x + 0.5) / s)));
            const int sy = std::min(image.height - 1, static_cast<int>(std::floor((y + 0.5) / s)));
            for (int c = 0; c < image.channels; ++c)
            {
                out.at(x, y, c) = image.at(sx, sy, c);
            }
            out.mask[out.index(x, y)] = image.mask[image.index(sx, sy)];
        }
    }
    return out;
}

Region mouth_region(const PointSet3d& landmarks, int margin, int width, int height)
{
    if (landmarks.cols() < 68)
    {
        throw InvalidInput("mouth_region: the 68-point landmark convention is required");
    }
    if (margin < 0 || width <= 0 || height <= 0)
    {
        throw InvalidInput("mouth_region: margin must be nonnegative and the image non-empty");
    }
    const auto mouth = landmarks.block(0, 48, 2, 20);
    int x0 = static_cast<int>(std::floor(mouth.row(0).minCoeff())) - margin;
    int x1 = static_cast<int>(std::ceil(mouth.row(0).maxCoeff())) + margin;
    int y0 = static_cast<int>(std::floor(mouth.row(1).minCoeff())) - margin;
    int y1 = static_cast<int>(std::ceil(mouth.row(1).maxCoeff())) + margin;
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, width - 1);
    y1 = std::min(y1, height - 1);
    if (x1 - x0 < 2 || y1 - y0 < 2)
    {
        throw InvalidInput("mouth_region: region does not fit in the image");
    }
    // Centred regions have an odd extent; drop the last row or column if needed.
    Region r;
    r.half_w = (x1 - x0) / 2;
    r.half_h = (y1 - y0) / 2;
    r.cx = x0 + r.half_w;
    r.cy = y0 + r.half_h;
    return r;
}

} // namespace rff
