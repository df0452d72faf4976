/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: src/frontalize.cpp
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
#include "rff/frontalize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace rff {

namespace {

constexpr double kDegenerateTriangle = 1e-12;

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b)
{
    return a.x() * b.y() - a.y() * b.x();
}

// Input pixel value at continuous position b, or false if unavailable.
bool sample_input(const Image& input, const Eigen::Vector2d& b, bool bilinear, std::array<double, 3>& out)
{
    const int ix = static_cast<int>(std::floor(b.x()));
    const int iy = static_cast<int>(std::floor(b.y()));
    if (!input.contains(ix, iy) || !input.valid(ix, iy))
    {
        return false;
    }
    if (!bilinear)
    {
        for (int c = 0; c < input.channels; ++c)
        {
            out[c] = input.at(ix, iy, c);
        }
        return true;
    }
    // Pixel values live at pixel centres.
    const double fx = b.x() - 0.5;
    const double fy = b.y() - 0.5;
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const double tx = fx - x0;
    const double ty = fy - y0;
    for (int c = 0; c < input.channels; ++c)
    {
        double acc = 0.0;
        double wsum = 0.0;
        for (int dy = 0; dy <= 1; ++dy)
        {
            for (int dx = 0; dx <= 1; ++dx)
            {
                const int x = x0 + dx;
                const int y = y0 + dy;
                if (!input.contains(x, y) || !input.valid(x, y))
                {
                    continue;
                }
                const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty);
                acc += w * input.at(x, y, c);
                wsum += w;
            }
        }
        out[c] = wsum > 0.0 ? acc / wsum : input.at(ix, iy, c);
    }
    return true;
}

struct MappedSample
{
    /// Input-view position.
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    bool occupied = false;
    /// Lands inside both the output canvas and the input image.
    bool usable = false;
};

// Keeps the nearest depth of triangle (p1, p2, p3) at every covered input pixel centre.
void splat_triangle(const Eigen::Vector3d& p1, const Eigen::Vector3d& p2, const Eigen::Vector3d& p3, int width,
                    int height, std::vector<double>& zbuf)
{
    if (std::abs(cross2(p2.head<2>() - p1.head<2>(), p3.head<2>() - p1.head<2>())) <= kDegenerateTriangle)
    {
        return;
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({p1.x(), p2.x(), p3.x()}) - 0.5)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({p1.x(), p2.x(), p3.x()}) - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({p1.y(), p2.y(), p3.y()}) - 0.5)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({p1.y(), p2.y(), p3.y()}) - 0.5)));
    for (int y = y0; y <= y1; ++y)
    {
        for (int x = x0; x <= x1; ++x)
        {
            const Barycentric w =
                barycentric_coords(Eigen::Vector2d(x + 0.5, y + 0.5), p1.head<2>(), p2.head<2>(), p3.head<2>());
            if (!w.inside())
            {
                continue;
            }
            const double z = w.a1 * p1.z() + w.a2 * p2.z() + w.a3 * p3.z();
            double& slot = zbuf[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + x];
            slot = std::min(slot, z);
        }
    }
}

// Input-view z-buffer of the surface obtained by triangulating neighbouring
// samples of the sx x sy grid; +inf where nothing projects.
std::vector<double> input_view_depth(const std::vector<MappedSample>& grid, int sx, int sy, int width, int height)
{
    std::vector<double> zbuf(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
                             std::numeric_limits<double>::infinity());
    const auto at = [&](int u, int v) -> const MappedSample& {
        return grid[static_cast<std::size_t>(v) * static_cast<std::size_t>(sx) + u];
    };
    for (int v = 0; v + 1 < sy; ++v)
    {
        for (int u = 0; u + 1 < sx; ++u)
        {
            const MappedSample& a = at(u, v);
            const MappedSample& b = at(u + 1, v);
            const MappedSample& c = at(u, v + 1);
            const MappedSample& d = at(u + 1, v + 1);
            if (a.occupied && b.occupied && c.occupied)
            {
                splat_triangle(a.b, b.b, c.b, width, height, zbuf);
            }
            if (b.occupied && d.occupied && c.occupied)
            {
                splat_triangle(b.b, d.b, c.b, width, height, zbuf);
            }
        }
    }
    return zbuf;
}

// Nearest surface depth at input position b, interpolated between pixel centres.
double surface_depth_at(const std::vector<double>& zbuf, int width, int height, const Eigen::Vector3d& b)
{
    const double fx = b.x() - 0.5;
    const double fy = b.y() - 0.5;
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const double tx = fx - x0;
    const double ty = fy - y0;
    double acc = 0.0;
    double wsum = 0.0;
    for (int dy = 0; dy <= 1; ++dy)
    {
        for (int dx = 0; dx <= 1; ++dx)
        {
            const int x = x0 + dx;
            const int y = y0 + dy;
            if (x < 0 || y < 0 || x >= width || y >= height)
            {
                continue;
            }
            const double z = zbuf[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + x];
            if (!std::isfinite(z))
            {
                continue;
            }
            const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty);
            acc += w * z;
            wsum += w;
        }
    }
    return wsum > 0.0 ? acc / wsum : std::numeric_limits<double>::infinity();
}

} // namespace

Barycentric barycentric_coords(const Eigen::Vector2d& p, const Eigen::Vector2d& v1, const Eigen::Vector2d& v2,
                               const Eigen::Vector2d& v3)
{
    const Eigen::Vector2d e2 = v2 - v1;
    const Eigen::Vector2d e3 = v3 - v1;
    const double det = cross2(e2, e3);
    if (!(std::abs(det) > kDegenerateTriangle))
    {
        throw DegenerateConfiguration("barycentric_coords: degenerate triangle");
    }
    const Eigen::Vector2d d = p - v1;
    Barycentric b;
    b.a2 = cross2(d, e3) / det;
    b.a3 = cross2(e2, d) / det;
    b.a1 = 1.0 - b.a2 - b.a3;
    return b;
}

DepthMap rasterize_depth(const PointSet3d& vertices, const std::vector<Triangle>& triangles, const GridSpec& grid)
{
    validate_points(vertices);
    if (grid.supersample < 1)
    {
        throw InvalidInput("rasterize_depth: supersample must be at least 1");
    }
    const Eigen::Index n = vertices.cols();
    std::vector<const Triangle*> usable;
    usable.reserve(triangles.size());
    for (const Triangle& t : triangles)
    {
        for (int idx : t)
        {
            if (idx < 0 || idx >= n)
            {
                throw InvalidInput("rasterize_depth: triangle index out of range");
            }
        }
        const Eigen::Vector2d a = vertices.col(t[0]).head<2>();
        const Eigen::Vector2d b = vertices.col(t[1]).head<2>();
        const Eigen::Vector2d c = vertices.col(t[2]).head<2>();
        if (std::abs(cross2(b - a, c - a)) > kDegenerateTriangle)
        {
            usable.push_back(&t);
        }
    }
    if (usable.empty())
    {
        throw DegenerateConfiguration("rasterize_depth: no triangle has a non-degenerate projection");
    }

    DepthMap map;
    map.supersample = grid.supersample;
    if (grid.width > 0 && grid.height > 0)
    {
        map.x0 = grid.x0;
        map.y0 = grid.y0;
        map.width = grid.width;
        map.height = grid.height;
    } else
    {
        double min_x = std::numeric_limits<double>::infinity();
        double min_y = min_x;
        double max_x = -min_x;
        double max_y = -min_x;
        for (const Triangle* t : usable)
        {
            for (int idx : *t)
            {
                min_x = std::min(min_x, vertices(0, idx));
                max_x = std::max(max_x, vertices(0, idx));
                min_y = std::min(min_y, vertices(1, idx));
                max_y = std::max(max_y, vertices(1, idx));
            }
        }
        map.x0 = static_cast<int>(std::floor(min_x));
        map.y0 = static_cast<int>(std::floor(min_y));
        map.width = std::max(1, static_cast<int>(std::ceil(max_x)) - map.x0);
        map.height = std::max(1, static_cast<int>(std::ceil(max_y)) - map.y0);
    }
    const int sx = map.samples_x();
    const int sy = map.samples_y();
    const int f = map.supersample;
    map.depth.assign(static_cast<std::size_t>(sx) * static_cast<std::size_t>(sy),
                     std::numeric_limits<double>::infinity());
    map.occupied.assign(map.depth.size(), 0);

    for (const Triangle* t : usable)
    {
        const Eigen::Vector3d p1 = vertices.col((*t)[0]);
        const Eigen::Vector3d p2 = vertices.col((*t)[1]);
        const Eigen::Vector3d p3 = vertices.col((*t)[2]);
        const double lo_x = std::min({p1.x(), p2.x(), p3.x()});
        const double hi_x = std::max({p1.x(), p2.x(), p3.x()});
        const double lo_y = std::min({p1.y(), p2.y(), p3.y()});
        const double hi_y = std::max({p1.y(), p2.y(), p3.y()});
        // Sample u sits at x0 + (u + 1/2) / f.
        const int u0 = std::max(0, static_cast<int>(std::floor((lo_x - map.x0) * f - 0.5)));
        const int u1 = std::min(sx - 1, static_cast<int>(std::ceil((hi_x - map.x0) * f - 0.5)));
        const int v0 = std::max(0, static_cast<int>(std::floor((lo_y - map.y0) * f - 0.5)));
        const int v1 = std::min(sy - 1, static_cast<int>(std::ceil((hi_y - map.y0) * f - 0.5)));
        for (int v = v0; v <= v1; ++v)
        {
            for (int u = u0; u <= u1; ++u)
            {
                const Barycentric b =
                    barycentric_coords(map.sample_position(u, v), p1.head<2>(), p2.head<2>(), p3.head<2>());
                if (!b.inside())
                {
                    continue;
                }
                const double z = b.a1 * p1.z() + b.a2 * p2.z() + b.a3 * p3.z();
                const std::size_t i = map.index(u, v);
                if (z < map.depth[i])
                {
                    map.depth[i] = z;
                    map.occupied[i] = 1;
                }
            }
        }
    }
    return map;
}

PointSet3d frontalize_landmarks(const PointSet3d& X, const SimilarityTransformd& pose)
{
    return apply_transform(pose, X);
}

Image warp(const Image& input, const DepthMap& depth, const SimilarityTransformd& inverse_pose,
           const WarpOptions& options)
{
    if (input.width <= 0 || input.height <= 0)
    {
        throw InvalidInput("warp: empty input image");
    }
    if (!(options.occlusion_tolerance >= 0.0))
    {
        throw InvalidInput("warp: occlusion tolerance must be nonnegative");
    }
    const int out_w = options.output_width > 0 ? options.output_width : input.width;
    const int out_h = options.output_height > 0 ? options.output_height : input.height;
    const int sx = depth.samples_x();
    const int sy = depth.samples_y();
    const int f = depth.supersample;

    // Input-view position of every occupied sample.
    std::vector<MappedSample> mapped(depth.depth.size());
    const Eigen::Matrix3d A = inverse_pose.linear();
    const Eigen::Vector3d t = inverse_pose.translation;
    for (int v = 0; v < sy; ++v)
    {
        for (int u = 0; u < sx; ++u)
        {
            const std::size_t i = depth.index(u, v);
            if (!depth.occupied[i])
            {
                continue;
            }
            const Eigen::Vector2d p = depth.sample_position(u, v);
            mapped[i].b = A * Eigen::Vector3d(p.x(), p.y(), depth.depth[i]) + t;
            mapped[i].occupied = true;
            const int px = static_cast<int>(std::floor(p.x()));
            const int py = static_cast<int>(std::floor(p.y()));
            const int bx = static_cast<int>(std::floor(mapped[i].b.x()));
            const int by = static_cast<int>(std::floor(mapped[i].b.y()));
            mapped[i].usable = px >= 0 && py >= 0 && px < out_w && py < out_h && input.contains(bx, by);
        }
    }

    // Input-view depth buffer of the surface spanned by the samples.
    std::vector<double> zbuf;
    if (options.occlusion)
    {
        zbuf = input_view_depth(mapped, sx, sy, input.width, input.height);
    }

    Image out(out_w, out_h, input.channels, 255);
    std::fill(out.mask.begin(), out.mask.end(), 0);
    std::vector<double> acc(static_cast<std::size_t>(out_w) * out_h * input.channels, 0.0);
    std::vector<int> count(static_cast<std::size_t>(out_w) * out_h, 0);
    std::array<double, 3> value{};
    for (int v = 0; v < sy; ++v)
    {
        for (int u = 0; u < sx; ++u)
        {
            const MappedSample& m = mapped[depth.index(u, v)];
            if (!m.usable)
            {
                continue;
            }
            if (options.occlusion && m.b.z() > surface_depth_at(zbuf, input.width, input.height, m.b) +
                                                   options.occlusion_tolerance)
            {
                continue;
            }
            if (!sample_input(input, m.b.head<2>(), options.bilinear, value))
            {
                continue;
            }
            const int px = depth.x0 + u / f;
            const int py = depth.y0 + v / f;
            const std::size_t o = out.index(px, py);
            for (int c = 0; c < input.channels; ++c)
            {
                acc[o * input.channels + c] += value[c];
            }
            ++count[o];
        }
    }
    for (int y = 0; y < out_h; ++y)
    {
        for (int x = 0; x < out_w; ++x)
        {
            const std::size_t o = out.index(x, y);
            if (count[o] == 0)
            {
                continue;
            }
            out.mask[o] = 1;
            for (int c = 0; c < input.channels; ++c)
            {
                const double mean = acc[o * input.channels + c] / count[o];
                out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(mean), 0L, 255L));
            }
        }
    }
    return out;
}

Image soft_symmetry_fill(const Image& image, double axis_x)
{
    if (!(axis_x >= 0.0 && axis_x <= image.width))
    {
        throw InvalidInput("soft_symmetry_fill: axis must lie within the image width");
    }
    // Pixel x has centre x + 1/2; its mirror centre 2 axis - x - 1/2 belongs to pixel c - 1 - x.
    const long c = std::lround(2.0 * axis_x);
    Image out = image;
    for (int y = 0; y < image.height; ++y)
    {
        for (int x = 0; x < image.width; ++x)
        {
            if (image.valid(x, y))
            {
                continue;
            }
            const long mx = c - 1 - x;
            if (mx < 0 || mx >= image.width || !image.valid(static_cast<int>(mx), y))
            {
                continue;
            }
            for (int ch = 0; ch < image.channels; ++ch)
            {
                out.at(x, y, ch) = image.at(static_cast<int>(mx), y, ch);
            }
            out.mask[out.index(x, y)] = 1;
        }
    }
    return out;
}

Eigen::Vector3d canvas_offset(const ShapeModel& model, int width, int height)
{
    const PointSet3d V = to_points(model.mean);
    const Eigen::Vector2d lo = V.topRows<2>().rowwise().minCoeff();
    const Eigen::Vector2d hi = V.topRows<2>().rowwise().maxCoeff();
    const Eigen::Vector2d centre = 0.5 * (lo + hi);
    return {0.5 * width - centre.x(), 0.5 * height - centre.y(), 0.0};
}

PointSet3d model_vertices(const ShapeModel& model, const Embedding& s)
{
    const FittingBasis basis = fitting_basis(model);
    if (s.size() != basis.modes.cols())
    {
        throw InvalidInput("model_vertices: embedding length does not match the model");
    }
    return to_points(basis.mean + basis.modes * s);
}

PipelineResult run_pipeline(const Image& input, const PointSet3d& X, const ShapeModel& model,
                            const PipelineConfig& config)
{
    validate(model);
    if (static_cast<std::size_t>(X.cols()) != model.landmark_indices.size())
    {
        throw InvalidInput("run_pipeline: landmark count does not match the model");
    }
    const int out_w = config.warp.output_width > 0 ? config.warp.output_width : input.width;
    const int out_h = config.warp.output_height > 0 ? config.warp.output_height : input.height;

    PipelineResult result;
    result.canvas_offset = canvas_offset(model, out_w, out_h);
    const PointSet3d Z = mean_landmarks(model).colwise() + result.canvas_offset;

    result.alignment = align(X, Z, config.align);
    result.pose = result.alignment.transform;
    result.head_pose = inverse_pose(result.pose);

    result.frontal_landmarks = frontalize_landmarks(X, result.pose);
    result.fit = fit(result.frontal_landmarks, model, config.fit);
    // Model frame to input view through the fitted shape.
    result.yaw_degrees = yaw_degrees(compose(result.head_pose, result.fit.transform).rotation_matrix());

    const PointSet3d frontal_vertices =
        apply_transform(result.fit.transform, model_vertices(model, result.fit.embedding));
    GridSpec grid;
    grid.supersample = config.supersample;
    result.depth = rasterize_depth(frontal_vertices, model.triangles, grid);

    WarpOptions opts = config.warp;
    opts.output_width = out_w;
    opts.output_height = out_h;
    result.frontal = warp(input, result.depth, result.head_pose, opts);
    if (config.soft_symmetry)
    {
        result.frontal = soft_symmetry_fill(result.frontal, 0.5 * out_w);
    }
    return result;
}

} // namespace rff
