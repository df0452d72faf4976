/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: src/synth.cpp
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
#include "rff/synth.hpp"

#include "rff/frontalize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

namespace rff {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kHalfWidth = 60.0;
constexpr double kHalfHeight = 75.0;

// Face relief; positive values point towards the camera.
double relief(double x, double y)
{
    const double r = 1.0 - (x / 65.0) * (x / 65.0) - (y / 82.0) * (y / 82.0);
    const double dome = 40.0 * std::sqrt(std::max(r, 0.0));
    const double nose = 16.0 * std::exp(-(x / 7.0) * (x / 7.0) - ((y + 2.0) / 16.0) * ((y + 2.0) / 16.0));
    const double sockets = -6.0 * (std::exp(-((x + 28.0) / 10.0) * ((x + 28.0) / 10.0) - ((y + 20.0) / 7.0) *
                                                                                               ((y + 20.0) / 7.0)) +
                                   std::exp(-((x - 28.0) / 10.0) * ((x - 28.0) / 10.0) - ((y + 20.0) / 7.0) *
                                                                                              ((y + 20.0) / 7.0)));
    const double lips = 4.0 * std::exp(-(x / 20.0) * (x / 20.0) - ((y - 42.0) / 8.0) * ((y - 42.0) / 8.0));
    return dome + nose + sockets + lips;
}

// 68-point layout: jaw, brows, nose, eyes, mouth.
std::vector<Eigen::Vector2d> landmark_template()
{
    std::vector<Eigen::Vector2d> p;
    for (int k = 0; k <= 16; ++k)
    {
        const double a = kPi * k / 16.0;
        p.emplace_back(-55.0 * std::cos(a), -5.0 + 68.0 * std::sin(a));
    }
    for (int side = -1; side <= 1; side += 2)
    {
        for (int k = 0; k < 5; ++k)
        {
            const double x = side < 0 ? -45.0 + 8.25 * k : 12.0 + 8.25 * k;
            const double t = (x - side * 28.5) / 16.5;
            p.emplace_back(x, -36.0 + 5.0 * t * t);
        }
    }
    for (int k = 0; k < 4; ++k)
    {
        p.emplace_back(0.0, -24.0 + 10.0 * k);
    }
    for (int k = 0; k < 5; ++k)
    {
        p.emplace_back(-12.0 + 6.0 * k, 15.0 + (k == 2 ? 2.0 : 0.0));
    }
    for (int side = -1; side <= 1; side += 2)
    {
        for (int k = 0; k < 6; ++k)
        {
            const double a = kPi - 2.0 * kPi * k / 6.0;
            p.emplace_back(side * 28.0 + 11.0 * std::cos(a), -20.0 - 5.0 * std::sin(a));
        }
    }
    for (int k = 0; k < 12; ++k)
    {
        const double a = kPi - 2.0 * kPi * k / 12.0;
        p.emplace_back(23.0 * std::cos(a), 42.0 - 10.0 * std::sin(a));
    }
    for (int k = 0; k < 8; ++k)
    {
        const double a = kPi - 2.0 * kPi * k / 8.0;
        p.emplace_back(14.0 * std::cos(a), 42.0 - 4.0 * std::sin(a));
    }
    return p;
}

class Sampler
{
public:
    explicit Sampler(std::uint64_t seed) : rng_(seed) {}
    double normal() { return normal_(rng_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_;
};

void check_config(const SynthConfig& c)
{
    if (c.vertices < 100 || c.vertices > 1000000)
    {
        throw InvalidInput("synth: vertices must lie in [100, 1000000]");
    }
    if (c.modes < 1 || c.shapes < c.modes + 1)
    {
        throw InvalidInput("synth: need modes >= 1 and shapes >= modes + 1");
    }
    if (!(std::abs(c.yaw_degrees) <= 80.0))
    {
        throw InvalidInput("synth: yaw must lie in [-80, 80] degrees");
    }
    if (!(c.noise_sigma >= 0.0) || !std::isfinite(c.noise_sigma))
    {
        throw InvalidInput("synth: noise must be finite and nonnegative");
    }
    if (!(c.outlier_fraction >= 0.0 && c.outlier_fraction <= 0.5))
    {
        throw InvalidInput("synth: outlier fraction must lie in [0, 0.5]");
    }
    if (c.image_width < 160 || c.image_height < 180)
    {
        throw InvalidInput("synth: image must be at least 160 x 180 pixels");
    }
}

} // namespace

double synth_texture(double u, double v)
{
    const auto bump = [](double x, double y, double sx, double sy) {
        return std::exp(-(x / sx) * (x / sx) - (y / sy) * (y / sy));
    };
    double value = 150.0 + 30.0 * std::sin(u / 5.0) * std::cos(v / 6.5) + 18.0 * std::sin((u + 2.0 * v) / 9.0);
    value -= 85.0 * bump(u, v - 42.0, 20.0, 6.5);
    value += 40.0 * bump(u, v - 42.0, 10.0, 1.8);
    value -= 70.0 * (bump(u + 28.0, v + 20.0, 7.0, 3.5) + bump(u - 28.0, v + 20.0, 7.0, 3.5));
    value -= 45.0 * (bump(u + 28.0, v + 35.0, 13.0, 2.5) + bump(u - 28.0, v + 35.0, 13.0, 2.5));
    value -= 30.0 * bump(u, v - 15.0, 9.0, 3.0);
    return std::clamp(value, 0.0, 255.0);
}

SynthFamily synth_family(std::uint64_t seed, int vertices, int shapes, int modes)
{
    const int nx = std::max(8, static_cast<int>(std::lround(std::sqrt(vertices * kHalfWidth / kHalfHeight))));
    const int ny = std::max(8, static_cast<int>(std::lround(static_cast<double>(vertices) / nx)));
    const int n = nx * ny;

    SynthFamily family;
    family.texture_coords.resize(3, n);
    ShapeVector base(3 * n);
    for (int j = 0; j < ny; ++j)
    {
        for (int i = 0; i < nx; ++i)
        {
            const int k = j * nx + i;
            const double x = -kHalfWidth + 2.0 * kHalfWidth * i / (nx - 1);
            const double y = -kHalfHeight + 2.0 * kHalfHeight * j / (ny - 1);
            family.texture_coords.col(k) = Eigen::Vector3d(x, y, 0.0);
            base.segment<3>(3 * k) = Eigen::Vector3d(x, y, -relief(x, y));
        }
    }
    for (int j = 0; j + 1 < ny; ++j)
    {
        for (int i = 0; i + 1 < nx; ++i)
        {
            const int a = j * nx + i;
            family.triangles.push_back({a, a + 1, a + nx});
            family.triangles.push_back({a + 1, a + nx + 1, a + nx});
        }
    }

    // Nearest unused vertex to every template point.
    std::set<int> used;
    for (const Eigen::Vector2d& p : landmark_template())
    {
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (int k = 0; k < n; ++k)
        {
            const double d = (family.texture_coords.col(k).head<2>() - p).squaredNorm();
            if (d < best_d && !used.count(k))
            {
                best_d = d;
                best = k;
            }
        }
        used.insert(best);
        family.landmark_indices.push_back(best);
    }

    Sampler rng(seed);
    std::vector<ShapeVector> fields;
    for (int m = 0; m < modes; ++m)
    {
        const double fu = rng.uniform(0.3, 1.5);
        const double fv = rng.uniform(0.3, 1.5);
        const double pu = rng.uniform(0.0, 2.0 * kPi);
        const double pv = rng.uniform(0.0, 2.0 * kPi);
        Eigen::Vector3d dir(0.4 * rng.normal(), 0.4 * rng.normal(), rng.normal());
        dir.normalize();
        const double amplitude = 6.0 * std::pow(0.75, m);
        ShapeVector field(3 * n);
        for (int k = 0; k < n; ++k)
        {
            const double u = family.texture_coords(0, k) / kHalfWidth;
            const double v = family.texture_coords(1, k) / kHalfHeight;
            field.segment<3>(3 * k) = amplitude * std::cos(kPi * fu * u + pu) * std::cos(kPi * fv * v + pv) * dir;
        }
        fields.push_back(std::move(field));
    }
    for (int s = 0; s < shapes; ++s)
    {
        ShapeVector shape = base;
        for (const ShapeVector& f : fields)
        {
            shape += rng.normal() * f;
        }
        family.shapes.push_back(std::move(shape));
    }
    return family;
}

Image render_mesh(const PointSet3d& vertices, const PointSet3d& texture_coords, const std::vector<Triangle>& triangles,
                  int width, int height)
{
    if (vertices.cols() != texture_coords.cols())
    {
        throw InvalidInput("render_mesh: one texture coordinate per vertex is required");
    }
    Image image(width, height, 1, 255);
    std::fill(image.mask.begin(), image.mask.end(), 0);
    std::vector<double> zbuf(static_cast<std::size_t>(width) * height, std::numeric_limits<double>::infinity());
    for (const Triangle& t : triangles)
    {
        const Eigen::Vector3d p1 = vertices.col(t[0]);
        const Eigen::Vector3d p2 = vertices.col(t[1]);
        const Eigen::Vector3d p3 = vertices.col(t[2]);
        const double det = (p2.x() - p1.x()) * (p3.y() - p1.y()) - (p2.y() - p1.y()) * (p3.x() - p1.x());
        if (std::abs(det) <= 1e-12)
        {
            continue;
        }
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({p1.x(), p2.x(), p3.x()}) - 0.5)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({p1.x(), p2.x(), p3.x()}))));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({p1.y(), p2.y(), p3.y()}) - 0.5)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({p1.y(), p2.y(), p3.y()}))));
        for (int y = y0; y <= y1; ++y)
        {
            for (int x = x0; x <= x1; ++x)
            {
                const Barycentric b = barycentric_coords(Eigen::Vector2d(x + 0.5, y + 0.5), p1.head<2>(),
                                                         p2.head<2>(), p3.head<2>());
                if (!b.inside())
                {
                    continue;
                }
                const double z = b.a1 * p1.z() + b.a2 * p2.z() + b.a3 * p3.z();
                const std::size_t i = image.index(x, y);
                if (z >= zbuf[i])
                {
                    continue;
                }
                zbuf[i] = z;
                const Eigen::Vector3d uv = b.a1 * texture_coords.col(t[0]) + b.a2 * texture_coords.col(t[1]) +
                                           b.a3 * texture_coords.col(t[2]);
                image.pixels[i] = static_cast<std::uint8_t>(std::lround(synth_texture(uv.x(), uv.y())));
                image.mask[i] = 1;
            }
        }
    }
    return image;
}

SynthScene synth_scene(const SynthConfig& config)
{
    check_config(config);
    SynthFamily family = synth_family(config.seed, config.vertices, config.shapes, config.modes);

    SynthScene scene;
    scene.model = build_model(family.shapes, 1.0, 1);
    scene.model.triangles = family.triangles;
    scene.model.landmark_indices = family.landmark_indices;
    scene.texture_coords = family.texture_coords;

    Sampler rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    const int K = scene.model.num_modes();
    Embedding s(K);
    for (int k = 0; k < K; ++k)
    {
        s(k) = rng.normal();
    }
    // Uniform radius inside the ellipsoid, bounded away from its boundary.
    const double radius = rng.uniform(0.2, 0.8);
    const double scale = radius / std::max(s.norm(), 1e-12);
    s = scale * s.cwiseProduct(scene.model.eigvals.cwiseSqrt());
    scene.embedding = s;

    const PointSet3d shape = to_points(reconstruct(scene.model, s));
    const Eigen::Vector3d offset = canvas_offset(scene.model, config.image_width, config.image_height);
    const Eigen::Vector3d centre = to_points(scene.model.mean).rowwise().mean();
    const double yaw = config.yaw_degrees * kPi / 180.0;
    const Eigen::Quaterniond q(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()));
    const Eigen::Matrix3d R = q.toRotationMatrix();
    scene.pose = make_transform(1.0, q, Eigen::Vector3d(offset + centre - R * centre));
    const SimilarityTransformd frontal_pose = make_transform(1.0, Eigen::Quaterniond::Identity(), offset);

    const PointSet3d posed = apply_transform(scene.pose, shape);
    const PointSet3d frontal = apply_transform(frontal_pose, shape);
    scene.image = render_mesh(posed, family.texture_coords, family.triangles, config.image_width, config.image_height);
    scene.frontal =
        render_mesh(frontal, family.texture_coords, family.triangles, config.image_width, config.image_height);

    const int J = static_cast<int>(family.landmark_indices.size());
    scene.landmarks.resize(3, J);
    scene.frontal_landmarks.resize(3, J);
    for (int j = 0; j < J; ++j)
    {
        scene.landmarks.col(j) = posed.col(family.landmark_indices[j]);
        scene.frontal_landmarks.col(j) = frontal.col(family.landmark_indices[j]);
    }
    if (config.noise_sigma > 0.0)
    {
        for (int j = 0; j < J; ++j)
        {
            scene.landmarks.col(j) +=
                config.noise_sigma * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
        }
    }
    scene.outliers.assign(J, false);
    const int n_out = static_cast<int>(std::floor(config.outlier_fraction * J + 1e-9));
    std::vector<int> order(J);
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < n_out; ++i)
    {
        const int pick = i + static_cast<int>(std::floor(rng.uniform(0.0, 1.0) * (J - i)));
        std::swap(order[i], order[std::min(pick, J - 1)]);
        const int j = order[i];
        Eigen::Vector3d d(rng.normal(), rng.normal(), rng.normal());
        scene.landmarks.col(j) += rng.uniform(30.0, 60.0) * d.normalized();
        scene.outliers[j] = true;
    }
    return scene;
}

} // namespace rff
