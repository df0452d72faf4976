/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: tests/test_frontalize.cpp
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
#include "doctest.h"

#include "test_support.hpp"

#include "rff/frontalize.hpp"
#include "rff/synth.hpp"
#include "rff/zncc.hpp"

#include <cmath>
#include <vector>

using namespace rff;
using rff::test::Rng;

namespace {

struct Mesh
{
    PointSet3d vertices;
    std::vector<Triangle> triangles;
};

// Regular nx x ny vertex grid over [x0, x1] x [y0, y1], optionally jittered, z = depth(x, y).
template <typename DepthFn>
Mesh grid_mesh(int nx, int ny, double x0, double x1, double y0, double y1, DepthFn depth, Rng* jitter = nullptr)
{
    Mesh m;
    m.vertices.resize(3, nx * ny);
    const double dx = (x1 - x0) / (nx - 1), dy = (y1 - y0) / (ny - 1);
    for (int j = 0; j < ny; ++j)
    {
        for (int i = 0; i < nx; ++i)
        {
            double x = x0 + i * dx, y = y0 + j * dy;
            if (jitter && i > 0 && j > 0 && i < nx - 1 && j < ny - 1)
            {
                x += test::uniform(*jitter, -0.3, 0.3) * dx;
                y += test::uniform(*jitter, -0.3, 0.3) * dy;
            }
            m.vertices.col(j * nx + i) = Eigen::Vector3d(x, y, depth(x, y));
        }
    }
    for (int j = 0; j + 1 < ny; ++j)
    {
        for (int i = 0; i + 1 < nx; ++i)
        {
            const int a = j * nx + i;
            m.triangles.push_back({a, a + 1, a + nx});
            m.triangles.push_back({a + 1, a + nx + 1, a + nx});
        }
    }
    return m;
}

Image noise_image(Rng& rng, int w, int h, int channels)
{
    Image img(w, h, channels);
    for (auto& p : img.pixels)
    {
        p = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(0, 255)(rng));
    }
    return img;
}

// Depth map covering the whole image at constant depth.
DepthMap plane_depth(int w, int h, double z)
{
    const Mesh m = grid_mesh(2, 2, 0.0, w, 0.0, h, [z](double, double) { return z; });
    GridSpec grid;
    grid.width = w;
    grid.height = h;
    return rasterize_depth(m.vertices, m.triangles, grid);
}

SimilarityTransformd translation(double x, double y)
{
    return make_transform(1.0, Eigen::Quaterniond::Identity(), Eigen::Vector3d(x, y, 0.0));
}

} // namespace

TEST_SUITE("frontalize")
{
    TEST_CASE("barycentric_coords examples")
    {
        const Eigen::Vector2d v1(0, 0), v2(4, 0), v3(0, 3);
        const Barycentric at_vertex = barycentric_coords(v1, v1, v2, v3);
        CHECK(at_vertex.a1 == doctest::Approx(1.0));
        CHECK(std::abs(at_vertex.a2) < 1e-15);
        CHECK(std::abs(at_vertex.a3) < 1e-15);

        const Barycentric centroid = barycentric_coords((v1 + v2 + v3) / 3.0, v1, v2, v3);
        CHECK(centroid.a1 == doctest::Approx(1.0 / 3.0));
        CHECK(centroid.a2 == doctest::Approx(1.0 / 3.0));
        CHECK(centroid.a3 == doctest::Approx(1.0 / 3.0));

        const Barycentric outside = barycentric_coords(Eigen::Vector2d(5, 5), v1, v2, v3);
        CHECK(std::min({outside.a1, outside.a2, outside.a3}) < 0.0);
        CHECK_FALSE(outside.inside());

        CHECK_THROWS_AS(barycentric_coords(Eigen::Vector2d(1, 1), v1, v2, Eigen::Vector2d(8, 0)),
                        DegenerateConfiguration);
    }

    TEST_CASE("barycentric_coords reconstruct the query point")
    {
        Rng rng(81);
        for (int trial = 0; trial < 500; ++trial)
        {
            const Eigen::Vector2d v1 = 100.0 * Eigen::Vector2d::Random(), v2 = 100.0 * Eigen::Vector2d::Random(),
                                  v3 = 100.0 * Eigen::Vector2d::Random();
            if (std::abs((v2 - v1).x() * (v3 - v1).y() - (v2 - v1).y() * (v3 - v1).x()) < 1.0)
            {
                continue;
            }
            const double r1 = test::uniform(rng, 0, 1), r2 = test::uniform(rng, 0, 1 - r1);
            const Eigen::Vector2d p = r1 * v1 + r2 * v2 + (1 - r1 - r2) * v3;
            const Barycentric b = barycentric_coords(p, v1, v2, v3);
            CHECK(b.inside(1e-9));
            CHECK(std::abs(b.a1 + b.a2 + b.a3 - 1.0) < 1e-12);
            CHECK((b.a1 * v1 + b.a2 * v2 + b.a3 * v3 - p).norm() < 1e-9);
        }
    }

    TEST_CASE("rasterize_depth constant plane")
    {
        PointSet3d V(3, 3);
        V << 2, 30, 5, 3, 8, 25, 0, 0, 0;
        const DepthMap d = rasterize_depth(V, {{0, 1, 2}});
        int covered = 0;
        for (std::size_t i = 0; i < d.depth.size(); ++i)
        {
            if (d.occupied[i])
            {
                ++covered;
                CHECK(d.depth[i] == 0.0);
            }
        }
        CHECK(covered > 100);
        CHECK(d.x0 == 2);
        CHECK(d.y0 == 3);
    }

    TEST_CASE("rasterize_depth reproduces affine depth")
    {
        Rng rng(82);
        for (int trial = 0; trial < 5; ++trial)
        {
            const double a = test::normal(rng), b = test::normal(rng), c = 100.0 * test::normal(rng);
            const auto fn = [&](double x, double y) { return a * x + b * y + c; };
            const Mesh m = grid_mesh(17, 13, 0.0, 256.0, 0.0, 256.0, fn, &rng);
            for (int f : {1, 2})
            {
                GridSpec grid;
                grid.supersample = f;
                grid.width = 256;
                grid.height = 256;
                const DepthMap d = rasterize_depth(m.vertices, m.triangles, grid);
                int covered = 0;
                double worst = 0.0;
                for (int v = 0; v < d.samples_y(); ++v)
                {
                    for (int u = 0; u < d.samples_x(); ++u)
                    {
                        if (!d.occupied[d.index(u, v)])
                        {
                            continue;
                        }
                        ++covered;
                        const Eigen::Vector2d p = d.sample_position(u, v);
                        worst = std::max(worst, std::abs(d.depth[d.index(u, v)] - fn(p.x(), p.y())));
                    }
                }
                CHECK(covered == d.samples_x() * d.samples_y());
                CHECK(worst <= 1e-9);
            }
        }
    }

    TEST_CASE("rasterize_depth keeps the nearest surface")
    {
        PointSet3d V(3, 6);
        V << 0, 20, 0, 5, 25, 5,
             0, 0, 20, 5, 5, 25,
             2, 2, 2, 1, 1, 1;
        const DepthMap d = rasterize_depth(V, {{0, 1, 2}, {3, 4, 5}});
        const DepthMap reversed = rasterize_depth(V, {{3, 4, 5}, {0, 1, 2}});
        CHECK(d.depth == reversed.depth);
        bool saw_overlap = false, saw_far = false;
        for (int v = 0; v < d.samples_y(); ++v)
        {
            for (int u = 0; u < d.samples_x(); ++u)
            {
                const Eigen::Vector2d p = d.sample_position(u, v);
                const bool in_far = barycentric_coords(p, V.col(0).head<2>(), V.col(1).head<2>(), V.col(2).head<2>()).inside();
                const bool in_near = barycentric_coords(p, V.col(3).head<2>(), V.col(4).head<2>(), V.col(5).head<2>()).inside();
                if (in_far && in_near)
                {
                    saw_overlap = true;
                    CHECK(d.depth[d.index(u, v)] == doctest::Approx(1.0).epsilon(1e-12));
                } else if (in_far)
                {
                    saw_far = true;
                    CHECK(d.depth[d.index(u, v)] == doctest::Approx(2.0).epsilon(1e-12));
                }
            }
        }
        CHECK(saw_overlap);
        CHECK(saw_far);
    }

    TEST_CASE("rasterize_depth errors")
    {
        PointSet3d V(3, 3);
        V << 0, 1, 2, 0, 1, 2, 0, 0, 0;
        CHECK_THROWS_AS(rasterize_depth(V, {{0, 1, 2}}), DegenerateConfiguration);
        CHECK_THROWS(rasterize_depth(V, {{0, 1, 3}}));
    }

    TEST_CASE("frontalize_landmarks is the forward pose")
    {
        Rng rng(83);
        const PointSet3d X = 40.0 * test::random_cloud(rng, 68);
        CHECK(frontalize_landmarks(X, SimilarityTransformd::identity()) == X);
        const auto T = test::random_transform(rng);
        CHECK(frontalize_landmarks(X, T) == apply_transform(T, X));
        const Eigen::Matrix3d sR = T.scale * T.rotation.toRotationMatrix();
        for (int j = 0; j < 68; ++j)
        {
            CHECK((frontalize_landmarks(X, T).col(j) - (sR * X.col(j) + T.translation)).norm() < 1e-12 * (1.0 + X.col(j).norm()));
        }
    }

    TEST_CASE("identity warp is exact")
    {
        Rng rng(84);
        for (int channels : {1, 3})
        {
            const Image input = noise_image(rng, 64, 48, channels);
            const Image out = warp(input, plane_depth(64, 48, 7.0), SimilarityTransformd::identity());
            CHECK(out == input);
        }
    }

    TEST_CASE("translated warp shifts pixels")
    {
        Rng rng(85);
        const Image input = noise_image(rng, 60, 50, 1);
        const Image out = warp(input, plane_depth(60, 50, 0.0), translation(3, 5));
        for (int y = 0; y < 50; ++y)
        {
            for (int x = 0; x < 60; ++x)
            {
                if (x + 3 < 60 && y + 5 < 50)
                {
                    REQUIRE(out.valid(x, y));
                    CHECK(out.at(x, y) == input.at(x + 3, y + 5));
                } else
                {
                    CHECK_FALSE(out.valid(x, y));
                    CHECK(out.at(x, y) == 255);
                }
            }
        }
    }

    TEST_CASE("warp masks unoccupied and invalid sources")
    {
        Rng rng(86);
        Image input = noise_image(rng, 40, 40, 1);
        input.invalidate(10, 10);
        const Image out = warp(input, plane_depth(40, 40, 0.0), SimilarityTransformd::identity());
        CHECK_FALSE(out.valid(10, 10));

        const Image far = warp(input, plane_depth(40, 40, 0.0), translation(500, 0));
        CHECK(std::count(far.mask.begin(), far.mask.end(), 0) == 40 * 40);
    }

    TEST_CASE("warp supersampling averages sub-samples")
    {
        Image input(8, 8, 1);
        for (int y = 0; y < 8; ++y)
        {
            for (int x = 0; x < 8; ++x)
            {
                input.at(x, y) = static_cast<std::uint8_t>(x % 2 == 0 ? 0 : 200);
            }
        }
        // Frontal pixels twice the size of input pixels.
        const Mesh m = grid_mesh(2, 2, 0.0, 4.0, 0.0, 4.0, [](double, double) { return 0.0; });
        GridSpec grid;
        grid.supersample = 2;
        grid.width = 4;
        grid.height = 4;
        const DepthMap d = rasterize_depth(m.vertices, m.triangles, grid);
        WarpOptions opts;
        opts.output_width = 4;
        opts.output_height = 4;
        const Image out = warp(input, d, make_transform(2.0, Eigen::Quaterniond::Identity(), Eigen::Vector3d(Eigen::Vector3d::Zero())), opts);
        for (int y = 0; y < 4; ++y)
        {
            for (int x = 0; x < 4; ++x)
            {
                CHECK(out.valid(x, y));
                CHECK(out.at(x, y) == 100);
            }
        }
    }

    TEST_CASE("warp hides self-occluded surface")
    {
        // A ridge whose left flank turns away from the camera after a 45 degree yaw.
        const Mesh m = grid_mesh(41, 41, 30.0, 70.0, 30.0, 70.0, [](double x, double) { return 2.0 * std::abs(x - 50.0); });
        GridSpec grid;
        grid.x0 = 0;
        grid.y0 = 0;
        grid.width = 100;
        grid.height = 100;
        const DepthMap d = rasterize_depth(m.vertices, m.triangles, grid);
        const Eigen::Quaterniond yaw(Eigen::AngleAxisd(EIGEN_PI / 4, Eigen::Vector3d::UnitY()));
        const Eigen::Vector3d c(50, 50, 0);
        const auto T = make_transform(1.0, yaw, Eigen::Vector3d(c - yaw * c));
        const Image input(100, 100, 1, 128);

        const auto valid_fraction = [](const Image& img, int x_lo, int x_hi) {
            int valid = 0, total = 0;
            for (int y = 32; y < 68; ++y)
            {
                for (int x = x_lo; x < x_hi; ++x)
                {
                    valid += img.valid(x, y);
                    ++total;
                }
            }
            return static_cast<double>(valid) / total;
        };

        WarpOptions opts;
        const Image with = warp(input, d, T, opts);
        opts.occlusion = false;
        const Image without = warp(input, d, T, opts);
        CHECK(valid_fraction(with, 32, 48) < 0.05);
        CHECK(valid_fraction(with, 52, 68) > 0.99);
        CHECK(valid_fraction(without, 32, 48) > 0.99);
        CHECK(valid_fraction(without, 52, 68) > 0.99);
    }

    TEST_CASE("bilinear warp interpolates")
    {
        Image input(4, 1, 1);
        input.at(0, 0) = 0;
        input.at(1, 0) = 100;
        input.at(2, 0) = 200;
        input.at(3, 0) = 250;
        WarpOptions opts;
        opts.bilinear = true;
        const Image out = warp(input, plane_depth(4, 1, 0.0), translation(0.5, 0.0), opts);
        CHECK(out.at(0, 0) == 50);
        CHECK(out.at(1, 0) == 150);
        CHECK(out.at(2, 0) == 225);
    }

    TEST_CASE("soft_symmetry_fill")
    {
        Rng rng(87);
        const Image full = noise_image(rng, 10, 4, 1);
        CHECK(soft_symmetry_fill(full, 5.0) == full);

        Image half = full;
        for (int y = 0; y < 4; ++y)
        {
            for (int x = 0; x < 5; ++x)
            {
                half.invalidate(x, y);
            }
        }
        const Image filled = soft_symmetry_fill(half, 5.0);
        CHECK(filled.all_valid());
        for (int y = 0; y < 4; ++y)
        {
            for (int x = 0; x < 5; ++x)
            {
                CHECK(filled.at(x, y) == full.at(9 - x, y));
            }
            for (int x = 5; x < 10; ++x)
            {
                CHECK(filled.at(x, y) == full.at(x, y));
            }
        }

        Image both = full;
        both.invalidate(2, 1);
        both.invalidate(7, 1);
        const Image still = soft_symmetry_fill(both, 5.0);
        CHECK_FALSE(still.valid(2, 1));
        CHECK_FALSE(still.valid(7, 1));

        // Odd axis: pixel x mirrors onto 2 axis - 1 - x.
        Image odd = full;
        odd.invalidate(1, 0);
        CHECK(soft_symmetry_fill(odd, 3.5).at(1, 0) == full.at(5, 0));
    }

    TEST_CASE("soft_symmetry_fill is idempotent")
    {
        Rng rng(88);
        for (int trial = 0; trial < 50; ++trial)
        {
            Image img = noise_image(rng, 21, 9, trial % 2 == 0 ? 1 : 3);
            for (int k = 0; k < 80; ++k)
            {
                img.invalidate(std::uniform_int_distribution<int>(0, 20)(rng), std::uniform_int_distribution<int>(0, 8)(rng));
            }
            const double axis = test::uniform(rng, 3.0, 18.0);
            const Image once = soft_symmetry_fill(img, axis);
            CHECK(soft_symmetry_fill(once, axis) == once);
        }
    }

    TEST_CASE("pipeline on a frontal scene reproduces the input")
    {
        SynthConfig cfg;
        cfg.seed = 3;
        const SynthScene scene = synth_scene(cfg);
        const PipelineResult r = run_pipeline(scene.image, scene.landmarks, scene.model);
        CHECK(std::abs(r.yaw_degrees) < 0.5);
        const Region mouth = mouth_region(scene.frontal_landmarks, kDefaultMouthMargin, scene.frontal.width,
                                          scene.frontal.height);
        CHECK(zncc_search(r.frontal, scene.image, mouth, 2).coefficient >= 0.999);
        Region face{scene.image.width / 2, scene.image.height / 2, 40, 50};
        CHECK(zncc_search(r.frontal, scene.image, face, 2).coefficient >= 0.999);
    }

    TEST_CASE("pipeline yaw estimate")
    {
        for (double yaw : {-30.0, 15.0, 30.0})
        {
            SynthConfig cfg;
            cfg.seed = 11;
            cfg.yaw_degrees = yaw;
            const SynthScene scene = synth_scene(cfg);
            const PipelineResult r = run_pipeline(scene.image, scene.landmarks, scene.model);
            CAPTURE(yaw);
            CHECK(std::abs(r.yaw_degrees - yaw) < 0.5);
            CHECK(r.frontal.width == scene.image.width);
            CHECK(r.frontal.height == scene.image.height);
        }
    }

    TEST_CASE("pipeline soft symmetry fills occluded pixels")
    {
        SynthConfig cfg;
        cfg.seed = 5;
        cfg.yaw_degrees = 40.0;
        const SynthScene scene = synth_scene(cfg);
        PipelineConfig pc;
        const PipelineResult plain = run_pipeline(scene.image, scene.landmarks, scene.model, pc);
        pc.soft_symmetry = true;
        const PipelineResult sym = run_pipeline(scene.image, scene.landmarks, scene.model, pc);
        const auto valid = [](const Image& img) { return std::count(img.mask.begin(), img.mask.end(), 1); };
        CHECK(valid(sym.frontal) >= valid(plain.frontal));
    }

    TEST_CASE("pipeline rejects collinear landmarks")
    {
        SynthConfig cfg;
        const SynthScene scene = synth_scene(cfg);
        PointSet3d line(3, 68);
        for (int j = 0; j < 68; ++j)
        {
            line.col(j) = Eigen::Vector3d(j, 2.0 * j, 0.5 * j);
        }
        CHECK_THROWS_AS(run_pipeline(scene.image, line, scene.model), DegenerateConfiguration);
        CHECK_THROWS_AS(run_pipeline(scene.image, line.leftCols(50), scene.model), InvalidInput);
    }
}
