/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: tests/test_robust_align.cpp
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

#include "rff/robust_align.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

using namespace rff;
using rff::test::Rng;

namespace {

// Independent summation: 1/2 sum_j w_j e_j^T Sigma^-1 e_j + J/2 log det Sigma.
double q_oracle(const PointSet3d& X, const PointSet3d& Z, const SimilarityTransformd& T, const StudentState& s)
{
    const Eigen::Matrix3d inv = s.sigma.inverse();
    const Eigen::Matrix3d sR = T.scale * T.rotation.toRotationMatrix();
    double sum = 0.0;
    for (int j = 0; j < X.cols(); ++j)
    {
        const Eigen::Vector3d e = Z.col(j) - sR * X.col(j) - T.translation;
        sum += s.wbar(j) * e.dot(inv * e);
    }
    return 0.5 * sum + 0.5 * static_cast<double>(X.cols()) * std::log(s.sigma.determinant());
}

StudentState unit_state(int n)
{
    StudentState s;
    s.wbar = Eigen::VectorXd::Ones(n);
    s.b = Eigen::VectorXd::Ones(n);
    return s;
}

struct OutlierScene
{
    PointSet3d X;
    PointSet3d Z;
    SimilarityTransformd truth;
    std::vector<int> outliers;
};

OutlierScene outlier_scene(Rng& rng, int J, int n_outliers, double factor)
{
    OutlierScene sc;
    sc.X = test::random_cloud(rng, J);
    sc.truth = test::random_transform(rng);
    sc.Z = apply_transform(sc.truth, sc.X);
    const double radius = test::cloud_radius(sc.Z);
    std::vector<int> idx(J);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    sc.outliers.assign(idx.begin(), idx.begin() + n_outliers);
    for (int j : sc.outliers)
    {
        sc.Z.col(j) += factor * radius * test::random_vector(rng).normalized();
    }
    return sc;
}

} // namespace

TEST_SUITE("robust_align")
{
    TEST_CASE("q_objective examples")
    {
        Rng rng(31);
        const PointSet3d X = test::random_cloud(rng, 10);
        CHECK(q_objective(X, X, SimilarityTransformd::identity(), unit_state(10)) == doctest::Approx(0.0));

        PointSet3d x0 = PointSet3d::Zero(3, 1), z1(3, 1);
        z1 << 1, 0, 0;
        CHECK(q_objective(x0, z1, SimilarityTransformd::identity(), unit_state(1)) == doctest::Approx(0.5));
    }

    TEST_CASE("q_objective matches brute-force summation")
    {
        Rng rng(32);
        for (int trial = 0; trial < 50; ++trial)
        {
            const PointSet3d X = test::random_cloud(rng, 20);
            const PointSet3d Z = test::random_cloud(rng, 20);
            StudentState s = unit_state(20);
            for (int j = 0; j < 20; ++j)
            {
                s.wbar(j) = test::uniform(rng, 0.1, 3.0);
            }
            Eigen::Matrix3d A = Eigen::Matrix3d::NullaryExpr([&]() { return test::normal(rng); });
            s.sigma = A * A.transpose() + 0.2 * Eigen::Matrix3d::Identity();
            const auto T = test::random_transform(rng);
            const double oracle = q_oracle(X, Z, T, s);
            CHECK(std::abs(q_objective(X, Z, T, s) - oracle) <= 1e-12 * std::max(1.0, std::abs(oracle)));
        }
    }

    TEST_CASE("m_step_rigid pure scaling")
    {
        PointSet3d X(3, 3);
        X << 1, -1, 0, 0, 0, 1, 0, 0, 0;
        // Centre it so that the weighted centroid is the origin.
        X = X.colwise() - X.rowwise().mean();
        const PointSet3d Z = 2.0 * X;
        const auto m = m_step_rigid(X, Z, Eigen::VectorXd::Ones(3), Eigen::Matrix3d::Identity(),
                                    SimilarityTransformd::identity());
        CHECK(m.transform.scale == doctest::Approx(2.0));
        CHECK(rotation_angle_between(m.transform.rotation, Eigen::Quaterniond::Identity()) < 1e-9);
    }

    TEST_CASE("m_step_rigid rotation agrees with Horn for isotropic covariance")
    {
        Rng rng(33);
        const PointSet3d X = test::random_cloud(rng, 15);
        const Eigen::Quaterniond rz(Eigen::AngleAxisd(EIGEN_PI / 2, Eigen::Vector3d::UnitZ()));
        PointSet3d Z = rz.toRotationMatrix() * X;
        Z += 0.05 * PointSet3d::NullaryExpr(3, 15, [&]() { return test::normal(rng); });
        const auto horn = horn_align<double>(X, Z);
        const auto m = m_step_rigid(X, Z, Eigen::VectorXd::Ones(15), 0.7 * Eigen::Matrix3d::Identity(),
                                    SimilarityTransformd::identity());
        CHECK(rotation_angle_between(m.transform.rotation, horn.rotation) < 1e-6);
    }

    TEST_CASE("m_step_rigid noiseless covariance vanishes before flooring")
    {
        Rng rng(34);
        const PointSet3d X = test::random_cloud(rng, 20);
        const auto T = test::random_transform(rng);
        const PointSet3d Z = apply_transform(T, X);
        const auto m = m_step_rigid(X, Z, Eigen::VectorXd::Ones(20), Eigen::Matrix3d::Identity(), T);
        CHECK(m.sigma_raw.cwiseAbs().maxCoeff() < 1e-20);
        CHECK(m.exact_fit);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(m.sigma);
        CHECK(eig.eigenvalues().minCoeff() > 0.0);
    }

    TEST_CASE("m_step_rigid never increases the objective for fixed weights")
    {
        Rng rng(35);
        for (int trial = 0; trial < 50; ++trial)
        {
            const PointSet3d X = test::random_cloud(rng, 30);
            PointSet3d Z = apply_transform(test::random_transform(rng), X);
            Z += 0.1 * PointSet3d::NullaryExpr(3, 30, [&]() { return test::normal(rng); });
            StudentState s = unit_state(30);
            for (int j = 0; j < 30; ++j)
            {
                s.wbar(j) = test::uniform(rng, 0.2, 2.0);
            }
            s.sigma = Eigen::Vector3d(0.3, 0.5, 0.8).asDiagonal();
            const auto start = horn_align<double>(X, Z);
            const double before = q_objective(X, Z, start, s);
            const auto m = m_step_rigid(X, Z, s.wbar, s.sigma, start);
            StudentState after = s;
            after.sigma = m.sigma;
            CHECK(q_objective(X, Z, m.transform, after) <= before + 1e-9);
        }
    }

    TEST_CASE("solve_rotation reports failure with its best iterate")
    {
        Rng rng(36);
        const PointSet3d X = test::random_cloud(rng, 10);
        const Eigen::Quaterniond q(Eigen::AngleAxisd(1.0, Eigen::Vector3d::UnitY()));
        const PointSet3d Z = q.toRotationMatrix() * X;
        RotationSolverConfig cfg;
        cfg.max_iterations = 0;
        try
        {
            solve_rotation(X, Z, Eigen::VectorXd::Ones(10), 1.0, Eigen::Matrix3d::Identity(),
                           Eigen::Quaterniond::Identity(), cfg);
            FAIL("expected RotationSolverFailure");
        } catch (const RotationSolverFailure& e)
        {
            CHECK(e.best_rotation.isApprox(Eigen::Quaterniond::Identity()));
        }
    }

    TEST_CASE("align on identical sets")
    {
        Rng rng(37);
        const PointSet3d X = test::random_cloud(rng, 68);
        const auto r = align(X, X);
        CHECK(r.converged);
        CHECK(r.iterations <= 2);
        CHECK(std::abs(r.transform.scale - 1.0) < 1e-10);
        CHECK(rotation_angle_between(r.transform.rotation, Eigen::Quaterniond::Identity()) < 1e-10);
        CHECK(r.transform.translation.norm() < 1e-10);
        CHECK((r.student.wbar.array() - r.student.wbar(0)).abs().maxCoeff() <= 1e-9 * r.student.wbar(0));
    }

    TEST_CASE("align recovers noiseless transforms")
    {
        Rng rng(38);
        for (int trial = 0; trial < 30; ++trial)
        {
            const PointSet3d X = test::random_cloud(rng, 68);
            const auto T = test::random_transform(rng);
            const PointSet3d Z = apply_transform(T, X);
            const auto r = align(X, Z);
            CHECK(r.converged);
            CHECK(std::abs(r.transform.scale - T.scale) / T.scale < 1e-6);
            CHECK(rotation_angle_between(r.transform.rotation, T.rotation) < 1e-6);
            CHECK((r.transform.translation - T.translation).norm() < 1e-6 * test::cloud_radius(Z));
        }
    }

    TEST_CASE("align resists gross outliers")
    {
        Rng rng(39);
        for (int trial = 0; trial < 20; ++trial)
        {
            const auto sc = outlier_scene(rng, 68, 6, 50.0);
            const auto r = align(sc.X, sc.Z);
            CHECK(rotation_angle_between(r.transform.rotation, sc.truth.rotation) < EIGEN_PI / 180.0);
            CHECK(std::abs(r.transform.scale - sc.truth.scale) / sc.truth.scale < 0.01);

            // The outliers carry the smallest weights.
            std::vector<double> w(r.student.wbar.data(), r.student.wbar.data() + 68);
            std::nth_element(w.begin(), w.begin() + 5, w.end());
            for (int j : sc.outliers)
            {
                CHECK(r.student.wbar(j) <= w[5]);
            }
        }
    }

    TEST_CASE("align q_trace is non-increasing")
    {
        Rng rng(40);
        for (int trial = 0; trial < 30; ++trial)
        {
            // Noiseless, or noisy with gross outliers.
            auto sc = outlier_scene(rng, 68, trial % 3 == 0 ? 0 : 6, 20.0);
            if (trial % 3 != 0)
            {
                sc.Z += 0.01 * PointSet3d::NullaryExpr(3, 68, [&]() { return test::normal(rng); });
            }
            const auto r = align(sc.X, sc.Z);
            REQUIRE(static_cast<int>(r.q_trace.size()) == r.iterations);
            for (std::size_t k = 1; k < r.q_trace.size(); ++k)
            {
                CHECK(r.q_trace[k] <= r.q_trace[k - 1] + 1e-9);
            }
        }
    }

    TEST_CASE("m_step_rigid reduces to Horn for isotropic covariance and uniform weights")
    {
        Rng rng(45);
        for (int trial = 0; trial < 30; ++trial)
        {
            const PointSet3d X = test::random_cloud(rng, 30);
            PointSet3d Z = apply_transform(test::random_transform(rng), X);
            Z += 0.3 * PointSet3d::NullaryExpr(3, 30, [&]() { return test::normal(rng); });
            const auto horn = horn_align<double>(X, Z);
            const double var = test::uniform(rng, 0.1, 4.0);
            const auto m = m_step_rigid(X, Z, Eigen::VectorXd::Ones(30), var * Eigen::Matrix3d::Identity(),
                                        SimilarityTransformd::identity());
            CHECK(std::abs(m.transform.scale - horn.scale) < 1e-8 * horn.scale);
            CHECK(rotation_angle_between(m.transform.rotation, horn.rotation) < 1e-8);
            CHECK((m.transform.translation - horn.translation).norm() < 1e-8 * (1.0 + horn.translation.norm()));
        }
    }

    TEST_CASE("align with robust off matches Horn with isotropic residuals")
    {
        Rng rng(41);
        const PointSet3d X = test::random_cloud(rng, 40);
        PointSet3d Z = apply_transform(test::random_transform(rng), X);
        Z += 0.05 * PointSet3d::NullaryExpr(3, 40, [&]() { return test::normal(rng); });
        AlignConfig cfg;
        cfg.robust = false;
        const auto r = align(X, Z, cfg);
        CHECK((r.student.wbar.array() == 1.0).all());
        CHECK(r.student.mu == cfg.mu_init);
    }

    TEST_CASE("parameter_change is zero for identical states")
    {
        Rng rng(42);
        const auto T = test::random_transform(rng);
        CHECK(parameter_change(T, T, Eigen::Matrix3d::Identity(), Eigen::Matrix3d::Identity(), 2.0, 2.0) == 0.0);
        auto U = T;
        U.scale *= 1.5;
        CHECK(parameter_change(T, U, Eigen::Matrix3d::Identity(), Eigen::Matrix3d::Identity(), 2.0, 2.0) > 0.3);
    }

    TEST_CASE("align input errors")
    {
        Rng rng(43);
        const PointSet3d X = test::random_cloud(rng, 10);
        CHECK_THROWS_AS(align(X, X.leftCols(9)), InvalidInput);
        CHECK_THROWS_AS(align(X.leftCols(3), X.leftCols(3)), DegenerateConfiguration);
        PointSet3d line(3, 6);
        for (int j = 0; j < 6; ++j)
        {
            line.col(j) = Eigen::Vector3d(j, j, j);
        }
        CHECK_THROWS_AS(align(line, line), DegenerateConfiguration);
        AlignConfig bad;
        bad.eps = 0.0;
        CHECK_THROWS_AS(align(X, X, bad), InvalidInput);
        PointSet3d nan = X;
        nan(0, 0) = std::nan("");
        CHECK_THROWS_AS(align(nan, X), InvalidInput);
    }

    TEST_CASE("align surfaces solver failure with a partial result")
    {
        Rng rng(44);
        const PointSet3d X = test::random_cloud(rng, 20);
        PointSet3d Z = apply_transform(test::random_transform(rng), X);
        Z += 0.1 * PointSet3d::NullaryExpr(3, 20, [&]() { return test::normal(rng); });
        AlignConfig cfg;
        cfg.rotation.max_iterations = 0;
        try
        {
            align(X, Z, cfg);
            FAIL("expected AlignFailure");
        } catch (const AlignFailure& e)
        {
            CHECK(e.partial.iterations == 0);
            CHECK(e.partial.student.wbar.size() == 20);
        }
    }
}
