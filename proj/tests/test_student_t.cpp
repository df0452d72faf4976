/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: tests/test_student_t.cpp
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

#include "rff/student_t.hpp"

#include <cmath>
#include <utility>
#include <vector>

using namespace rff;
using rff::test::Rng;

namespace {

// Reference values computed with 30-digit arbitrary precision arithmetic.
const std::vector<std::pair<double, double>> kDigamma = {
    {0.01, -100.5608854578686745},  {0.5, -1.9635100260214234794}, {1.0, -0.57721566490153286061},
    {1.5, 0.036489973978576520559}, {2.5, 0.70315664064524318723}, {5.0, 1.5061176684318004727},
    {10.0, 2.2517525890667211076},  {100.0, 4.6001618527380874002},
};

const std::vector<std::pair<double, double>> kDigammaInverse = {
    {-100.0, 0.010056395666750782055}, {-3.0, 0.34689442704939512007}, {-0.5, 1.0485950238632297992},
    {0.0, 1.4616321449683623413},      {1.0, 3.2031714683769310693},   {4.5, 90.516668432091979849},
};

// Root of digamma(x) = y by bisection on log x; digamma is increasing on (0, inf).
double bisect_digamma(double y)
{
    double lo = std::log(1e-9), hi = std::log(1e9);
    for (int i = 0; i < 200; ++i)
    {
        const double mid = 0.5 * (lo + hi);
        (digamma(std::exp(mid)) < y ? lo : hi) = mid;
    }
    return std::exp(0.5 * (lo + hi));
}

} // namespace

TEST_SUITE("student_t")
{
    TEST_CASE("digamma reference values")
    {
        for (const auto& [x, psi] : kDigamma)
        {
            CAPTURE(x);
            CHECK(digamma(x) == doctest::Approx(psi).epsilon(1e-14));
        }
    }

    TEST_CASE("digamma_inverse reference values")
    {
        for (const auto& [y, x] : kDigammaInverse)
        {
            CAPTURE(y);
            CHECK(digamma_inverse(y) == doctest::Approx(x).epsilon(1e-12));
        }
    }

    TEST_CASE("digamma_inverse examples")
    {
        CHECK(std::abs(digamma_inverse(-0.5772156649015329) - 1.0) < 1e-8);
        CHECK(std::abs(digamma_inverse(digamma(5.0)) - 5.0) < 1e-8);
        const double root = digamma_inverse(3.0);
        CHECK(std::abs(root - bisect_digamma(3.0)) < 1e-10);
        CHECK(std::abs(root - (std::exp(3.0) + 0.5)) < 0.1);
    }

    TEST_CASE("digamma_inverse round trip on a log grid")
    {
        for (int i = 0; i <= 400; ++i)
        {
            const double x = std::pow(10.0, -2.0 + 4.0 * i / 400.0);
            CAPTURE(x);
            CHECK(std::abs(digamma_inverse(digamma(x)) - x) <= 1e-8 * x);
        }
    }

    TEST_CASE("digamma_inverse matches bisection")
    {
        for (double y = -50.0; y <= 8.0; y += 0.73)
        {
            CAPTURE(y);
            const double oracle = bisect_digamma(y);
            CHECK(std::abs(digamma_inverse(y) - oracle) <= 1e-10 * std::max(1.0, oracle));
        }
    }

    TEST_CASE("e_step examples")
    {
        PointSet3d e(3, 1);
        e << 0, 0, 0;
        auto p = e_step(e, Eigen::Matrix3d::Identity(), 1.0);
        CHECK(p.a == doctest::Approx(2.5));
        CHECK(p.b(0) == doctest::Approx(1.0));
        CHECK(p.wbar(0) == doctest::Approx(2.5));

        e << 1, 1, 0;
        p = e_step(e, Eigen::Matrix3d::Identity(), 1.0);
        CHECK(p.b(0) == doctest::Approx(2.0));
        CHECK(p.wbar(0) == doctest::Approx(1.25));

        e << 0, 2, 0;
        p = e_step(e, Eigen::Vector3d(1, 4, 1).asDiagonal(), 2.0);
        CHECK(p.a == doctest::Approx(3.5));
        CHECK(p.b(0) == doctest::Approx(1.5));
        CHECK(p.wbar(0) == doctest::Approx(3.5 / 1.5));
    }

    TEST_CASE("e_step matches the explicit inverse formula")
    {
        Rng rng(21);
        for (int trial = 0; trial < 50; ++trial)
        {
            Eigen::Matrix3d A = Eigen::Matrix3d::NullaryExpr([&]() { return test::normal(rng); });
            const Eigen::Matrix3d sigma = A * A.transpose() + 0.5 * Eigen::Matrix3d::Identity();
            const double mu = test::uniform(rng, 0.1, 20.0);
            const PointSet3d E = test::random_cloud(rng, 15);
            const auto p = e_step(E, sigma, mu);
            const Eigen::Matrix3d inv = sigma.inverse();
            CHECK(p.a == doctest::Approx(mu + 1.5));
            for (int j = 0; j < E.cols(); ++j)
            {
                const double b = 1.0 + 0.5 * E.col(j).dot(inv * E.col(j));
                CHECK(p.b(j) == doctest::Approx(b).epsilon(1e-12));
                CHECK(p.wbar(j) == doctest::Approx((mu + 1.5) / b).epsilon(1e-12));
            }
        }
    }

    TEST_CASE("e_step weights decrease with the residual")
    {
        PointSet3d E(3, 5);
        for (int j = 0; j < 5; ++j)
        {
            E.col(j) = Eigen::Vector3d(j * j, 0.5 * j, 0);
        }
        const auto p = e_step(E, Eigen::Matrix3d::Identity(), 1.0);
        for (int j = 1; j < 5; ++j)
        {
            CHECK(p.wbar(j) < p.wbar(j - 1));
        }
    }

    TEST_CASE("e_step rejects a singular covariance")
    {
        CHECK_THROWS_AS(e_step(PointSet3d::Zero(3, 2), Eigen::Matrix3d::Zero(), 1.0), SingularCovariance);
    }

    TEST_CASE("update_mu examples")
    {
        CHECK(update_mu(2.5, Eigen::VectorXd::Ones(7)) == doctest::Approx(2.5).epsilon(1e-10));

        Eigen::VectorXd b(2);
        b << 1.0, std::exp(2.0);
        CHECK(update_mu(2.5, b) == doctest::Approx(digamma_inverse(digamma(2.5) - 1.0)).epsilon(1e-12));

        Eigen::VectorXd single(1);
        single << std::exp(digamma(3.7) - digamma(1.0));
        CHECK(update_mu(3.7, single) == doctest::Approx(1.0).epsilon(1e-9));
    }
}
