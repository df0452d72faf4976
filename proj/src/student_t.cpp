/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: src/student_t.cpp
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
#include "rff/student_t.hpp"

#include "boost/math/special_functions/digamma.hpp"
#include "boost/math/special_functions/trigamma.hpp"

#include <cmath>
#include <limits>

namespace rff {

Posterior e_step(const PointSet3d& residuals, const Eigen::Matrix3d& sigma, double mu)
{
    if (!(mu > 0.0) || !std::isfinite(mu))
    {
        throw InvalidInput("e_step: mu must be positive and finite");
    }
    const Eigen::Matrix3d reg = regularize_covariance(sigma);
    Eigen::LLT<Eigen::Matrix3d> llt(reg);
    if (llt.info() != Eigen::Success)
    {
        throw SingularCovariance("e_step: covariance is not positive definite");
    }
    const PointSet3d whitened = llt.matrixL().solve(residuals);

    Posterior post;
    post.a = mu + 1.5;
    post.b = 1.0 + 0.5 * whitened.colwise().squaredNorm().transpose().array();
    post.wbar = post.a / post.b.array();
    return post;
}

double digamma(double x)
{
    return boost::math::digamma(x);
}

double digamma_inverse(double y)
{
    if (!std::isfinite(y))
    {
        throw InvalidInput("digamma_inverse: argument must be finite");
    }
    constexpr double euler_gamma = 0.5772156649015329;
    double x = y >= -2.22 ? std::exp(y) + 0.5 : -1.0 / (y + euler_gamma);
    for (int i = 0; i < 30; ++i)
    {
        const double step = (boost::math::digamma(x) - y) / boost::math::trigamma(x);
        double next = x - step;
        // Newton can overshoot past zero from the left branch; halve instead.
        if (!(next > 0.0))
        {
            next = 0.5 * x;
        }
        const bool done = std::abs(next - x) <= 4.0 * std::numeric_limits<double>::epsilon() * next;
        x = next;
        if (done)
        {
            break;
        }
    }
    return x;
}

double update_mu(double a, const Eigen::VectorXd& b)
{
    if (!(a > 0.0))
    {
        throw InvalidInput("update_mu: a must be positive");
    }
    if (b.size() == 0 || (b.array() <= 0.0).any())
    {
        throw InvalidInput("update_mu: b must be a non-empty list of positive values");
    }
    const double mean_log_b = b.array().log().mean();
    return digamma_inverse(boost::math::digamma(a) - mean_log_b);
}

} // namespace rff
