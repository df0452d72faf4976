/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: include/rff/student_t.hpp
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

#ifndef RFF_STUDENT_T_HPP
#define RFF_STUDENT_T_HPP

#include "rff/geometry.hpp"

#include "Eigen/Core"

namespace rff {

/**
 * Parameters of the generalized Student's t residual model and the per-point
 * gamma posteriors of the precisions.
 *
 * The prior rate nu is fixed to 1. After an E-step, a = mu + 3/2, every
 * b_j >= 1 and wbar_j = a / b_j.
 */
struct StudentState
{
    static constexpr double nu = 1.0;

    Eigen::Matrix3d sigma = Eigen::Matrix3d::Identity();
    double mu = 1.0;
    double a = 2.5;
    Eigen::VectorXd b;
    Eigen::VectorXd wbar;
};

struct Posterior
{
    double a = 0.0;
    Eigen::VectorXd b;
    Eigen::VectorXd wbar;
};

/**
 * E-step: posterior gamma parameters of the precision of each residual.
 *
 * a = mu + 3/2, b_j = 1 + |e_j|^2_Sigma / 2, wbar_j = a / b_j. Residuals are
 * the columns of \p residuals.
 */
Posterior e_step(const PointSet3d& residuals, const Eigen::Matrix3d& sigma, double mu);

/// Digamma function.
double digamma(double x);

/**
 * Inverse of the digamma function on (0, inf).
 *
 * Newton iteration started at exp(y) + 1/2 for y >= -2.22 and at
 * -1 / (y + 0.5772157) otherwise.
 */
double digamma_inverse(double y);

/// mu = digamma_inverse(digamma(a) - mean_j log b_j).
double update_mu(double a, const Eigen::VectorXd& b);

} // namespace rff

#endif // RFF_STUDENT_T_HPP
