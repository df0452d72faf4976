/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: include/rff/robust_align.hpp
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

#ifndef RFF_ROBUST_ALIGN_HPP
#define RFF_ROBUST_ALIGN_HPP

#include "rff/geometry.hpp"
#include "rff/student_t.hpp"

#include "Eigen/Core"

#include <vector>

namespace rff {

/// Damped Gauss-Newton over the rotation, parameterized by a unit quaternion.
struct RotationSolverConfig
{
    int max_iterations = 100;
    /// Gradient norm, relative to its natural magnitude, at which the solver stops.
    double gradient_tolerance = 1e-10;
};

struct AlignConfig
{
    double eps = 1e-6;
    int max_iterations = 100;
    double mu_init = 1.0;
    RotationSolverConfig rotation;
    /// Absolute eigenvalue floor of the covariance, as a fraction of the target
    /// cloud's mean squared radius. Reaching it in any direction ends the iteration.
    double covariance_floor = 1e-16;
    /// When false, precisions are held at 1 and mu is not updated (Gaussian model).
    bool robust = true;
};

struct AlignResult
{
    SimilarityTransformd transform;
    StudentState student;
    int iterations = 0;
    bool converged = false;
    /// Expected complete-data negative log-likelihood after every M-step.
    std::vector<double> q_trace;
};

/// The rotation solver exhausted its iterations; carries the best rotation found.
class RotationSolverFailure : public Error
{
public:
    RotationSolverFailure(const std::string& what, const Eigen::Quaterniond& best)
        : Error(what), best_rotation(best)
    {
    }
    Eigen::Quaterniond best_rotation;
};

/// align() failed part way; carries the state reached before the failure.
class AlignFailure : public Error
{
public:
    AlignFailure(const std::string& what, AlignResult partial_result)
        : Error(what), partial(std::move(partial_result))
    {
    }
    AlignResult partial;
};

/**
 * Expected complete-data negative log-likelihood,
 * Q = 1/2 sum_j (wbar_j |Z_j - T(X_j)|^2_Sigma + log|Sigma|).
 */
double q_objective(const PointSet3d& X, const PointSet3d& Z, const SimilarityTransformd& transform,
                   const StudentState& state);

/**
 * Minimizes 1/2 sum_j w_j |Zc_j - scale R Xc_j|^2_Sigma over R, starting from
 * \p initial. Xc and Zc are the weighted-centered point sets.
 */
Eigen::Quaterniond solve_rotation(const PointSet3d& Xc, const PointSet3d& Zc, const Eigen::VectorXd& weights,
                                  double scale, const Eigen::Matrix3d& sigma, const Eigen::Quaterniond& initial,
                                  const RotationSolverConfig& config = {});

struct RigidMStep
{
    SimilarityTransformd transform;
    /// Regularized covariance.
    Eigen::Matrix3d sigma;
    /// Weighted residual scatter before regularization.
    Eigen::Matrix3d sigma_raw;
    /// True when some eigenvalue of the scatter fell under the absolute floor.
    bool exact_fit = false;
};

/**
 * One rigid M-step: weighted recentering, scale, rotation (warm-started from
 * \p previous), translation and covariance, in that order.
 *
 * The scale uses the covariance \p sigma and rotation of \p previous; the new
 * covariance uses the updated transform and is divided by J.
 * \p absolute_floor < 0 derives the floor from the spread of Z.
 */
RigidMStep m_step_rigid(const PointSet3d& X, const PointSet3d& Z, const Eigen::VectorXd& wbar,
                        const Eigen::Matrix3d& sigma, const SimilarityTransformd& previous,
                        const RotationSolverConfig& solver = {}, double absolute_floor = -1.0);

/// Absolute covariance floor for a target set, relative_floor times its mean squared radius.
double covariance_floor_for(const PointSet3d& Z, double relative_floor);

/**
 * Largest of the relative parameter changes used as the EM stopping rule:
 * |d scale| / scale, rotation angle, |dt| / (1 + |t|), |dSigma|_F / (1 + |Sigma|_F)
 * and |d mu| / mu.
 */
double parameter_change(const SimilarityTransformd& old_t, const SimilarityTransformd& new_t,
                        const Eigen::Matrix3d& old_sigma, const Eigen::Matrix3d& new_sigma, double old_mu,
                        double new_mu);

/**
 * Robust similarity alignment of X onto Z under Student's t residuals.
 *
 * Initialized with horn_align and the unit-weight covariance. Each iteration
 * runs the E-step, the rigid M-step and the mu update, and stops once
 * parameter_change() <= eps, the fit is exact, or max_iterations is reached.
 */
AlignResult align(const PointSet3d& X, const PointSet3d& Z, const AlignConfig& config = {});

} // namespace rff

#endif // RFF_ROBUST_ALIGN_HPP
