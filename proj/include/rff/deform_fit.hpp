/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: include/rff/deform_fit.hpp
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

#ifndef RFF_DEFORM_FIT_HPP
#define RFF_DEFORM_FIT_HPP

#include "rff/robust_align.hpp"
#include "rff/shape_model.hpp"

#include "Eigen/Core"

#include <string>
#include <vector>

namespace rff {

struct FitConfig
{
    /// Weight of the ellipsoid penalty eta/2 s^T Lambda^{-1} s.
    double eta = 1.0;
    AlignConfig align;
};

struct FitResult
{
    SimilarityTransformd transform;
    Embedding embedding;
    StudentState student;
    int iterations = 0;
    bool converged = false;
    std::vector<double> q_trace;
    /// Non-fatal diagnostics, e.g. an embedding outside the confidence ellipsoid.
    std::vector<std::string> warnings;
};

class FitFailure : public Error
{
public:
    FitFailure(const std::string& what, FitResult partial_result) : Error(what), partial(std::move(partial_result))
    {
    }
    FitResult partial;
};

/// Landmark vertices of mean + modes * s, one column per landmark.
PointSet3d landmark_vertices(const FittingBasis& basis, const std::vector<int>& landmark_indices,
                             const Embedding& s);

/**
 * Q = 1/2 sum_j (wbar_j |Y_j - T(V_j(s))|^2_Sigma + log|Sigma|) + eta/2 s^T Lambda^{-1} s,
 * with V_j(s) the landmark vertices of the fitting basis.
 */
double q_objective_reg(const PointSet3d& Y, const ShapeModel& model, const SimilarityTransformd& transform,
                       const Embedding& s, const StudentState& state, double eta);

/**
 * Closed-form embedding for a fixed transform, precisions and covariance:
 * (sum_j wbar_j A_j^T Sigma^-1 A_j + eta Lambda^-1) s = sum_j wbar_j A_j^T Sigma^-1 b_j,
 * A_j = scale R W_j, b_j = Y_j - scale R mean_j - t.
 *
 * Throws SingularSystem when the system matrix is not invertible.
 */
Embedding update_embedding(const PointSet3d& Y, const ShapeModel& model, const SimilarityTransformd& transform,
                           const Eigen::VectorXd& wbar, const Eigen::Matrix3d& sigma, double eta);

/**
 * Robust EM fit of the deformable model to the landmark set Y.
 *
 * Y_j corresponds to model vertex landmark_indices[j]. Each iteration runs the
 * E-step, the rigid M-step on the current shape, the embedding step and the mu
 * update. The translation is refreshed for the final embedding.
 */
FitResult fit(const PointSet3d& Y, const ShapeModel& model, const FitConfig& config = {});

} // namespace rff

#endif // RFF_DEFORM_FIT_HPP
