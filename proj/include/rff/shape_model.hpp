/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: include/rff/shape_model.hpp
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

#ifndef RFF_SHAPE_MODEL_HPP
#define RFF_SHAPE_MODEL_HPP

#include "rff/geometry.hpp"

#include "Eigen/Core"

#include <array>
#include <optional>
#include <vector>

namespace rff {

/// Flat shape vector (V_11, V_12, V_13, ..., V_N3), length 3N.
using ShapeVector = Eigen::VectorXd;

/// Low-dimensional shape coordinates, length K.
using Embedding = Eigen::VectorXd;

using Triangle = std::array<int, 3>;

/// Linear model of the expressive-minus-neutral offsets.
struct ExpressionPart
{
    ShapeVector mean_offset;
    Eigen::MatrixXd modes;
    Eigen::VectorXd eigvals;
};

/**
 * Statistical linear shape model: S = mean + modes * s.
 *
 * modes is 3N x K with orthonormal columns; rows 3n..3n+2 form the block W_n
 * of vertex n. eigvals holds the K retained variances in descending order.
 */
struct ShapeModel
{
    ShapeVector mean;
    Eigen::MatrixXd modes;
    Eigen::VectorXd eigvals;
    std::vector<Triangle> triangles;
    std::vector<int> landmark_indices;
    std::optional<ExpressionPart> expression;

    int num_vertices() const { return static_cast<int>(mean.size() / 3); }
    int num_modes() const { return static_cast<int>(modes.cols()); }

    /// 3 x K block of vertex n.
    auto block(int n) const { return modes.middleRows(3 * n, 3); }

    Eigen::Vector3d mean_vertex(int n) const { return mean.segment<3>(3 * n); }
};

/// Reshapes a flat shape vector into a 3 x N point set.
PointSet3d to_points(const ShapeVector& shape);

ShapeVector to_shape(const PointSet3d& points);

/**
 * Builds the model from M registered training shapes.
 *
 * Uses the 1/M sample covariance. K is the smallest count whose eigenvalue sum
 * reaches variance_fraction of the total, clamped to [min_modes, M - 1];
 * eigenvalues below 1e-12 of the largest are never retained. For a training set
 * without variance the model keeps min_modes canonical directions with a tiny
 * positive variance.
 */
ShapeModel build_model(const std::vector<ShapeVector>& training, double variance_fraction = 0.95,
                       int min_modes = 1);

/// Model of (expressive - neutral) differences of paired scans.
ExpressionPart build_expression_part(const std::vector<ShapeVector>& neutral,
                                     const std::vector<ShapeVector>& expressive, double variance_fraction = 0.95,
                                     int min_modes = 1);

/// s = U^T (S - mean).
Embedding embed(const ShapeModel& model, const ShapeVector& shape);

/// mean + U s.
ShapeVector reconstruct(const ShapeModel& model, const Embedding& s);

/// mean_I + mean_offset + U_I s_id + U_E s_expr. Requires an expression part.
ShapeVector compose_identity_expression(const ShapeModel& model, const Embedding& s_id, const Embedding& s_expr);

/// s^T Lambda^{-1} s; a value <= 1 lies inside the confidence ellipsoid.
double ellipsoid_check(const ShapeModel& model, const Embedding& s);

/// Throws InvalidInput if any model invariant is violated.
void validate(const ShapeModel& model);

/// Mean-shape positions of the landmark vertices.
PointSet3d mean_landmarks(const ShapeModel& model);

/**
 * The linear basis used when fitting: identity modes, followed by expression
 * modes when the model has them, with the matching means and variances.
 */
struct FittingBasis
{
    ShapeVector mean;
    Eigen::MatrixXd modes;
    Eigen::VectorXd eigvals;
};

FittingBasis fitting_basis(const ShapeModel& model);

} // namespace rff

#endif // RFF_SHAPE_MODEL_HPP
