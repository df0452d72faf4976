/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: src/shape_model.cpp
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
#include "rff/shape_model.hpp"

#include "Eigen/Eigenvalues"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace rff {

namespace {

// Eigenvalues below this fraction of the largest are not retained.
constexpr double kZeroVarianceGuard = 1e-12;

// Variance given to placeholder modes of a training set without variance.
constexpr double kPlaceholderVariance = 1e-12;

struct Pca
{
    ShapeVector mean;
    Eigen::MatrixXd modes;
    Eigen::VectorXd eigvals;
};

Eigen::MatrixXd stack_columns(const std::vector<ShapeVector>& shapes)
{
    if (shapes.size() < 2)
    {
        throw InvalidInput("at least 2 training shapes are required");
    }
    const Eigen::Index dim = shapes.front().size();
    if (dim == 0 || dim % 3 != 0)
    {
        throw InvalidInput("shape vectors must have a positive length divisible by 3");
    }
    Eigen::MatrixXd D(dim, static_cast<Eigen::Index>(shapes.size()));
    for (std::size_t m = 0; m < shapes.size(); ++m)
    {
        if (shapes[m].size() != dim)
        {
            throw InvalidInput("training shapes have mismatched lengths");
        }
        if (!shapes[m].allFinite())
        {
            throw InvalidInput("training shape " + std::to_string(m) + " has non-finite coordinates");
        }
        D.col(static_cast<Eigen::Index>(m)) = shapes[m];
    }
    return D;
}

// Largest-magnitude entry of every column made positive, so results do not
// depend on the eigensolver's sign choice.
void fix_signs(Eigen::MatrixXd& U)
{
    for (Eigen::Index k = 0; k < U.cols(); ++k)
    {
        Eigen::Index idx;
        U.col(k).cwiseAbs().maxCoeff(&idx);
        if (U(idx, k) < 0.0)
        {
            U.col(k) *= -1.0;
        }
    }
}

// Modified Gram-Schmidt, two passes. Columns keep their order and direction.
void reorthonormalize(Eigen::MatrixXd& U)
{
    for (int pass = 0; pass < 2; ++pass)
    {
        for (Eigen::Index k = 0; k < U.cols(); ++k)
        {
            for (Eigen::Index i = 0; i < k; ++i)
            {
                U.col(k) -= U.col(i).dot(U.col(k)) * U.col(i);
            }
            U.col(k).normalize();
        }
    }
}

Pca principal_components(const Eigen::MatrixXd& D, double variance_fraction, int min_modes)
{
    if (!(variance_fraction > 0.0 && variance_fraction <= 1.0))
    {
        throw InvalidInput("variance_fraction must lie in (0, 1]");
    }
    if (min_modes < 1)
    {
        throw InvalidInput("min_modes must be at least 1");
    }
    const Eigen::Index dim = D.rows();
    const Eigen::Index M = D.cols();

    Pca pca;
    pca.mean = D.rowwise().mean();
    const Eigen::MatrixXd C = D.colwise() - pca.mean;

    // Eigenpairs in descending order; vectors in the 3N-dimensional space.
    Eigen::VectorXd lambda;
    Eigen::MatrixXd U;
    if (dim > M)
    {
        // Gram matrix trick: C^T C / M shares its nonzero spectrum with C C^T / M.
        const Eigen::MatrixXd G = (C.transpose() * C) / static_cast<double>(M);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
        lambda = eig.eigenvalues().reverse();
        const Eigen::MatrixXd V = eig.eigenvectors().rowwise().reverse();
        U.resize(dim, M);
        for (Eigen::Index k = 0; k < M; ++k)
        {
            const double l = std::max(lambda(k), 0.0);
            U.col(k) = l > 0.0 ? Eigen::VectorXd(C * V.col(k) / std::sqrt(static_cast<double>(M) * l))
                               : Eigen::VectorXd::Zero(dim);
        }
    } else
    {
        const Eigen::MatrixXd cov = (C * C.transpose()) / static_cast<double>(M);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        lambda = eig.eigenvalues().reverse();
        U = eig.eigenvectors().rowwise().reverse();
    }
    lambda = lambda.cwiseMax(0.0);

    const double total = lambda.sum();
    const double largest = lambda.size() > 0 ? lambda(0) : 0.0;
    Eigen::Index nonzero = 0;
    while (nonzero < lambda.size() && largest > 0.0 && lambda(nonzero) >= kZeroVarianceGuard * largest)
    {
        ++nonzero;
    }

    if (nonzero == 0)
    {
        const Eigen::Index K = std::min<Eigen::Index>(min_modes, dim);
        pca.modes = Eigen::MatrixXd::Identity(dim, K);
        pca.eigvals = Eigen::VectorXd::Constant(K, kPlaceholderVariance);
        return pca;
    }

    Eigen::Index K = 0;
    double acc = 0.0;
    while (K < lambda.size() && acc < variance_fraction * total)
    {
        acc += lambda(K);
        ++K;
    }
    K = std::max<Eigen::Index>(K, min_modes);
    K = std::min<Eigen::Index>(K, M - 1);
    K = std::min<Eigen::Index>(K, nonzero);
    K = std::max<Eigen::Index>(K, 1);

    pca.modes = U.leftCols(K);
    reorthonormalize(pca.modes);
    fix_signs(pca.modes);
    pca.eigvals = lambda.head(K);
    return pca;
}

} // namespace

PointSet3d to_points(const ShapeVector& shape)
{
    if (shape.size() % 3 != 0)
    {
        throw InvalidInput("shape vector length must be divisible by 3");
    }
    return Eigen::Map<const PointSet3d>(shape.data(), 3, shape.size() / 3);
}

ShapeVector to_shape(const PointSet3d& points)
{
    return Eigen::Map<const ShapeVector>(points.data(), points.size());
}

ShapeModel build_model(const std::vector<ShapeVector>& training, double variance_fraction, int min_modes)
{
    const Pca pca = principal_components(stack_columns(training), variance_fraction, min_modes);
    ShapeModel model;
    model.mean = pca.mean;
    model.modes = pca.modes;
    model.eigvals = pca.eigvals;
    return model;
}

ExpressionPart build_expression_part(const std::vector<ShapeVector>& neutral,
                                     const std::vector<ShapeVector>& expressive, double variance_fraction,
                                     int min_modes)
{
    if (neutral.size() != expressive.size())
    {
        throw InvalidInput("neutral and expressive training sets must be paired");
    }
    std::vector<ShapeVector> offsets;
    offsets.reserve(neutral.size());
    for (std::size_t m = 0; m < neutral.size(); ++m)
    {
        if (neutral[m].size() != expressive[m].size())
        {
            throw InvalidInput("paired shapes have mismatched lengths");
        }
        offsets.push_back(expressive[m] - neutral[m]);
    }
    const Pca pca = principal_components(stack_columns(offsets), variance_fraction, min_modes);
    return {pca.mean, pca.modes, pca.eigvals};
}

Embedding embed(const ShapeModel& model, const ShapeVector& shape)
{
    if (shape.size() != model.mean.size())
    {
        throw InvalidInput("embed: shape length does not match the model");
    }
    return model.modes.transpose() * (shape - model.mean);
}

ShapeVector reconstruct(const ShapeModel& model, const Embedding& s)
{
    if (s.size() != model.modes.cols())
    {
        throw InvalidInput("reconstruct: embedding length does not match the model");
    }
    return model.mean + model.modes * s;
}

ShapeVector compose_identity_expression(const ShapeModel& model, const Embedding& s_id, const Embedding& s_expr)
{
    if (!model.expression)
    {
        throw InvalidInput("compose_identity_expression: model has no expression part");
    }
    const ExpressionPart& e = *model.expression;
    if (s_expr.size() != e.modes.cols())
    {
        throw InvalidInput("compose_identity_expression: expression embedding length mismatch");
    }
    return reconstruct(model, s_id) + e.mean_offset + e.modes * s_expr;
}

double ellipsoid_check(const ShapeModel& model, const Embedding& s)
{
    if (s.size() != model.eigvals.size())
    {
        throw InvalidInput("ellipsoid_check: embedding length does not match the model");
    }
    return (s.array().square() / model.eigvals.array()).sum();
}

void validate(const ShapeModel& model)
{
    const Eigen::Index dim = model.mean.size();
    if (dim == 0 || dim % 3 != 0)
    {
        throw InvalidInput("model mean must have a positive length divisible by 3");
    }
    const Eigen::Index K = model.modes.cols();
    if (K < 1)
    {
        throw InvalidInput("model must have at least one mode");
    }
    if (model.modes.rows() != dim || model.eigvals.size() != K)
    {
        throw InvalidInput("model modes and eigenvalues have inconsistent sizes");
    }
    if (!model.mean.allFinite() || !model.modes.allFinite() || !model.eigvals.allFinite())
    {
        throw InvalidInput("model contains non-finite values");
    }
    if ((model.eigvals.array() <= 0.0).any())
    {
        throw InvalidInput("model eigenvalues must be positive");
    }
    for (Eigen::Index k = 1; k < K; ++k)
    {
        if (model.eigvals(k) > model.eigvals(k - 1))
        {
            throw InvalidInput("model eigenvalues must be sorted in descending order");
        }
    }
    const Eigen::MatrixXd gram = model.modes.transpose() * model.modes;
    if (!gram.isApprox(Eigen::MatrixXd::Identity(K, K), 1e-8) &&
        (gram - Eigen::MatrixXd::Identity(K, K)).cwiseAbs().maxCoeff() > 1e-8)
    {
        throw InvalidInput("model modes are not orthonormal");
    }
    const int N = model.num_vertices();
    std::set<int> seen;
    for (int idx : model.landmark_indices)
    {
        if (idx < 0 || idx >= N)
        {
            throw InvalidInput("landmark index out of range");
        }
        if (!seen.insert(idx).second)
        {
            throw InvalidInput("landmark indices must be distinct");
        }
    }
    for (const Triangle& t : model.triangles)
    {
        for (int idx : t)
        {
            if (idx < 0 || idx >= N)
            {
                throw InvalidInput("triangle index out of range");
            }
        }
    }
    if (model.expression)
    {
        const ExpressionPart& e = *model.expression;
        if (e.mean_offset.size() != dim || e.modes.rows() != dim || e.modes.cols() != e.eigvals.size() ||
            e.modes.cols() < 1)
        {
            throw InvalidInput("expression part has inconsistent sizes");
        }
        if ((e.eigvals.array() <= 0.0).any() || !e.modes.allFinite() || !e.mean_offset.allFinite())
        {
            throw InvalidInput("expression part has invalid values");
        }
    }
}

PointSet3d mean_landmarks(const ShapeModel& model)
{
    PointSet3d Z(3, static_cast<Eigen::Index>(model.landmark_indices.size()));
    for (std::size_t j = 0; j < model.landmark_indices.size(); ++j)
    {
        Z.col(static_cast<Eigen::Index>(j)) = model.mean_vertex(model.landmark_indices[j]);
    }
    return Z;
}

FittingBasis fitting_basis(const ShapeModel& model)
{
    if (!model.expression)
    {
        return {model.mean, model.modes, model.eigvals};
    }
    const ExpressionPart& e = *model.expression;
    FittingBasis basis;
    basis.mean = model.mean + e.mean_offset;
    basis.modes.resize(model.modes.rows(), model.modes.cols() + e.modes.cols());
    basis.modes << model.modes, e.modes;
    basis.eigvals.resize(model.eigvals.size() + e.eigvals.size());
    basis.eigvals << model.eigvals, e.eigvals;
    return basis;
}

} // namespace rff
