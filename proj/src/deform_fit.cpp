/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: src/deform_fit.cpp
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
#include "rff/deform_fit.hpp"

#include "Eigen/Cholesky"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rff {

namespace {

constexpr double kMinReciprocalCondition = 1e-14;

void check_landmarks(const PointSet3d& Y, const ShapeModel& model)
{
    validate_points(Y);
    if (static_cast<std::size_t>(Y.cols()) != model.landmark_indices.size())
    {
        throw InvalidInput("landmark count does not match the model's landmark indices");
    }
    const int N = model.num_vertices();
    for (int idx : model.landmark_indices)
    {
        if (idx < 0 || idx >= N)
        {
            throw InvalidInput("landmark index out of range");
        }
    }
}

// Rows of the basis modes belonging to the landmark vertices, stacked 3J x K.
Eigen::MatrixXd landmark_modes(const FittingBasis& basis, const std::vector<int>& indices)
{
    Eigen::MatrixXd W(3 * static_cast<Eigen::Index>(indices.size()), basis.modes.cols());
    for (std::size_t j = 0; j < indices.size(); ++j)
    {
        W.middleRows(3 * static_cast<Eigen::Index>(j), 3) = basis.modes.middleRows(3 * indices[j], 3);
    }
    return W;
}

PointSet3d landmark_mean(const FittingBasis& basis, const std::vector<int>& indices)
{
    PointSet3d V(3, static_cast<Eigen::Index>(indices.size()));
    for (std::size_t j = 0; j < indices.size(); ++j)
    {
        V.col(static_cast<Eigen::Index>(j)) = basis.mean.segment<3>(3 * indices[j]);
    }
    return V;
}

// Landmark-restricted basis used inside the fitting loop.
struct LandmarkBasis
{
    PointSet3d mean;
    Eigen::MatrixXd modes;
    Eigen::VectorXd eigvals;

    PointSet3d vertices(const Embedding& s) const
    {
        const Eigen::VectorXd flat = modes * s;
        return mean + Eigen::Map<const PointSet3d>(flat.data(), 3, mean.cols());
    }
};

LandmarkBasis restrict_to_landmarks(const ShapeModel& model)
{
    const FittingBasis basis = fitting_basis(model);
    return {landmark_mean(basis, model.landmark_indices), landmark_modes(basis, model.landmark_indices),
            basis.eigvals};
}

double q_reg(const PointSet3d& Y, const LandmarkBasis& lb, const SimilarityTransformd& transform, const Embedding& s,
             const StudentState& state, double eta)
{
    const double data = q_objective(lb.vertices(s), Y, transform, state);
    return data + 0.5 * eta * (s.array().square() / lb.eigvals.array()).sum();
}

Embedding solve_embedding(const PointSet3d& Y, const LandmarkBasis& lb, const SimilarityTransformd& transform,
                          const Eigen::VectorXd& wbar, const Eigen::Matrix3d& sigma, double eta)
{
    const Eigen::Index K = lb.modes.cols();
    const Eigen::Index J = Y.cols();
    const Eigen::Matrix3d sigma_inv = regularize_covariance(sigma).inverse();
    const Eigen::Matrix3d sR = transform.linear();

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(K, K);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(K);
    for (Eigen::Index j = 0; j < J; ++j)
    {
        const Eigen::MatrixXd Aj = sR * lb.modes.middleRows(3 * j, 3);
        const Eigen::Vector3d bj = Y.col(j) - sR * lb.mean.col(j) - transform.translation;
        const Eigen::MatrixXd AtS = wbar(j) * Aj.transpose() * sigma_inv;
        A.noalias() += AtS * Aj;
        rhs.noalias() += AtS * bj;
    }
    A.diagonal() += eta * lb.eigvals.cwiseInverse();
    A = 0.5 * (A + A.transpose());

    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success || !(llt.rcond() > kMinReciprocalCondition))
    {
        throw SingularSystem("embedding system matrix is singular");
    }
    return llt.solve(rhs);
}

void check_config(const FitConfig& config)
{
    if (!(config.eta >= 0.0) || !std::isfinite(config.eta))
    {
        throw InvalidInput("eta must be finite and nonnegative");
    }
    const AlignConfig& a = config.align;
    if (!(a.eps > 0.0) || a.max_iterations < 1 || !(a.mu_init > 0.0))
    {
        throw InvalidInput("eps and mu_init must be positive and max_iterations >= 1");
    }
}

} // namespace

PointSet3d landmark_vertices(const FittingBasis& basis, const std::vector<int>& landmark_indices, const Embedding& s)
{
    if (s.size() != basis.modes.cols())
    {
        throw InvalidInput("embedding length does not match the basis");
    }
    const LandmarkBasis lb{landmark_mean(basis, landmark_indices), landmark_modes(basis, landmark_indices),
                           basis.eigvals};
    return lb.vertices(s);
}

double q_objective_reg(const PointSet3d& Y, const ShapeModel& model, const SimilarityTransformd& transform,
                       const Embedding& s, const StudentState& state, double eta)
{
    check_landmarks(Y, model);
    const LandmarkBasis lb = restrict_to_landmarks(model);
    if (s.size() != lb.modes.cols())
    {
        throw InvalidInput("q_objective_reg: embedding length does not match the model");
    }
    return q_reg(Y, lb, transform, s, state, eta);
}

Embedding update_embedding(const PointSet3d& Y, const ShapeModel& model, const SimilarityTransformd& transform,
                           const Eigen::VectorXd& wbar, const Eigen::Matrix3d& sigma, double eta)
{
    check_landmarks(Y, model);
    if (wbar.size() != Y.cols())
    {
        throw InvalidInput("update_embedding: one weight per landmark is required");
    }
    if (!(eta >= 0.0))
    {
        throw InvalidInput("update_embedding: eta must be nonnegative");
    }
    return solve_embedding(Y, restrict_to_landmarks(model), transform, wbar, sigma, eta);
}

FitResult fit(const PointSet3d& Y, const ShapeModel& model, const FitConfig& config)
{
    check_landmarks(Y, model);
    check_config(config);
    const Eigen::Index J = Y.cols();
    if (J < 4)
    {
        throw DegenerateConfiguration("fit: at least 4 landmarks are required");
    }
    const AlignConfig& ac = config.align;
    const LandmarkBasis lb = restrict_to_landmarks(model);
    const double floor = covariance_floor_for(Y, ac.covariance_floor);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(J);

    FitResult result;
    result.embedding = Embedding::Zero(lb.modes.cols());
    {
        const PointSet3d V = lb.vertices(result.embedding);
        result.transform = horn_align<double>(V, Y, ones);
        const PointSet3d E = Y - apply_transform(result.transform, V);
        const Eigen::Matrix3d raw = (E * E.transpose()) / static_cast<double>(J);
        result.student.sigma = regularize_covariance(raw, floor);
    }
    result.student.mu = ac.mu_init;
    result.student.a = ac.mu_init + 1.5;
    result.student.b = Eigen::VectorXd::Ones(J);
    result.student.wbar = ones;

    for (int it = 0; it < ac.max_iterations; ++it)
    {
        const PointSet3d V_old = lb.vertices(result.embedding);
        Posterior post;
        if (ac.robust)
        {
            post = e_step(Y - apply_transform(result.transform, V_old), result.student.sigma, result.student.mu);
        } else
        {
            post.a = result.student.a;
            post.b = Eigen::VectorXd::Ones(J);
            post.wbar = ones;
        }

        RigidMStep m;
        Embedding s;
        try
        {
            m = m_step_rigid(V_old, Y, post.wbar, result.student.sigma, result.transform, ac.rotation, floor);
            s = solve_embedding(Y, lb, m.transform, post.wbar, m.sigma, config.eta);
        } catch (const Error& e)
        {
            result.student.a = post.a;
            result.student.b = post.b;
            result.student.wbar = post.wbar;
            result.iterations = it;
            throw FitFailure(std::string("fit: ") + e.what(), result);
        }

        // Translation for the new shape, with the current precisions.
        const PointSet3d V_new = lb.vertices(s);
        const double wsum = post.wbar.sum();
        m.transform.translation = (Y * post.wbar) / wsum - m.transform.linear() * ((V_new * post.wbar) / wsum);

        const double mu = ac.robust ? update_mu(post.a, post.b) : result.student.mu;
        const double d_shape = (s - result.embedding).norm() / (1.0 + s.norm());
        const double change = std::max(
            parameter_change(result.transform, m.transform, result.student.sigma, m.sigma, result.student.mu, mu),
            d_shape);

        result.transform = m.transform;
        result.embedding = s;
        result.student.sigma = m.sigma;
        result.student.mu = mu;
        result.student.a = post.a;
        result.student.b = post.b;
        result.student.wbar = post.wbar;
        result.iterations = it + 1;
        result.q_trace.push_back(q_reg(Y, lb, result.transform, s, result.student, config.eta));

        if (m.exact_fit || change <= ac.eps)
        {
            result.converged = true;
            break;
        }
    }

    const double mahal = (result.embedding.array().square() / lb.eigvals.array()).sum();
    if (mahal > 1.0)
    {
        std::ostringstream msg;
        msg << "embedding lies outside the confidence ellipsoid (s^T Lambda^-1 s = " << mahal << ")";
        result.warnings.push_back(msg.str());
    }
    return result;
}

} // namespace rff
