/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: src/robust_align.cpp
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
#include "rff/robust_align.hpp"

#include "Eigen/Cholesky"
#include "Eigen/Dense"

#include <algorithm>
#include <cmath>
#include <string>

namespace rff {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& v)
{
    Eigen::Matrix3d m;
    m << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
         -v.y(), v.x(), 0.0;
    return m;
}

Eigen::LLT<Eigen::Matrix3d> factor_covariance(const Eigen::Matrix3d& sigma)
{
    Eigen::LLT<Eigen::Matrix3d> llt(regularize_covariance(sigma));
    if (llt.info() != Eigen::Success)
    {
        throw SingularCovariance("covariance is not positive definite");
    }
    return llt;
}

Eigen::Vector3d weighted_mean(const PointSet3d& P, const Eigen::VectorXd& w)
{
    return (P * w) / w.sum();
}

void check_weights(const Eigen::VectorXd& w, Eigen::Index n)
{
    if (w.size() != n)
    {
        throw InvalidInput("weights must have one entry per point");
    }
    if (!w.allFinite() || (w.array() < 0.0).any() || !(w.sum() > 0.0))
    {
        throw InvalidInput("weights must be finite, nonnegative and not all zero");
    }
}

// Same rank test as horn_align, on already centered sets.
void check_nondegenerate(const PointSet3d& Xc, const PointSet3d& Zc, const Eigen::VectorXd& w)
{
    if (Xc.cols() < 3)
    {
        throw DegenerateConfiguration("at least 3 point pairs are required");
    }
    const Eigen::Matrix3d M = Xc * w.asDiagonal() * Zc.transpose();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(M);
    const Eigen::Vector3d sv = svd.singularValues();
    if (!(sv(0) > 0.0) || sv(1) < kDegenerateSingularRatio * sv(0))
    {
        throw DegenerateConfiguration("point configuration is rank deficient");
    }
}

} // namespace

double q_objective(const PointSet3d& X, const PointSet3d& Z, const SimilarityTransformd& transform,
                   const StudentState& state)
{
    if (X.cols() != Z.cols() || state.wbar.size() != X.cols())
    {
        throw InvalidInput("q_objective: X, Z and wbar must have the same length");
    }
    const auto llt = factor_covariance(state.sigma);
    const PointSet3d residuals = Z - apply_transform(transform, X);
    const PointSet3d whitened = llt.matrixL().solve(residuals);
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double weighted = (state.wbar.array() * whitened.colwise().squaredNorm().transpose().array()).sum();
    return 0.5 * (weighted + static_cast<double>(X.cols()) * log_det);
}

Eigen::Quaterniond solve_rotation(const PointSet3d& Xc, const PointSet3d& Zc, const Eigen::VectorXd& weights,
                                  double scale, const Eigen::Matrix3d& sigma, const Eigen::Quaterniond& initial,
                                  const RotationSolverConfig& config)
{
    const auto llt = factor_covariance(sigma);
    const Eigen::Matrix3d L_inv = llt.matrixL().solve(Eigen::Matrix3d::Identity());
    const Eigen::Matrix3d sigma_inv = L_inv.transpose() * L_inv;
    const Eigen::VectorXd sqrt_w = weights.array().sqrt();
    const Eigen::Index n = Xc.cols();

    const auto objective = [&](const Eigen::Quaterniond& q) {
        const PointSet3d r = L_inv * (Zc - scale * (q.toRotationMatrix() * Xc));
        return 0.5 * (weights.array() * r.colwise().squaredNorm().transpose().array()).sum();
    };

    // Natural magnitude of the gradient, used to make the tolerance scale free.
    const double inv_norm = L_inv.operatorNorm();
    const double g_scale = scale * inv_norm *
                               (weights.array() * (L_inv * Zc).colwise().norm().transpose().array() *
                                Xc.colwise().norm().transpose().array())
                                   .sum() +
                           1e-300;

    Eigen::Quaterniond q = canonicalize(initial.normalized());
    double f = objective(q);
    double lambda = 1e-4;

    for (int it = 0; it < config.max_iterations; ++it)
    {
        const Eigen::Matrix3d R = q.toRotationMatrix();
        Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
        Eigen::Matrix3d H2 = Eigen::Matrix3d::Zero();
        Eigen::Vector3d g = Eigen::Vector3d::Zero();
        for (Eigen::Index j = 0; j < n; ++j)
        {
            const Eigen::Vector3d p = R * Xc.col(j);
            const Eigen::Vector3d e = Zc.col(j) - scale * p;
            const Eigen::Vector3d r = sqrt_w(j) * (L_inv * e);
            const Eigen::Matrix3d Jj = sqrt_w(j) * scale * (L_inv * skew(p));
            H.noalias() += Jj.transpose() * Jj;
            g.noalias() += Jj.transpose() * r;
            // Curvature of the rotation itself; matters when residuals are large.
            const Eigen::Vector3d u = sigma_inv * e;
            H2.noalias() -= 0.5 * scale * weights(j) *
                            (u * p.transpose() + p * u.transpose() - 2.0 * u.dot(p) * Eigen::Matrix3d::Identity());
        }
        {
            // Exact Hessian, shifted up where the objective curves downward.
            const Eigen::Matrix3d full = 0.5 * ((H + H2) + (H + H2).transpose());
            const double lowest =
                Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(full, Eigen::EigenvaluesOnly).eigenvalues()(0);
            const double floor = 1e-6 * H.trace();
            H = full;
            if (lowest < floor)
            {
                H.diagonal().array() += floor - lowest;
            }
        }
        if (g.norm() <= config.gradient_tolerance * g_scale)
        {
            return q;
        }

        bool improved = false;
        while (lambda < 1e16)
        {
            Eigen::Matrix3d A = H;
            A.diagonal() += lambda * (H.diagonal().array() + 1e-300).matrix();
            const Eigen::Vector3d delta = -A.ldlt().solve(g);
            const double angle = delta.norm();
            Eigen::Quaterniond step = Eigen::Quaterniond::Identity();
            if (angle > 0.0)
            {
                step = Eigen::Quaterniond(Eigen::AngleAxisd(angle, delta / angle));
            }
            const Eigen::Quaterniond candidate = canonicalize((step * q).normalized());
            const double f_new = objective(candidate);
            if (f_new < f)
            {
                q = candidate;
                f = f_new;
                lambda = std::max(lambda * 0.1, 1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!improved)
        {
            // No descent step exists at working precision.
            if (g.norm() <= 1e-6 * g_scale)
            {
                return q;
            }
            throw RotationSolverFailure("rotation solver stalled away from a stationary point", q);
        }
    }
    throw RotationSolverFailure("rotation solver did not converge in " + std::to_string(config.max_iterations) +
                                    " iterations",
                                q);
}

double covariance_floor_for(const PointSet3d& Z, double relative_floor)
{
    const Eigen::Vector3d centroid = Z.rowwise().mean();
    const double spread = (Z.colwise() - centroid).colwise().squaredNorm().mean();
    return relative_floor * (spread > 0.0 ? spread : 1.0);
}

RigidMStep m_step_rigid(const PointSet3d& X, const PointSet3d& Z, const Eigen::VectorXd& wbar,
                        const Eigen::Matrix3d& sigma, const SimilarityTransformd& previous,
                        const RotationSolverConfig& solver, double absolute_floor)
{
    if (X.cols() != Z.cols())
    {
        throw InvalidInput("m_step_rigid: X and Z must have the same length");
    }
    check_weights(wbar, X.cols());

    const Eigen::Vector3d x_bar = weighted_mean(X, wbar);
    const Eigen::Vector3d z_bar = weighted_mean(Z, wbar);
    const PointSet3d Xc = X.colwise() - x_bar;
    const PointSet3d Zc = Z.colwise() - z_bar;
    check_nondegenerate(Xc, Zc, wbar);

    const auto llt = factor_covariance(sigma);
    const Eigen::Matrix3d R_prev = previous.rotation_matrix();
    const PointSet3d z_white = llt.matrixL().solve(Zc);
    const PointSet3d x_white = llt.matrixL().solve(R_prev * Xc);
    const double num = (wbar.array() * z_white.colwise().squaredNorm().transpose().array()).sum();
    const double den = (wbar.array() * x_white.colwise().squaredNorm().transpose().array()).sum();
    const double scale = std::sqrt(num / den);
    if (!(scale > 0.0) || !std::isfinite(scale))
    {
        throw DegenerateConfiguration("m_step_rigid: scale update is not positive");
    }

    const Eigen::Quaterniond q = solve_rotation(Xc, Zc, wbar, scale, sigma, previous.rotation, solver);
    const Eigen::Matrix3d R = q.toRotationMatrix();

    RigidMStep out;
    out.transform.scale = scale;
    out.transform.rotation = q;
    out.transform.translation = z_bar - scale * R * x_bar;

    const PointSet3d E = Zc - scale * (R * Xc);
    out.sigma_raw = (E * wbar.asDiagonal() * E.transpose()) / static_cast<double>(X.cols());
    const double floor = absolute_floor < 0.0 ? covariance_floor_for(Z, AlignConfig{}.covariance_floor) : absolute_floor;
    // Once a residual direction falls under the floor the likelihood is unbounded.
    const Eigen::Matrix3d raw_sym = 0.5 * (out.sigma_raw + out.sigma_raw.transpose());
    out.exact_fit = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(raw_sym, Eigen::EigenvaluesOnly).eigenvalues()(0) <= floor;
    out.sigma = regularize_covariance(out.sigma_raw, floor);
    return out;
}

double parameter_change(const SimilarityTransformd& old_t, const SimilarityTransformd& new_t,
                        const Eigen::Matrix3d& old_sigma, const Eigen::Matrix3d& new_sigma, double old_mu,
                        double new_mu)
{
    const double d_scale = std::abs(new_t.scale - old_t.scale) / new_t.scale;
    const double d_rot = rotation_angle_between(old_t.rotation, new_t.rotation);
    const double d_trans = (new_t.translation - old_t.translation).norm() / (1.0 + new_t.translation.norm());
    const double d_sigma = (new_sigma - old_sigma).norm() / (1.0 + new_sigma.norm());
    const double d_mu = std::abs(new_mu - old_mu) / new_mu;
    return std::max({d_scale, d_rot, d_trans, d_sigma, d_mu});
}

AlignResult align(const PointSet3d& X, const PointSet3d& Z, const AlignConfig& config)
{
    validate_points(X);
    validate_points(Z);
    if (X.cols() != Z.cols())
    {
        throw InvalidInput("align: point sets must have the same length");
    }
    if (X.cols() < 4)
    {
        throw DegenerateConfiguration("align: at least 4 point pairs are required");
    }
    if (!(config.eps > 0.0) || config.max_iterations < 1 || !(config.mu_init > 0.0))
    {
        throw InvalidInput("align: eps and mu_init must be positive and max_iterations >= 1");
    }

    const Eigen::Index n = X.cols();
    const double floor = covariance_floor_for(Z, config.covariance_floor);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);

    AlignResult result;
    result.transform = horn_align<double>(X, Z, ones);
    {
        const PointSet3d E = Z - apply_transform(result.transform, X);
        const Eigen::Matrix3d raw = (E * E.transpose()) / static_cast<double>(n);
        result.student.sigma = regularize_covariance(raw, floor);
    }
    result.student.mu = config.mu_init;
    result.student.a = config.mu_init + 1.5;
    result.student.b = Eigen::VectorXd::Ones(n);
    result.student.wbar = ones;

    for (int it = 0; it < config.max_iterations; ++it)
    {
        Posterior post;
        if (config.robust)
        {
            post = e_step(Z - apply_transform(result.transform, X), result.student.sigma, result.student.mu);
        } else
        {
            post.a = result.student.a;
            post.b = Eigen::VectorXd::Ones(n);
            post.wbar = ones;
        }

        RigidMStep m;
        try
        {
            m = m_step_rigid(X, Z, post.wbar, result.student.sigma, result.transform, config.rotation, floor);
        } catch (const RotationSolverFailure& e)
        {
            result.student.a = post.a;
            result.student.b = post.b;
            result.student.wbar = post.wbar;
            result.iterations = it;
            throw AlignFailure(std::string("align: ") + e.what(), result);
        }
        const double mu = config.robust ? update_mu(post.a, post.b) : result.student.mu;

        const double change =
            parameter_change(result.transform, m.transform, result.student.sigma, m.sigma, result.student.mu, mu);

        result.transform = m.transform;
        result.student.sigma = m.sigma;
        result.student.mu = mu;
        result.student.a = post.a;
        result.student.b = post.b;
        result.student.wbar = post.wbar;
        result.iterations = it + 1;
        result.q_trace.push_back(q_objective(X, Z, result.transform, result.student));

        if (m.exact_fit || change <= config.eps)
        {
            result.converged = true;
            break;
        }
    }
    return result;
}

} // namespace rff
