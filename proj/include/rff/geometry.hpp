/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: include/rff/geometry.hpp
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

#ifndef RFF_GEOMETRY_HPP
#define RFF_GEOMETRY_HPP

#include "rff/errors.hpp"

#include "Eigen/Core"
#include "Eigen/Eigenvalues"
#include "Eigen/Geometry"
#include "Eigen/SVD"

#include <algorithm>
#include <cmath>

namespace rff {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

/**
 * An ordered set of 3D points, one point per column.
 *
 * Column order is the correspondence order: column j of one set corresponds to
 * column j of any other set it is aligned with.
 */
template <typename Scalar>
using PointSet3 = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

using PointSet3d = PointSet3<double>;

/// Throws InvalidInput unless \p points is non-empty and all coordinates are finite.
template <typename Derived>
void validate_points(const Eigen::MatrixBase<Derived>& points)
{
    if (points.cols() < 1)
    {
        throw InvalidInput("point set is empty");
    }
    if (!points.allFinite())
    {
        throw InvalidInput("point set contains non-finite coordinates");
    }
}

/// Flips the sign of \p q so that w >= 0. q and -q encode the same rotation.
template <typename Scalar>
Eigen::Quaternion<Scalar> canonicalize(const Eigen::Quaternion<Scalar>& q)
{
    if (q.w() < Scalar(0))
    {
        return Eigen::Quaternion<Scalar>(-q.w(), -q.x(), -q.y(), -q.z());
    }
    return q;
}

/**
 * Rotation matrix of a quaternion given as (w, x, y, z).
 *
 * The quaternion is renormalized first. A zero quaternion has no rotation and
 * raises InvalidInput.
 */
template <typename Scalar>
Matrix3<Scalar> quat_to_matrix(const Eigen::Quaternion<Scalar>& q)
{
    const Scalar norm = q.norm();
    if (!(norm > Scalar(0)) || !std::isfinite(static_cast<double>(norm)))
    {
        throw InvalidInput("cannot convert a zero or non-finite quaternion to a rotation");
    }
    return q.normalized().toRotationMatrix();
}

template <typename Scalar>
Eigen::Quaternion<Scalar> matrix_to_quat(const Matrix3<Scalar>& rotation)
{
    return canonicalize(Eigen::Quaternion<Scalar>(rotation).normalized());
}

/**
 * Similarity transform x -> scale * R * x + translation.
 *
 * The rotation is held as a unit quaternion with w >= 0. Used both for the head
 * pose (image frame to model frame) and for the model-to-landmark fit.
 */
template <typename Scalar>
struct SimilarityTransform
{
    Scalar scale = Scalar(1);
    Eigen::Quaternion<Scalar> rotation = Eigen::Quaternion<Scalar>::Identity();
    Vector3<Scalar> translation = Vector3<Scalar>::Zero();

    static SimilarityTransform identity() { return {}; }

    Matrix3<Scalar> rotation_matrix() const { return quat_to_matrix(rotation); }

    /// 3x3 linear part, scale * R.
    Matrix3<Scalar> linear() const { return scale * rotation_matrix(); }

    template <typename OtherScalar>
    SimilarityTransform<OtherScalar> cast() const
    {
        SimilarityTransform<OtherScalar> out;
        out.scale = static_cast<OtherScalar>(scale);
        out.rotation = rotation.template cast<OtherScalar>();
        out.translation = translation.template cast<OtherScalar>();
        return out;
    }
};

using SimilarityTransformd = SimilarityTransform<double>;

/// Builds a transform from its parts, normalizing and canonicalizing the quaternion.
template <typename Scalar>
SimilarityTransform<Scalar> make_transform(Scalar scale, const Eigen::Quaternion<Scalar>& rotation,
                                           const Vector3<Scalar>& translation)
{
    if (!(scale > Scalar(0)))
    {
        throw InvalidInput("similarity transform scale must be positive");
    }
    SimilarityTransform<Scalar> t;
    t.scale = scale;
    quat_to_matrix(rotation); // rejects zero quaternions
    t.rotation = canonicalize(rotation.normalized());
    t.translation = translation;
    return t;
}

/// Point j of the result is scale * R * P_j + translation.
template <typename Scalar, typename Derived>
PointSet3<Scalar> apply_transform(const SimilarityTransform<Scalar>& transform,
                                  const Eigen::MatrixBase<Derived>& points)
{
    PointSet3<Scalar> out = transform.linear() * points;
    out.colwise() += transform.translation;
    return out;
}

template <typename Scalar>
Vector3<Scalar> apply_transform(const SimilarityTransform<Scalar>& transform, const Vector3<Scalar>& point)
{
    return transform.linear() * point + transform.translation;
}

/// scale' = 1/scale, R' = R^T, t' = -R^T t / scale.
template <typename Scalar>
SimilarityTransform<Scalar> inverse_pose(const SimilarityTransform<Scalar>& transform)
{
    SimilarityTransform<Scalar> inv;
    inv.scale = Scalar(1) / transform.scale;
    inv.rotation = canonicalize(transform.rotation.conjugate());
    inv.translation = -(transform.rotation.conjugate() * transform.translation) / transform.scale;
    return inv;
}

/// a after b: x -> a(b(x)).
template <typename Scalar>
SimilarityTransform<Scalar> compose(const SimilarityTransform<Scalar>& a, const SimilarityTransform<Scalar>& b)
{
    SimilarityTransform<Scalar> out;
    out.scale = a.scale * b.scale;
    out.rotation = canonicalize((a.rotation * b.rotation).normalized());
    out.translation = a.scale * (a.rotation * b.translation) + a.translation;
    return out;
}

/// Geodesic angle in radians between two rotations.
template <typename Scalar>
Scalar rotation_angle_between(const Eigen::Quaternion<Scalar>& a, const Eigen::Quaternion<Scalar>& b)
{
    using std::abs;
    using std::atan2;
    const Eigen::Quaternion<Scalar> d = a.conjugate() * b;
    return Scalar(2) * atan2(d.vec().norm(), abs(d.w()));
}

/// Relative eigenvalue floor of a covariance, as a fraction of trace / 3.
inline constexpr double kCovarianceRelativeFloor = 1e-8;

/**
 * Symmetrizes \p sigma and clamps its eigenvalues from below.
 *
 * The floor is max(1e-8 * trace / 3, absolute_floor). A matrix whose floor is
 * not positive (zero trace and no absolute floor) is singular.
 */
template <typename Scalar>
Matrix3<Scalar> regularize_covariance(const Matrix3<Scalar>& sigma, Scalar absolute_floor = Scalar(0))
{
    using std::max;
    if (!sigma.allFinite())
    {
        throw SingularCovariance("covariance contains non-finite entries");
    }
    const Matrix3<Scalar> sym = Scalar(0.5) * (sigma + sigma.transpose());
    const Scalar floor = max(Scalar(kCovarianceRelativeFloor) * sym.trace() / Scalar(3), absolute_floor);
    if (!(floor > Scalar(0)))
    {
        throw SingularCovariance("covariance has no positive variance to regularize against");
    }
    Eigen::SelfAdjointEigenSolver<Matrix3<Scalar>> eig(sym);
    const Vector3<Scalar> clamped = eig.eigenvalues().cwiseMax(floor);
    if (clamped == eig.eigenvalues())
    {
        return sym;
    }
    return eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
}

/// e^T Sigma^{-1} e, after regularizing Sigma.
template <typename Scalar>
Scalar mahalanobis_sq(const Vector3<Scalar>& e, const Matrix3<Scalar>& sigma)
{
    const Matrix3<Scalar> reg = regularize_covariance(sigma);
    Eigen::LLT<Matrix3<Scalar>> llt(reg);
    if (llt.info() != Eigen::Success)
    {
        throw SingularCovariance("covariance is not positive definite");
    }
    const Vector3<Scalar> y = llt.matrixL().solve(e);
    return y.squaredNorm();
}

enum class HornScale
{
    /// sqrt(sum w |Z'|^2 / sum w |X'|^2); matches the robust scale update with Sigma = I.
    symmetric,
    /// sum w Z'^T R X' / sum w |X'|^2, the least-squares optimum for fixed R.
    least_squares,
};

/// Second-to-largest over largest singular value of the centered cross-covariance
/// below which a configuration counts as degenerate.
inline constexpr double kDegenerateSingularRatio = 1e-12;

/**
 * Weighted closed-form similarity alignment (Horn's unit-quaternion method).
 *
 * Finds scale, R and t so that Z_j ~ scale * R * X_j + t, with points weighted
 * by \p weights. The rotation is the eigenvector of Horn's symmetric 4x4 matrix
 * with the largest eigenvalue, hence always proper.
 *
 * Throws DegenerateConfiguration for fewer than 3 points or a rank deficient
 * (collinear or coincident) configuration.
 */
template <typename Scalar, typename DerivedX, typename DerivedZ, typename DerivedW>
SimilarityTransform<Scalar> horn_align(const Eigen::MatrixBase<DerivedX>& X, const Eigen::MatrixBase<DerivedZ>& Z,
                                       const Eigen::MatrixBase<DerivedW>& weights,
                                       HornScale scale_mode = HornScale::symmetric)
{
    using Vec4 = Eigen::Matrix<Scalar, 4, 1>;
    using Mat4 = Eigen::Matrix<Scalar, 4, 4>;

    if (X.cols() != Z.cols() || weights.size() != X.cols())
    {
        throw InvalidInput("horn_align: point sets and weights must have the same length");
    }
    if (X.cols() < 3)
    {
        throw DegenerateConfiguration("horn_align: at least 3 point pairs are required");
    }
    if ((weights.array() < Scalar(0)).any() || !(weights.sum() > Scalar(0)))
    {
        throw InvalidInput("horn_align: weights must be nonnegative with a positive sum");
    }

    const Scalar wsum = weights.sum();
    const Vector3<Scalar> x_bar = (X * weights.asDiagonal()).rowwise().sum() / wsum;
    const Vector3<Scalar> z_bar = (Z * weights.asDiagonal()).rowwise().sum() / wsum;
    const PointSet3<Scalar> Xc = X.colwise() - x_bar;
    const PointSet3<Scalar> Zc = Z.colwise() - z_bar;

    const Matrix3<Scalar> M = Xc * weights.asDiagonal() * Zc.transpose();

    Eigen::JacobiSVD<Matrix3<Scalar>> svd(M);
    const Vector3<Scalar> sv = svd.singularValues();
    if (!(sv(0) > Scalar(0)) || sv(1) < Scalar(kDegenerateSingularRatio) * sv(0))
    {
        throw DegenerateConfiguration("horn_align: point configuration is rank deficient");
    }

    const Scalar sxx = M(0, 0), sxy = M(0, 1), sxz = M(0, 2);
    const Scalar syx = M(1, 0), syy = M(1, 1), syz = M(1, 2);
    const Scalar szx = M(2, 0), szy = M(2, 1), szz = M(2, 2);
    Mat4 N;
    N << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
         syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
         szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
         sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;

    Eigen::SelfAdjointEigenSolver<Mat4> eig(N);
    const Vec4 v = eig.eigenvectors().col(3);
    const Eigen::Quaternion<Scalar> q = canonicalize(Eigen::Quaternion<Scalar>(v(0), v(1), v(2), v(3)).normalized());
    const Matrix3<Scalar> R = q.toRotationMatrix();

    const Scalar xx = (Xc.colwise().squaredNorm().transpose().array() * weights.array()).sum();
    const Scalar zz = (Zc.colwise().squaredNorm().transpose().array() * weights.array()).sum();
    Scalar scale;
    if (scale_mode == HornScale::symmetric)
    {
        using std::sqrt;
        scale = sqrt(zz / xx);
    } else
    {
        scale = (R * M).trace() / xx;
    }
    if (!(scale > Scalar(0)))
    {
        throw DegenerateConfiguration("horn_align: non-positive scale estimate");
    }

    SimilarityTransform<Scalar> out;
    out.scale = scale;
    out.rotation = q;
    out.translation = z_bar - scale * R * x_bar;
    return out;
}

/// Unit-weight overload.
template <typename Scalar, typename DerivedX, typename DerivedZ>
SimilarityTransform<Scalar> horn_align(const Eigen::MatrixBase<DerivedX>& X, const Eigen::MatrixBase<DerivedZ>& Z,
                                       HornScale scale_mode = HornScale::symmetric)
{
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> ones = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Ones(X.cols());
    return horn_align<Scalar>(X, Z, ones, scale_mode);
}

/// Yaw in degrees of a rotation R = Rz * Ry * Rx, i.e. asin(-R(2,0)).
template <typename Scalar>
Scalar yaw_degrees(const Matrix3<Scalar>& R)
{
    using std::asin;
    using std::clamp;
    const Scalar s = clamp(-R(2, 0), Scalar(-1), Scalar(1));
    return asin(s) * Scalar(180) / Scalar(EIGEN_PI);
}

} // namespace rff

#endif // RFF_GEOMETRY_HPP
