/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: include/rff/errors.hpp
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

#ifndef RFF_ERRORS_HPP
#define RFF_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rff {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a precondition in a way no computation can recover from
/// (zero quaternion, mismatched sizes, non-finite coordinates).
class InvalidInput : public Error
{
public:
    using Error::Error;
};

/// Point configuration is rank deficient (too few points, collinear sets).
class DegenerateConfiguration : public Error
{
public:
    using Error::Error;
};

class SingularCovariance : public Error
{
public:
    using Error::Error;
};

/// Normal equations of the embedding update cannot be solved.
class SingularSystem : public Error
{
public:
    using Error::Error;
};

class UndefinedCorrelation : public Error
{
public:
    using Error::Error;
};

/// Malformed or truncated file, bad magic, checksum mismatch.
class FormatError : public Error
{
public:
    using Error::Error;
};

class UnsupportedFormat : public FormatError
{
public:
    using FormatError::FormatError;
};

} // namespace rff

#endif // RFF_ERRORS_HPP
