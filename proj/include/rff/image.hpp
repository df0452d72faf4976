/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: include/rff/image.hpp
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

#ifndef RFF_IMAGE_HPP
#define RFF_IMAGE_HPP

#include "rff/errors.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace rff {

/**
 * 8-bit image with 1 (gray) or 3 (RGB) interleaved channels and a per-pixel
 * validity mask.
 *
 * Pixel (x, y) covers [x, x+1) x [y, y+1) with y pointing down. Invalid pixels
 * hold 255 in every channel so they display as white.
 */
struct Image
{
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;
    /// 1 = valid, 0 = masked.
    std::vector<std::uint8_t> mask;

    Image() = default;

    Image(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c), pixels(checked_size(w, h, c), fill),
          mask(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 1)
    {
    }

    std::size_t index(int x, int y) const
    {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
    }

    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

    std::uint8_t& at(int x, int y, int c = 0) { return pixels[index(x, y) * channels + c]; }
    std::uint8_t at(int x, int y, int c = 0) const { return pixels[index(x, y) * channels + c]; }

    bool valid(int x, int y) const { return mask[index(x, y)] != 0; }

    /// Marks a pixel invalid and paints it white.
    void invalidate(int x, int y)
    {
        mask[index(x, y)] = 0;
        for (int c = 0; c < channels; ++c)
        {
            at(x, y, c) = 255;
        }
    }

    bool all_valid() const
    {
        for (std::uint8_t m : mask)
        {
            if (m == 0)
            {
                return false;
            }
        }
        return true;
    }

    bool operator==(const Image& other) const = default;

private:
    static std::size_t checked_size(int w, int h, int c)
    {
        if (w <= 0 || h <= 0)
        {
            throw InvalidInput("image dimensions must be positive");
        }
        if (c != 1 && c != 3)
        {
            throw InvalidInput("image must have 1 or 3 channels");
        }
        return static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c);
    }
};

/// Luma (0.299 R + 0.587 G + 0.114 B) of a pixel; the value itself for gray images.
inline double luma(const Image& image, int x, int y)
{
    if (image.channels == 1)
    {
        return image.at(x, y);
    }
    return 0.299 * image.at(x, y, 0) + 0.587 * image.at(x, y, 1) + 0.114 * image.at(x, y, 2);
}

} // namespace rff

#endif // RFF_IMAGE_HPP
