/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: src/io.cpp
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
#include "rff/io.hpp"

#include "boost/crc.hpp"

#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string_view>

namespace rff {

namespace {

constexpr char kModelMagic[8] = {'R', 'F', 'F', 'M', 'O', 'D', 'E', 'L'};

std::vector<std::string_view> split_fields(std::string_view line)
{
    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (i < line.size())
    {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
        {
            ++i;
        }
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])))
        {
            ++i;
        }
        if (i > start)
        {
            fields.push_back(line.substr(start, i - start));
        }
    }
    return fields;
}

double parse_double(std::string_view s, int line_no)
{
    double value = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && *first == '+')
    {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || !std::isfinite(value))
    {
        throw FormatError("landmarks line " + std::to_string(line_no) + ": invalid number '" + std::string(s) +
                          "'");
    }
    return value;
}

long parse_integer(std::string_view s, int line_no)
{
    long value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size())
    {
        throw FormatError("landmarks line " + std::to_string(line_no) + ": invalid integer '" + std::string(s) +
                          "'");
    }
    return value;
}

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class ByteWriter
{
public:
    void bytes(const void* data, std::size_t n)
    {
        const auto* p = static_cast<const std::uint8_t*>(data);
        out_.insert(out_.end(), p, p + n);
    }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i)
        {
            out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v)
    {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i)
        {
            out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
        }
    }
    void f64s(const double* data, std::size_t n)
    {
        for (std::size_t i = 0; i < n; ++i)
        {
            f64(data[i]);
        }
    }
    std::vector<std::uint8_t>& data() { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class ByteReader
{
public:
    ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    void need(std::size_t n) const
    {
        if (size_ - pos_ < n)
        {
            throw FormatError("model file is truncated");
        }
    }
    std::uint8_t u8()
    {
        need(1);
        return data_[pos_++];
    }
    std::uint32_t u32()
    {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
        {
            v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
        }
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64()
    {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
        {
            bits |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
        }
        return std::bit_cast<double>(bits);
    }
    void f64s(double* out, std::size_t n)
    {
        need(8 * n);
        for (std::size_t i = 0; i < n; ++i)
        {
            out[i] = f64();
        }
    }
    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return size_ - pos_; }

private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32(const std::uint8_t* data, std::size_t n)
{
    boost::crc_32_type crc;
    crc.process_bytes(data, n);
    return crc.checksum();
}

// Parses the next header token of a PNM file, skipping whitespace and comments.
std::string_view pnm_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos)
{
    while (pos < bytes.size())
    {
        if (bytes[pos] == '#')
        {
            while (pos < bytes.size() && bytes[pos] != '\n')
            {
                ++pos;
            }
        } else if (std::isspace(bytes[pos]))
        {
            ++pos;
        } else
        {
            break;
        }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#')
    {
        ++pos;
    }
    if (pos == start || pos >= bytes.size())
    {
        throw FormatError("image header is truncated");
    }
    return {reinterpret_cast<const char*>(bytes.data()) + start, pos - start};
}

int pnm_number(std::string_view token)
{
    int value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size() || value <= 0)
    {
        throw FormatError("image header has an invalid number");
    }
    return value;
}

} // namespace

LandmarkFile parse_landmarks(const std::string& text)
{
    if (text.empty() || text.back() != '\n')
    {
        throw FormatError("landmarks file must end with a newline");
    }
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    int stage = 0;
    long expected = -1;
    std::vector<Eigen::Vector3d> points;
    std::vector<double> confidence;
    int columns = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        const auto fields = split_fields(line);
        if (fields.empty() || fields.front().front() == '#')
        {
            continue;
        }
        if (stage == 0)
        {
            if (fields.size() != 2 || fields[0] != "version")
            {
                throw FormatError("landmarks line " + std::to_string(line_no) + ": expected 'version <n>'");
            }
            if (parse_integer(fields[1], line_no) != kLandmarkFormatVersion)
            {
                throw UnsupportedFormat("unsupported landmarks version");
            }
            stage = 1;
        } else if (stage == 1)
        {
            if (fields.size() != 2 || fields[0] != "count")
            {
                throw FormatError("landmarks line " + std::to_string(line_no) + ": expected 'count <J>'");
            }
            expected = parse_integer(fields[1], line_no);
            if (expected < 0)
            {
                throw FormatError("landmarks count must be nonnegative");
            }
            stage = 2;
        } else
        {
            const int n = static_cast<int>(fields.size());
            if (n != 3 && n != 4)
            {
                throw FormatError("landmarks line " + std::to_string(line_no) + ": expected 3 or 4 fields");
            }
            if (columns == 0)
            {
                columns = n;
            } else if (columns != n)
            {
                throw FormatError("landmarks line " + std::to_string(line_no) +
                                  ": confidence must be given for all points or none");
            }
            points.emplace_back(parse_double(fields[0], line_no), parse_double(fields[1], line_no),
                                parse_double(fields[2], line_no));
            if (n == 4)
            {
                confidence.push_back(parse_double(fields[3], line_no));
            }
        }
    }
    if (stage < 2)
    {
        throw FormatError("landmarks header is incomplete");
    }
    if (static_cast<long>(points.size()) != expected)
    {
        throw FormatError("landmarks count " + std::to_string(expected) + " does not match " +
                          std::to_string(points.size()) + " records");
    }
    LandmarkFile file;
    file.points.resize(3, static_cast<Eigen::Index>(points.size()));
    for (std::size_t j = 0; j < points.size(); ++j)
    {
        file.points.col(static_cast<Eigen::Index>(j)) = points[j];
    }
    if (columns == 4)
    {
        file.confidence = Eigen::Map<const Eigen::VectorXd>(confidence.data(),
                                                             static_cast<Eigen::Index>(confidence.size()));
    }
    return file;
}

std::string format_landmarks(const LandmarkFile& file)
{
    validate_points(file.points);
    if (file.confidence && file.confidence->size() != file.points.cols())
    {
        throw InvalidInput("format_landmarks: one confidence per point is required");
    }
    std::string out = "# rff landmarks: x y z";
    out += file.confidence ? " confidence\n" : "\n";
    out += "version " + std::to_string(kLandmarkFormatVersion) + "\n";
    out += "count " + std::to_string(file.points.cols()) + "\n";
    for (Eigen::Index j = 0; j < file.points.cols(); ++j)
    {
        out += format_double(file.points(0, j)) + " " + format_double(file.points(1, j)) + " " +
               format_double(file.points(2, j));
        if (file.confidence)
        {
            out += " " + format_double((*file.confidence)(j));
        }
        out += "\n";
    }
    return out;
}

LandmarkFile load_landmarks(const std::filesystem::path& path)
{
    const auto bytes = read_file(path);
    return parse_landmarks(std::string(bytes.begin(), bytes.end()));
}

void save_landmarks(const std::filesystem::path& path, const LandmarkFile& file)
{
    write_text(path, format_landmarks(file));
}

void save_landmarks(const std::filesystem::path& path, const PointSet3d& points)
{
    save_landmarks(path, LandmarkFile{points, std::nullopt});
}

std::vector<std::uint8_t> encode_model(const ShapeModel& model)
{
    validate(model);
    const auto N = static_cast<std::uint32_t>(model.num_vertices());
    const auto K = static_cast<std::uint32_t>(model.num_modes());
    const std::size_t dim = model.mean.size();

    ByteWriter w;
    w.bytes(kModelMagic, sizeof(kModelMagic));
    w.u32(kModelFormatVersion);
    w.u32(N);
    w.u32(K);
    w.u32(static_cast<std::uint32_t>(model.landmark_indices.size()));
    w.u32(static_cast<std::uint32_t>(model.triangles.size()));
    w.u32(model.expression ? static_cast<std::uint32_t>(model.expression->modes.cols()) : 0U);
    w.u8(0);
    w.u8(0);
    w.u8(0);
    w.u8(0);
    w.f64s(model.mean.data(), dim);
    w.f64s(model.modes.data(), dim * K);
    w.f64s(model.eigvals.data(), K);
    for (const Triangle& t : model.triangles)
    {
        for (int idx : t)
        {
            w.i32(idx);
        }
    }
    for (int idx : model.landmark_indices)
    {
        w.i32(idx);
    }
    if (model.expression)
    {
        const ExpressionPart& e = *model.expression;
        w.f64s(e.mean_offset.data(), dim);
        w.f64s(e.modes.data(), dim * static_cast<std::size_t>(e.modes.cols()));
        w.f64s(e.eigvals.data(), static_cast<std::size_t>(e.eigvals.size()));
    }
    const std::uint32_t crc = crc32(w.data().data(), w.data().size());
    w.u32(crc);
    return std::move(w.data());
}

ShapeModel decode_model(const std::vector<std::uint8_t>& bytes)
{
    if (bytes.size() < sizeof(kModelMagic) + 4 || std::memcmp(bytes.data(), kModelMagic, sizeof(kModelMagic)) != 0)
    {
        throw FormatError("not a model file (bad magic)");
    }
    const std::size_t body = bytes.size() - 4;
    ByteReader trailer(bytes.data() + body, 4);
    if (trailer.u32() != crc32(bytes.data(), body))
    {
        throw FormatError("model file checksum mismatch");
    }

    ByteReader r(bytes.data() + sizeof(kModelMagic), body - sizeof(kModelMagic));
    if (r.u32() != kModelFormatVersion)
    {
        throw UnsupportedFormat("unsupported model file version");
    }
    const std::uint32_t N = r.u32();
    const std::uint32_t K = r.u32();
    const std::uint32_t J = r.u32();
    const std::uint32_t T = r.u32();
    const std::uint32_t KE = r.u32();
    const std::uint8_t z_convention = r.u8();
    r.u8();
    r.u8();
    r.u8();
    if (z_convention != 0)
    {
        throw UnsupportedFormat("unsupported depth convention in model file");
    }
    const std::size_t dim = 3 * static_cast<std::size_t>(N);
    // Exact payload size check before allocating anything.
    const std::size_t expected = 8 * (dim + dim * K + K) + 4 * (3 * static_cast<std::size_t>(T) + J) +
                                 (KE > 0 ? 8 * (dim + dim * KE + KE) : 0);
    if (r.remaining() != expected)
    {
        throw FormatError("model file payload size does not match its header");
    }

    ShapeModel model;
    model.mean.resize(static_cast<Eigen::Index>(dim));
    r.f64s(model.mean.data(), dim);
    model.modes.resize(static_cast<Eigen::Index>(dim), K);
    r.f64s(model.modes.data(), dim * K);
    model.eigvals.resize(K);
    r.f64s(model.eigvals.data(), K);
    model.triangles.resize(T);
    for (Triangle& t : model.triangles)
    {
        for (int& idx : t)
        {
            idx = r.i32();
        }
    }
    model.landmark_indices.resize(J);
    for (int& idx : model.landmark_indices)
    {
        idx = r.i32();
    }
    if (KE > 0)
    {
        ExpressionPart e;
        e.mean_offset.resize(static_cast<Eigen::Index>(dim));
        r.f64s(e.mean_offset.data(), dim);
        e.modes.resize(static_cast<Eigen::Index>(dim), KE);
        r.f64s(e.modes.data(), dim * KE);
        e.eigvals.resize(KE);
        r.f64s(e.eigvals.data(), KE);
        model.expression = std::move(e);
    }
    validate(model);
    return model;
}

ShapeModel load_model(const std::filesystem::path& path)
{
    return decode_model(read_file(path));
}

void save_model(const std::filesystem::path& path, const ShapeModel& model)
{
    write_file(path, encode_model(model));
}

std::vector<std::uint8_t> encode_pnm(const Image& image)
{
    if (image.channels != 1 && image.channels != 3)
    {
        throw InvalidInput("encode_pnm: image must have 1 or 3 channels");
    }
    const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" +
                               std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

Image decode_pnm(const std::vector<std::uint8_t>& bytes)
{
    if (bytes.size() < 2 || bytes[0] != 'P')
    {
        throw FormatError("not a PNM image (bad magic)");
    }
    int channels = 0;
    if (bytes[1] == '5')
    {
        channels = 1;
    } else if (bytes[1] == '6')
    {
        channels = 3;
    } else
    {
        throw UnsupportedFormat("only binary PGM (P5) and PPM (P6) are supported");
    }
    std::size_t pos = 2;
    if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    {
        throw FormatError("image header is malformed");
    }
    const int width = pnm_number(pnm_token(bytes, pos));
    const int height = pnm_number(pnm_token(bytes, pos));
    const int maxval = pnm_number(pnm_token(bytes, pos));
    if (maxval != 255)
    {
        throw UnsupportedFormat("only maxval 255 is supported");
    }
    // Exactly one whitespace byte separates the header from the raster.
    if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    {
        throw FormatError("image header is truncated");
    }
    ++pos;
    const std::size_t expected =
        static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * static_cast<std::size_t>(channels);
    if (bytes.size() - pos != expected)
    {
        throw FormatError("image raster size does not match its header");
    }
    Image image(width, height, channels);
    std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), image.pixels.begin());
    return image;
}

std::filesystem::path mask_path(const std::filesystem::path& image_path)
{
    std::filesystem::path p = image_path;
    p.replace_extension();
    p += ".mask.pgm";
    return p;
}

void save_image(const std::filesystem::path& path, const Image& image)
{
    write_file(path, encode_pnm(image));
    const auto sidecar = mask_path(path);
    if (image.all_valid())
    {
        std::error_code ec;
        std::filesystem::remove(sidecar, ec);
        return;
    }
    Image mask(image.width, image.height, 1);
    for (std::size_t i = 0; i < image.mask.size(); ++i)
    {
        mask.pixels[i] = image.mask[i] ? 255 : 0;
    }
    write_file(sidecar, encode_pnm(mask));
}

Image load_image(const std::filesystem::path& path)
{
    Image image = decode_pnm(read_file(path));
    const auto sidecar = mask_path(path);
    if (std::filesystem::exists(sidecar))
    {
        const Image mask = decode_pnm(read_file(sidecar));
        if (mask.channels != 1 || mask.width != image.width || mask.height != image.height)
        {
            throw FormatError("mask sidecar does not match its image");
        }
        for (std::size_t i = 0; i < image.mask.size(); ++i)
        {
            image.mask[i] = mask.pixels[i] != 0 ? 1 : 0;
        }
    }
    return image;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw Error("cannot open '" + path.string() + "' for reading");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
    {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
    {
        throw Error("failed writing '" + path.string() + "'");
    }
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

} // namespace rff
