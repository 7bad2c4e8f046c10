#include "sonoflow/warp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace sonoflow {

namespace {

void require_same_shape(int wa, int ha, int wb, int hb, const char* what) {
    if (wa != wb || ha != hb)
        throw ShapeError(std::string(what) + ": " + std::to_string(wa) + "x" +
                         std::to_string(ha) + " vs " + std::to_string(wb) + "x" +
                         std::to_string(hb));
}

} // namespace

void validate_field(const DeformationField& field, const std::string& what) {
    const size_t n = static_cast<size_t>(field.width) * field.height;
    if (field.width < 1 || field.height < 1 || field.dx.size() != n || field.dy.size() != n)
        throw ShapeError(what + ": component length does not match width*height");
    const float bound = static_cast<float>(std::max(field.width, field.height));
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(field.dx[i]) || !std::isfinite(field.dy[i]))
            throw ValidationError(what + ": non-finite displacement");
        if (std::fabs(field.dx[i]) > bound || std::fabs(field.dy[i]) > bound)
            throw ValidationError(what + ": displacement magnitude exceeds max(width,height)");
    }
}

Image warp_image(const DeformationField& field, const Image& source) {
    require_same_shape(field.width, field.height, source.width, source.height, "warp_image");
    const int w = source.width, h = source.height;
    Image out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = field.index(x, y);
            const double sx = std::clamp(x + static_cast<double>(field.dx[i]), 0.0, w - 1.0);
            const double sy = std::clamp(y + static_cast<double>(field.dy[i]), 0.0, h - 1.0);
            const int x0 = std::min(static_cast<int>(sx), w - 2);
            const int y0 = std::min(static_cast<int>(sy), h - 2);
            const double fx = sx - x0;
            const double fy = sy - y0;
            const double v00 = source.at(x0, y0), v10 = source.at(x0 + 1, y0);
            const double v01 = source.at(x0, y0 + 1), v11 = source.at(x0 + 1, y0 + 1);
            double v = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) +
                       fy * ((1.0 - fx) * v01 + fx * v11);
            // keep the result inside the hull of the four taps; rounding
            // could otherwise leak past the source range by one ulp
            const double lo = std::min(std::min(v00, v10), std::min(v01, v11));
            const double hi = std::max(std::max(v00, v10), std::max(v01, v11));
            out.data[i] = std::clamp(v, lo, hi);
        }
    }
    return out;
}

BinaryMask warp_mask(const DeformationField& field, const BinaryMask& source) {
    require_same_shape(field.width, field.height, source.width, source.height, "warp_mask");
    const int w = source.width, h = source.height;
    BinaryMask out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = field.index(x, y);
            // round half away from zero, then clamp to the raster
            const long sx = std::lround(x + static_cast<double>(field.dx[i]));
            const long sy = std::lround(y + static_cast<double>(field.dy[i]));
            const int cx = static_cast<int>(std::clamp<long>(sx, 0, w - 1));
            const int cy = static_cast<int>(std::clamp<long>(sy, 0, h - 1));
            out.data[i] = source.at(cx, cy);
        }
    }
    return out;
}

DeformationField field_lincomb(double a, const DeformationField& fa,
                               double b, const DeformationField& fb) {
    require_same_shape(fa.width, fa.height, fb.width, fb.height, "field_lincomb");
    DeformationField out(fa.width, fa.height);
    const size_t n = fa.dx.size();
    for (size_t i = 0; i < n; ++i) {
        out.dx[i] = static_cast<float>(a * fa.dx[i] + b * fb.dx[i]);
        out.dy[i] = static_cast<float>(a * fa.dy[i] + b * fb.dy[i]);
    }
    return out;
}

namespace {

constexpr char kFieldMagic[4] = {'U', 'D', 'F', '1'};

uint32_t read_u32le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

void write_u32le(std::ostream& out, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>(v >> 8 & 0xff),
                                static_cast<unsigned char>(v >> 16 & 0xff),
                                static_cast<unsigned char>(v >> 24 & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

static_assert(std::endian::native == std::endian::little,
              "float payload below is written as native little-endian bytes");

} // namespace

DeformationField read_field(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": cannot open for reading");
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kFieldMagic, 4) != 0)
        throw FormatError(path + ": bad magic (expected UDF1)");
    const uint32_t w = read_u32le(in);
    const uint32_t h = read_u32le(in);
    if (!in) throw FormatError(path + ": truncated header");
    if (w < 1 || h < 1 || w > 1u << 20 || h > 1u << 20)
        throw FormatError(path + ": implausible dimensions " + std::to_string(w) + "x" +
                          std::to_string(h));
    DeformationField field(static_cast<int>(w), static_cast<int>(h));
    const size_t n = field.dx.size();
    std::vector<float> interleaved(n * 2);
    in.read(reinterpret_cast<char*>(interleaved.data()),
            static_cast<std::streamsize>(n * 2 * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(n * 2 * sizeof(float)))
        throw FormatError(path + ": truncated payload");
    for (size_t i = 0; i < n; ++i) {
        field.dx[i] = interleaved[2 * i];
        field.dy[i] = interleaved[2 * i + 1];
    }
    return field;
}

void write_field(const DeformationField& field, const std::string& path) {
    validate_field(field, "write_field input");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path + ": cannot open for writing");
    out.write(kFieldMagic, 4);
    write_u32le(out, static_cast<uint32_t>(field.width));
    write_u32le(out, static_cast<uint32_t>(field.height));
    const size_t n = field.dx.size();
    std::vector<float> interleaved(n * 2);
    for (size_t i = 0; i < n; ++i) {
        interleaved[2 * i] = field.dx[i];
        interleaved[2 * i + 1] = field.dy[i];
    }
    out.write(reinterpret_cast<const char*>(interleaved.data()),
              static_cast<std::streamsize>(n * 2 * sizeof(float)));
    if (!out) throw IoError(path + ": write failed");
}

} // namespace sonoflow
