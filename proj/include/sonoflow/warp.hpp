#pragma once

#include <string>
#include <vector>

#include "sonoflow/image.hpp"

namespace sonoflow {

/// Dense per-pixel displacement field in pixel units. Backward-warp
/// convention throughout: output(x,y) = source(x + dx(x,y), y + dy(x,y)).
/// +x is rightward, +y is downward. Components are stored as float32,
/// matching the on-disk .udf layout exactly.
struct DeformationField {
    int width = 0;
    int height = 0;
    std::vector<float> dx;
    std::vector<float> dy;

    DeformationField() = default;
    DeformationField(int w, int h)
        : width(w), height(h),
          dx(static_cast<size_t>(w) * h, 0.0f),
          dy(static_cast<size_t>(w) * h, 0.0f) {}

    size_t index(int x, int y) const { return static_cast<size_t>(y) * width + x; }
};

void validate_field(const DeformationField& field, const std::string& what = "field");

/// Bilinear backward warp with clamp-to-edge sampling. Output intensities
/// never leave the hull of the four source taps, so the image range is
/// preserved and a zero field reproduces the source bit-exactly.
Image warp_image(const DeformationField& field, const Image& source);

/// Nearest-neighbor backward warp for labels; output stays binary.
BinaryMask warp_mask(const DeformationField& field, const BinaryMask& source);

/// Per-pixel a*fa + b*fb.
DeformationField field_lincomb(double a, const DeformationField& fa,
                               double b, const DeformationField& fb);

// .udf files: magic "UDF1", little-endian uint32 width and height, then
// row-major interleaved float32 (dx, dy) pairs. Round-trips are lossless.
DeformationField read_field(const std::string& path);
void write_field(const DeformationField& field, const std::string& path);

} // namespace sonoflow
