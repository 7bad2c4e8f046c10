#include "sonoflow/overlay.hpp"

#include <algorithm>
#include <cmath>

#include "sonoflow/errors.hpp"

namespace sonoflow {

namespace {

void draw_line(Image& img, double x0, double y0, double x1, double y1) {
    const double dx = x1 - x0, dy = y1 - y0;
    const int steps = std::max(1, static_cast<int>(std::ceil(
                          2.0 * std::max(std::abs(dx), std::abs(dy)))));
    for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        const int x = static_cast<int>(std::lround(x0 + t * dx));
        const int y = static_cast<int>(std::lround(y0 + t * dy));
        if (x >= 0 && x < img.width && y >= 0 && y < img.height)
            img.at(x, y) = 1.0;
    }
}

} // namespace

Image overlay_field(const Image& img, const DeformationField& field, int stride) {
    validate_image(img);
    if (field.width != img.width || field.height != img.height)
        throw ShapeError("overlay: field dimensions differ from image");
    if (stride < 1)
        throw DomainError("overlay: stride must be at least 1");
    Image out = img;
    for (int y = stride / 2; y < img.height; y += stride) {
        for (int x = stride / 2; x < img.width; x += stride) {
            const size_t i = field.index(x, y);
            draw_line(out, x, y, x + field.dx[i], y + field.dy[i]);
        }
    }
    return out;
}

Image overlay_mask(const Image& img, const BinaryMask& mask) {
    validate_image(img);
    if (mask.width != img.width || mask.height != img.height)
        throw ShapeError("overlay: mask dimensions differ from image");
    Image out = img;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (!mask.at(x, y)) continue;
            const bool edge = (x == 0 || !mask.at(x - 1, y))
                           || (x == img.width - 1 || !mask.at(x + 1, y))
                           || (y == 0 || !mask.at(x, y - 1))
                           || (y == img.height - 1 || !mask.at(x, y + 1));
            if (edge) out.at(x, y) = 1.0;
        }
    }
    return out;
}

} // namespace sonoflow
