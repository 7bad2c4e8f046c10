#include <doctest.h>

#include "sonoflow/errors.hpp"
#include "sonoflow/overlay.hpp"

using namespace sonoflow;

namespace {

Image gray(int w, int h, double v = 0.3) {
    Image img;
    img.width = w;
    img.height = h;
    img.data.assign(static_cast<size_t>(w) * h, v);
    return img;
}

DeformationField constant_field(int w, int h, float dx, float dy) {
    DeformationField f;
    f.width = w;
    f.height = h;
    f.dx.assign(static_cast<size_t>(w) * h, dx);
    f.dy.assign(static_cast<size_t>(w) * h, dy);
    return f;
}

} // namespace

TEST_CASE("a constant rightward field draws horizontal strokes") {
    const Image base = gray(16, 16);
    const Image out = overlay_field(base, constant_field(16, 16, 4.0f, 0.0f), 8);
    // grid points sit at stride/2 offsets: (4,4), (12,4), (4,12), (12,12)
    for (int gx : {4, 12})
        for (int gy : {4, 12}) {
            for (int t = 0; t <= 4 && gx + t < 16; ++t)
                CHECK(out.at(gx + t, gy) == 1.0);
            CHECK(out.at(gx, gy + 1) == 0.3); // nothing vertical
        }
    CHECK(out.at(0, 0) == 0.3); // off-grid pixels untouched
}

TEST_CASE("a zero field marks only the grid points") {
    const Image base = gray(16, 16);
    const Image out = overlay_field(base, constant_field(16, 16, 0.0f, 0.0f), 8);
    int marked = 0;
    for (double v : out.data) marked += (v == 1.0);
    CHECK(marked == 4);
    CHECK(out.at(4, 4) == 1.0);
    CHECK(out.at(12, 12) == 1.0);
}

TEST_CASE("downward displacement draws downward") {
    const Image base = gray(16, 16);
    const Image out = overlay_field(base, constant_field(16, 16, 0.0f, 3.0f), 8);
    CHECK(out.at(4, 4) == 1.0);
    CHECK(out.at(4, 7) == 1.0);
    CHECK(out.at(4, 2) == 0.3);
}

TEST_CASE("strokes clip at the image border") {
    const Image base = gray(16, 16);
    const Image out = overlay_field(base, constant_field(16, 16, 40.0f, 0.0f), 8);
    CHECK(out.at(15, 4) == 1.0);
    CHECK(out.at(15, 12) == 1.0);
}

TEST_CASE("overlay_field validates shapes") {
    const Image base = gray(16, 16);
    CHECK_THROWS_AS(overlay_field(base, constant_field(8, 16, 0.0f, 0.0f), 4),
                    ShapeError);
    CHECK_THROWS_AS(overlay_field(base, constant_field(16, 16, 0.0f, 0.0f), 0),
                    DomainError);
}

TEST_CASE("mask overlay traces the contour only") {
    const Image base = gray(12, 12);
    BinaryMask mask;
    mask.width = 12;
    mask.height = 12;
    mask.data.assign(144, 0);
    for (int y = 3; y <= 7; ++y)
        for (int x = 4; x <= 8; ++x) mask.at(x, y) = 1;

    const Image out = overlay_mask(base, mask);
    CHECK(out.at(4, 3) == 1.0);  // corner of the square
    CHECK(out.at(6, 3) == 1.0);  // top edge
    CHECK(out.at(6, 5) == 0.3);  // interior untouched
    CHECK(out.at(0, 0) == 0.3);  // background untouched
    CHECK(out.at(8, 7) == 1.0);  // bottom-right corner
}

TEST_CASE("mask pixels on the image border count as contour") {
    const Image base = gray(8, 8);
    BinaryMask mask;
    mask.width = 8;
    mask.height = 8;
    mask.data.assign(64, 1);
    const Image out = overlay_mask(base, mask);
    CHECK(out.at(0, 0) == 1.0);
    CHECK(out.at(7, 3) == 1.0);
    CHECK(out.at(3, 3) == 0.3); // fully surrounded stays interior

    BinaryMask wrong = mask;
    wrong.width = 4;
    wrong.data.resize(32);
    CHECK_THROWS_AS(overlay_mask(base, wrong), ShapeError);
}
