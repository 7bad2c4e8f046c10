#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "sonoflow/errors.hpp"
#include "sonoflow/warp.hpp"

using namespace sonoflow;
namespace fs = std::filesystem;

namespace {

DeformationField constant_field(int w, int h, float dx, float dy) {
    DeformationField u;
    u.width = w;
    u.height = h;
    u.dx.assign(static_cast<size_t>(w) * h, dx);
    u.dy.assign(static_cast<size_t>(w) * h, dy);
    return u;
}

} // namespace

TEST_CASE("zero field warp is bit-exact identity") {
    std::mt19937 rng(11);
    const Image img = oracle::random_image(rng, 13, 9);
    const Image out = warp_image(constant_field(13, 9, 0.0f, 0.0f), img);
    REQUIRE(out.data.size() == img.data.size());
    CHECK(std::memcmp(out.data.data(), img.data.data(),
                      img.data.size() * sizeof(double)) == 0);
}

TEST_CASE("integer shifts sample exactly and clamp at the border") {
    std::mt19937 rng(12);
    const Image img = oracle::random_image(rng, 8, 6);
    const Image out = warp_image(constant_field(8, 6, 1.0f, 0.0f), img);
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 7; ++x)
            CHECK(out.at(x, y) == doctest::Approx(img.at(x + 1, y)).epsilon(1e-15));
        CHECK(out.at(7, y) == doctest::Approx(img.at(7, y)).epsilon(1e-15));
    }
}

TEST_CASE("bilinear warp matches the brute-force oracle") {
    std::mt19937 rng(13);
    std::uniform_int_distribution<int> dim(2, 16);
    for (int trial = 0; trial < 60; ++trial) {
        const int w = dim(rng), h = dim(rng);
        const Image img = oracle::random_image(rng, w, h);
        const DeformationField u = oracle::random_field(rng, w, h, 3);
        const Image got = warp_image(u, img);
        const Image want = oracle::bilinear_warp(u, img);
        for (size_t i = 0; i < got.data.size(); ++i)
            CHECK(std::abs(got.data[i] - want.data[i]) <= 1e-6);
    }
}

TEST_CASE("warp output never leaves the source value range") {
    std::mt19937 rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        const Image img = oracle::random_image(rng, 12, 12);
        DeformationField u = constant_field(12, 12, 0.0f, 0.0f);
        std::uniform_real_distribution<float> d(-20.0f, 20.0f);
        for (size_t i = 0; i < u.dx.size(); ++i) {
            u.dx[i] = d(rng);
            u.dy[i] = d(rng);
        }
        const auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
        const Image out = warp_image(u, img);
        for (double v : out.data) {
            CHECK(v >= *lo);
            CHECK(v <= *hi);
        }
    }
}

TEST_CASE("mask warp is nearest-neighbor and stays binary") {
    BinaryMask m;
    m.width = 6;
    m.height = 1;
    m.data = {0, 0, 1, 1, 0, 0};
    // +0.6 rounds to the next pixel, so the band shifts left by one.
    const BinaryMask out = warp_mask(constant_field(6, 1, 0.6f, 0.0f), m);
    CHECK(out.data == std::vector<uint8_t>{0, 1, 1, 0, 0, 0});
    const BinaryMask same = warp_mask(constant_field(6, 1, 0.4f, 0.0f), m);
    CHECK(same.data == m.data);
    for (uint8_t v : out.data) CHECK((v == 0 || v == 1));
}

TEST_CASE("field linear combinations") {
    std::mt19937 rng(15);
    const DeformationField a = oracle::random_field(rng, 7, 5, 2);
    const DeformationField b = oracle::random_field(rng, 7, 5, 2);

    const DeformationField keep = field_lincomb(1.0, a, 0.0, b);
    CHECK(std::memcmp(keep.dx.data(), a.dx.data(), a.dx.size() * 4) == 0);
    CHECK(std::memcmp(keep.dy.data(), a.dy.data(), a.dy.size() * 4) == 0);

    const DeformationField mix = field_lincomb(0.25, a, 0.75, b);
    for (size_t i = 0; i < mix.dx.size(); ++i) {
        CHECK(mix.dx[i] == doctest::Approx(0.25 * a.dx[i] + 0.75 * b.dx[i]).epsilon(1e-6));
        CHECK(mix.dy[i] == doctest::Approx(0.25 * a.dy[i] + 0.75 * b.dy[i]).epsilon(1e-6));
    }

    DeformationField other = b;
    other.width = 3;
    other.height = 5;
    other.dx.resize(15);
    other.dy.resize(15);
    CHECK_THROWS_AS(field_lincomb(1.0, a, 1.0, other), ShapeError);
}

TEST_CASE("field files round trip bitwise") {
    std::mt19937 rng(16);
    const DeformationField u = oracle::random_field(rng, 5, 4, 2);
    const fs::path dir = fs::temp_directory_path() / "sonoflow_udf_test";
    fs::create_directories(dir);
    const std::string path = (dir / "u.udf").string();
    write_field(u, path);

    CHECK(fs::file_size(path) == 12 + u.dx.size() * 8);

    const DeformationField back = read_field(path);
    REQUIRE(back.width == u.width);
    REQUIRE(back.height == u.height);
    CHECK(std::memcmp(back.dx.data(), u.dx.data(), u.dx.size() * 4) == 0);
    CHECK(std::memcmp(back.dy.data(), u.dy.data(), u.dy.size() * 4) == 0);

    {
        std::ofstream out(dir / "bad.udf", std::ios::binary);
        out << "NOPE";
    }
    CHECK_THROWS_AS(read_field((dir / "bad.udf").string()), FormatError);

    {
        std::ofstream out(dir / "short.udf", std::ios::binary);
        out << "UDF1";
        const uint32_t wh[2] = {4, 4};
        out.write(reinterpret_cast<const char*>(wh), 8);
        const float one = 1.0f;
        out.write(reinterpret_cast<const char*>(&one), 4);
    }
    CHECK_THROWS_AS(read_field((dir / "short.udf").string()), FormatError);
    CHECK_THROWS_AS(read_field("/nonexistent/u.udf"), IoError);
    fs::remove_all(dir);
}

TEST_CASE("field validation rejects non-finite and absurd displacements") {
    DeformationField u = constant_field(8, 8, 0.5f, -0.5f);
    CHECK_NOTHROW(validate_field(u));
    u.dx[10] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(validate_field(u), ValidationError);
    u.dx[10] = 1e6f;
    CHECK_THROWS_AS(validate_field(u), ValidationError);
    u.dx[10] = 0.0f;
    u.dy.pop_back();
    CHECK_THROWS_AS(validate_field(u), ShapeError);
}
