#pragma once

// Brute-force reference implementations used to cross-check the library.
// Everything here is written directly from the definitions (per-window sums,
// per-pixel loops) and deliberately shares no code with src/.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "sonoflow/image.hpp"
#include "sonoflow/warp.hpp"

namespace oracle {

using sonoflow::BinaryMask;
using sonoflow::DeformationField;
using sonoflow::Image;

// ---- warping ----

inline Image bilinear_warp(const DeformationField& u, const Image& src) {
    Image out = src;
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < src.width; ++x) {
            const size_t i = static_cast<size_t>(y) * src.width + x;
            double sx = x + static_cast<double>(u.dx[i]);
            double sy = y + static_cast<double>(u.dy[i]);
            sx = std::min(std::max(sx, 0.0), src.width - 1.0);
            sy = std::min(std::max(sy, 0.0), src.height - 1.0);
            int x0 = static_cast<int>(std::floor(sx));
            int y0 = static_cast<int>(std::floor(sy));
            if (x0 > src.width - 2) x0 = src.width - 2;
            if (y0 > src.height - 2) y0 = src.height - 2;
            const double fx = sx - x0, fy = sy - y0;
            out.data[i] = (1 - fx) * (1 - fy) * src.at(x0, y0)
                        + fx * (1 - fy) * src.at(x0 + 1, y0)
                        + (1 - fx) * fy * src.at(x0, y0 + 1)
                        + fx * fy * src.at(x0 + 1, y0 + 1);
        }
    }
    return out;
}

// ---- SSIM via direct 2D window sums ----

struct Window2D {
    double k[11][11];
    Window2D() {
        const double sigma = 1.5;
        double sum = 0.0;
        for (int i = 0; i < 11; ++i)
            for (int j = 0; j < 11; ++j) {
                const double dy = i - 5, dx = j - 5;
                k[i][j] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
                sum += k[i][j];
            }
        for (int i = 0; i < 11; ++i)
            for (int j = 0; j < 11; ++j) k[i][j] /= sum;
    }
};

// Mean per-window SSIM (when full == true) or contrast-structure only.
inline double windowed_similarity(const Image& a, const Image& b, bool full) {
    static const Window2D win;
    const double c1 = 1e-4, c2 = 9e-4;
    double acc = 0.0;
    int count = 0;
    for (int y = 0; y + 11 <= a.height; ++y) {
        for (int x = 0; x + 11 <= a.width; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    const double va = a.at(x + j, y + i);
                    const double vb = b.at(x + j, y + i);
                    ma += win.k[i][j] * va;
                    mb += win.k[i][j] * vb;
                    saa += win.k[i][j] * va * va;
                    sbb += win.k[i][j] * vb * vb;
                    sab += win.k[i][j] * va * vb;
                }
            const double var_a = saa - ma * ma;
            const double var_b = sbb - mb * mb;
            const double cov = sab - ma * mb;
            const double cs = (2 * cov + c2) / (var_a + var_b + c2);
            const double lum = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            acc += full ? lum * cs : cs;
            ++count;
        }
    }
    return acc / count;
}

inline double ssim(const Image& a, const Image& b) {
    return windowed_similarity(a, b, true);
}

inline Image half(const Image& img) {
    Image out;
    out.width = img.width / 2;
    out.height = img.height / 2;
    out.data.resize(static_cast<size_t>(out.width) * out.height);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.at(x, y) = (img.at(2 * x, 2 * y) + img.at(2 * x + 1, 2 * y)
                            + img.at(2 * x, 2 * y + 1)
                            + img.at(2 * x + 1, 2 * y + 1)) / 4.0;
    return out;
}

// Multi-scale SSIM; assumes all mean terms are positive (true on the smooth
// positive images the tests feed it).
inline double ms_ssim(Image a, Image b, int scales) {
    const double base[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    double wsum = 0.0;
    for (int j = 0; j < scales; ++j) wsum += base[j];
    if (scales == 1) return ssim(a, b);
    double prod = 1.0;
    for (int j = 0; j < scales; ++j) {
        const bool last = j == scales - 1;
        const double term = windowed_similarity(a, b, last);
        prod *= std::pow(term, base[j] / wsum);
        if (!last) {
            a = half(a);
            b = half(b);
        }
    }
    return prod;
}

// ---- curvature penalty from the definition ----

inline double curvature_loss(const DeformationField& u) {
    const int w = u.width, h = u.height;
    auto comp = [&](const std::vector<float>& c) {
        double acc = 0.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                auto at = [&](int xx, int yy) {
                    xx = std::clamp(xx, 0, w - 1);
                    yy = std::clamp(yy, 0, h - 1);
                    return static_cast<double>(c[static_cast<size_t>(yy) * w + xx]);
                };
                const double lap = at(x - 1, y) + at(x + 1, y) + at(x, y - 1)
                                 + at(x, y + 1) - 4.0 * at(x, y);
                acc += lap * lap;
            }
        return acc;
    };
    return (comp(u.dx) + comp(u.dy))
         / (2.0 * static_cast<double>(w) * static_cast<double>(h));
}

// ---- randomized instances ----

inline Image random_image(std::mt19937& rng, int w, int h) {
    Image img;
    img.width = w;
    img.height = h;
    img.data.resize(static_cast<size_t>(w) * h);
    std::uniform_real_distribution<double> dist(0.05, 0.95);
    for (double& v : img.data) v = dist(rng);
    return img;
}

// Smooth random image: noise pushed through a couple of box blurs so
// windowed statistics are well away from degenerate values.
inline Image random_smooth_image(std::mt19937& rng, int w, int h) {
    Image img = random_image(rng, w, h);
    for (int pass = 0; pass < 2; ++pass) {
        Image tmp = img;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                int n = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int xx = x + dx, yy = y + dy;
                        if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
                        acc += img.at(xx, yy);
                        ++n;
                    }
                tmp.at(x, y) = acc / n;
            }
        img = tmp;
    }
    return img;
}

// Random field whose sample points always land strictly inside the image
// with fractional parts in [0.25, 0.75]: keeps bilinear interpolation away
// from its kinks at integer coordinates and from border clamping, so central
// finite differences are trustworthy.
inline DeformationField random_field(std::mt19937& rng, int w, int h,
                                     int max_cells) {
    DeformationField u;
    u.width = w;
    u.height = h;
    u.dx.resize(static_cast<size_t>(w) * h);
    u.dy.resize(u.dx.size());
    std::uniform_int_distribution<int> cell(-max_cells, max_cells);
    std::uniform_real_distribution<double> frac(0.25, 0.75);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            const int cx = std::clamp(x + cell(rng), 0, w - 2);
            const int cy = std::clamp(y + cell(rng), 0, h - 2);
            u.dx[i] = static_cast<float>(cx + frac(rng) - x);
            u.dy[i] = static_cast<float>(cy + frac(rng) - y);
        }
    return u;
}

// ---- finite differences ----

// Central difference of `value` with respect to one field entry. Divides by
// the realized float32 spacing so quantization of the field storage does not
// bias the estimate.
template <class F>
double fd_partial(DeformationField& u, bool x_component, size_t idx, double h,
                  F&& value) {
    std::vector<float>& arr = x_component ? u.dx : u.dy;
    const float orig = arr[idx];
    const float up = static_cast<float>(static_cast<double>(orig) + h);
    const float dn = static_cast<float>(static_cast<double>(orig) - h);
    arr[idx] = up;
    const double vp = value(static_cast<const DeformationField&>(u));
    arr[idx] = dn;
    const double vm = value(static_cast<const DeformationField&>(u));
    arr[idx] = orig;
    return (vp - vm) / (static_cast<double>(up) - static_cast<double>(dn));
}

inline double rel_err(double got, double want) {
    const double scale = std::max({std::abs(got), std::abs(want), 1e-8});
    return std::abs(got - want) / scale;
}

} // namespace oracle
