#pragma once

// Internal SSIM machinery shared by the metric and the loss gradients.
// Everything runs on "valid" window positions: an 11-tap separable Gaussian
// shrinks a w x h image to (w-10) x (h-10) windowed statistics.

#include <cmath>
#include <cstddef>
#include <vector>

#include "sonoflow/errors.hpp"
#include "sonoflow/image.hpp"

namespace sonoflow::detail {

inline constexpr int kWin = 11;
inline constexpr int kHalfWin = kWin / 2;
inline constexpr double kSsimC1 = 1e-4; // (0.01 * L)^2, L = 1
inline constexpr double kSsimC2 = 9e-4; // (0.03 * L)^2

inline const double* gauss_kernel() {
    static const std::vector<double> k = [] {
        std::vector<double> v(kWin);
        const double sigma = 1.5;
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i) {
            const double d = i - kHalfWin;
            v[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
            sum += v[i];
        }
        for (double& x : v) x /= sum;
        return v;
    }();
    return k.data();
}

// Valid separable convolution: src is w x h, dst becomes (w-10) x (h-10).
inline void conv_valid(const std::vector<double>& src, int w, int h,
                       std::vector<double>& dst) {
    const int vw = w - kWin + 1;
    const int vh = h - kWin + 1;
    const double* g = gauss_kernel();
    std::vector<double> tmp(static_cast<size_t>(vw) * h);
    for (int y = 0; y < h; ++y) {
        const double* row = src.data() + static_cast<size_t>(y) * w;
        double* out = tmp.data() + static_cast<size_t>(y) * vw;
        for (int x = 0; x < vw; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k) acc += g[k] * row[x + k];
            out[x] = acc;
        }
    }
    dst.assign(static_cast<size_t>(vw) * vh, 0.0);
    for (int y = 0; y < vh; ++y) {
        double* out = dst.data() + static_cast<size_t>(y) * vw;
        for (int k = 0; k < kWin; ++k) {
            const double gk = g[k];
            const double* row = tmp.data() + static_cast<size_t>(y + k) * vw;
            for (int x = 0; x < vw; ++x) out[x] += gk * row[x];
        }
    }
}

// Adjoint of conv_valid: scatters a (w-10) x (h-10) gradient grid back onto
// the w x h pixel grid. Accumulates into dst, which must be pre-sized w*h.
inline void conv_valid_adjoint(const std::vector<double>& grid, int w, int h,
                               std::vector<double>& dst) {
    const int vw = w - kWin + 1;
    const int vh = h - kWin + 1;
    const double* g = gauss_kernel();
    std::vector<double> tmp(static_cast<size_t>(vw) * h, 0.0);
    for (int y = 0; y < vh; ++y) {
        const double* row = grid.data() + static_cast<size_t>(y) * vw;
        for (int k = 0; k < kWin; ++k) {
            const double gk = g[k];
            double* out = tmp.data() + static_cast<size_t>(y + k) * vw;
            for (int x = 0; x < vw; ++x) out[x] += gk * row[x];
        }
    }
    for (int y = 0; y < h; ++y) {
        const double* row = tmp.data() + static_cast<size_t>(y) * vw;
        double* out = dst.data() + static_cast<size_t>(y) * w;
        for (int x = 0; x < vw; ++x) {
            const double v = row[x];
            if (v == 0.0) continue;
            for (int k = 0; k < kWin; ++k) out[x + k] += g[k] * v;
        }
    }
}

// Windowed first and second moments of an image pair.
struct SsimStats {
    int vw = 0, vh = 0;
    std::vector<double> mu_a, mu_b; // window means
    std::vector<double> ta, tb, tab; // window means of a*a, b*b, a*b
    size_t size() const { return static_cast<size_t>(vw) * vh; }
};

inline SsimStats ssim_stats(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("ssim: image dimensions differ");
    if (a.width < kWin || a.height < kWin)
        throw ShapeError("ssim: images must be at least 11x11");
    SsimStats s;
    s.vw = a.width - kWin + 1;
    s.vh = a.height - kWin + 1;
    const size_t n = a.data.size();
    std::vector<double> prod(n);
    conv_valid(a.data, a.width, a.height, s.mu_a);
    conv_valid(b.data, a.width, a.height, s.mu_b);
    for (size_t i = 0; i < n; ++i) prod[i] = a.data[i] * a.data[i];
    conv_valid(prod, a.width, a.height, s.ta);
    for (size_t i = 0; i < n; ++i) prod[i] = b.data[i] * b.data[i];
    conv_valid(prod, a.width, a.height, s.tb);
    for (size_t i = 0; i < n; ++i) prod[i] = a.data[i] * b.data[i];
    conv_valid(prod, a.width, a.height, s.tab);
    return s;
}

// Per-window luminance * contrast-structure value and the cs factor alone.
inline void ssim_terms(const SsimStats& s, size_t i, double& lum_cs, double& cs) {
    const double mu_a = s.mu_a[i];
    const double mu_b = s.mu_b[i];
    const double var_a = s.ta[i] - mu_a * mu_a;
    const double var_b = s.tb[i] - mu_b * mu_b;
    const double cov = s.tab[i] - mu_a * mu_b;
    const double a1 = 2.0 * mu_a * mu_b + kSsimC1;
    const double b1 = mu_a * mu_a + mu_b * mu_b + kSsimC1;
    const double a2 = 2.0 * cov + kSsimC2;
    const double b2 = var_a + var_b + kSsimC2;
    cs = a2 / b2;
    lum_cs = (a1 / b1) * cs;
}

inline double mean_ssim_from_stats(const SsimStats& s) {
    double acc = 0.0;
    const size_t n = s.size();
    for (size_t i = 0; i < n; ++i) {
        double lum_cs, cs;
        ssim_terms(s, i, lum_cs, cs);
        acc += lum_cs;
    }
    return acc / static_cast<double>(n);
}

inline double mean_cs_from_stats(const SsimStats& s) {
    double acc = 0.0;
    const size_t n = s.size();
    for (size_t i = 0; i < n; ++i) {
        double lum_cs, cs;
        ssim_terms(s, i, lum_cs, cs);
        acc += cs;
    }
    return acc / static_cast<double>(n);
}

// d(mean of cs)/d(b), scaled by coeff, accumulated into gb (size w*h).
// The chain rule runs through the three windowed statistics that depend on
// b: mu_b, tb and tab. Each map below holds d(term)/d(stat) per window; the
// convolution adjoint then pushes them back to pixels.
void add_grad_mean_cs(const Image& a, const Image& b, const SsimStats& s,
                      double coeff, std::vector<double>& gb);

// Same for the mean of the full per-window SSIM value (luminance * cs).
void add_grad_mean_ssim(const Image& a, const Image& b, const SsimStats& s,
                        double coeff, std::vector<double>& gb);

// Truncated, renormalized multi-scale exponents for 1..3 scales.
std::vector<double> ms_weights(int scales);

// Shared forward pass: per-scale mean terms (cs at fine scales, full SSIM at
// the coarsest) and, when keep_levels is non-null, the pooled image pairs and
// statistics needed for the backward pass.
struct MsScaleData {
    Image a, b;
    SsimStats stats;
    double term = 0.0; // mean cs, or mean ssim at the coarsest scale
};
double ms_ssim_forward(const Image& a, const Image& b, int scales,
                       std::vector<double>* per_scale,
                       std::vector<MsScaleData>* keep_levels);

// Clamp applied to per-scale mean terms before the weighted geometric
// product; terms at or below the floor contribute a constant factor and a
// zero gradient.
inline constexpr double kMsTermFloor = 1e-12;

} // namespace sonoflow::detail
