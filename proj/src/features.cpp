#include "sonoflow/features.hpp"

#include <algorithm>
#include <cmath>

#include "sonoflow/errors.hpp"

namespace sonoflow {

namespace {

// Separable Gaussian blur with replicate borders.
Image gaussian_blur(const Image& img, double sigma) {
    if (sigma <= 0.0) return img;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;

    const int w = img.width, h = img.height;
    Image tmp = img, out = img;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xi = std::clamp(x + i, 0, w - 1);
                acc += k[i + radius] * img.at(xi, y);
            }
            tmp.at(x, y) = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yi = std::clamp(y + i, 0, h - 1);
                acc += k[i + radius] * tmp.at(x, yi);
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

Image decimate2(const Image& img) {
    Image out;
    out.width = (img.width + 1) / 2;
    out.height = (img.height + 1) / 2;
    out.data.resize(static_cast<size_t>(out.width) * out.height);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.at(x, y) = img.at(2 * x, 2 * y);
    return out;
}

// 2D quadratic fit around a DoG extremum; offset clamped to half a pixel.
void refine_subpixel(const Image& d, int x, int y, double& ox, double& oy) {
    ox = oy = 0.0;
    const double gx = 0.5 * (d.at(x + 1, y) - d.at(x - 1, y));
    const double gy = 0.5 * (d.at(x, y + 1) - d.at(x, y - 1));
    const double hxx = d.at(x + 1, y) - 2.0 * d.at(x, y) + d.at(x - 1, y);
    const double hyy = d.at(x, y + 1) - 2.0 * d.at(x, y) + d.at(x, y - 1);
    const double hxy = 0.25 * (d.at(x + 1, y + 1) - d.at(x + 1, y - 1)
                               - d.at(x - 1, y + 1) + d.at(x - 1, y - 1));
    const double det = hxx * hyy - hxy * hxy;
    if (std::abs(det) < 1e-12) return;
    ox = std::clamp(-(hyy * gx - hxy * gy) / det, -0.5, 0.5);
    oy = std::clamp(-(hxx * gy - hxy * gx) / det, -0.5, 0.5);
}

} // namespace

std::vector<Keypoint> detect_keypoints(const Image& img,
                                       const DetectorConfig& cfg) {
    validate_image(img);
    if (cfg.octaves < 1 || cfg.levels_per_octave < 1)
        throw DomainError("detect_keypoints: octaves and levels must be positive");
    if (cfg.base_sigma <= 0.0)
        throw DomainError("detect_keypoints: base_sigma must be positive");
    if (img.width < 16 || img.height < 16)
        throw ShapeError("detect_keypoints: image must be at least 16x16");

    const int s_count = cfg.levels_per_octave; // extrema layers per octave
    const int gauss_count = s_count + 3;
    std::vector<double> sigmas(gauss_count);
    for (int s = 0; s < gauss_count; ++s)
        sigmas[s] = cfg.base_sigma * std::pow(2.0, static_cast<double>(s) / s_count);

    std::vector<Keypoint> kps;
    Image base = img;
    for (int o = 0; o < cfg.octaves; ++o) {
        if (base.width < 5 || base.height < 5) break;
        const double step = std::pow(2.0, o); // octave-to-full-res factor

        std::vector<Image> g(gauss_count);
        g[0] = (o == 0) ? gaussian_blur(base, sigmas[0]) : base;
        for (int s = 1; s < gauss_count; ++s) {
            const double inc = std::sqrt(sigmas[s] * sigmas[s]
                                         - sigmas[s - 1] * sigmas[s - 1]);
            g[s] = gaussian_blur(g[s - 1], inc);
        }
        std::vector<Image> dog(gauss_count - 1);
        for (int s = 0; s + 1 < gauss_count; ++s) {
            dog[s] = g[s];
            for (size_t i = 0; i < dog[s].data.size(); ++i)
                dog[s].data[i] = g[s + 1].data[i] - g[s].data[i];
        }

        const int w = base.width, h = base.height;
        for (int s = 1; s <= s_count; ++s) {
            const Image& dm = dog[s - 1];
            const Image& d0 = dog[s];
            const Image& dp = dog[s + 1];
            for (int y = 1; y < h - 1; ++y) {
                for (int x = 1; x < w - 1; ++x) {
                    const double v = d0.at(x, y);
                    if (std::abs(v) <= cfg.contrast_threshold) continue;
                    bool is_max = true, is_min = true;
                    for (int dy = -1; dy <= 1 && (is_max || is_min); ++dy) {
                        for (int dx = -1; dx <= 1; ++dx) {
                            for (const Image* layer : {&dm, &d0, &dp}) {
                                if (layer == &d0 && dx == 0 && dy == 0) continue;
                                const double nv = layer->at(x + dx, y + dy);
                                if (nv >= v) is_max = false;
                                if (nv <= v) is_min = false;
                            }
                        }
                    }
                    if (!is_max && !is_min) continue;
                    double ox, oy;
                    refine_subpixel(d0, x, y, ox, oy);
                    Keypoint kp;
                    kp.x = std::clamp((x + ox) * step, 0.0,
                                      static_cast<double>(img.width - 1));
                    kp.y = std::clamp((y + oy) * step, 0.0,
                                      static_cast<double>(img.height - 1));
                    kp.scale = sigmas[s] * step;
                    kp.response = std::abs(v);
                    kps.push_back(kp);
                }
            }
        }
        if (o + 1 < cfg.octaves) base = decimate2(g[s_count]); // sigma doubled
    }

    std::sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) {
        if (a.response != b.response) return a.response > b.response;
        if (a.y != b.y) return a.y < b.y;
        if (a.x != b.x) return a.x < b.x;
        return a.scale < b.scale;
    });
    return kps;
}

BinaryMask feature_map_from_keypoints(const std::vector<Keypoint>& kps,
                                      int width, int height, int radius) {
    if (width < 1 || height < 1)
        throw ShapeError("feature_map: non-positive dimensions");
    if (radius < 1)
        throw DomainError("feature_map: radius must be at least 1");
    BinaryMask m;
    m.width = width;
    m.height = height;
    m.data.assign(static_cast<size_t>(width) * height, 0);
    const double r2 = static_cast<double>(radius) * radius;
    for (const Keypoint& kp : kps) {
        const int x0 = std::max(0, static_cast<int>(std::ceil(kp.x - radius)));
        const int x1 = std::min(width - 1, static_cast<int>(std::floor(kp.x + radius)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(kp.y - radius)));
        const int y1 = std::min(height - 1, static_cast<int>(std::floor(kp.y + radius)));
        for (int y = y0; y <= y1; ++y) {
            const double dy = y - kp.y;
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - kp.x;
                if (dx * dx + dy * dy <= r2) m.at(x, y) = 1;
            }
        }
    }
    return m;
}

BinaryMask feature_map(const Image& img, int radius, const DetectorConfig& cfg) {
    const std::vector<Keypoint> kps = detect_keypoints(img, cfg);
    if (kps.empty()) {
        BinaryMask m;
        m.width = img.width;
        m.height = img.height;
        m.data.assign(img.data.size(), 1);
        return m;
    }
    return feature_map_from_keypoints(kps, img.width, img.height, radius);
}

Image apply_feature_map(const Image& img, const BinaryMask& map) {
    validate_image(img);
    if (map.width != img.width || map.height != img.height)
        throw ShapeError("apply_feature_map: mask dimensions differ from image");
    Image out = img;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = img.data[i] * map.data[i];
    return out;
}

} // namespace sonoflow
