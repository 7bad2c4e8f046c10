#include "sonoflow/metrics.hpp"

#include <cmath>
#include <limits>

#include "sonoflow/errors.hpp"
#include "ssim_detail.hpp"

namespace sonoflow {

namespace detail {

void add_grad_mean_cs(const Image& a, const Image& b, const SsimStats& s,
                      double coeff, std::vector<double>& gb) {
    if (coeff == 0.0) return;
    const size_t n = s.size();
    const double c = coeff / static_cast<double>(n);
    std::vector<double> d_mu(n), d_tb(n), d_tab(n);
    for (size_t i = 0; i < n; ++i) {
        const double mu_a = s.mu_a[i];
        const double mu_b = s.mu_b[i];
        const double cov = s.tab[i] - mu_a * mu_b;
        const double var_a = s.ta[i] - mu_a * mu_a;
        const double var_b = s.tb[i] - mu_b * mu_b;
        const double a2 = 2.0 * cov + kSsimC2;
        const double b2 = var_a + var_b + kSsimC2;
        const double cs = a2 / b2;
        d_mu[i] = c * 2.0 * (mu_b * a2 - mu_a * b2) / (b2 * b2);
        d_tab[i] = c * 2.0 / b2;
        d_tb[i] = c * (-cs / b2);
    }
    // gb += G^T d_mu + 2 b .* G^T d_tb + a .* G^T d_tab
    std::vector<double> back(a.data.size(), 0.0);
    conv_valid_adjoint(d_mu, a.width, a.height, back);
    for (size_t i = 0; i < back.size(); ++i) gb[i] += back[i];
    back.assign(back.size(), 0.0);
    conv_valid_adjoint(d_tb, a.width, a.height, back);
    for (size_t i = 0; i < back.size(); ++i) gb[i] += 2.0 * b.data[i] * back[i];
    back.assign(back.size(), 0.0);
    conv_valid_adjoint(d_tab, a.width, a.height, back);
    for (size_t i = 0; i < back.size(); ++i) gb[i] += a.data[i] * back[i];
}

void add_grad_mean_ssim(const Image& a, const Image& b, const SsimStats& s,
                        double coeff, std::vector<double>& gb) {
    if (coeff == 0.0) return;
    const size_t n = s.size();
    const double c = coeff / static_cast<double>(n);
    std::vector<double> d_mu(n), d_tb(n), d_tab(n);
    for (size_t i = 0; i < n; ++i) {
        const double mu_a = s.mu_a[i];
        const double mu_b = s.mu_b[i];
        const double cov = s.tab[i] - mu_a * mu_b;
        const double var_a = s.ta[i] - mu_a * mu_a;
        const double var_b = s.tb[i] - mu_b * mu_b;
        const double a1 = 2.0 * mu_a * mu_b + kSsimC1;
        const double b1 = mu_a * mu_a + mu_b * mu_b + kSsimC1;
        const double a2 = 2.0 * cov + kSsimC2;
        const double b2 = var_a + var_b + kSsimC2;
        const double val = (a1 * a2) / (b1 * b2);
        // dA1/dmu_b = 2 mu_a, dA2/dmu_b = -2 mu_a,
        // dB1/dmu_b = 2 mu_b, dB2/dmu_b = -2 mu_b
        d_mu[i] = c * ((2.0 * mu_a * (a2 - a1)) / (b1 * b2)
                       - val * 2.0 * mu_b * (b2 - b1) / (b1 * b2));
        d_tab[i] = c * 2.0 * a1 / (b1 * b2);
        d_tb[i] = c * (-val / b2);
    }
    std::vector<double> back(a.data.size(), 0.0);
    conv_valid_adjoint(d_mu, a.width, a.height, back);
    for (size_t i = 0; i < back.size(); ++i) gb[i] += back[i];
    back.assign(back.size(), 0.0);
    conv_valid_adjoint(d_tb, a.width, a.height, back);
    for (size_t i = 0; i < back.size(); ++i) gb[i] += 2.0 * b.data[i] * back[i];
    back.assign(back.size(), 0.0);
    conv_valid_adjoint(d_tab, a.width, a.height, back);
    for (size_t i = 0; i < back.size(); ++i) gb[i] += a.data[i] * back[i];
}

std::vector<double> ms_weights(int scales) {
    static const double full[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    std::vector<double> w(full, full + scales);
    double sum = 0.0;
    for (double x : w) sum += x;
    for (double& x : w) x /= sum;
    return w;
}

double ms_ssim_forward(const Image& a, const Image& b, int scales,
                       std::vector<double>* per_scale,
                       std::vector<MsScaleData>* keep_levels) {
    if (scales < 1 || scales > 3)
        throw DomainError("ms_ssim: scales must be between 1 and 3");
    const int min_dim = kWin << (scales - 1);
    if (a.width < min_dim || a.height < min_dim)
        throw ShapeError("ms_ssim: images too small for requested scale count");
    if (per_scale) per_scale->clear();

    const std::vector<double> w = ms_weights(scales);
    Image cur_a = a, cur_b = b;
    std::vector<double> terms(scales);
    for (int j = 0; j < scales; ++j) {
        SsimStats stats = ssim_stats(cur_a, cur_b);
        const bool coarsest = (j == scales - 1);
        terms[j] = coarsest ? mean_ssim_from_stats(stats)
                            : mean_cs_from_stats(stats);
        if (per_scale) per_scale->push_back(terms[j]);
        if (keep_levels)
            keep_levels->push_back({cur_a, cur_b, std::move(stats), terms[j]});
        if (!coarsest) {
            cur_a = mean_pool2(cur_a);
            cur_b = mean_pool2(cur_b);
        }
    }
    if (scales == 1) return terms[0]; // plain SSIM, sign preserved
    double prod = 1.0;
    for (int j = 0; j < scales; ++j)
        prod *= std::pow(std::max(terms[j], kMsTermFloor), w[j]);
    return prod;
}

} // namespace detail

double ssim(const Image& a, const Image& b) {
    validate_image(a);
    validate_image(b);
    return detail::mean_ssim_from_stats(detail::ssim_stats(a, b));
}

double ms_ssim(const Image& a, const Image& b, int scales,
               std::vector<double>* per_scale) {
    validate_image(a);
    validate_image(b);
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("ms_ssim: image dimensions differ");
    return detail::ms_ssim_forward(a, b, scales, per_scale, nullptr);
}

double psnr(const Image& a, const Image& b) {
    validate_image(a);
    validate_image(b);
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("psnr: image dimensions differ");
    double mse = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double f_ssim(const Image& a, const Image& b, const BinaryMask& mask) {
    validate_image(a);
    validate_image(b);
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("f_ssim: image dimensions differ");
    if (mask.width != a.width || mask.height != a.height)
        throw ShapeError("f_ssim: mask dimensions differ from images");
    Image ma = a, mb = b;
    for (size_t i = 0; i < a.data.size(); ++i) {
        ma.data[i] = a.data[i] * mask.data[i];
        mb.data[i] = b.data[i] * mask.data[i];
    }
    return ssim(ma, mb);
}

double iou(const BinaryMask& a, const BinaryMask& b) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("iou: mask dimensions differ");
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const bool pa = a.data[i] != 0;
        const bool pb = b.data[i] != 0;
        inter += pa && pb;
        uni += pa || pb;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double endpoint_error(const DeformationField& u, const DeformationField& v) {
    if (u.width != v.width || u.height != v.height)
        throw ShapeError("endpoint_error: field dimensions differ");
    double acc = 0.0;
    const size_t n = u.dx.size();
    for (size_t i = 0; i < n; ++i) {
        const double ddx = static_cast<double>(u.dx[i]) - v.dx[i];
        const double ddy = static_cast<double>(u.dy[i]) - v.dy[i];
        acc += std::sqrt(ddx * ddx + ddy * ddy);
    }
    return acc / static_cast<double>(n);
}

Image mean_pool2(const Image& img) {
    validate_image(img);
    const int w = img.width / 2;
    const int h = img.height / 2;
    if (w < 1 || h < 1)
        throw ShapeError("mean_pool2: image too small to pool");
    Image out;
    out.width = w;
    out.height = h;
    out.data.resize(static_cast<size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v00 = img.at(2 * x, 2 * y);
            const double v10 = img.at(2 * x + 1, 2 * y);
            const double v01 = img.at(2 * x, 2 * y + 1);
            const double v11 = img.at(2 * x + 1, 2 * y + 1);
            out.data[static_cast<size_t>(y) * w + x] = 0.25 * (v00 + v10 + v01 + v11);
        }
    }
    return out;
}

BinaryMask max_pool2(const BinaryMask& mask) {
    const int w = mask.width / 2;
    const int h = mask.height / 2;
    if (w < 1 || h < 1)
        throw ShapeError("max_pool2: mask too small to pool");
    BinaryMask out;
    out.width = w;
    out.height = h;
    out.data.resize(static_cast<size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const uint8_t v = mask.at(2 * x, 2 * y) | mask.at(2 * x + 1, 2 * y)
                            | mask.at(2 * x, 2 * y + 1) | mask.at(2 * x + 1, 2 * y + 1);
            out.data[static_cast<size_t>(y) * w + x] = v ? 1 : 0;
        }
    }
    return out;
}

} // namespace sonoflow
