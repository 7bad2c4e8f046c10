#include "sonoflow/loss.hpp"

#include <algorithm>
#include <cmath>

#include "sonoflow/errors.hpp"
#include "sonoflow/metrics.hpp"
#include "ssim_detail.hpp"

namespace sonoflow {

std::string to_string(LossVariant v) {
    switch (v) {
        case LossVariant::us: return "us";
        case LossVariant::cyclic: return "cyclic";
        case LossVariant::fa_cyclic: return "fa-cyclic";
    }
    throw DomainError("unknown loss variant");
}

LossVariant loss_variant_from_string(const std::string& s) {
    if (s == "us") return LossVariant::us;
    if (s == "cyclic") return LossVariant::cyclic;
    if (s == "fa-cyclic" || s == "fa_cyclic") return LossVariant::fa_cyclic;
    throw DomainError("unknown loss variant '" + s + "'");
}

void validate_loss_config(const LossConfig& cfg) {
    if (!(cfg.beta >= 0.0 && cfg.beta <= 1.0))
        throw DomainError("loss config: beta must be in [0, 1]");
    if (cfg.ms_scales < 1 || cfg.ms_scales > 3)
        throw DomainError("loss config: ms_scales must be between 1 and 3");
    if (cfg.feature_radius < 1)
        throw DomainError("loss config: feature_radius must be at least 1");
}

namespace {

// Discrete Laplacian with replicate borders, per component.
void laplacian(const std::vector<float>& c, int w, int h,
               std::vector<double>& r) {
    r.resize(static_cast<size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
        for (int x = 0; x < w; ++x) {
            const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
            const size_t i = static_cast<size_t>(y) * w + x;
            r[i] = static_cast<double>(c[static_cast<size_t>(y) * w + xm])
                 + c[static_cast<size_t>(y) * w + xp]
                 + c[static_cast<size_t>(ym) * w + x]
                 + c[static_cast<size_t>(yp) * w + x]
                 - 4.0 * c[i];
        }
    }
}

// Adjoint of the Laplacian: scatters residual values back through the same
// (clamped) taps.
void laplacian_adjoint(const std::vector<double>& r, int w, int h,
                       std::vector<double>& g) {
    g.assign(static_cast<size_t>(w) * h, 0.0);
    for (int y = 0; y < h; ++y) {
        const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
        for (int x = 0; x < w; ++x) {
            const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
            const size_t i = static_cast<size_t>(y) * w + x;
            const double v = r[i];
            g[static_cast<size_t>(y) * w + xm] += v;
            g[static_cast<size_t>(y) * w + xp] += v;
            g[static_cast<size_t>(ym) * w + x] += v;
            g[static_cast<size_t>(yp) * w + x] += v;
            g[i] -= 4.0 * v;
        }
    }
}

// Distributes a coarse-grid gradient back over the 2x2 blocks of mean_pool2.
std::vector<double> pool2_adjoint(const std::vector<double>& g, int wc, int hc,
                                  int wf, int hf) {
    std::vector<double> out(static_cast<size_t>(wf) * hf, 0.0);
    for (int y = 0; y < hc; ++y) {
        for (int x = 0; x < wc; ++x) {
            const double v = 0.25 * g[static_cast<size_t>(y) * wc + x];
            out[static_cast<size_t>(2 * y) * wf + 2 * x] += v;
            out[static_cast<size_t>(2 * y) * wf + 2 * x + 1] += v;
            out[static_cast<size_t>(2 * y + 1) * wf + 2 * x] += v;
            out[static_cast<size_t>(2 * y + 1) * wf + 2 * x + 1] += v;
        }
    }
    return out;
}

// d(MS-SSIM)/d(second image), via the per-scale mean-term chain.
std::vector<double> ms_ssim_backward(const std::vector<detail::MsScaleData>& lv,
                                     double value, int scales) {
    const std::vector<double> w = detail::ms_weights(scales);
    std::vector<double> coeff(scales);
    if (scales == 1) {
        coeff[0] = 1.0;
    } else {
        for (int j = 0; j < scales; ++j)
            coeff[j] = lv[j].term > detail::kMsTermFloor
                           ? value * w[j] / lv[j].term
                           : 0.0;
    }
    const int last = scales - 1;
    std::vector<double> g(lv[last].b.data.size(), 0.0);
    detail::add_grad_mean_ssim(lv[last].a, lv[last].b, lv[last].stats,
                               coeff[last], g);
    for (int j = last - 1; j >= 0; --j) {
        std::vector<double> gf = pool2_adjoint(g, lv[j + 1].b.width,
                                               lv[j + 1].b.height,
                                               lv[j].b.width, lv[j].b.height);
        detail::add_grad_mean_cs(lv[j].a, lv[j].b, lv[j].stats, coeff[j], gf);
        g = std::move(gf);
    }
    return g;
}

// Chain rule through the bilinear warp: given d(loss)/d(warped pixel),
// accumulate coeff * d(loss)/d(field) into (gdx, gdy). Mirrors the sampling
// in warp_image, with zero derivative where the source coordinate clamps.
void warp_backward(const DeformationField& u, const Image& src,
                   const std::vector<double>& g_warp, double coeff,
                   std::vector<double>& gdx, std::vector<double>& gdy) {
    const int w = u.width, h = u.height;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            const double go = coeff * g_warp[i];
            if (go == 0.0) continue;
            const double sx_raw = x + static_cast<double>(u.dx[i]);
            const double sy_raw = y + static_cast<double>(u.dy[i]);
            const bool sat_x = sx_raw <= 0.0 || sx_raw >= w - 1;
            const bool sat_y = sy_raw <= 0.0 || sy_raw >= h - 1;
            const double sx = std::clamp(sx_raw, 0.0, static_cast<double>(w - 1));
            const double sy = std::clamp(sy_raw, 0.0, static_cast<double>(h - 1));
            const int x0 = std::min(static_cast<int>(sx), w - 2);
            const int y0 = std::min(static_cast<int>(sy), h - 2);
            const double fx = sx - x0;
            const double fy = sy - y0;
            const double v00 = src.at(x0, y0);
            const double v10 = src.at(x0 + 1, y0);
            const double v01 = src.at(x0, y0 + 1);
            const double v11 = src.at(x0 + 1, y0 + 1);
            if (!sat_x)
                gdx[i] += go * ((1.0 - fy) * (v10 - v00) + fy * (v11 - v01));
            if (!sat_y)
                gdy[i] += go * ((1.0 - fx) * (v01 - v00) + fx * (v11 - v10));
        }
    }
}

DeformationField zero_like(const DeformationField& u) {
    DeformationField g;
    g.width = u.width;
    g.height = u.height;
    g.dx.assign(u.dx.size(), 0.0f);
    g.dy.assign(u.dy.size(), 0.0f);
    return g;
}

} // namespace

double smooth_loss(const DeformationField& u) {
    validate_field(u);
    std::vector<double> r;
    double acc = 0.0;
    laplacian(u.dx, u.width, u.height, r);
    for (double v : r) acc += v * v;
    laplacian(u.dy, u.width, u.height, r);
    for (double v : r) acc += v * v;
    return acc / (2.0 * static_cast<double>(u.dx.size()));
}

void smooth_loss_grad(const DeformationField& u,
                      std::vector<double>& gx, std::vector<double>& gy) {
    const double n = static_cast<double>(u.dx.size());
    std::vector<double> r;
    laplacian(u.dx, u.width, u.height, r);
    laplacian_adjoint(r, u.width, u.height, gx);
    for (double& v : gx) v /= n;
    laplacian(u.dy, u.width, u.height, r);
    laplacian_adjoint(r, u.width, u.height, gy);
    for (double& v : gy) v /= n;
}

double ssim_loss(const Image& a, const Image& b, const LossConfig& cfg) {
    validate_loss_config(cfg);
    validate_image(a);
    validate_image(b);
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("ssim_loss: image dimensions differ");
    return 1.0 - detail::ms_ssim_forward(a, b, cfg.ms_scales, nullptr, nullptr);
}

double loss_us(const Image& deformed, const Image& reconstructed,
               const DeformationField& u, const LossConfig& cfg) {
    return cfg.beta * ssim_loss(deformed, reconstructed, cfg)
         + (1.0 - cfg.beta) * smooth_loss(u);
}

TermEval eval_term(const Image& target, const Image& source,
                   const DeformationField& u, const BinaryMask* mask,
                   const LossConfig& cfg, bool with_grad) {
    validate_loss_config(cfg);
    validate_image(target);
    validate_image(source);
    if (target.width != source.width || target.height != source.height)
        throw ShapeError("loss term: image dimensions differ");
    if (u.width != target.width || u.height != target.height)
        throw ShapeError("loss term: field dimensions differ from images");
    if (mask && (mask->width != u.width || mask->height != u.height))
        throw ShapeError("loss term: mask dimensions differ from images");

    TermEval t;
    t.warped = warp_image(u, source);
    Image b = t.warped;
    if (mask)
        for (size_t i = 0; i < b.data.size(); ++i) b.data[i] *= mask->data[i];

    std::vector<detail::MsScaleData> levels;
    const double ms = detail::ms_ssim_forward(target, b, cfg.ms_scales, nullptr,
                                              with_grad ? &levels : nullptr);
    t.ssim_part = 1.0 - ms;
    t.smooth_part = smooth_loss(u);
    t.total = cfg.beta * t.ssim_part + (1.0 - cfg.beta) * t.smooth_part;

    if (with_grad) {
        std::vector<double> g_b = ms_ssim_backward(levels, ms, cfg.ms_scales);
        if (mask)
            for (size_t i = 0; i < g_b.size(); ++i) g_b[i] *= mask->data[i];
        std::vector<double> gdx(u.dx.size(), 0.0), gdy(u.dy.size(), 0.0);
        // total = beta * (1 - ms) + ..., so the similarity part enters with
        // a -beta factor.
        warp_backward(u, source, g_b, -cfg.beta, gdx, gdy);
        std::vector<double> sx, sy;
        smooth_loss_grad(u, sx, sy);
        t.grad = zero_like(u);
        for (size_t i = 0; i < gdx.size(); ++i) {
            t.grad.dx[i] = static_cast<float>(gdx[i] + (1.0 - cfg.beta) * sx[i]);
            t.grad.dy[i] = static_cast<float>(gdy[i] + (1.0 - cfg.beta) * sy[i]);
        }
    }
    return t;
}

LossEval loss_grad(const Image& reference, const Image& deformed,
                   const DeformationField& u_dr, const DeformationField* u_rd,
                   const BinaryMask* map_r, const BinaryMask* map_d,
                   const LossConfig& cfg) {
    validate_loss_config(cfg);
    LossEval e;
    switch (cfg.variant) {
        case LossVariant::us: {
            TermEval t = eval_term(deformed, reference, u_dr, nullptr, cfg, true);
            e.total = t.total;
            e.ssim_term = t.ssim_part;
            e.smooth_term = t.smooth_part;
            e.grad_dr = std::move(t.grad);
            return e;
        }
        case LossVariant::cyclic: {
            if (!u_rd)
                throw ValidationError("cyclic loss requires both fields");
            TermEval t1 = eval_term(deformed, reference, u_dr, nullptr, cfg, true);
            TermEval t2 = eval_term(reference, t1.warped, *u_rd, nullptr, cfg, true);
            e.total = t1.total + t2.total;
            e.ssim_term = t1.ssim_part + t2.ssim_part;
            e.smooth_term = t1.smooth_part + t2.smooth_part;
            e.grad_dr = std::move(t1.grad);
            e.grad_rd = std::move(t2.grad);
            return e;
        }
        case LossVariant::fa_cyclic: {
            if (!u_rd)
                throw ValidationError("feature-aware cyclic loss requires both fields");
            BinaryMask local_r, local_d;
            if (!map_r || !map_d) {
                local_d = feature_map(deformed, cfg.feature_radius, cfg.detector);
                local_r = feature_map(reference, cfg.feature_radius, cfg.detector);
                map_d = &local_d;
                map_r = &local_r;
            }
            const Image masked_d = apply_feature_map(deformed, *map_d);
            const Image masked_r = apply_feature_map(reference, *map_r);
            TermEval t1 = eval_term(masked_d, reference, u_dr, map_d, cfg, true);
            TermEval t2 = eval_term(masked_r, t1.warped, *u_rd, map_r, cfg, true);
            e.total = t1.total + t2.total;
            e.ssim_term = t1.ssim_part + t2.ssim_part;
            e.smooth_term = t1.smooth_part + t2.smooth_part;
            e.grad_dr = std::move(t1.grad);
            e.grad_rd = std::move(t2.grad);
            return e;
        }
    }
    throw DomainError("unknown loss variant");
}

LossEval loss_cyclic(const Image& reference, const Image& deformed,
                     const DeformationField& u_dr, const DeformationField& u_rd,
                     const LossConfig& cfg) {
    LossConfig c = cfg;
    c.variant = LossVariant::cyclic;
    return loss_grad(reference, deformed, u_dr, &u_rd, nullptr, nullptr, c);
}

LossEval loss_fa_cyclic(const Image& reference, const Image& deformed,
                        const DeformationField& u_dr, const DeformationField& u_rd,
                        const LossConfig& cfg) {
    LossConfig c = cfg;
    c.variant = LossVariant::fa_cyclic;
    return loss_grad(reference, deformed, u_dr, &u_rd, nullptr, nullptr, c);
}

LossEval loss_fa_cyclic(const Image& reference, const Image& deformed,
                        const DeformationField& u_dr, const DeformationField& u_rd,
                        const BinaryMask& map_r, const BinaryMask& map_d,
                        const LossConfig& cfg) {
    LossConfig c = cfg;
    c.variant = LossVariant::fa_cyclic;
    return loss_grad(reference, deformed, u_dr, &u_rd, &map_r, &map_d, c);
}

} // namespace sonoflow
