#include "sonoflow/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "sonoflow/errors.hpp"
#include "sonoflow/metrics.hpp"
#include "sonoflow/phantom.hpp"

namespace sonoflow {

namespace {

constexpr int kMinCoarseDim = 22;     // coarsest pyramid level keeps SSIM valid
constexpr int kMaxBacktracks = 8;     // step halvings before a rejected move
constexpr int kConvergeWindow = 10;   // iterations compared for convergence

int fit_ms_scales(int requested, int w, int h) {
    int s = 1;
    while (s < requested && (11 << s) <= std::min(w, h)) ++s;
    return s;
}

DeformationField zero_field(int w, int h) {
    DeformationField f;
    f.width = w;
    f.height = h;
    f.dx.assign(static_cast<size_t>(w) * h, 0.0f);
    f.dy.assign(static_cast<size_t>(w) * h, 0.0f);
    return f;
}

// Bilinear upsampling of a coarse field onto a finer grid; displacement
// values scale with the per-axis resolution ratio.
DeformationField upsample_field(const DeformationField& c, int wf, int hf) {
    DeformationField f = zero_field(wf, hf);
    const double sx = static_cast<double>(c.width) / wf;
    const double sy = static_cast<double>(c.height) / hf;
    const double gain_x = static_cast<double>(wf) / c.width;
    const double gain_y = static_cast<double>(hf) / c.height;
    for (int y = 0; y < hf; ++y) {
        const double cy = std::clamp((y + 0.5) * sy - 0.5, 0.0,
                                     static_cast<double>(c.height - 1));
        const int y0 = std::min(static_cast<int>(cy), c.height - 2);
        const double fy = cy - y0;
        for (int x = 0; x < wf; ++x) {
            const double cx = std::clamp((x + 0.5) * sx - 0.5, 0.0,
                                         static_cast<double>(c.width - 1));
            const int x0 = std::min(static_cast<int>(cx), c.width - 2);
            const double fx = cx - x0;
            const size_t i00 = c.index(x0, y0);
            const size_t i10 = c.index(x0 + 1, y0);
            const size_t i01 = c.index(x0, y0 + 1);
            const size_t i11 = c.index(x0 + 1, y0 + 1);
            const double wx0 = 1.0 - fx, wy0 = 1.0 - fy;
            const double dx = wy0 * (wx0 * c.dx[i00] + fx * c.dx[i10])
                            + fy * (wx0 * c.dx[i01] + fx * c.dx[i11]);
            const double dy = wy0 * (wx0 * c.dy[i00] + fx * c.dy[i10])
                            + fy * (wx0 * c.dy[i01] + fx * c.dy[i11]);
            const size_t i = static_cast<size_t>(y) * wf + x;
            f.dx[i] = static_cast<float>(dx * gain_x);
            f.dy[i] = static_cast<float>(dy * gain_y);
        }
    }
    return f;
}

struct Velocity {
    std::vector<double> x, y;
    explicit Velocity(size_t n) : x(n, 0.0), y(n, 0.0) {}
    void reset() {
        std::fill(x.begin(), x.end(), 0.0);
        std::fill(y.begin(), y.end(), 0.0);
    }
};

DeformationField stepped(const DeformationField& u, const Velocity& v) {
    DeformationField t = u;
    for (size_t i = 0; i < t.dx.size(); ++i) {
        t.dx[i] = static_cast<float>(u.dx[i] + v.x[i]);
        t.dy[i] = static_cast<float>(u.dy[i] + v.y[i]);
    }
    return t;
}

// One pyramid level of block-coordinate descent. For the cyclic variants the
// two fields alternate; acceptance is always on the full objective.
struct LevelProblem {
    const Image& target_d;       // (pre-masked) deformed-frame target
    const Image& reference;      // warp source for the first term
    const Image& target_r;       // (pre-masked) reference-frame target
    const BinaryMask* map_d = nullptr;
    const BinaryMask* map_r = nullptr;
    LossConfig cfg;
    bool cyclic = false;
};

int optimize_level(const LevelProblem& p, const SolverConfig& scfg, int level,
                   DeformationField& u_dr, DeformationField& u_rd) {
    const size_t n = u_dr.dx.size();
    Velocity v_dr(n), v_rd(n);
    // Per-block trial step, in pixels at the strongest-gradient pixel. Warm
    // started from the previous acceptance so the line search stays short.
    double a0_dr = scfg.step_size, a0_rd = scfg.step_size;

    TermEval t1 = eval_term(p.target_d, p.reference, u_dr, p.map_d, p.cfg, false);
    TermEval t2;
    if (p.cyclic)
        t2 = eval_term(p.target_r, t1.warped, u_rd, p.map_r, p.cfg, false);
    double cur = t1.total + t2.total;

    std::vector<double> history{cur};
    int used = 0;
    for (int it = 0; it < scfg.iters_per_level; ++it) {
        if (!std::isfinite(cur))
            throw NumericalError("solver: non-finite loss at level "
                                 + std::to_string(level) + ", iteration "
                                 + std::to_string(it));
        used = it + 1;
        // One iteration alternates through the blocks: the forward field,
        // then (for cyclic losses) the reverse field against the updated
        // forward reconstruction.
        const int block_count = p.cyclic ? 2 : 1;
        for (int b = 0; b < block_count; ++b) {
            const bool dr_block = !p.cyclic || b == 0;
            const TermEval grad_term =
                dr_block
                    ? eval_term(p.target_d, p.reference, u_dr, p.map_d, p.cfg, true)
                    : eval_term(p.target_r, t1.warped, u_rd, p.map_r, p.cfg, true);
            const DeformationField& g = grad_term.grad;
            Velocity& vel = dr_block ? v_dr : v_rd;
            DeformationField& u = dr_block ? u_dr : u_rd;
            double& alpha0 = dr_block ? a0_dr : a0_rd;

            // Normalize the descent direction so step sizes are in pixels
            // regardless of image size or loss magnitude.
            double gmax = 0.0;
            for (size_t i = 0; i < n; ++i)
                gmax = std::max(gmax, std::hypot(static_cast<double>(g.dx[i]),
                                                 static_cast<double>(g.dy[i])));
            if (gmax < 1e-30) continue; // flat block: nothing to move

            double alpha = alpha0;
            bool accepted = false;
            Velocity trial(n);
            for (int bt = 0; bt <= kMaxBacktracks && !accepted; ++bt) {
                const double scale = alpha / gmax;
                for (size_t i = 0; i < n; ++i) {
                    trial.x[i] = scfg.momentum * vel.x[i] - scale * g.dx[i];
                    trial.y[i] = scfg.momentum * vel.y[i] - scale * g.dy[i];
                }
                DeformationField u_try = stepped(u, trial);
                double total;
                TermEval c1, c2;
                if (dr_block) {
                    c1 = eval_term(p.target_d, p.reference, u_try, p.map_d, p.cfg,
                                   false);
                    if (p.cyclic) {
                        c2 = eval_term(p.target_r, c1.warped, u_rd, p.map_r, p.cfg,
                                       false);
                        total = c1.total + c2.total;
                    } else {
                        total = c1.total;
                    }
                } else {
                    // t1 stays fixed while the reverse field moves
                    c2 = eval_term(p.target_r, t1.warped, u_try, p.map_r, p.cfg,
                                   false);
                    total = t1.total + c2.total;
                }
                if (total <= cur) {
                    accepted = true;
                    u = std::move(u_try);
                    vel.x = trial.x;
                    vel.y = trial.y;
                    cur = total;
                    alpha0 = std::min(scfg.step_size, 2.0 * alpha);
                    if (dr_block) {
                        t1 = std::move(c1);
                        if (p.cyclic) t2 = std::move(c2);
                    } else {
                        t2 = std::move(c2);
                    }
                } else {
                    alpha *= 0.5;
                }
            }
            if (!accepted) vel.reset();
        }

        history.push_back(cur);
        if (static_cast<int>(history.size()) > kConvergeWindow) {
            const double prev = history[history.size() - 1 - kConvergeWindow];
            if (prev - cur < scfg.converge_rel_tol * std::max(std::abs(prev), 1e-12))
                break;
        }
    }
    return used;
}

} // namespace

void validate_solver_config(const SolverConfig& cfg) {
    validate_loss_config(cfg.loss);
    if (cfg.pyramid_levels < 1)
        throw DomainError("solver config: pyramid_levels must be at least 1");
    if (cfg.iters_per_level < 1)
        throw DomainError("solver config: iters_per_level must be at least 1");
    if (!(cfg.step_size > 0.0))
        throw DomainError("solver config: step_size must be positive");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
        throw DomainError("solver config: momentum must be in [0, 1)");
    if (!(cfg.converge_rel_tol >= 0.0))
        throw DomainError("solver config: converge_rel_tol must be non-negative");
}

RegistrationResult register_images(const Image& deformed, const Image& reference,
                                   const SolverConfig& cfg) {
    validate_solver_config(cfg);
    validate_image(deformed, "deformed image");
    validate_image(reference, "reference image");
    if (deformed.width != reference.width || deformed.height != reference.height)
        throw ShapeError("register: image dimensions differ");
    if (std::min(deformed.width, deformed.height) < kMinCoarseDim)
        throw ShapeError("register: images must be at least 22 px per side");

    // Fine-to-coarse pyramids, depth clamped so the coarsest level stays
    // large enough for a meaningful similarity term.
    std::vector<Image> pyr_d{deformed}, pyr_r{reference};
    while (static_cast<int>(pyr_d.size()) < cfg.pyramid_levels) {
        const Image& last = pyr_d.back();
        if (std::min(last.width / 2, last.height / 2) < kMinCoarseDim) break;
        pyr_d.push_back(mean_pool2(pyr_d.back()));
        pyr_r.push_back(mean_pool2(pyr_r.back()));
    }
    const int levels = static_cast<int>(pyr_d.size());

    const bool cyclic = cfg.loss.variant != LossVariant::us;
    const bool feature_aware = cfg.loss.variant == LossVariant::fa_cyclic;

    std::vector<BinaryMask> maps_d, maps_r;
    if (feature_aware) {
        maps_d.push_back(feature_map(deformed, cfg.loss.feature_radius,
                                     cfg.loss.detector));
        maps_r.push_back(feature_map(reference, cfg.loss.feature_radius,
                                     cfg.loss.detector));
        for (int l = 1; l < levels; ++l) {
            maps_d.push_back(max_pool2(maps_d.back()));
            maps_r.push_back(max_pool2(maps_r.back()));
        }
    }

    RegistrationResult res;
    DeformationField u_dr = zero_field(pyr_d.back().width, pyr_d.back().height);
    DeformationField u_rd = cyclic ? u_dr : DeformationField{};

    for (int l = levels - 1; l >= 0; --l) {
        const Image& dl = pyr_d[l];
        const Image& rl = pyr_r[l];
        LossConfig lcfg = cfg.loss;
        lcfg.ms_scales = fit_ms_scales(cfg.loss.ms_scales, dl.width, dl.height);

        const BinaryMask* map_d = feature_aware ? &maps_d[l] : nullptr;
        const BinaryMask* map_r = feature_aware ? &maps_r[l] : nullptr;
        Image target_d = map_d ? apply_feature_map(dl, *map_d) : dl;
        Image target_r = map_r ? apply_feature_map(rl, *map_r) : rl;

        LevelProblem prob{target_d, rl, target_r, map_d, map_r, lcfg, cyclic};
        const int used = optimize_level(prob, cfg, l, u_dr, u_rd);
        res.iterations_used.push_back(used);

        if (l > 0) {
            u_dr = upsample_field(u_dr, pyr_d[l - 1].width, pyr_d[l - 1].height);
            if (cyclic)
                u_rd = upsample_field(u_rd, pyr_d[l - 1].width, pyr_d[l - 1].height);
        }
    }

    LossConfig final_cfg = cfg.loss;
    final_cfg.ms_scales = fit_ms_scales(cfg.loss.ms_scales, deformed.width,
                                        deformed.height);
    const BinaryMask* fmap_d = feature_aware ? &maps_d[0] : nullptr;
    const BinaryMask* fmap_r = feature_aware ? &maps_r[0] : nullptr;
    res.final_loss = loss_grad(reference, deformed, u_dr,
                               cyclic ? &u_rd : nullptr, fmap_r, fmap_d,
                               final_cfg);
    res.reconstructed = warp_image(u_dr, reference);
    res.field = std::move(u_dr);
    if (cyclic) res.field_rd = std::move(u_rd);
    return res;
}

RegistrationResult self_register(const Image& img, const SolverConfig& cfg) {
    return register_images(img, img, cfg);
}

BenchReport bench_register(int size, const SolverConfig& cfg, int repetitions) {
    validate_solver_config(cfg);
    if (size < kMinCoarseDim)
        throw ShapeError("bench: size must be at least 22");
    if (repetitions < 0)
        throw DomainError("bench: repetitions must be non-negative");
    BenchReport rep;
    rep.size = size;
    rep.repetitions = repetitions;
    if (repetitions == 0) return rep;

    const PhantomSpec spec = default_phantom_spec(size, size);
    const PhantomFrame ref = render(spec, 2.0);
    const PhantomFrame def = render(spec, 10.0);

    for (int i = 0; i < repetitions; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        register_images(def.image, ref.image, cfg);
        const auto t1 = std::chrono::steady_clock::now();
        rep.per_run_ms.push_back(
            std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    for (double ms : rep.per_run_ms) rep.total_ms += ms;
    rep.mean_ms = rep.total_ms / repetitions;
    std::vector<double> sorted = rep.per_run_ms;
    std::sort(sorted.begin(), sorted.end());
    rep.median_ms = (repetitions % 2 != 0)
                        ? sorted[repetitions / 2]
                        : 0.5 * (sorted[repetitions / 2 - 1] + sorted[repetitions / 2]);
    rep.hz = 1000.0 * repetitions / rep.total_ms;
    return rep;
}

} // namespace sonoflow
