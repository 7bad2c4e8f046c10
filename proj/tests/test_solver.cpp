#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "oracles.hpp"
#include "sonoflow/errors.hpp"
#include "sonoflow/metrics.hpp"
#include "sonoflow/phantom.hpp"
#include "sonoflow/solver.hpp"
#include "sonoflow/warp.hpp"

using namespace sonoflow;

namespace {

SolverConfig quick_cfg(LossVariant variant = LossVariant::us) {
    SolverConfig cfg;
    cfg.loss.variant = variant;
    cfg.pyramid_levels = 3;
    cfg.iters_per_level = 60;
    return cfg;
}

double mean_epe(const DeformationField& est, const DeformationField& gt) {
    double acc = 0.0;
    for (size_t i = 0; i < est.dx.size(); ++i) {
        const double ex = static_cast<double>(est.dx[i]) - gt.dx[i];
        const double ey = static_cast<double>(est.dy[i]) - gt.dy[i];
        acc += std::sqrt(ex * ex + ey * ey);
    }
    return acc / static_cast<double>(est.dx.size());
}

} // namespace

TEST_CASE("solver configuration validation") {
    SolverConfig cfg;
    CHECK_NOTHROW(validate_solver_config(cfg));
    cfg.pyramid_levels = 0;
    CHECK_THROWS_AS(validate_solver_config(cfg), DomainError);
    cfg = {};
    cfg.iters_per_level = -1;
    CHECK_THROWS_AS(validate_solver_config(cfg), DomainError);
    cfg = {};
    cfg.step_size = 0.0;
    CHECK_THROWS_AS(validate_solver_config(cfg), DomainError);
    cfg = {};
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(validate_solver_config(cfg), DomainError);
    cfg = {};
    cfg.loss.beta = -0.1;
    CHECK_THROWS_AS(validate_solver_config(cfg), DomainError);
}

TEST_CASE("images below the pyramid floor are rejected") {
    std::mt19937 rng(61);
    const Image tiny = oracle::random_image(rng, 20, 20);
    CHECK_THROWS_AS(register_images(tiny, tiny, quick_cfg()), ShapeError);
    const Image a = oracle::random_image(rng, 24, 24);
    const Image b = oracle::random_image(rng, 24, 26);
    CHECK_THROWS_AS(register_images(a, b, quick_cfg()), ShapeError);
}

TEST_CASE("self-registration settles at a near-zero field") {
    const PhantomSpec spec = default_phantom_spec(48, 48);
    const PhantomFrame frame = render(spec, 2.0);
    const RegistrationResult res = self_register(frame.image, quick_cfg());
    CHECK(res.final_loss.total < 1e-6);
    double max_disp = 0.0;
    for (size_t i = 0; i < res.field.dx.size(); ++i) {
        max_disp = std::max(max_disp, std::abs(static_cast<double>(res.field.dx[i])));
        max_disp = std::max(max_disp, std::abs(static_cast<double>(res.field.dy[i])));
    }
    CHECK(max_disp < 0.05);
    CHECK(res.field_rd.dx.empty()); // plain variant has no reverse field
}

TEST_CASE("recovers a constant translation on smooth texture") {
    std::mt19937 rng(62);
    const Image ref = oracle::random_smooth_image(rng, 64, 64);
    DeformationField gt;
    gt.width = 64;
    gt.height = 64;
    gt.dx.assign(64 * 64, 1.7f);
    gt.dy.assign(64 * 64, -0.9f);
    const Image def = warp_image(gt, ref);

    SolverConfig cfg = quick_cfg();
    cfg.iters_per_level = 100;
    const RegistrationResult res = register_images(def, ref, cfg);

    // Interior error only: the last ~2 px near the border lack texture support
    // because the warp clamps to the edge there.
    double acc = 0.0;
    int n = 0;
    for (int y = 4; y < 60; ++y)
        for (int x = 4; x < 60; ++x) {
            const size_t i = res.field.index(x, y);
            const double ex = res.field.dx[i] - 1.7;
            const double ey = res.field.dy[i] + 0.9;
            acc += std::sqrt(ex * ex + ey * ey);
            ++n;
        }
    CHECK(acc / n < 0.35);
    CHECK(ssim(def, res.reconstructed) > 0.95);
    CHECK(res.iterations_used.size() == 2); // 64 -> 32 -> (16 < 22 stops)
}

TEST_CASE("phantom pair registration beats the zero field by a wide margin") {
    const PhantomSpec spec = default_phantom_spec(128, 128);
    const PhantomFrame ref = render(spec, 2.0);
    const PhantomFrame def = render(spec, 10.0);
    const DeformationField gt = pair_field(spec, 2.0, 10.0);

    SolverConfig cfg;
    cfg.loss.variant = LossVariant::us;
    const RegistrationResult res = register_images(def.image, ref.image, cfg);

    DeformationField zero;
    zero.width = gt.width;
    zero.height = gt.height;
    zero.dx.assign(gt.dx.size(), 0.0f);
    zero.dy.assign(gt.dy.size(), 0.0f);

    const double epe = mean_epe(res.field, gt);
    const double epe0 = mean_epe(zero, gt);
    CHECK(epe < 0.5 * epe0);
    CHECK(epe <= 1.0);
    CHECK(ssim(def.image, res.reconstructed) >= 0.90);
}

TEST_CASE("cyclic variant returns both fields") {
    const PhantomSpec spec = default_phantom_spec(48, 48);
    const PhantomFrame ref = render(spec, 2.0);
    const PhantomFrame def = render(spec, 6.0);
    SolverConfig cfg = quick_cfg(LossVariant::cyclic);
    cfg.iters_per_level = 40;
    const RegistrationResult res = register_images(def.image, ref.image, cfg);
    CHECK(res.field.width == 48);
    CHECK(res.field_rd.width == 48);
    CHECK(res.field_rd.dx.size() == res.field.dx.size());
    REQUIRE(res.final_loss.grad_rd.has_value());
}

TEST_CASE("pyramid depth adapts to the image size") {
    const PhantomSpec spec = default_phantom_spec(48, 48);
    const PhantomFrame f = render(spec, 2.0);
    SolverConfig cfg = quick_cfg();
    cfg.pyramid_levels = 4; // 48 -> 24 -> 12: only two levels stay >= 22 px
    cfg.iters_per_level = 10;
    const RegistrationResult res = register_images(f.image, f.image, cfg);
    CHECK(res.iterations_used.size() == 2);

    const PhantomSpec small = default_phantom_spec(24, 24);
    const PhantomFrame g = render(small, 2.0);
    const RegistrationResult res1 = register_images(g.image, g.image, cfg);
    CHECK(res1.iterations_used.size() == 1);
}

TEST_CASE("registration is bitwise deterministic") {
    const PhantomSpec spec = default_phantom_spec(48, 48);
    const PhantomFrame ref = render(spec, 2.0);
    const PhantomFrame def = render(spec, 8.0);
    SolverConfig cfg = quick_cfg();
    cfg.iters_per_level = 30;

    const RegistrationResult a = register_images(def.image, ref.image, cfg);
    const RegistrationResult b = register_images(def.image, ref.image, cfg);
    REQUIRE(a.field.dx.size() == b.field.dx.size());
    CHECK(std::memcmp(a.field.dx.data(), b.field.dx.data(),
                      a.field.dx.size() * sizeof(float)) == 0);
    CHECK(std::memcmp(a.field.dy.data(), b.field.dy.data(),
                      a.field.dy.size() * sizeof(float)) == 0);
    CHECK(a.reconstructed.data == b.reconstructed.data);
    CHECK(a.final_loss.total == b.final_loss.total);
}

TEST_CASE("bench reporting") {
    SolverConfig cfg = quick_cfg();
    cfg.pyramid_levels = 1;
    cfg.iters_per_level = 3;
    const BenchReport none = bench_register(32, cfg, 0);
    CHECK(none.per_run_ms.empty());
    CHECK(none.hz == 0.0);

    const BenchReport one = bench_register(32, cfg, 2);
    CHECK(one.size == 32);
    CHECK(one.repetitions == 2);
    REQUIRE(one.per_run_ms.size() == 2);
    CHECK(one.mean_ms > 0.0);
    CHECK(one.median_ms > 0.0);
    CHECK(one.hz > 0.0);
}
