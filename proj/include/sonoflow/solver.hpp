#pragma once

#include <vector>

#include "sonoflow/image.hpp"
#include "sonoflow/loss.hpp"
#include "sonoflow/warp.hpp"

namespace sonoflow {

// Variational registration: the objective from loss.hpp is minimized
// directly over a dense displacement field with a coarse-to-fine pyramid and
// gradient descent with heavy-ball momentum plus a backtracking line search.
// Deterministic and single-threaded: identical inputs give identical fields.

struct SolverConfig {
    LossConfig loss;
    int pyramid_levels = 4;   // clamped so the coarsest level keeps >= 22 px
    int iters_per_level = 150;
    double step_size = 10.0;  // initial trial step, halved on rejection
    double momentum = 0.9;
    double converge_rel_tol = 1e-5; // relative drop over a 10-iteration window
};

void validate_solver_config(const SolverConfig& cfg);

struct RegistrationResult {
    DeformationField field;            // deformed -> reference (u_dr)
    DeformationField field_rd;         // reference -> deformed (cyclic only; empty otherwise)
    LossEval final_loss;               // evaluated at full resolution
    std::vector<int> iterations_used;  // per pyramid level, coarse to fine
    Image reconstructed;               // warp_image(field, reference)
};

/// Estimates the field mapping `deformed` onto `reference` (backward warp:
/// reconstruction(p) = reference(p + u(p))).
RegistrationResult register_images(const Image& deformed, const Image& reference,
                                   const SolverConfig& cfg);

/// Registers an image to itself (used as the zero-force anchor when
/// interpolating fields).
RegistrationResult self_register(const Image& img, const SolverConfig& cfg);

struct BenchReport {
    int size = 0;
    int repetitions = 0;
    std::vector<double> per_run_ms;
    double total_ms = 0.0;
    double mean_ms = 0.0;
    double median_ms = 0.0;
    double hz = 0.0; // registrations per second
};

/// Times register_images on a synthetic size x size pair. repetitions == 0
/// yields an empty report.
BenchReport bench_register(int size, const SolverConfig& cfg, int repetitions);

} // namespace sonoflow
