#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sonoflow/image.hpp"
#include "sonoflow/solver.hpp"
#include "sonoflow/warp.hpp"

namespace sonoflow {

// Force-interpolated frame synthesis: given the field taking the reference
// frame onto itself (the zero anchor) and the field taking it onto a frame
// captured at a higher force, intermediate forces are produced by linear
// interpolation between the two fields and used to warp the reference image
// (and its segmentation mask, nearest-neighbor).

struct InterpolationSpec {
    double f_ref = 0.0; // force of the reference frame, newtons
    double f_def = 0.0; // force of the deformed frame; must exceed f_ref
    std::vector<double> f_new; // requested in-between forces
};

void validate_interpolation(const InterpolationSpec& spec);

/// field(f_new) = (1 - t) * u_self + t * u_dr with t = (f_new - f_ref) /
/// (f_def - f_ref). The endpoints reproduce u_self and u_dr bitwise.
DeformationField interpolate_field(const DeformationField& u_self,
                                   const DeformationField& u_dr,
                                   const InterpolationSpec& spec, double f_new);

struct SyntheticFrame {
    double force_n = 0.0;
    Image image;
    std::optional<BinaryMask> mask;
    DeformationField field;
};

/// One synthetic frame per entry of spec.f_new.
std::vector<SyntheticFrame> synthesize(const Image& reference,
                                       const BinaryMask* reference_mask,
                                       const DeformationField& u_self,
                                       const DeformationField& u_dr,
                                       const InterpolationSpec& spec);

struct AugmentOptions {
    InterpolationSpec interp;
    SolverConfig solver;
    bool zero_self = false; // skip self-registration, use a zero anchor
    int jobs = 1;           // worker threads across pairs
};

struct AugmentReport {
    int pairs_registered = 0;
    int frames_written = 0;
    int unpaired_skipped = 0; // frames without a partner at the other force
    int failures = 0;         // pairs abandoned due to errors
    std::vector<std::string> warnings;
    std::string manifest_path;
};

/// Reads a manifest, pairs reference/deformed frames per subject at the two
/// anchor forces, registers each pair and writes synthetic frames plus a new
/// manifest into out_dir. Unpairable frames are skipped with a warning.
AugmentReport augment_dataset(const std::string& manifest_path,
                              const AugmentOptions& opt,
                              const std::string& out_dir);

} // namespace sonoflow
