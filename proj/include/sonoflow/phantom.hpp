#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonoflow/image.hpp"
#include "sonoflow/warp.hpp"

namespace sonoflow {

// Procedural ultrasound-like phantom: blurred speckle over a soft tissue
// background with dark elliptical vessels, deformed by a probe pressing down
// from the top edge. The deformation is an analytic backward map, so every
// rendered frame comes with its exact ground-truth field and vessel mask.

struct Vessel {
    double cx = 0.0, cy = 0.0; // center at rest, pixels
    double a = 0.0, b = 0.0;   // horizontal / vertical radii at rest, pixels
    double intensity = 0.12;   // interior brightness, darker than tissue
    double stiffness = 0.5;    // 0..1; fraction of full squash at F_scale
};

struct PhantomSpec {
    int width = 128;
    int height = 128;
    std::uint64_t speckle_seed = 1;
    double compression_gain = 1.0; // axial displacement at the probe, px/N
    std::string subject = "phantom";
    std::vector<Vessel> vessels;
};

/// Force at which a vessel with stiffness 1 would fully flatten (newtons).
inline constexpr double kForceScale = 12.0;

/// Vessel vertical radii shrink no further than this fraction of rest.
inline constexpr double kMinSquash = 0.1;

void validate_phantom_spec(const PhantomSpec& spec);

PhantomSpec load_phantom_spec(const std::string& path);
void save_phantom_spec(const PhantomSpec& spec, const std::string& path);

/// Two-vessel layout (one stiff, one soft) scaled to the given raster.
PhantomSpec default_phantom_spec(int width = 128, int height = 128);

struct PhantomFrame {
    Image image;
    BinaryMask mask;        // union of vessel interiors
    DeformationField field; // backward map rest -> this frame, minus identity
    double force_n = 0.0;
};

/// Analytic backward map for the given force: the rest-frame point imaged at
/// (x, y). Exposed for tests; render() and pair_field() are built on it.
void phantom_map(const PhantomSpec& spec, double force, double x, double y,
                 double& rx, double& ry);

/// Renders one frame. The image is the rest-frame speckle warped through the
/// analytic field, so field/image/mask are mutually consistent by
/// construction. force 0 reproduces the rest frame exactly.
PhantomFrame render(const PhantomSpec& spec, double force);

std::vector<PhantomFrame> render_sweep(const PhantomSpec& spec,
                                       const std::vector<double>& forces);

/// Writes images (PNG), masks, fields and a manifest into out_dir; returns
/// the manifest records. File names carry the force value.
std::vector<FrameRecord> write_sweep(const PhantomSpec& spec,
                                     const std::vector<double>& forces,
                                     const std::string& out_dir);

/// Ground-truth displacement between two rendered frames: for each pixel of
/// the frame at f_def, the offset to the matching point in the frame at
/// f_ref (backward-warp convention). Solved by Newton inversion of the
/// reference map.
DeformationField pair_field(const PhantomSpec& spec, double f_ref, double f_def);

} // namespace sonoflow
