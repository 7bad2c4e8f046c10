#pragma once

#include <optional>
#include <string>

#include "sonoflow/features.hpp"
#include "sonoflow/image.hpp"
#include "sonoflow/warp.hpp"

namespace sonoflow {

// Registration objectives. All of them combine a multi-scale structural
// dissimilarity between a target image and a backward-warped reconstruction
// with a curvature penalty on the deformation field:
//
//   L = beta * (1 - MS-SSIM(target, warp)) + (1 - beta) * mean |Lap u|^2
//
// The cyclic variant adds the mirrored reconstruction (reference rebuilt
// from the deformed-frame reconstruction through a second field) and the
// feature-aware variant additionally masks each image pair with a
// keypoint-derived feature map before comparison.

enum class LossVariant { us, cyclic, fa_cyclic };

std::string to_string(LossVariant v);
LossVariant loss_variant_from_string(const std::string& s);

struct LossConfig {
    LossVariant variant = LossVariant::us;
    double beta = 0.85;     // similarity weight, in [0, 1]
    int ms_scales = 3;      // MS-SSIM scale count, 1..3
    int feature_radius = 8; // disk radius for feature maps (fa_cyclic)
    DetectorConfig detector;
};

void validate_loss_config(const LossConfig& cfg);

struct LossEval {
    double total = 0.0;
    double ssim_term = 0.0;   // unweighted similarity part, summed over terms
    double smooth_term = 0.0; // unweighted curvature part, summed over terms
    DeformationField grad_dr; // d total / d u_dr (block-diagonal rule)
    std::optional<DeformationField> grad_rd; // cyclic variants only
};

/// Mean squared discrete Laplacian of the field, averaged over both pixels
/// and vector components. Replicate borders.
double smooth_loss(const DeformationField& u);

/// Gradient of smooth_loss with respect to the field (the Laplacian adjoint
/// applied to the residual, divided by the element count).
void smooth_loss_grad(const DeformationField& u,
                      std::vector<double>& gx, std::vector<double>& gy);

/// 1 - MS-SSIM(a, b) with cfg.ms_scales scales.
double ssim_loss(const Image& a, const Image& b, const LossConfig& cfg);

/// Single-pair objective: beta * ssim_loss(deformed, reconstructed)
///                      + (1 - beta) * smooth_loss(u).
double loss_us(const Image& deformed, const Image& reconstructed,
               const DeformationField& u, const LossConfig& cfg);

// One reconstruction term: warp `source` through `u`, optionally mask the
// warped result, and compare against `target` (pre-masked by the caller when
// a mask is in play). `warped` is the unmasked warp so it can seed the next
// cyclic term.
struct TermEval {
    double ssim_part = 0.0;   // 1 - MS-SSIM
    double smooth_part = 0.0; // smooth_loss(u)
    double total = 0.0;       // beta * ssim_part + (1-beta) * smooth_part
    Image warped;
    DeformationField grad; // d total / d u, when requested
};

TermEval eval_term(const Image& target, const Image& source,
                   const DeformationField& u, const BinaryMask* mask,
                   const LossConfig& cfg, bool with_grad);

/// Cyclic objective with gradients. Gradients follow the block rule: the
/// deformed->reference term drives grad_dr and the reference->deformed term
/// drives grad_rd, with the intermediate reconstruction treated as fixed.
LossEval loss_cyclic(const Image& reference, const Image& deformed,
                     const DeformationField& u_dr, const DeformationField& u_rd,
                     const LossConfig& cfg);

/// Feature-aware cyclic objective; feature maps are detected on the two real
/// images (one per comparison pair) and applied after warping.
LossEval loss_fa_cyclic(const Image& reference, const Image& deformed,
                        const DeformationField& u_dr, const DeformationField& u_rd,
                        const LossConfig& cfg);

/// Same, with caller-provided feature maps (map_d masks the deformed-frame
/// pair, map_r the reference-frame pair). Lets the solver detect once and
/// reuse per pyramid level.
LossEval loss_fa_cyclic(const Image& reference, const Image& deformed,
                        const DeformationField& u_dr, const DeformationField& u_rd,
                        const BinaryMask& map_r, const BinaryMask& map_d,
                        const LossConfig& cfg);

/// Unified entry point: evaluates the configured variant with gradients.
/// u_rd and the maps may be null when the variant does not use them.
LossEval loss_grad(const Image& reference, const Image& deformed,
                   const DeformationField& u_dr, const DeformationField* u_rd,
                   const BinaryMask* map_r, const BinaryMask* map_d,
                   const LossConfig& cfg);

} // namespace sonoflow
