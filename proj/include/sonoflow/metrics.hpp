#pragma once

#include <string>
#include <vector>

#include "sonoflow/image.hpp"
#include "sonoflow/warp.hpp"

namespace sonoflow {

// Image-quality metrics used for registration evaluation.
// References:
//   SSIM  https://en.wikipedia.org/wiki/Structural_similarity_index_measure
//   PSNR  https://en.wikipedia.org/wiki/Peak_signal-to-noise_ratio

struct MetricReport {
    std::string name;
    double value = 0.0;
    std::vector<double> per_scale; // filled by ms_ssim only
};

/// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5), constants
/// C1=(0.01)^2, C2=(0.03)^2 against dynamic range L=1. Windows are fully
/// contained ("valid"), so both dimensions must be >= 11.
double ssim(const Image& a, const Image& b);

/// Multi-scale SSIM, 1..3 scales. Contrast-structure terms are averaged at
/// every scale, luminance only at the coarsest; downsampling is 2x2 mean
/// pooling and the standard five-scale exponents are truncated and
/// renormalized to sum 1. scales=1 reduces exactly to ssim(). Optionally
/// reports the per-scale mean terms.
double ms_ssim(const Image& a, const Image& b, int scales,
               std::vector<double>* per_scale = nullptr);

/// 10*log10(1/MSE) dB with peak 1.0; identical images give +infinity.
double psnr(const Image& a, const Image& b);

/// SSIM of the two images after multiplying both by the mask.
double f_ssim(const Image& a, const Image& b, const BinaryMask& mask);

/// Intersection over union; two empty masks agree perfectly (1.0).
double iou(const BinaryMask& a, const BinaryMask& b);

/// Mean Euclidean distance between per-pixel displacement vectors.
double endpoint_error(const DeformationField& u, const DeformationField& v);

/// 2x2 mean pooling; odd trailing rows/columns are dropped.
Image mean_pool2(const Image& img);

/// 2x2 max pooling for masks; keeps any covered block set.
BinaryMask max_pool2(const BinaryMask& mask);

} // namespace sonoflow
