#pragma once

#include <vector>

#include "sonoflow/image.hpp"

namespace sonoflow {

// Difference-of-Gaussians blob detector used to focus the feature-aware loss
// on salient speckle structure. Deliberately minimal: no orientation, no
// descriptors, just subpixel peak locations with a contrast threshold.

struct Keypoint {
    double x = 0.0; // full-resolution pixel coordinates
    double y = 0.0;
    double scale = 0.0;    // Gaussian sigma in full-resolution pixels
    double response = 0.0; // |DoG| at the detected extremum
};

struct DetectorConfig {
    int octaves = 3;
    int levels_per_octave = 3;
    double base_sigma = 1.6;
    double contrast_threshold = 0.03;
};

/// Scale-space extrema of the DoG pyramid, strongest response first
/// (ties broken by y, then x, then scale).
std::vector<Keypoint> detect_keypoints(const Image& img,
                                       const DetectorConfig& cfg = {});

/// Union of filled disks of the given radius around each keypoint. An image
/// with no detections yields an all-ones map so downstream masking
/// degenerates to the unmasked loss instead of erasing the image.
BinaryMask feature_map(const Image& img, int radius,
                       const DetectorConfig& cfg = {});

/// Rasterizes keypoints onto an empty w x h mask (no fallback applied).
BinaryMask feature_map_from_keypoints(const std::vector<Keypoint>& kps,
                                      int width, int height, int radius);

/// Pixelwise product of image and mask.
Image apply_feature_map(const Image& img, const BinaryMask& map);

} // namespace sonoflow
