#pragma once

#include "sonoflow/image.hpp"
#include "sonoflow/warp.hpp"

namespace sonoflow {

/// Draws the field as white arrows on a regular grid (one per `stride`
/// pixels in each direction), each running from the grid point to the point
/// it samples from.
Image overlay_field(const Image& img, const DeformationField& field,
                    int stride = 4);

/// Draws the mask contour (mask pixels bordering background) in white.
Image overlay_mask(const Image& img, const BinaryMask& mask);

} // namespace sonoflow
