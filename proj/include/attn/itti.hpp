#pragma once

#include "attn/image.hpp"
#include "attn/saliency.hpp"

namespace attn {

// The classic bottom-up saliency model: 9-level Gaussian pyramids over
// intensity, red-green and blue-yellow opponency and four Gabor orientations;
// center-surround differences for c in {2,3,4}, delta in {3,4}; conspicuity
// maps combined through the iterative peak-promotion operator.

// Peak-promotion operator N(.): rescale to [0,1], then multiply by
// (M - mbar)^2 where M is the global max and mbar the mean of the other
// local maxima above 0.1*M (0 when there are none). A constant map becomes
// all zeros.
SaliencyMap normalize_operator(const SaliencyMap& map);

struct IttiConfig {
    int levels = 9;
    double gabor_sigma_px = 2.8;
    double gabor_wavelength_px = 7.0;
    double local_max_threshold = 0.1;
};

// Full-resolution saliency of an RGB frame (unit_max). Requires the frame to
// be at least 256x256 so the pyramid keeps its 9 levels.
SaliencyMap itti_saliency(const Image& frame, const IttiConfig& cfg = {});

}  // namespace attn
