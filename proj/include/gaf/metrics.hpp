#pragma once

#include "gaf/image.hpp"

#include <stdexcept>
#include <vector>

namespace gaf {

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

double compute_mse(const Image& a, const Image& b);

/// -10 log10(MSE), capped at 100 dB when MSE < 1e-10.
double compute_psnr(const Image& a, const Image& b);

/// Mean SSIM over all pixels and channels: 11x11 Gaussian window (sigma 1.5),
/// zero padding, C1 = 0.01^2, C2 = 0.03^2.
double compute_ssim(const Image& a, const Image& b);

struct SsimWithGradient {
    double value = 0.0;
    std::vector<double> d_first;  // d SSIM / d a, same layout as Image::data
};
SsimWithGradient compute_ssim_with_gradient(const Image& a, const Image& b);

}  // namespace gaf
