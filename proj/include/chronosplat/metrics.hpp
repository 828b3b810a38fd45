#pragma once

#include "chronosplat/renderer.hpp"

namespace chronosplat {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all channels of [0,1] images; 99 dB when
/// MSE < 1e-10. Throws std::invalid_argument on a size mismatch.
double psnr(const Image& a, const Image& b);

/// Mean SSIM on Rec. 601 luma with an 11x11 Gaussian window (sigma 1.5),
/// C1 = 0.01^2, C2 = 0.03^2, over window positions fully inside the image.
double ssim(const Image& a, const Image& b);

/// Rec. 601 luma per pixel.
std::vector<double> luma(const Image& img);

}  // namespace chronosplat
