#include "chronosplat/metrics.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace chronosplat {

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_same_size(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("image dimensions differ");
}

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double x = i - kWindow / 2;
    w[i] = std::exp(-x * x / (2.0 * kWindowSigma * kWindowSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Separable "valid" filtering: output is (w - 10) x (h - 10).
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h) {
  static const auto win = gaussian_window();
  const int ow = w - kWindow + 1, oh = h - kWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += win[k] * src[static_cast<std::size_t>(y) * w + x + k];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += win[k] * tmp[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_same_size(a, b);
  if (a.rgb.empty()) return kPsnrCap;
  double se = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = a.rgb[i] - b.rgb[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.rgb.size());
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::vector<double> luma(const Image& img) {
  std::vector<double> y(img.pixel_count());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = 0.299 * img.rgb[3 * i] + 0.587 * img.rgb[3 * i + 1] + 0.114 * img.rgb[3 * i + 2];
  return y;
}

double ssim(const Image& a, const Image& b) {
  check_same_size(a, b);
  if (a.width < kWindow || a.height < kWindow) throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  const int w = a.width, h = a.height;
  const auto ya = luma(a), yb = luma(b);
  std::vector<double> aa(ya.size()), bb(ya.size()), ab(ya.size());
  for (std::size_t i = 0; i < ya.size(); ++i) {
    aa[i] = ya[i] * ya[i];
    bb[i] = yb[i] * yb[i];
    ab[i] = ya[i] * yb[i];
  }
  const auto mu_a = filter_valid(ya, w, h), mu_b = filter_valid(yb, w, h);
  const auto s_aa = filter_valid(aa, w, h), s_bb = filter_valid(bb, w, h), s_ab = filter_valid(ab, w, h);
  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = s_aa[i] - ma * ma, vb = s_bb[i] - mb * mb, cov = s_ab[i] - ma * mb;
    sum += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
  }
  return sum / static_cast<double>(mu_a.size());
}

}  // namespace chronosplat
