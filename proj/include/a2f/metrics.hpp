#pragma once

#include <string>
#include <vector>

#include "a2f/image.hpp"

namespace a2f {

// PSNR on the luma channel. Both images are quantized to 8-bit, converted to
// BT.601 Y, and shaved by `shave` pixels per side before the MSE; identical
// crops report the 100 dB cap.
double psnr_y(const ImagePlane& a, const ImagePlane& b, int shave);

inline constexpr double kPsnrCap = 100.0;

// Single-scale SSIM on the same pipeline: 11x11 Gaussian window, sigma 1.5,
// K1 = 0.01, K2 = 0.03, L = 255, averaged over valid window positions.
double ssim_y(const ImagePlane& a, const ImagePlane& b, int shave);

struct MetricsEntry {
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
    double forward_ms = 0.0;
};

struct MetricsReport {
    std::vector<MetricsEntry> entries;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_ms = 0.0;
    int scale = 0;
    int shave = 0;

    void finalize();  // recomputes the means from the entries
    std::string to_csv() const;
    std::string to_json() const;
};

}  // namespace a2f
