#include "a2f/metrics.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace a2f {

namespace {

// Shaved luma plane as doubles, after 8-bit quantization.
std::vector<double> luma_crop(const ImagePlane& img, int shave, int* out_w, int* out_h) {
    ImagePlane y = img.channels == 3 ? rgb_to_y(quantize_u8(img)) : quantize_u8(img);
    const int w = y.width - 2 * shave;
    const int h = y.height - 2 * shave;
    if (w < 1 || h < 1) {
        throw EvalError("image " + std::to_string(y.width) + "x" + std::to_string(y.height) +
                        " too small for shave " + std::to_string(shave));
    }
    std::vector<double> out(static_cast<std::size_t>(w) * h);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            out[static_cast<std::size_t>(r) * w + c] = y.value(r + shave, c + shave, 0);
        }
    }
    *out_w = w;
    *out_h = h;
    return out;
}

void check_pair(const ImagePlane& a, const ImagePlane& b, int shave) {
    if (shave < 0) throw EvalError("shave must be >= 0");
    if (a.width != b.width || a.height != b.height) {
        throw EvalError("image dimensions differ: " + std::to_string(a.width) + "x" +
                        std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                        std::to_string(b.height));
    }
}

}  // namespace

double psnr_y(const ImagePlane& a, const ImagePlane& b, int shave) {
    check_pair(a, b, shave);
    int w = 0, h = 0;
    const std::vector<double> ya = luma_crop(a, shave, &w, &h);
    const std::vector<double> yb = luma_crop(b, shave, &w, &h);

    double mse = 0.0;
    for (std::size_t i = 0; i < ya.size(); ++i) {
        const double d = ya[i] - yb[i];
        mse += d * d;
    }
    mse /= static_cast<double>(ya.size());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double ssim_y(const ImagePlane& a, const ImagePlane& b, int shave) {
    check_pair(a, b, shave);
    int w = 0, h = 0;
    const std::vector<double> x = luma_crop(a, shave, &w, &h);
    const std::vector<double> y = luma_crop(b, shave, &w, &h);

    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    if (w < kWin || h < kWin) {
        throw EvalError("image " + std::to_string(w) + "x" + std::to_string(h) +
                        " smaller than the 11x11 SSIM window after shave");
    }

    double g[kWin];
    double gsum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - (kWin - 1) / 2.0;
        g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        gsum += g[i];
    }
    for (double& v : g) v /= gsum;

    // Separable Gaussian filtering of the five raw moment images, valid
    // region only.
    const int vw = w - kWin + 1;
    const int vh = h - kWin + 1;
    auto filter = [&](auto&& value_at) {
        // horizontal at full height, then vertical
        std::vector<double> mid(static_cast<std::size_t>(h) * vw);
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < vw; ++c) {
                double acc = 0.0;
                for (int k = 0; k < kWin; ++k) acc += g[k] * value_at(r, c + k);
                mid[static_cast<std::size_t>(r) * vw + c] = acc;
            }
        }
        std::vector<double> out(static_cast<std::size_t>(vh) * vw);
        for (int r = 0; r < vh; ++r) {
            for (int c = 0; c < vw; ++c) {
                double acc = 0.0;
                for (int k = 0; k < kWin; ++k) acc += g[k] * mid[static_cast<std::size_t>(r + k) * vw + c];
                out[static_cast<std::size_t>(r) * vw + c] = acc;
            }
        }
        return out;
    };

    auto X = [&](int r, int c) { return x[static_cast<std::size_t>(r) * w + c]; };
    auto Y = [&](int r, int c) { return y[static_cast<std::size_t>(r) * w + c]; };
    const std::vector<double> mu_x = filter(X);
    const std::vector<double> mu_y = filter(Y);
    const std::vector<double> xx = filter([&](int r, int c) { return X(r, c) * X(r, c); });
    const std::vector<double> yy = filter([&](int r, int c) { return Y(r, c) * Y(r, c); });
    const std::vector<double> xy = filter([&](int r, int c) { return X(r, c) * Y(r, c); });

    double total = 0.0;
    for (std::size_t i = 0; i < mu_x.size(); ++i) {
        const double mx = mu_x[i], my = mu_y[i];
        const double sx = xx[i] - mx * mx;
        const double sy = yy[i] - my * my;
        const double sxy = xy[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) /
                 ((mx * mx + my * my + c1) * (sx + sy + c2));
    }
    return total / static_cast<double>(mu_x.size());
}

void MetricsReport::finalize() {
    mean_psnr = mean_ssim = mean_ms = 0.0;
    if (entries.empty()) return;
    for (const auto& e : entries) {
        mean_psnr += e.psnr;
        mean_ssim += e.ssim;
        mean_ms += e.forward_ms;
    }
    const double n = static_cast<double>(entries.size());
    mean_psnr /= n;
    mean_ssim /= n;
    mean_ms /= n;
}

std::string MetricsReport::to_csv() const {
    std::ostringstream out;
    out.precision(6);
    out << std::fixed;
    out << "name,psnr_db,ssim,forward_ms\n";
    for (const auto& e : entries) {
        out << e.name << "," << e.psnr << "," << e.ssim << "," << e.forward_ms << "\n";
    }
    out << "mean," << mean_psnr << "," << mean_ssim << "," << mean_ms << "\n";
    return out.str();
}

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["scale"] = scale;
    j["shave"] = shave;
    j["images"] = nlohmann::json::array();
    for (const auto& e : entries) {
        j["images"].push_back({{"name", e.name},
                               {"psnr_db", e.psnr},
                               {"ssim", e.ssim},
                               {"forward_ms", e.forward_ms}});
    }
    j["mean"] = {{"psnr_db", mean_psnr}, {"ssim", mean_ssim}, {"forward_ms", mean_ms}};
    return j.dump(2);
}

}  // namespace a2f
