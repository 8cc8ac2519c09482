#pragma once

#include <filesystem>
#include <vector>

#include "a2f/tensor.hpp"

namespace a2f {

enum class Depth { U8, F32 };
enum class ColorTag { RGB, Y };
enum class FloatRange { Unit, Byte };  // declared value range of F32 planes: [0,1] or [0,255]

// 2-D image with 1 or 3 interleaved channels, row-major (y, x, channel).
struct ImagePlane {
    int width = 0;
    int height = 0;
    int channels = 0;
    Depth depth = Depth::U8;
    ColorTag color = ColorTag::RGB;
    FloatRange range = FloatRange::Byte;
    std::vector<std::uint8_t> u8;
    std::vector<float> f32;

    static ImagePlane make_u8(int w, int h, int ch, ColorTag color = ColorTag::RGB);
    static ImagePlane make_f32(int w, int h, int ch, ColorTag color, FloatRange range);

    std::size_t pixel_index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * static_cast<std::size_t>(channels) + c;
    }

    // Value in the plane's native range.
    double value(int y, int x, int c) const {
        return depth == Depth::U8 ? static_cast<double>(u8[pixel_index(y, x, c)])
                                  : static_cast<double>(f32[pixel_index(y, x, c)]);
    }

    std::size_t count() const {
        return static_cast<std::size_t>(width) * height * static_cast<std::size_t>(channels);
    }
};

// 8-bit RGB or grayscale PNG only; palette images are expanded, alpha is
// dropped, 16-bit files are rejected.
ImagePlane load_png(const std::filesystem::path& path);
void save_png(const ImagePlane& plane, const std::filesystem::path& path);

// BT.601 studio-swing luma on [0,1]-scaled RGB:
//   Y = 16 + 65.481 R + 128.553 G + 24.966 B, so Y in [16, 235].
// Result is an F32 single-channel plane in byte range.
ImagePlane rgb_to_y(const ImagePlane& plane);

// Separable Keys cubic (a = -0.5, 4-tap support). When downscaling with
// antialias the kernel widens by the inverse scale (imresize-compatible);
// weights are renormalized and source coordinates clamp at the edges.
ImagePlane bicubic_resize(const ImagePlane& plane, int out_w, int out_h, bool antialias = true);

// Normalized resampling weights for one output coordinate; exposed for the
// kernel tests. Returns the first source index and the weights following it.
std::pair<int, std::vector<double>> bicubic_taps(int out_index, int in_size, int out_size,
                                                 bool antialias);

// Clip to [0,255] and round half away from zero into an 8-bit plane.
ImagePlane quantize_u8(const ImagePlane& plane);

// (1, channels, h, w) tensor scaled to [0,1].
Tensor image_to_tensor(const ImagePlane& plane);

// F32 RGB plane in unit range from a (1, c, h, w) tensor.
ImagePlane tensor_to_image(const Tensor& t);

}  // namespace a2f
